#pragma once

// Prototype classification: cosine (the default) plus dot / Euclidean /
// Mahalanobis baselines, the prototype cross-entropy and the joint loss.

#include "essential/autograd.hpp"
#include "essential/datamodel.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace essential {

// x.y / (|x||y|). Throws Error(Input) for a zero vector.
double cosine_sim(std::span<const double> x, std::span<const double> y);
double cosine_sim(const nn::Vector& x, const nn::Vector& y);

// Shrinkage-regularised diagonal covariance for similarity=mah.
struct SimilarityStats {
  nn::Vector variance;
  bool fitted() const { return variance.size() > 0; }
};

// Pooled within-class variance per dimension, shrunk toward its mean by `shrinkage`.
SimilarityStats fit_diagonal_covariance(const std::map<ClassId, std::vector<nn::Vector>>& embeddings,
                                        double shrinkage);

// Higher = more similar. DOT: x.y; EUC: -|x-y|; MAH: -sqrt((x-y)^T S^-1 (x-y)).
// MAH throws Error(State) when `stats` is not fitted. COS is accepted too.
double baseline_similarity(const nn::Vector& x, const nn::Vector& y, SimilarityKind kind,
                           const SimilarityStats* stats = nullptr);

enum class PrototypeSource { AllSamples, Exemplars };

struct PrototypeTable {
  std::map<ClassId, nn::Vector> prototypes;  // unit norm when kind == Cos
  PrototypeSource source = PrototypeSource::AllSamples;
  SimilarityKind kind = SimilarityKind::Cos;
  double eta = 16.0;
  SimilarityStats stats;

  std::vector<ClassId> classes() const;
  bool empty() const { return prototypes.empty(); }
};

// Mean embedding per class (L2-normalised for cosine).
PrototypeTable build_prototype_table(const std::map<ClassId, std::vector<nn::Vector>>& embeddings,
                                     SimilarityKind kind, double eta, PrototypeSource source,
                                     double mahalanobis_shrinkage = 0.1);

// Logit for each class in ascending class order: eta*cos for COS, the raw score otherwise.
nn::Vector prototype_logits(const nn::Vector& x, const PrototypeTable& table);

// Softmax over prototype_logits. Throws Error(Input) for an empty table.
std::vector<double> prototype_probabilities(const nn::Vector& x, const PrototypeTable& table);

// Argmax of prototype_logits; ties to the lowest class index.
ClassId predict_class(const nn::Vector& x, const PrototypeTable& table);

// Mean over rows of -log softmax_{label}(prototype_logits(row)).
double cosine_ce_loss(const nn::Matrix& embeddings, const std::vector<int>& labels, const PrototypeTable& table);

// Differentiable version; prototypes are constants, gradients flow into `embeddings`.
nn::Var prototype_ce_var(const nn::Var& embeddings, const std::vector<int>& labels, const PrototypeTable& table);

// Row r is scored against tables[groups[r]]; used for per-transformation prototypes.
nn::Var grouped_prototype_ce_var(const nn::Var& embeddings, const std::vector<int>& labels,
                                 const std::vector<int>& groups, const std::vector<PrototypeTable>& tables);

inline double joint_loss(double ce, double scl, double alpha) { return ce + alpha * scl; }

}  // namespace essential
