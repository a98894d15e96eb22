#pragma once

// Evaluation quantities and the per-session report.

#include "essential/datamodel.hpp"
#include "essential/trajectory.hpp"

#include <string>
#include <vector>

namespace essential {

// 100 * correct / total.
double accuracy(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels);

struct Deltas {
  double final_delta = 0.0;    // baseline_last - ours_last
  double average_delta = 0.0;  // mean(baseline) - mean(ours)
};

// Values are compared the way they are published: accuracies and means rounded to
// two decimals before subtracting, result rounded to two decimals.
Deltas deltas(const std::vector<double>& ours, const std::vector<double>& baseline);
double round2(double v);
double mean_of(const std::vector<double>& v);

double kl_divergence(const ProbVector& p, const ProbVector& q);
// ½[KL(p‖q) + KL(q‖p)] after ε-smoothing (ε = 1e-8) and renormalisation.
double symmetric_kl(const ProbVector& p, const ProbVector& q, double eps = 1e-8);
inline double inter_class_distance(const ProbVector& pi, const ProbVector& pj) { return symmetric_kl(pi, pj); }
inline double intra_class_distance(const ProbVector& original, const ProbVector& augmented) {
  return symmetric_kl(original, augmented);
}

// Mean static entropy over samples.
double model_uncertainty(const std::vector<ProbVector>& probs);

// Fraction of new-class samples predicted as a base class.
double misclassified_as_base(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels,
                             const std::vector<ClassId>& base_classes);

using ConfusionMatrix = std::vector<std::vector<long>>;  // [true][predicted]
ConfusionMatrix confusion_matrix(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels,
                                 int num_classes);

// Mean of the per-class mean predicted distributions.
std::vector<ProbVector> class_mean_distributions(const std::vector<ProbVector>& probs,
                                                 const std::vector<ClassId>& labels, int num_classes);

struct SessionReport {
  int session = 0;
  int seen_classes = 0;
  std::vector<double> accuracies;  // sessions 0..session
  ConfusionMatrix confusion;
  std::vector<double> uncertainty_per_epoch;
  std::vector<std::vector<double>> inter_class;  // symmetric, zero diagonal
  std::vector<double> intra_class;               // per class
  std::vector<double> misclassified_as_base_per_epoch;
  double misclassified_as_base_final = 0.0;      // NaN-free; 0 when no new classes yet
  std::vector<double> loss_per_epoch;
  std::vector<std::string> warnings;

  double accuracy() const { return accuracies.empty() ? 0.0 : accuracies.back(); }
  double mean_inter_class() const;
  double mean_intra_class() const;
};

std::string report_to_json(const SessionReport& r);
SessionReport report_from_json(const std::string& text);

}  // namespace essential
