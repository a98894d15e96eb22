#pragma once

// Momentum-paired supervised contrastive learning.

#include "essential/autograd.hpp"

#include <deque>
#include <vector>

namespace essential {

struct MomentumPair {
  std::vector<nn::Matrix> query;
  std::vector<nn::Matrix> key;
  double mu = 0.999;
};

// key <- mu * key + (1 - mu) * query, elementwise; query untouched.
void momentum_update(MomentumPair& pair);
void momentum_update(const std::vector<nn::Parameter*>& query, const std::vector<nn::Parameter*>& key, double mu);

// FIFO ring of unit-norm key embeddings with their labels, always aligned.
class FeatureQueue {
 public:
  explicit FeatureQueue(std::size_t capacity = 0) : capacity_(capacity) {}

  // Throws Error(Input) if a row is not unit norm (1e-6) or counts differ.
  void enqueue(const nn::Matrix& features, const std::vector<int>& labels);
  void clear();

  std::size_t size() const { return features_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<nn::Vector>& features() const { return features_; }
  const std::deque<int>& labels() const { return labels_; }
  nn::Matrix feature_matrix() const;

 private:
  std::size_t capacity_;
  std::deque<nn::Vector> features_;
  std::deque<int> labels_;
};

// Mean over queries with a non-empty positive set of
//   -(1/|P|) sum_{p in P} log( exp(q.p/tau) / sum_{a in A} exp(q.a/tau) )
// where A = keys ∪ queue and P = members of A sharing the query's label.
double scl_loss(const nn::Matrix& queries, const std::vector<int>& query_labels, const nn::Matrix& keys,
                const std::vector<int>& key_labels, const FeatureQueue& queue, double tau);

// Same objective with gradients flowing into `queries` (keys and queue are constants).
nn::Var scl_loss_var(const nn::Var& queries, const std::vector<int>& query_labels, const nn::Matrix& keys,
                     const std::vector<int>& key_labels, const FeatureQueue& queue, double tau);

// Label used for expanded views: positives share both class and transformation.
inline int expanded_label(int class_label, int transform_index, int num_transforms) {
  return class_label * num_transforms + transform_index;
}

// scl_loss over expanded views; the queue must hold expanded labels.
double scl_loss_expanded(const nn::Matrix& queries, const std::vector<int>& query_classes,
                         const std::vector<int>& query_transforms, const nn::Matrix& keys,
                         const std::vector<int>& key_classes, const std::vector<int>& key_transforms,
                         const FeatureQueue& queue, double tau, int num_transforms);

}  // namespace essential
