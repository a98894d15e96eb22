#pragma once

// Auxiliary head that predicts each sample's class-probability trajectory
// (and hence its average cumulative entropy) from multi-scale backbone taps.

#include "essential/autograd.hpp"
#include "essential/layers.hpp"
#include "essential/trajectory.hpp"

#include <map>
#include <vector>

namespace essential {

struct PredictedTrajectory {
  SampleId sample_id = 0;
  std::vector<ProbVector> predicted_probs_per_epoch;  // rows of the predicted matrix
  double predicted_average_ce = 0.0;
};

PredictedTrajectory to_predicted(const EntropyTrajectory& traj);

class PredictorHead {
 public:
  PredictorHead() = default;
  PredictorHead(const std::vector<nn::TapInfo>& taps, int tap_dim, int num_classes, nn::Rng& rng);

  // Logits over classes; taps are detached so nothing flows into the backbone.
  nn::Var forward_logits(const std::vector<nn::Var>& taps) const;
  // Row-wise probability vectors. Throws Error(Input) on a tap count mismatch.
  nn::Matrix predict_distribution(const std::vector<nn::Var>& taps) const;

  void grow_classes(int num_classes, nn::Rng& rng) { fusion_.grow_outputs(num_classes, rng); }
  int num_classes() const { return fusion_.out_features(); }
  std::size_t num_taps() const { return taps_.size(); }
  void collect(std::vector<nn::Parameter*>& out);

 private:
  std::vector<nn::TapInfo> taps_;
  std::vector<nn::Linear> reducers_;
  nn::Linear fusion_;
};

// ½[KL(a‖m) + KL(b‖m)] with m = ½(a+b), natural log.
double js_divergence(std::span<const double> a, std::span<const double> b);

// ce_loss + beta * mean over epochs of JS(true_t, predicted_t).
double prediction_loss(const EntropyTrajectory& true_traj, const PredictedTrajectory& pred_traj, double ce_loss,
                       double beta);

// Differentiable JS term for one epoch: mean over rows of JS(target_r, softmax(logits_r)).
nn::Var js_loss(const nn::Var& logits, const nn::Matrix& target_probs);

// Training objective for the head: ce_loss (a constant from the target model) + beta * js_loss.
nn::Var prediction_loss_var(const nn::Var& logits, const nn::Matrix& target_probs, double ce_loss, double beta);

struct RankedCandidate {
  SampleId id = 0;
  double predicted_score = 0.0;
};

// Takes the k candidates with the largest predicted score (ties: ascending id) and
// returns their true average cumulative entropy from the recorded store.
std::map<SampleId, double> reevaluate_top(std::vector<RankedCandidate> candidates, int k,
                                          const TrajectoryStore& true_store,
                                          CumulativeMode mode = CumulativeMode::Sum);

}  // namespace essential
