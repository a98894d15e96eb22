#include "essential/cepredictor.hpp"

#include "essential/error.hpp"

#include <algorithm>
#include <cmath>

namespace essential {

PredictedTrajectory to_predicted(const EntropyTrajectory& traj) {
  PredictedTrajectory p;
  p.sample_id = traj.sample_id;
  p.predicted_probs_per_epoch = traj.probs_per_epoch;
  p.predicted_average_ce = traj.epochs() ? average_cumulative_entropy(traj) : 0.0;
  return p;
}

PredictorHead::PredictorHead(const std::vector<nn::TapInfo>& taps, int tap_dim, int num_classes, nn::Rng& rng)
    : taps_(taps) {
  for (std::size_t i = 0; i < taps.size(); ++i)
    reducers_.emplace_back("predictor.reduce" + std::to_string(i), taps[i].shape.channels, tap_dim, rng);
  // Small fusion weights keep the initial output close to uniform.
  fusion_ = nn::Linear("predictor.fusion", static_cast<int>(taps.size()) * tap_dim, num_classes, rng, 0.01);
}

nn::Var PredictorHead::forward_logits(const std::vector<nn::Var>& taps) const {
  require(taps.size() == taps_.size(), ErrorKind::Input,
          "predictor expects " + std::to_string(taps_.size()) + " taps, got " + std::to_string(taps.size()));
  std::vector<nn::Var> reduced;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    nn::Var pooled = nn::global_avg_pool(nn::detach(taps[i]), taps_[i].shape);
    reduced.push_back(nn::relu(reducers_[i].forward(pooled)));
  }
  return fusion_.forward(nn::concat_cols(reduced));
}

nn::Matrix PredictorHead::predict_distribution(const std::vector<nn::Var>& taps) const {
  nn::NoGradGuard guard;
  return nn::softmax_rows(forward_logits(taps)->value);
}

void PredictorHead::collect(std::vector<nn::Parameter*>& out) {
  for (auto& r : reducers_) r.collect(out);
  fusion_.collect(out);
}

double js_divergence(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Input, "js_divergence: length mismatch");
  check_probability_vector(a);
  check_probability_vector(b);
  double js = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double m = 0.5 * (a[k] + b[k]);
    if (a[k] > 0.0) js += 0.5 * a[k] * std::log(a[k] / m);
    if (b[k] > 0.0) js += 0.5 * b[k] * std::log(b[k] / m);
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

double prediction_loss(const EntropyTrajectory& true_traj, const PredictedTrajectory& pred_traj, double ce_loss,
                       double beta) {
  const std::size_t epochs = true_traj.epochs();
  require(epochs == pred_traj.predicted_probs_per_epoch.size(), ErrorKind::Input,
          "prediction_loss: epoch count mismatch (" + std::to_string(epochs) + " vs " +
              std::to_string(pred_traj.predicted_probs_per_epoch.size()) + ")");
  if (epochs == 0 || beta == 0.0) return ce_loss;
  double js = 0.0;
  for (std::size_t t = 0; t < epochs; ++t)
    js += js_divergence(true_traj.probs_per_epoch[t], pred_traj.predicted_probs_per_epoch[t]);
  return ce_loss + beta * js / static_cast<double>(epochs);
}

nn::Var js_loss(const nn::Var& logits, const nn::Matrix& target) {
  require(logits->value.rows() == target.rows() && logits->value.cols() == target.cols(), ErrorKind::Input,
          "js_loss: shape mismatch");
  const nn::Matrix q = nn::softmax_rows(logits->value);
  const Eigen::Index n = q.rows();
  nn::Matrix dq(q.rows(), q.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      const double p = target(r, k), qq = std::max(q(r, k), 1e-300);
      const double m = 0.5 * (p + qq);
      if (p > 0.0) total += 0.5 * p * std::log(p / m);
      total += 0.5 * qq * std::log(qq / m);
      dq(r, k) = 0.5 * std::log(qq / m);
    }
  nn::Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  return nn::make_op(std::move(out), {logits}, [logits, q, dq, n](nn::Node& self) {
    nn::Matrix g(q.rows(), q.cols());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      const double inner = dq.row(r).dot(q.row(r));
      g.row(r) = q.row(r).cwiseProduct((dq.row(r).array() - inner).matrix());
    }
    logits->accumulate(g * (self.grad(0, 0) / static_cast<double>(n)));
  });
}

nn::Var prediction_loss_var(const nn::Var& logits, const nn::Matrix& target_probs, double ce_loss, double beta) {
  nn::Var ce = nn::constant(nn::Matrix::Constant(1, 1, ce_loss));
  return nn::weighted_sum({{ce, 1.0}, {js_loss(logits, target_probs), beta}});
}

std::map<SampleId, double> reevaluate_top(std::vector<RankedCandidate> candidates, int k,
                                          const TrajectoryStore& true_store, CumulativeMode mode) {
  require(k > 0, ErrorKind::Input, "reevaluate_top: k must be positive");
  std::sort(candidates.begin(), candidates.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.predicted_score != b.predicted_score) return a.predicted_score > b.predicted_score;
    return a.id < b.id;
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
  std::map<SampleId, double> out;
  for (std::size_t i = 0; i < take; ++i) {
    auto it = true_store.find(candidates[i].id);
    require(it != true_store.end(), ErrorKind::Internal,
            "reevaluate_top: no recorded trajectory for sample " + std::to_string(candidates[i].id));
    out[candidates[i].id] = cumulative_score(it->second, mode);
  }
  return out;
}

}  // namespace essential
