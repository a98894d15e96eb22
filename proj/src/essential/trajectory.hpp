#pragma once

// Per-sample entropy trajectories over the epochs of one session.

#include "essential/datamodel.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace essential {

using ProbVector = std::vector<double>;

// Checks non-negativity and that the sum lies within `tol` of 1.
void check_probability_vector(std::span<const double> p, double tol = 1e-4);

// -sum p ln p in nats, with 0 ln 0 = 0.
double static_entropy(std::span<const double> p);

struct EntropyTrajectory {
  SampleId sample_id = 0;
  std::vector<ProbVector> probs_per_epoch;
  std::vector<double> entropies;

  std::size_t epochs() const { return probs_per_epoch.size(); }
  std::size_t num_classes() const { return probs_per_epoch.empty() ? 0 : probs_per_epoch.front().size(); }
  void append(ProbVector p);
};

double cumulative_entropy_sum(const EntropyTrajectory& traj);
double cumulative_entropy_trapezoid(const EntropyTrajectory& traj, double dt = 1.0);
double average_cumulative_entropy(const EntropyTrajectory& traj);

// Selection score under the configured definition (sum is averaged over epochs
// so that trajectories of different lengths compare fairly).
double cumulative_score(const EntropyTrajectory& traj, CumulativeMode mode);

using TrajectoryStore = std::map<SampleId, EntropyTrajectory>;

// Appends exactly one epoch to each listed trajectory, creating missing ones.
void record_epoch(TrajectoryStore& store, const std::map<SampleId, ProbVector>& epoch_probs);

// Mean entropy over all samples at each epoch (model uncertainty curve).
std::vector<double> uncertainty_curve(const TrajectoryStore& store);

// Columnar text: header `sample_id epoch p_1 .. p_C`, tab separated, epochs 1-based.
void write_trajectories(std::ostream& out, const TrajectoryStore& store);
TrajectoryStore read_trajectories(std::istream& in);

}  // namespace essential
