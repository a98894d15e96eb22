#include "essential/trajectory.hpp"

#include "essential/error.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace essential {

void check_probability_vector(std::span<const double> p, double tol) {
  require(!p.empty(), ErrorKind::Input, "probability vector is empty");
  double sum = 0.0;
  for (double v : p) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::Input, "probability vector has a negative or non-finite entry");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= tol, ErrorKind::Input,
          "probability vector sums to " + std::to_string(sum) + ", not 1");
}

double static_entropy(std::span<const double> p) {
  check_probability_vector(p);
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return std::max(0.0, h);
}

void EntropyTrajectory::append(ProbVector p) {
  if (!probs_per_epoch.empty())
    require(p.size() == num_classes(), ErrorKind::Input,
            "sample " + std::to_string(sample_id) + ": epoch vector has " + std::to_string(p.size()) +
                " classes, trajectory has " + std::to_string(num_classes()));
  entropies.push_back(static_entropy(p));
  probs_per_epoch.push_back(std::move(p));
}

double cumulative_entropy_sum(const EntropyTrajectory& traj) {
  require(!traj.entropies.empty(), ErrorKind::Input, "cumulative entropy of an empty trajectory");
  double s = 0.0;
  for (double h : traj.entropies) s += h;
  return s;
}

double cumulative_entropy_trapezoid(const EntropyTrajectory& traj, double dt) {
  require(traj.entropies.size() >= 2, ErrorKind::Input, "trapezoid rule needs at least 2 epochs");
  require(dt > 0.0, ErrorKind::Input, "dt must be positive");
  double area = 0.0;
  for (std::size_t t = 0; t + 1 < traj.entropies.size(); ++t)
    area += 0.5 * (traj.entropies[t] + traj.entropies[t + 1]) * dt;
  return area;
}

double average_cumulative_entropy(const EntropyTrajectory& traj) {
  return cumulative_entropy_sum(traj) / static_cast<double>(traj.entropies.size());
}

double cumulative_score(const EntropyTrajectory& traj, CumulativeMode mode) {
  if (mode == CumulativeMode::Trapezoid && traj.entropies.size() >= 2)
    return cumulative_entropy_trapezoid(traj) / static_cast<double>(traj.entropies.size() - 1);
  return average_cumulative_entropy(traj);
}

void record_epoch(TrajectoryStore& store, const std::map<SampleId, ProbVector>& epoch_probs) {
  // Validate everything first so a bad vector leaves the store untouched.
  for (const auto& [id, p] : epoch_probs) {
    check_probability_vector(p);
    auto it = store.find(id);
    if (it != store.end() && it->second.epochs() > 0)
      require(p.size() == it->second.num_classes(), ErrorKind::Input,
              "sample " + std::to_string(id) + ": dimension mismatch with earlier epochs");
  }
  for (const auto& [id, p] : epoch_probs) {
    auto& traj = store[id];
    traj.sample_id = id;
    traj.append(p);
  }
}

std::vector<double> uncertainty_curve(const TrajectoryStore& store) {
  std::size_t epochs = 0;
  for (const auto& [id, t] : store) epochs = std::max(epochs, t.epochs());
  std::vector<double> sum(epochs, 0.0);
  std::vector<std::size_t> count(epochs, 0);
  for (const auto& [id, t] : store)
    for (std::size_t e = 0; e < t.epochs(); ++e) {
      sum[e] += t.entropies[e];
      ++count[e];
    }
  for (std::size_t e = 0; e < epochs; ++e) sum[e] = count[e] ? sum[e] / static_cast<double>(count[e]) : 0.0;
  return sum;
}

void write_trajectories(std::ostream& out, const TrajectoryStore& store) {
  std::size_t classes = 0;
  for (const auto& [id, t] : store) classes = std::max(classes, t.num_classes());
  out << "sample_id\tepoch";
  for (std::size_t c = 1; c <= classes; ++c) out << "\tp_" << c;
  out << "\n";
  char buf[32];
  for (const auto& [id, t] : store)
    for (std::size_t e = 0; e < t.epochs(); ++e) {
      out << id << '\t' << (e + 1);
      for (double p : t.probs_per_epoch[e]) {
        std::snprintf(buf, sizeof buf, "%.17g", p);
        out << '\t' << buf;
      }
      out << '\n';
    }
}

TrajectoryStore read_trajectories(std::istream& in) {
  TrajectoryStore store;
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id\tepoch", 0) != 0)
    fail(ErrorKind::Format, "trajectory file: missing 'sample_id\\tepoch' header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SampleId id = 0;
    std::size_t epoch = 0;
    if (!(ls >> id >> epoch)) fail(ErrorKind::Format, "trajectory file line " + std::to_string(lineno));
    ProbVector p;
    double v = 0;
    while (ls >> v) p.push_back(v);
    auto& traj = store[id];
    traj.sample_id = id;
    if (epoch != traj.epochs() + 1)
      fail(ErrorKind::Format, "trajectory file line " + std::to_string(lineno) + ": epochs out of order");
    traj.append(std::move(p));
  }
  return store;
}

}  // namespace essential
