#include "essential/metrics.hpp"

#include "essential/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace essential {

double accuracy(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels) {
  require(predictions.size() == labels.size(), ErrorKind::Input, "accuracy: length mismatch");
  require(!labels.empty(), ErrorKind::Input, "accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

double mean_of(const std::vector<double>& v) {
  require(!v.empty(), ErrorKind::Input, "mean of an empty sequence");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Deltas deltas(const std::vector<double>& ours, const std::vector<double>& baseline) {
  require(ours.size() == baseline.size(), ErrorKind::Input, "deltas: session count mismatch");
  require(!ours.empty(), ErrorKind::Input, "deltas: empty input");
  Deltas d;
  d.final_delta = round2(round2(baseline.back()) - round2(ours.back()));
  d.average_delta = round2(round2(mean_of(baseline)) - round2(mean_of(ours)));
  return d;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  require(p.size() == q.size(), ErrorKind::Input, "kl: length mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > 0.0) kl += p[k] * std::log(p[k] / q[k]);
  return kl;
}

double symmetric_kl(const ProbVector& p, const ProbVector& q, double eps) {
  require(p.size() == q.size(), ErrorKind::Input, "symmetric_kl: length mismatch");
  check_probability_vector(p);
  check_probability_vector(q);
  auto smooth = [eps](const ProbVector& v) {
    ProbVector s(v.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) sum += s[k] = v[k] + eps;
    for (double& x : s) x /= sum;
    return s;
  };
  const ProbVector ps = smooth(p), qs = smooth(q);
  return std::max(0.0, 0.5 * (kl_divergence(ps, qs) + kl_divergence(qs, ps)));
}

double model_uncertainty(const std::vector<ProbVector>& probs) {
  require(!probs.empty(), ErrorKind::Input, "model_uncertainty: no samples");
  double s = 0.0;
  for (const auto& p : probs) s += static_entropy(p);
  return s / static_cast<double>(probs.size());
}

double misclassified_as_base(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels,
                             const std::vector<ClassId>& base_classes) {
  require(predictions.size() == labels.size(), ErrorKind::Input, "misclassified_as_base: length mismatch");
  require(!labels.empty(), ErrorKind::Input, "misclassified_as_base: no new-class samples");
  const std::set<ClassId> base(base_classes.begin(), base_classes.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(!base.count(labels[i]), ErrorKind::Input, "misclassified_as_base: sample labelled with a base class");
    hits += base.count(predictions[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfusionMatrix confusion_matrix(const std::vector<ClassId>& predictions, const std::vector<ClassId>& labels,
                                 int num_classes) {
  require(predictions.size() == labels.size(), ErrorKind::Input, "confusion_matrix: length mismatch");
  ConfusionMatrix m(static_cast<std::size_t>(num_classes), std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes && predictions[i] >= 0 && predictions[i] < num_classes,
            ErrorKind::Input, "confusion_matrix: class out of range");
    ++m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  return m;
}

std::vector<ProbVector> class_mean_distributions(const std::vector<ProbVector>& probs,
                                                 const std::vector<ClassId>& labels, int num_classes) {
  require(probs.size() == labels.size(), ErrorKind::Input, "class_mean_distributions: length mismatch");
  std::vector<ProbVector> out(static_cast<std::size_t>(num_classes));
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto& acc = out[static_cast<std::size_t>(labels[i])];
    if (acc.empty()) acc.assign(probs[i].size(), 0.0);
    for (std::size_t k = 0; k < probs[i].size(); ++k) acc[k] += probs[i][k];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::size_t c = 0; c < out.size(); ++c)
    for (double& v : out[c]) v /= static_cast<double>(counts[c]);
  return out;
}

double SessionReport::mean_inter_class() const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < inter_class.size(); ++i)
    for (std::size_t j = i + 1; j < inter_class[i].size(); ++j) {
      s += inter_class[i][j];
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

double SessionReport::mean_intra_class() const {
  if (intra_class.empty()) return 0.0;
  return std::accumulate(intra_class.begin(), intra_class.end(), 0.0) / static_cast<double>(intra_class.size());
}

std::string report_to_json(const SessionReport& r) {
  nlohmann::json j;
  j["session"] = r.session;
  j["seen_classes"] = r.seen_classes;
  j["accuracies"] = r.accuracies;
  j["confusion"] = r.confusion;
  j["uncertainty_per_epoch"] = r.uncertainty_per_epoch;
  j["inter_class"] = r.inter_class;
  j["intra_class"] = r.intra_class;
  j["mean_inter_class"] = r.mean_inter_class();
  j["mean_intra_class"] = r.mean_intra_class();
  j["misclassified_as_base_per_epoch"] = r.misclassified_as_base_per_epoch;
  j["misclassified_as_base_final"] = r.misclassified_as_base_final;
  j["loss_per_epoch"] = r.loss_per_epoch;
  j["warnings"] = r.warnings;
  return j.dump(2);
}

SessionReport report_from_json(const std::string& text) {
  SessionReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.session = j.at("session").get<int>();
    r.seen_classes = j.at("seen_classes").get<int>();
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<ConfusionMatrix>();
    r.uncertainty_per_epoch = j.at("uncertainty_per_epoch").get<std::vector<double>>();
    r.inter_class = j.at("inter_class").get<std::vector<std::vector<double>>>();
    r.intra_class = j.at("intra_class").get<std::vector<double>>();
    r.misclassified_as_base_per_epoch = j.at("misclassified_as_base_per_epoch").get<std::vector<double>>();
    r.misclassified_as_base_final = j.at("misclassified_as_base_final").get<double>();
    r.loss_per_epoch = j.at("loss_per_epoch").get<std::vector<double>>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("session report: ") + e.what());
  }
  return r;
}

}  // namespace essential
