#include "essential/contrastive.hpp"

#include "essential/error.hpp"

#include <cmath>

namespace essential {

namespace {

void check_unit_rows(const nn::Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    require(std::abs(m.row(r).norm() - 1.0) <= 1e-6, ErrorKind::Input,
            std::string(what) + " row " + std::to_string(r) + " is not unit norm");
}

struct Contrast {
  nn::Matrix all;           // keys then queue, [A, d]
  std::vector<int> labels;  // aligned with rows of `all`
};

Contrast gather(const nn::Matrix& keys, const std::vector<int>& key_labels, const FeatureQueue& queue) {
  require(static_cast<std::size_t>(keys.rows()) == key_labels.size(), ErrorKind::Input,
          "scl: key/label count mismatch");
  check_unit_rows(keys, "key");
  Contrast c;
  const Eigen::Index a = keys.rows() + static_cast<Eigen::Index>(queue.size());
  require(a > 0, ErrorKind::Input, "scl: contrast set is empty");
  const Eigen::Index d = keys.rows() > 0 ? keys.cols() : queue.features().front().size();
  c.all.resize(a, d);
  if (keys.rows() > 0) c.all.topRows(keys.rows()) = keys;
  c.labels = key_labels;
  Eigen::Index r = keys.rows();
  for (std::size_t i = 0; i < queue.size(); ++i, ++r) {
    require(queue.features()[i].size() == d, ErrorKind::Input, "scl: queue dimension mismatch");
    c.all.row(r) = queue.features()[i].transpose();
    c.labels.push_back(queue.labels()[i]);
  }
  return c;
}

// Returns the loss and, if `grad` is non-null, d loss / d queries.
double scl_impl(const nn::Matrix& q, const std::vector<int>& q_labels, const Contrast& c, double tau,
                nn::Matrix* grad) {
  require(tau > 0.0, ErrorKind::Input, "scl: tau must be positive");
  require(static_cast<std::size_t>(q.rows()) == q_labels.size(), ErrorKind::Input, "scl: query/label count mismatch");
  require(q.cols() == c.all.cols(), ErrorKind::Input, "scl: query/key dimension mismatch");
  check_unit_rows(q, "query");
  const nn::Matrix logits = (q * c.all.transpose()) / tau;  // [n, A]
  if (grad) *grad = nn::Matrix::Zero(q.rows(), q.cols());
  double total = 0.0;
  int valid = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<Eigen::Index> pos;
    for (std::size_t a = 0; a < c.labels.size(); ++a)
      if (c.labels[a] == q_labels[static_cast<std::size_t>(i)]) pos.push_back(static_cast<Eigen::Index>(a));
    if (pos.empty()) continue;
    ++valid;
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
    const double z = e.sum();
    const double lse = m + std::log(z);
    double li = 0.0;
    for (Eigen::Index p : pos) li += lse - logits(i, p);
    total += li / static_cast<double>(pos.size());
    if (grad) {
      // d/dq [lse - mean_p q.p/tau] = (softmax . A - mean_p p) / tau
      Eigen::RowVectorXd g = (e / z) * c.all;
      Eigen::RowVectorXd mean_pos = Eigen::RowVectorXd::Zero(q.cols());
      for (Eigen::Index p : pos) mean_pos += c.all.row(p);
      mean_pos /= static_cast<double>(pos.size());
      grad->row(i) = (g - mean_pos) / tau;
    }
  }
  if (valid == 0) return 0.0;
  if (grad) *grad /= static_cast<double>(valid);
  return total / static_cast<double>(valid);
}

}  // namespace

void momentum_update(MomentumPair& pair) {
  require(pair.query.size() == pair.key.size(), ErrorKind::Internal, "momentum_update: parameter count mismatch");
  for (std::size_t i = 0; i < pair.query.size(); ++i) {
    require(pair.query[i].rows() == pair.key[i].rows() && pair.query[i].cols() == pair.key[i].cols(),
            ErrorKind::Internal, "momentum_update: shape mismatch at parameter " + std::to_string(i));
    pair.key[i] = pair.mu * pair.key[i] + (1.0 - pair.mu) * pair.query[i];
  }
}

void momentum_update(const std::vector<nn::Parameter*>& query, const std::vector<nn::Parameter*>& key, double mu) {
  require(query.size() == key.size(), ErrorKind::Internal, "momentum_update: parameter count mismatch");
  for (std::size_t i = 0; i < query.size(); ++i) {
    auto& k = key[i]->value();
    const auto& q = query[i]->value();
    require(q.rows() == k.rows() && q.cols() == k.cols(), ErrorKind::Internal,
            "momentum_update: shape mismatch at " + query[i]->name);
    k = mu * k + (1.0 - mu) * q;
  }
}

void FeatureQueue::enqueue(const nn::Matrix& features, const std::vector<int>& labels) {
  require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorKind::Input,
          "enqueue: feature/label count mismatch");
  check_unit_rows(features, "enqueued feature");
  if (!features_.empty() && features.rows() > 0)
    require(features.cols() == features_.front().size(), ErrorKind::Input, "enqueue: dimension mismatch");
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    features_.push_back(features.row(r).transpose());
    labels_.push_back(labels[static_cast<std::size_t>(r)]);
    while (features_.size() > capacity_) {
      features_.pop_front();
      labels_.pop_front();
    }
  }
}

void FeatureQueue::clear() {
  features_.clear();
  labels_.clear();
}

nn::Matrix FeatureQueue::feature_matrix() const {
  if (features_.empty()) return {};
  nn::Matrix m(static_cast<Eigen::Index>(features_.size()), features_.front().size());
  for (std::size_t i = 0; i < features_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = features_[i].transpose();
  return m;
}

double scl_loss(const nn::Matrix& queries, const std::vector<int>& query_labels, const nn::Matrix& keys,
                const std::vector<int>& key_labels, const FeatureQueue& queue, double tau) {
  return scl_impl(queries, query_labels, gather(keys, key_labels, queue), tau, nullptr);
}

nn::Var scl_loss_var(const nn::Var& queries, const std::vector<int>& query_labels, const nn::Matrix& keys,
                     const std::vector<int>& key_labels, const FeatureQueue& queue, double tau) {
  nn::Matrix grad;
  const double loss = scl_impl(queries->value, query_labels, gather(keys, key_labels, queue), tau, &grad);
  nn::Matrix out(1, 1);
  out(0, 0) = loss;
  return nn::make_op(std::move(out), {queries},
                     [queries, grad](nn::Node& self) { queries->accumulate(grad * self.grad(0, 0)); });
}

double scl_loss_expanded(const nn::Matrix& queries, const std::vector<int>& query_classes,
                         const std::vector<int>& query_transforms, const nn::Matrix& keys,
                         const std::vector<int>& key_classes, const std::vector<int>& key_transforms,
                         const FeatureQueue& queue, double tau, int num_transforms) {
  require(query_classes.size() == query_transforms.size() && key_classes.size() == key_transforms.size(),
          ErrorKind::Input, "scl_expanded: every view needs a (class, transformation) label");
  auto combine = [num_transforms](const std::vector<int>& cls, const std::vector<int>& tr) {
    std::vector<int> out(cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i) {
      require(tr[i] >= 0 && tr[i] < num_transforms, ErrorKind::Input, "scl_expanded: transformation index out of range");
      out[i] = expanded_label(cls[i], tr[i], num_transforms);
    }
    return out;
  };
  return scl_loss(queries, combine(query_classes, query_transforms), keys, combine(key_classes, key_transforms),
                  queue, tau);
}

}  // namespace essential
