#include "essential/classifier.hpp"

#include "essential/error.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

namespace essential {

double cosine_sim(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::Input, "cosine_sim: length mismatch");
  double dot = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  require(nx > 0.0 && ny > 0.0, ErrorKind::Input, "cosine_sim: zero vector");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

double cosine_sim(const nn::Vector& x, const nn::Vector& y) {
  return cosine_sim(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                    std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

SimilarityStats fit_diagonal_covariance(const std::map<ClassId, std::vector<nn::Vector>>& embeddings,
                                        double shrinkage) {
  SimilarityStats stats;
  Eigen::Index dim = -1;
  nn::Vector sumsq;
  std::size_t count = 0;
  for (const auto& [c, vecs] : embeddings) {
    if (vecs.empty()) continue;
    if (dim < 0) {
      dim = vecs.front().size();
      sumsq = nn::Vector::Zero(dim);
    }
    nn::Vector mean = nn::Vector::Zero(dim);
    for (const auto& v : vecs) mean += v;
    mean /= static_cast<double>(vecs.size());
    for (const auto& v : vecs) sumsq += (v - mean).array().square().matrix();
    count += vecs.size();
  }
  require(count > 0, ErrorKind::Input, "fit_diagonal_covariance: no embeddings");
  nn::Vector var = sumsq / static_cast<double>(count);
  const double avg = var.mean();
  var = ((1.0 - shrinkage) * var.array() + shrinkage * avg).max(1e-6).matrix();
  stats.variance = var;
  return stats;
}

double baseline_similarity(const nn::Vector& x, const nn::Vector& y, SimilarityKind kind,
                           const SimilarityStats* stats) {
  require(x.size() == y.size(), ErrorKind::Input, "similarity: length mismatch");
  switch (kind) {
    case SimilarityKind::Cos: return cosine_sim(x, y);
    case SimilarityKind::Dot: return x.dot(y);
    case SimilarityKind::Euc: return -(x - y).norm();
    case SimilarityKind::Mah:
      require(stats && stats->fitted(), ErrorKind::State, "mahalanobis similarity needs fitted covariance stats");
      require(stats->variance.size() == x.size(), ErrorKind::Input, "mahalanobis: stats dimension mismatch");
      return -std::sqrt(((x - y).array().square() / stats->variance.array()).sum());
  }
  return 0.0;
}

std::vector<ClassId> PrototypeTable::classes() const {
  std::vector<ClassId> out;
  for (const auto& [c, p] : prototypes) out.push_back(c);
  return out;
}

PrototypeTable build_prototype_table(const std::map<ClassId, std::vector<nn::Vector>>& embeddings,
                                     SimilarityKind kind, double eta, PrototypeSource source,
                                     double mahalanobis_shrinkage) {
  PrototypeTable t;
  t.kind = kind;
  t.eta = eta;
  t.source = source;
  for (const auto& [c, vecs] : embeddings) {
    require(!vecs.empty(), ErrorKind::Input, "no embeddings for class " + std::to_string(c));
    nn::Vector mean = nn::Vector::Zero(vecs.front().size());
    for (const auto& v : vecs) mean += v;
    mean /= static_cast<double>(vecs.size());
    if (kind == SimilarityKind::Cos) {
      const double n = mean.norm();
      require(n > 1e-12, ErrorKind::Input, "degenerate prototype (zero mean) for class " + std::to_string(c));
      mean /= n;
    }
    t.prototypes[c] = mean;
  }
  if (kind == SimilarityKind::Mah) t.stats = fit_diagonal_covariance(embeddings, mahalanobis_shrinkage);
  return t;
}

nn::Vector prototype_logits(const nn::Vector& x, const PrototypeTable& table) {
  require(!table.empty(), ErrorKind::Input, "prototype table is empty");
  nn::Vector logits(static_cast<Eigen::Index>(table.prototypes.size()));
  Eigen::Index i = 0;
  for (const auto& [c, p] : table.prototypes) {
    const double s = baseline_similarity(x, p, table.kind, &table.stats);
    logits(i++) = table.kind == SimilarityKind::Cos ? table.eta * s : s;
  }
  return logits;
}

std::vector<double> prototype_probabilities(const nn::Vector& x, const PrototypeTable& table) {
  const nn::Vector logits = prototype_logits(x, table);
  const double m = logits.maxCoeff();
  nn::Vector e = (logits.array() - m).exp().matrix();
  e /= e.sum();
  return {e.data(), e.data() + e.size()};
}

ClassId predict_class(const nn::Vector& x, const PrototypeTable& table) {
  const nn::Vector logits = prototype_logits(x, table);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return table.classes()[static_cast<std::size_t>(best)];
}

namespace {

// Loss and d loss / d embeddings for the prototype cross-entropy. Row r is scored
// against tables[groups[r]] (tables[0] when `groups` is empty).
double prototype_ce_impl(const nn::Matrix& z, const std::vector<int>& labels,
                         const std::vector<const PrototypeTable*>& tables, const std::vector<int>& groups,
                         nn::Matrix* grad) {
  require(static_cast<std::size_t>(z.rows()) == labels.size(), ErrorKind::Input, "ce: embedding/label count mismatch");
  require(groups.empty() || groups.size() == labels.size(), ErrorKind::Input, "ce: group/label count mismatch");
  require(!tables.empty(), ErrorKind::Input, "ce: no prototype tables");
  for (const PrototypeTable* t : tables) require(t && !t->empty(), ErrorKind::Input, "prototype table is empty");

  if (grad) *grad = nn::Matrix::Zero(z.rows(), z.cols());
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int gi = groups.empty() ? 0 : groups[static_cast<std::size_t>(r)];
    require(gi >= 0 && static_cast<std::size_t>(gi) < tables.size(), ErrorKind::Input, "ce: group out of range");
    const PrototypeTable& table = *tables[static_cast<std::size_t>(gi)];
    const ClassId label = labels[static_cast<std::size_t>(r)];
    auto it = table.prototypes.find(label);
    require(it != table.prototypes.end(), ErrorKind::Input, "label " + std::to_string(label) + " is not a seen class");
    const auto target = static_cast<Eigen::Index>(std::distance(table.prototypes.begin(), it));
    const nn::Vector x = z.row(r).transpose();
    const nn::Vector logits = prototype_logits(x, table);
    const double m = logits.maxCoeff();
    nn::Vector p = (logits.array() - m).exp().matrix();
    const double zsum = p.sum();
    p /= zsum;
    loss += m + std::log(zsum) - logits(target);
    if (!grad) continue;

    nn::Vector dlogit = p / n;
    dlogit(target) -= 1.0 / n;
    nn::Vector g = nn::Vector::Zero(x.size());
    const double xnorm = x.norm();
    Eigen::Index j = 0;
    for (const auto& [c, pj] : table.prototypes) {
      const double w = dlogit(j++);
      switch (table.kind) {
        case SimilarityKind::Cos: {
          require(xnorm > 0.0, ErrorKind::Input, "zero embedding");
          const nn::Vector xh = x / xnorm;
          const nn::Vector ph = pj / pj.norm();
          g += w * table.eta * (ph - xh.dot(ph) * xh) / xnorm;
          break;
        }
        case SimilarityKind::Dot: g += w * pj; break;
        case SimilarityKind::Euc: {
          const nn::Vector d = x - pj;
          const double dn = d.norm();
          if (dn > 0.0) g -= w * d / dn;
          break;
        }
        case SimilarityKind::Mah: {
          const nn::Vector d = x - pj;
          const nn::Vector scaled = (d.array() / table.stats.variance.array()).matrix();
          const double dist = std::sqrt(d.dot(scaled));
          if (dist > 0.0) g -= w * scaled / dist;
          break;
        }
      }
    }
    grad->row(r) = g.transpose();
  }
  return loss / n;
}

nn::Var wrap_loss(const nn::Var& embeddings, double loss, nn::Matrix grad) {
  nn::Matrix out(1, 1);
  out(0, 0) = loss;
  return nn::make_op(std::move(out), {embeddings},
                     [embeddings, grad = std::move(grad)](nn::Node& self) { embeddings->accumulate(grad * self.grad(0, 0)); });
}

}  // namespace

double cosine_ce_loss(const nn::Matrix& embeddings, const std::vector<int>& labels, const PrototypeTable& table) {
  return prototype_ce_impl(embeddings, labels, {&table}, {}, nullptr);
}

nn::Var prototype_ce_var(const nn::Var& embeddings, const std::vector<int>& labels, const PrototypeTable& table) {
  nn::Matrix grad;
  const double loss = prototype_ce_impl(embeddings->value, labels, {&table}, {}, nn::grad_enabled() ? &grad : nullptr);
  return wrap_loss(embeddings, loss, std::move(grad));
}

nn::Var grouped_prototype_ce_var(const nn::Var& embeddings, const std::vector<int>& labels,
                                 const std::vector<int>& groups, const std::vector<PrototypeTable>& tables) {
  std::vector<const PrototypeTable*> ptrs;
  for (const auto& t : tables) ptrs.push_back(&t);
  nn::Matrix grad;
  const double loss = prototype_ce_impl(embeddings->value, labels, ptrs, groups, nn::grad_enabled() ? &grad : nullptr);
  return wrap_loss(embeddings, loss, std::move(grad));
}

}  // namespace essential
