#include "doctest.h"
#include "helpers.hpp"

#include "essential/contrastive.hpp"
#include "essential/error.hpp"

#include <cmath>

using namespace essential;

namespace {

nn::Matrix unit_rows(std::mt19937_64& rng, int n, int d) {
  nn::Matrix m = testutil::random_matrix(rng, n, d);
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
  return m;
}

// Direct double sum over queries and the contrast set A = keys ++ queue.
double scl_oracle(const nn::Matrix& q, const std::vector<int>& ql, const nn::Matrix& k, const std::vector<int>& kl,
                  const FeatureQueue& queue, double tau) {
  std::vector<std::vector<double>> a;
  std::vector<int> al;
  for (Eigen::Index r = 0; r < k.rows(); ++r) {
    a.emplace_back(k.row(r).data(), k.row(r).data() + k.cols());
    al.push_back(kl[static_cast<std::size_t>(r)]);
  }
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto& f = queue.features()[i];
    a.emplace_back(f.data(), f.data() + f.size());
    al.push_back(queue.labels()[i]);
  }
  double total = 0;
  int counted = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    auto dot = [&](const std::vector<double>& v) {
      double s = 0;
      for (std::size_t j = 0; j < v.size(); ++j) s += q(i, static_cast<Eigen::Index>(j)) * v[j];
      return s / tau;
    };
    double denom = 0;
    for (const auto& v : a) denom += std::exp(dot(v));
    double sum = 0;
    int npos = 0;
    for (std::size_t p = 0; p < a.size(); ++p)
      if (al[p] == ql[static_cast<std::size_t>(i)]) {
        sum += std::log(std::exp(dot(a[p])) / denom);
        ++npos;
      }
    if (npos == 0) continue;
    total += -sum / npos;
    ++counted;
  }
  return counted ? total / counted : 0.0;
}

std::vector<int> random_labels(std::mt19937_64& rng, int n, int k) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = d(rng);
  return out;
}

}  // namespace

TEST_SUITE("contrastive") {
  TEST_CASE("momentum update formula") {
    MomentumPair p{{nn::Matrix::Ones(1, 1)}, {nn::Matrix::Zero(1, 1)}, 0.999};
    momentum_update(p);
    CHECK(p.key[0](0, 0) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(p.query[0](0, 0) == 1.0);

    MomentumPair same{{nn::Matrix::Constant(2, 2, 0.3)}, {nn::Matrix::Constant(2, 2, 0.3)}, 0.9};
    momentum_update(same);
    CHECK((same.key[0].array() - 0.3).abs().maxCoeff() < 1e-15);

    MomentumPair zero{{nn::Matrix::Constant(1, 3, 2.5)}, {nn::Matrix::Zero(1, 3)}, 0.0};
    momentum_update(zero);
    CHECK(zero.key[0] == zero.query[0]);

    MomentumPair bad{{nn::Matrix::Zero(1, 2)}, {nn::Matrix::Zero(2, 1)}, 0.5};
    CHECK_THROWS_AS(momentum_update(bad), Error);
  }

  TEST_CASE("momentum update matches the elementwise oracle") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> mu_d(0, 1);
    for (int i = 0; i < 1000; ++i) {
      const nn::Matrix q = testutil::random_matrix(rng, 2, 3), k = testutil::random_matrix(rng, 2, 3);
      const double mu = mu_d(rng);
      MomentumPair p{{q}, {k}, mu};
      momentum_update(p);
      for (Eigen::Index j = 0; j < q.size(); ++j)
        CHECK(p.key[0].data()[j] == doctest::Approx(mu * k.data()[j] + (1 - mu) * q.data()[j]).epsilon(1e-12));
    }
  }

  TEST_CASE("feature queue is a FIFO ring with aligned labels") {
    FeatureQueue q(4);
    std::mt19937_64 rng(1);
    const nn::Matrix a = unit_rows(rng, 2, 3), b = unit_rows(rng, 3, 3);
    q.enqueue(a, {1, 2});
    q.enqueue(b, {3, 4, 5});
    REQUIRE(q.size() == 4);
    CHECK(q.labels() == std::deque<int>{2, 3, 4, 5});
    CHECK(q.features()[0] == a.row(1).transpose());
    CHECK(q.features()[3] == b.row(2).transpose());

    FeatureQueue full(3);
    full.enqueue(b, {7, 8, 9});
    CHECK(full.size() == 3);
    CHECK(full.labels().front() == 7);

    nn::Matrix not_unit = nn::Matrix::Constant(1, 3, 1.0);
    CHECK_THROWS_AS(full.enqueue(not_unit, {1}), Error);
    CHECK_THROWS_AS(full.enqueue(a, {1}), Error);
  }

  TEST_CASE("identical embeddings give ln |A|") {
    nn::Matrix q(1, 2);
    q << 1, 0;
    const nn::Matrix k = nn::Matrix::Constant(3, 2, 0.0).rowwise() + q.row(0);
    CHECK(scl_loss(q, {0}, k, {0, 0, 0}, FeatureQueue(0), 0.1) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }

  TEST_CASE("a dominant positive drives the loss to zero as tau shrinks") {
    nn::Matrix q(1, 2), k(2, 2);
    q << 1, 0;
    k << 1, 0, 0, 1;
    CHECK(scl_loss(q, {0}, k, {0, 1}, FeatureQueue(0), 0.01) < 1e-20);
  }

  TEST_CASE("scl matches the direct double sum") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> batch_d(2, 16), queue_d(0, 32);
    for (int trial = 0; trial < 300; ++trial) {
      const int b = batch_d(rng), ql = queue_d(rng), d = 5;
      FeatureQueue queue(static_cast<std::size_t>(ql));
      if (ql > 0) queue.enqueue(unit_rows(rng, ql, d), random_labels(rng, ql, 4));
      const nn::Matrix q = unit_rows(rng, b, d), k = unit_rows(rng, b, d);
      const auto labels = random_labels(rng, b, 4);
      const double tau = 0.07 + 0.5 * (trial % 3);
      CHECK(scl_loss(q, labels, k, labels, queue, tau) ==
            doctest::Approx(scl_oracle(q, labels, k, labels, queue, tau)).epsilon(1e-9));
    }
  }

  TEST_CASE("expanded scl uses (class, transformation) positives") {
    std::mt19937_64 rng(8);
    const nn::Matrix q = unit_rows(rng, 4, 3), k = unit_rows(rng, 4, 3);
    const std::vector<int> cls{0, 0, 1, 1}, tr{0, 1, 0, 1};
    std::vector<int> composite;
    for (std::size_t i = 0; i < 4; ++i) composite.push_back(cls[i] * 2 + tr[i]);
    CHECK(scl_loss_expanded(q, cls, tr, k, cls, tr, FeatureQueue(0), 0.2, 2) ==
          doctest::Approx(scl_oracle(q, composite, k, composite, FeatureQueue(0), 0.2)).epsilon(1e-12));
    const std::vector<int> zeros(4, 0);
    CHECK(scl_loss_expanded(q, cls, zeros, k, cls, zeros, FeatureQueue(0), 0.2, 1) ==
          scl_loss(q, cls, k, cls, FeatureQueue(0), 0.2));
    // The anchor of class 2 has no partner and is left out of the mean.
    const std::vector<int> kc{0, 0, 1, 1}, qc{0, 0, 1, 2};
    CHECK(scl_loss_expanded(q, qc, zeros, k, kc, zeros, FeatureQueue(0), 0.2, 1) ==
          doctest::Approx(scl_oracle(q.topRows(3), {0, 0, 1}, k, kc, FeatureQueue(0), 0.2)).epsilon(1e-12));
  }

  TEST_CASE("empty contrast set is an error") {
    nn::Matrix q(1, 2);
    q << 1, 0;
    CHECK_THROWS_AS(scl_loss(q, {0}, nn::Matrix(0, 2), {}, FeatureQueue(0), 0.1), Error);
  }

  TEST_CASE("scl gradient matches finite differences") {
    std::mt19937_64 rng(3);
    FeatureQueue queue(6);
    queue.enqueue(unit_rows(rng, 6, 4), {0, 1, 2, 0, 1, 2});
    const nn::Matrix k = unit_rows(rng, 5, 4);
    const std::vector<int> labels{0, 1, 1, 2, 0};
    // The loss is defined on unit queries, so differentiate through the normalisation.
    const double err = testutil::gradient_check(
        [&](const nn::Var& x) { return scl_loss_var(nn::l2_normalize_rows(x), labels, k, labels, queue, 0.3); },
        testutil::random_matrix(rng, 5, 4));
    CHECK(err < 1e-3);
  }
}
