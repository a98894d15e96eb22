#include "doctest.h"
#include "helpers.hpp"

#include "essential/cepredictor.hpp"
#include "essential/error.hpp"

#include <cmath>

using namespace essential;

namespace {

// Direct evaluation of the Jensen-Shannon formula.
double js_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = (a[i] + b[i]) / 2;
    if (a[i] > 0) s += a[i] * std::log(a[i] / m) / 2;
    if (b[i] > 0) s += b[i] * std::log(b[i] / m) / 2;
  }
  return s;
}

std::vector<nn::TapInfo> two_taps() { return {nn::TapInfo{{8, 2, 2}}, nn::TapInfo{{5, 1, 1}}}; }

std::vector<nn::Var> tap_inputs(std::mt19937_64& rng, int n) {
  return {nn::constant(testutil::random_matrix(rng, n, 32)), nn::constant(testutil::random_matrix(rng, n, 5))};
}

}  // namespace

TEST_SUITE("cepredictor") {
  TEST_CASE("js divergence examples") {
    CHECK(js_divergence(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
          doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(js_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}) ==
          doctest::Approx(0.215762).epsilon(1e-6));
    CHECK_THROWS_AS(js_divergence(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), Error);
  }

  TEST_CASE("js divergence is symmetric and bounded on random inputs") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      const auto a = testutil::random_simplex(rng, 5, true), b = testutil::random_simplex(rng, 5, true);
      const double v = js_divergence(a, b);
      CHECK(v == doctest::Approx(js_divergence(b, a)).epsilon(1e-12));
      CHECK(v >= 0.0);
      CHECK(v <= std::log(2.0) + 1e-12);
      CHECK(v == doctest::Approx(js_oracle(a, b)).epsilon(1e-9));
    }
  }

  TEST_CASE("prediction loss") {
    EntropyTrajectory truth;
    truth.append({0.5, 0.5});
    truth.append({0.9, 0.1});
    PredictedTrajectory same = to_predicted(truth);
    CHECK(prediction_loss(truth, same, 0.7, 1.0) == doctest::Approx(0.7));

    PredictedTrajectory other;
    other.predicted_probs_per_epoch = {{1.0, 0.0}, {0.2, 0.8}};
    CHECK(prediction_loss(truth, other, 0.7, 0.0) == 0.7);
    const double expected = 0.7 + 2.5 * (js_oracle({0.5, 0.5}, {1, 0}) + js_oracle({0.9, 0.1}, {0.2, 0.8})) / 2;
    CHECK(prediction_loss(truth, other, 0.7, 2.5) == doctest::Approx(expected).epsilon(1e-12));

    other.predicted_probs_per_epoch.pop_back();
    CHECK_THROWS_AS(prediction_loss(truth, other, 0.7, 1.0), Error);
  }

  TEST_CASE("differentiable js term matches the scalar formula") {
    std::mt19937_64 rng(3);
    const nn::Matrix logits = testutil::random_matrix(rng, 4, 3);
    nn::Matrix target(4, 3);
    for (int r = 0; r < 4; ++r) {
      const auto p = testutil::random_simplex(rng, 3, true);
      for (int k = 0; k < 3; ++k) target(r, k) = p[static_cast<std::size_t>(k)];
    }
    const nn::Matrix q = nn::softmax_rows(logits);
    double mean = 0.0;
    for (int r = 0; r < 4; ++r) {
      std::vector<double> a(3), b(3);
      for (int k = 0; k < 3; ++k) {
        a[static_cast<std::size_t>(k)] = target(r, k);
        b[static_cast<std::size_t>(k)] = q(r, k);
      }
      mean += js_oracle(a, b) / 4;
    }
    CHECK(js_loss(nn::constant(logits), target)->value(0, 0) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(prediction_loss_var(nn::constant(logits), target, 0.25, 2.0)->value(0, 0) ==
          doctest::Approx(0.25 + 2.0 * mean).epsilon(1e-9));
  }

  TEST_CASE("prediction loss gradient matches finite differences") {
    std::mt19937_64 rng(17);
    const nn::Matrix logits = testutil::random_matrix(rng, 5, 4);
    nn::Matrix target(5, 4);
    for (int r = 0; r < 5; ++r) {
      const auto p = testutil::random_simplex(rng, 4);
      for (int k = 0; k < 4; ++k) target(r, k) = p[static_cast<std::size_t>(k)];
    }
    const double err = testutil::gradient_check(
        [&](const nn::Var& x) { return prediction_loss_var(x, target, 0.3, 1.5); }, logits);
    CHECK(err < 1e-3);
  }

  TEST_CASE("fresh head is near uniform, deterministic and checks tap counts") {
    nn::Rng rng(1);
    PredictorHead head(two_taps(), 16, 6, rng);
    std::mt19937_64 data(2);
    const auto taps = tap_inputs(data, 10);
    const nn::Matrix p = head.predict_distribution(taps);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      std::vector<double> row(p.row(r).data(), p.row(r).data() + p.cols());
      CHECK(static_entropy(row) >= 0.9 * std::log(6.0));
    }
    CHECK(head.predict_distribution(taps) == p);
    CHECK_THROWS_AS(head.predict_distribution({taps.front()}), Error);
  }

  TEST_CASE("head grows new class outputs") {
    nn::Rng rng(1);
    PredictorHead head(two_taps(), 8, 3, rng);
    head.grow_classes(5, rng);
    CHECK(head.num_classes() == 5);
    std::mt19937_64 data(4);
    CHECK(head.predict_distribution(tap_inputs(data, 2)).cols() == 5);
  }

  TEST_CASE("the head never sends gradients into the taps") {
    nn::Rng rng(1);
    PredictorHead head(two_taps(), 8, 3, rng);
    std::mt19937_64 data(9);
    nn::Parameter a("a", testutil::random_matrix(data, 2, 32)), b("b", testutil::random_matrix(data, 2, 5));
    nn::Matrix target = nn::Matrix::Constant(2, 3, 1.0 / 3);
    target.row(0) << 1, 0, 0;
    nn::backward(prediction_loss_var(head.forward_logits({a.var, b.var}), target, 0.0, 1.0));
    CHECK(a.var->grad.size() == 0);
    CHECK(b.var->grad.size() == 0);
  }

  TEST_CASE("reevaluate_top takes the k largest predicted scores") {
    TrajectoryStore store;
    std::vector<RankedCandidate> cands;
    std::mt19937_64 rng(8);
    for (SampleId id = 1; id <= 3; ++id) {
      for (int e = 0; e < 3; ++e) record_epoch(store, {{id, testutil::random_simplex(rng, 3)}});
      cands.push_back({id, 0.1 * static_cast<double>(id * id % 5)});
    }
    // scores: id1 0.1, id2 0.4, id3 0.4 -> ties broken by ascending id
    const auto two = reevaluate_top(cands, 2, store);
    std::vector<RankedCandidate> sorted = cands;
    std::sort(sorted.begin(), sorted.end(), [](auto& x, auto& y) {
      return x.predicted_score != y.predicted_score ? x.predicted_score > y.predicted_score : x.id < y.id;
    });
    REQUIRE(two.size() == 2);
    CHECK(two.count(sorted[0].id) == 1);
    CHECK(two.count(sorted[1].id) == 1);
    CHECK(two.at(sorted[0].id) == doctest::Approx(average_cumulative_entropy(store.at(sorted[0].id))));

    CHECK(reevaluate_top(cands, 3, store).size() == 3);
    CHECK(reevaluate_top(cands, 10, store).size() == 3);
    cands[0].predicted_score = 9.0;
    const auto one = reevaluate_top(cands, 1, store);
    REQUIRE(one.size() == 1);
    CHECK(one.count(1) == 1);
    CHECK_THROWS_AS(reevaluate_top(cands, 0, store), Error);
  }
}
