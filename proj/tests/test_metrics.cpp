#include "doctest.h"
#include "helpers.hpp"

#include "essential/error.hpp"
#include "essential/metrics.hpp"

#include <cmath>

using namespace essential;

namespace {

const std::vector<double> kOurs{99.89, 97.87, 90.56, 87.86, 80.86, 81.68, 84.06};

double sym_kl_oracle(std::vector<double> p, std::vector<double> q, double eps = 1e-8) {
  double sp = 0, sq = 0;
  for (auto& v : p) sp += (v += eps);
  for (auto& v : q) sq += (v += eps);
  double a = 0, b = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = p[k] / sp, qk = q[k] / sq;
    a += pk * std::log(pk / qk);
    b += qk * std::log(qk / pk);
  }
  return (a + b) / 2;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("accuracy") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
    CHECK(accuracy({0, 0}, {1, 1}) == 0.0);
    CHECK(accuracy({1, 2, 3, 0}, {1, 2, 3, 4}) == 75.0);
    CHECK_THROWS_AS(accuracy({}, {}), Error);
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), Error);
  }

  TEST_CASE("deltas against published rows") {
    const std::vector<double> cec{97.78, 85.66, 69.34, 67.71, 55.04, 47.45, 46.39};
    const auto d = deltas(kOurs, cec);
    CHECK(d.final_delta == doctest::Approx(-37.67).epsilon(1e-12));
    CHECK(d.average_delta == doctest::Approx(-21.92).epsilon(1e-12));
    // Means are rounded before subtracting: the unrounded difference would be -37.11.
    const std::vector<double> clom{95.05, 70.57, 47.33, 44.58, 39.04, 35.89, 30.52};
    CHECK(deltas(kOurs, clom).average_delta == doctest::Approx(-37.12).epsilon(1e-12));
    const auto same = deltas(kOurs, kOurs);
    CHECK(same.final_delta == 0.0);
    CHECK(same.average_delta == 0.0);
    CHECK(round2(mean_of(kOurs)) == doctest::Approx(88.97));
    CHECK_THROWS_AS(deltas(kOurs, {1.0}), Error);
  }

  TEST_CASE("symmetric KL") {
    CHECK(symmetric_kl({0.9, 0.1}, {0.1, 0.9}) == doctest::Approx(1.757780).epsilon(1e-6));
    CHECK(inter_class_distance({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(intra_class_distance({0.25, 0.25, 0.5}, {0.25, 0.25, 0.5}) == doctest::Approx(0.0));
    CHECK(intra_class_distance({0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}) ==
          doctest::Approx(sym_kl_oracle({0.6, 0.3, 0.1}, {0.2, 0.5, 0.3})).epsilon(1e-12));
    CHECK(std::isfinite(symmetric_kl({1.0, 0.0}, {0.0, 1.0})));
    CHECK_THROWS_AS(symmetric_kl({1.0}, {0.5, 0.5}), Error);
  }

  TEST_CASE("symmetric KL matches the smoothed formula on random inputs") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 1000; ++i) {
      const auto p = testutil::random_simplex(rng, 4, true), q = testutil::random_simplex(rng, 4, true);
      const double v = symmetric_kl(p, q);
      CHECK(v == doctest::Approx(sym_kl_oracle(p, q)).epsilon(1e-9));
      CHECK(v == doctest::Approx(symmetric_kl(q, p)).epsilon(1e-12));
      CHECK(v >= 0.0);
    }
  }

  TEST_CASE("model uncertainty") {
    CHECK(model_uncertainty({{1, 0}, {0, 1}}) == 0.0);
    CHECK(model_uncertainty({{0.25, 0.25, 0.25, 0.25}}) == doctest::Approx(std::log(4.0)));
    const std::vector<ProbVector> mix{{0.5, 0.5}, {0.9, 0.1}, {1, 0}};
    const double expect = (std::log(2.0) - 0.9 * std::log(0.9) - 0.1 * std::log(0.1)) / 3;
    CHECK(model_uncertainty(mix) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(model_uncertainty({}), Error);
  }

  TEST_CASE("misclassified as base") {
    CHECK(misclassified_as_base({0, 1}, {2, 3}, {0, 1}) == 1.0);
    CHECK(misclassified_as_base({2, 3}, {2, 3}, {0, 1}) == 0.0);
    CHECK(misclassified_as_base({0, 1, 2, 3, 3}, {2, 2, 2, 3, 3}, {0, 1}) == doctest::Approx(0.4));
    CHECK_THROWS_AS(misclassified_as_base({}, {}, {0}), Error);
    CHECK_THROWS_AS(misclassified_as_base({0}, {0}, {0}), Error);
  }

  TEST_CASE("confusion matrix and class means") {
    const auto m = confusion_matrix({0, 1, 1, 2}, {0, 1, 2, 2}, 3);
    CHECK(m[0][0] == 1);
    CHECK(m[2][1] == 1);
    CHECK(m[2][2] == 1);
    CHECK_THROWS_AS(confusion_matrix({5}, {0}, 3), Error);
    const auto means = class_mean_distributions({{1, 0}, {0, 1}, {0.2, 0.8}}, {0, 0, 1}, 2);
    CHECK(means[0] == std::vector<double>{0.5, 0.5});
    CHECK(means[1] == std::vector<double>{0.2, 0.8});
  }

  TEST_CASE("session report round-trips through json") {
    SessionReport r;
    r.session = 2;
    r.seen_classes = 3;
    r.accuracies = {99.5, 90.25, 80.125};
    r.confusion = {{5, 0, 0}, {1, 4, 0}, {0, 2, 3}};
    r.inter_class = {{0, 1, 2}, {1, 0, 3}, {2, 3, 0}};
    r.intra_class = {0.1, 0.2, 0.3};
    r.uncertainty_per_epoch = {0.7, 0.5};
    r.misclassified_as_base_per_epoch = {0.5, 0.25};
    r.misclassified_as_base_final = 0.25;
    r.loss_per_epoch = {2.0, 1.5};
    r.warnings = {"class 2: quota exceeds population"};
    CHECK(r.mean_inter_class() == doctest::Approx(2.0));
    CHECK(r.mean_intra_class() == doctest::Approx(0.2));
    const auto back = report_from_json(report_to_json(r));
    CHECK(back.accuracies == r.accuracies);
    CHECK(back.confusion == r.confusion);
    CHECK(back.inter_class == r.inter_class);
    CHECK(back.misclassified_as_base_final == 0.25);
    CHECK(back.warnings == r.warnings);
    CHECK_THROWS_AS(report_from_json("{not json"), Error);
  }
}
