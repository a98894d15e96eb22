#pragma once

#include "essential/autograd.hpp"

#include <cmath>
#include <functional>
#include <cstdlib>
#include <filesystem>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline std::string temp_dir(const std::string& name) {
  const char* root = std::getenv("ESSENTIAL_TEST_TMP");
  std::filesystem::path p = root ? root : std::filesystem::temp_directory_path() / "essential_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, bool allow_zeros = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) {
    v = (allow_zeros && u(rng) < 0.2) ? 0.0 : -std::log(u(rng) + 1e-300);
    s += v;
  }
  if (s == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& v : p) v /= s;
  return p;
}

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) of the
// gradient of a scalar function at x, by central differences.
inline double gradient_check(const std::function<essential::nn::Var(const essential::nn::Var&)>& f,
                             const essential::nn::Matrix& x, double h = 1e-6) {
  using namespace essential;
  nn::Parameter p("x", x);
  nn::Var out = f(p.var);
  nn::backward(out);
  const nn::Matrix analytic = p.var->grad;
  nn::Matrix numeric(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      nn::Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      numeric(i, j) = (f(nn::constant(xp))->value(0, 0) - f(nn::constant(xm))->value(0, 0)) / (2 * h);
    }
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

inline essential::nn::Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  essential::nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace testutil
