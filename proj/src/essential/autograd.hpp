#pragma once

// Minimal reverse-mode differentiation over row-major matrices.
//
// Every activation is a 2-D matrix whose rows are batch items. Image
// activations are stored channel-major inside a row (C*H*W) and carry their
// ImageShape alongside.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace essential::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

using Var = std::shared_ptr<Node>;

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);

// Builds an interior node. `backward` receives the node after its grad is
// populated and must push gradients into the parents it captured.
Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Runs backpropagation from a scalar (1x1) root.
void backward(const Var& root);

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix init);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  std::string name;
  Var var;           // leaf node, requires_grad
  Matrix velocity;   // optimiser state

  Matrix& value() { return var->value; }
  const Matrix& value() const { return var->value; }
  void zero_grad();
};

struct ImageShape {
  int channels = 0;
  int height = 1;
  int width = 1;
  int size() const { return channels * height * width; }
  int spatial() const { return height * width; }
};

Var linear(const Var& x, const Parameter& weight, const Parameter& bias);
Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var detach(const Var& x);
Var l2_normalize_rows(const Var& x);
Var concat_cols(const std::vector<Var>& parts);
Var weighted_sum(const std::vector<std::pair<Var, double>>& terms);

Var conv2d(const Var& x, ImageShape in, const Parameter& weight, const Parameter& bias,
           int kernel, int stride, int pad, ImageShape* out);
Var max_pool2d(const Var& x, ImageShape in, int kernel, int stride, int pad, ImageShape* out);
Var global_avg_pool(const Var& x, const ImageShape& in);

// Row-wise softmax cross-entropy averaged over rows.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& targets);

Matrix softmax_rows(const Matrix& logits);

}  // namespace essential::nn
