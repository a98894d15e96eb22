#include "essential/autograd.hpp"

#include "essential/error.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace essential::nn {

namespace {
thread_local bool g_grad_enabled = true;

bool any_requires_grad(const std::vector<Var>& parents) {
  for (const auto& p : parents)
    if (p && p->requires_grad) return true;
  return false;
}

using ColMap = Eigen::Map<Matrix>;
using ConstColMap = Eigen::Map<const Matrix>;

// Unfolds one sample (C*H*W, channel-major) into [Ho*Wo, C*k*k].
void im2col(const double* src, const ImageShape& in, int kernel, int stride, int pad, int out_h,
            int out_w, Matrix& cols) {
  const int kk = kernel * kernel;
  cols.setZero(out_h * out_w, in.channels * kk);
  for (int c = 0; c < in.channels; ++c) {
    const double* plane = src + static_cast<std::ptrdiff_t>(c) * in.spatial();
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const int col = c * kk + ki * kernel + kj;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= in.width) continue;
            cols(oy * out_w + ox, col) = plane[iy * in.width + ix];
          }
        }
      }
    }
  }
}

void col2im(const Matrix& cols, const ImageShape& in, int kernel, int stride, int pad, int out_h,
            int out_w, double* dst) {
  const int kk = kernel * kernel;
  for (int c = 0; c < in.channels; ++c) {
    double* plane = dst + static_cast<std::ptrdiff_t>(c) * in.spatial();
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const int col = c * kk + ki * kernel + kj;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= in.width) continue;
            plane[iy * in.width + ix] += cols(oy * out_w + ox, col);
          }
        }
      }
    }
  }
}
}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& root) {
  require(root && root->value.size() == 1, ErrorKind::Internal, "backward() needs a scalar root");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; deep residual graphs overflow recursion.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Interior grads are not needed after the pass; free them.
  for (Node* n : order) {
    n->grad.resize(0, 0);
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

Parameter::Parameter(std::string n, Matrix init) : name(std::move(n)) {
  var = std::make_shared<Node>();
  var->value = std::move(init);
  var->requires_grad = true;
  velocity = Matrix::Zero(var->value.rows(), var->value.cols());
}

// Copies own a fresh leaf; an unset parameter (e.g. an absent shortcut) stays unset.
Parameter::Parameter(const Parameter& other) : name(other.name), velocity(other.velocity) {
  if (!other.var) return;
  var = std::make_shared<Node>();
  var->value = other.var->value;
  var->requires_grad = true;
}

Parameter& Parameter::operator=(const Parameter& other) {
  if (this != &other) {
    name = other.name;
    velocity = other.velocity;
    var.reset();
    if (other.var) {
      var = std::make_shared<Node>();
      var->value = other.var->value;
      var->requires_grad = true;
    }
  }
  return *this;
}

void Parameter::zero_grad() { var->grad.resize(0, 0); }

Var linear(const Var& x, const Parameter& weight, const Parameter& bias) {
  require(x->value.cols() == weight.value().rows(), ErrorKind::Internal,
          "linear: input width " + std::to_string(x->value.cols()) + " != weight rows " +
              std::to_string(weight.value().rows()) + " (" + weight.name + ")");
  Matrix out = x->value * weight.value();
  out.rowwise() += bias.value().row(0);
  Var w = weight.var, b = bias.var;
  return make_op(std::move(out), {x, w, b}, [x, w, b](Node& self) {
    if (x->requires_grad) x->accumulate(self.grad * w->value.transpose());
    w->accumulate(x->value.transpose() * self.grad);
    b->accumulate(self.grad.colwise().sum());
  });
}

Var relu(const Var& x) {
  Matrix out = x->value.cwiseMax(0.0);
  return make_op(std::move(out), {x}, [x](Node& self) {
    x->accumulate((x->value.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
          ErrorKind::Internal, "add: shape mismatch");
  return make_op(a->value + b->value, {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) b->accumulate(self.grad);
  });
}

Var detach(const Var& x) { return constant(x->value); }

Var l2_normalize_rows(const Var& x) {
  const Vector norms = x->value.rowwise().norm().cwiseMax(1e-12);
  Matrix out = x->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) /= norms(r);
  return make_op(out, {x}, [x, norms, out](Node& self) {
    Matrix g(self.grad.rows(), self.grad.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = self.grad.row(r).dot(out.row(r));
      g.row(r) = (self.grad.row(r) - dot * out.row(r)) / norms(r);
    }
    x->accumulate(g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::Internal, "concat_cols: no inputs");
  const Eigen::Index rows = parts.front()->value.rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p->value.rows() == rows, ErrorKind::Internal, "concat_cols: row mismatch");
    cols += p->value.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p->value.cols()) = p->value;
    offset += p->value.cols();
  }
  return make_op(std::move(out), parts, [parts](Node& self) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) p->accumulate(self.grad.middleCols(off, p->value.cols()));
      off += p->value.cols();
    }
  });
}

Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
  Matrix out = Matrix::Zero(1, 1);
  std::vector<Var> parents;
  for (const auto& [v, w] : terms) {
    require(v->value.size() == 1, ErrorKind::Internal, "weighted_sum expects scalars");
    out(0, 0) += w * v->value(0, 0);
    parents.push_back(v);
  }
  return make_op(std::move(out), parents, [terms](Node& self) {
    for (const auto& [v, w] : terms)
      if (v->requires_grad) v->accumulate(self.grad * w);
  });
}

Var conv2d(const Var& x, ImageShape in, const Parameter& weight, const Parameter& bias,
           int kernel, int stride, int pad, ImageShape* out_shape) {
  require(x->value.cols() == in.size(), ErrorKind::Internal, "conv2d: input shape mismatch");
  require(weight.value().cols() == in.channels * kernel * kernel, ErrorKind::Internal,
          "conv2d: weight shape mismatch (" + weight.name + ")");
  const int out_c = static_cast<int>(weight.value().rows());
  const int out_h = (in.height + 2 * pad - kernel) / stride + 1;
  const int out_w = (in.width + 2 * pad - kernel) / stride + 1;
  const ImageShape os{out_c, out_h, out_w};
  if (out_shape) *out_shape = os;

  const Eigen::Index n = x->value.rows();
  Matrix out(n, os.size());
  Matrix cols;
  const Matrix wt = weight.value().transpose();
  for (Eigen::Index s = 0; s < n; ++s) {
    im2col(x->value.row(s).data(), in, kernel, stride, pad, out_h, out_w, cols);
    Matrix sp = cols * wt;  // [HoWo, O]
    sp.rowwise() += bias.value().row(0);
    ColMap(out.row(s).data(), out_c, os.spatial()) = sp.transpose();
  }
  Var w = weight.var, b = bias.var;
  return make_op(std::move(out), {x, w, b}, [x, w, b, in, os, kernel, stride, pad](Node& self) {
    Matrix cols;
    Matrix dx;
    if (x->requires_grad) dx = Matrix::Zero(x->value.rows(), x->value.cols());
    Matrix dw = Matrix::Zero(w->value.rows(), w->value.cols());
    Matrix db = Matrix::Zero(1, w->value.rows());
    for (Eigen::Index s = 0; s < self.grad.rows(); ++s) {
      const Matrix g = ConstColMap(self.grad.row(s).data(), os.channels, os.spatial()).transpose();
      im2col(x->value.row(s).data(), in, kernel, stride, pad, os.height, os.width, cols);
      dw.noalias() += g.transpose() * cols;
      db += g.colwise().sum();
      if (x->requires_grad) {
        const Matrix dcols = g * w->value;
        col2im(dcols, in, kernel, stride, pad, os.height, os.width, dx.row(s).data());
      }
    }
    w->accumulate(dw);
    b->accumulate(db);
    if (x->requires_grad) x->accumulate(dx);
  });
}

Var max_pool2d(const Var& x, ImageShape in, int kernel, int stride, int pad,
               ImageShape* out_shape) {
  const int out_h = (in.height + 2 * pad - kernel) / stride + 1;
  const int out_w = (in.width + 2 * pad - kernel) / stride + 1;
  const ImageShape os{in.channels, out_h, out_w};
  if (out_shape) *out_shape = os;
  const Eigen::Index n = x->value.rows();
  Matrix out(n, os.size());
  std::vector<int> argmax(static_cast<std::size_t>(n * os.size()), -1);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int c = 0; c < in.channels; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = -1;
          for (int ki = 0; ki < kernel; ++ki) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= in.height) continue;
            for (int kj = 0; kj < kernel; ++kj) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= in.width) continue;
              const int idx = c * in.spatial() + iy * in.width + ix;
              if (x->value(s, idx) > best) {
                best = x->value(s, idx);
                best_idx = idx;
              }
            }
          }
          const int o = c * os.spatial() + oy * out_w + ox;
          out(s, o) = best;
          argmax[static_cast<std::size_t>(s * os.size() + o)] = best_idx;
        }
      }
    }
  }
  const int out_size = os.size();
  return make_op(std::move(out), {x}, [x, argmax = std::move(argmax), out_size](Node& self) {
    Matrix dx = Matrix::Zero(x->value.rows(), x->value.cols());
    for (Eigen::Index s = 0; s < self.grad.rows(); ++s)
      for (int o = 0; o < out_size; ++o) {
        const int idx = argmax[static_cast<std::size_t>(s * out_size + o)];
        if (idx >= 0) dx(s, idx) += self.grad(s, o);
      }
    x->accumulate(dx);
  });
}

Var global_avg_pool(const Var& x, const ImageShape& in) {
  require(x->value.cols() == in.size(), ErrorKind::Internal, "global_avg_pool: shape mismatch");
  if (in.spatial() == 1) return x;
  const Eigen::Index n = x->value.rows();
  Matrix out(n, in.channels);
  for (Eigen::Index s = 0; s < n; ++s)
    for (int c = 0; c < in.channels; ++c)
      out(s, c) = x->value.row(s).segment(c * in.spatial(), in.spatial()).mean();
  return make_op(std::move(out), {x}, [x, in](Node& self) {
    Matrix dx(x->value.rows(), x->value.cols());
    const double inv = 1.0 / in.spatial();
    for (Eigen::Index s = 0; s < dx.rows(); ++s)
      for (int c = 0; c < in.channels; ++c)
        dx.row(s).segment(c * in.spatial(), in.spatial()).setConstant(self.grad(s, c) * inv);
    x->accumulate(dx);
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& targets) {
  const Eigen::Index n = logits->value.rows();
  require(static_cast<Eigen::Index>(targets.size()) == n, ErrorKind::Internal,
          "softmax_cross_entropy: target count mismatch");
  Matrix probs = softmax_rows(logits->value);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < logits->value.cols(), ErrorKind::Input,
            "softmax_cross_entropy: target " + std::to_string(t) + " outside 0.." +
                std::to_string(logits->value.cols() - 1));
    const double m = logits->value.row(r).maxCoeff();
    const double lse = m + std::log((logits->value.row(r).array() - m).exp().sum());
    loss += lse - logits->value(r, t);
  }
  loss /= static_cast<double>(n);
  Matrix out(1, 1);
  out(0, 0) = loss;
  return make_op(std::move(out), {logits}, [logits, probs, targets](Node& self) {
    Matrix g = probs;
    for (std::size_t r = 0; r < targets.size(); ++r) g(static_cast<Eigen::Index>(r), targets[r]) -= 1.0;
    g *= self.grad(0, 0) / static_cast<double>(targets.size());
    logits->accumulate(g);
  });
}

}  // namespace essential::nn
