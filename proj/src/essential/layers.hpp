#pragma once

#include "essential/autograd.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace essential::nn {

using Rng = std::mt19937_64;

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, Rng& rng, double gain = 2.0);

  Var forward(const Var& x) const { return linear(x, weight_, bias_); }
  int in_features() const { return static_cast<int>(weight_.value().rows()); }
  int out_features() const { return static_cast<int>(weight_.value().cols()); }

  // Appends output units (new classes). Existing columns are untouched.
  void grow_outputs(int new_out, Rng& rng);

  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_c, int out_c, int kernel, int stride, int pad, Rng& rng,
         bool zero_init = false);

  Var forward(const Var& x, const ImageShape& in, ImageShape* out) const {
    return conv2d(x, in, weight_, bias_, kernel_, stride_, pad_, out);
  }
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); out.push_back(&bias_); }

 private:
  Parameter weight_;
  Parameter bias_;
  int kernel_ = 1, stride_ = 1, pad_ = 0;
};

struct TapInfo {
  ImageShape shape;  // spatial 1x1 for vector-valued stages
};

struct BackboneOutput {
  Var embedding;            // [N, embedding_dim]
  std::vector<Var> taps;    // one per stage, [N, shape.size()]
};

enum class BackboneKind { Mlp, Conv3, ResNet20, ResNet18 };

BackboneKind parse_backbone_kind(const std::string& name);
std::string to_string(BackboneKind kind);

class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual BackboneOutput forward(const Var& x) const = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
  virtual void collect(std::vector<Parameter*>& out) = 0;
  virtual int embedding_dim() const = 0;
  virtual const std::vector<TapInfo>& taps() const = 0;
  virtual const ImageShape& input_shape() const = 0;
};

struct BackboneSpec {
  BackboneKind kind = BackboneKind::Mlp;
  ImageShape input;
  std::vector<int> hidden{128, 64};  // MLP stage widths; last is the embedding
  int width = 16;                    // base channel count for conv backbones
};

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, Rng& rng);

// Two-layer projector whose output is L2-normalised.
class Projector {
 public:
  Projector() = default;
  Projector(int in, int hidden, int out, Rng& rng);
  Var forward(const Var& z) const { return l2_normalize_rows(second_.forward(relu(first_.forward(z)))); }
  void collect(std::vector<Parameter*>& out) { first_.collect(out); second_.collect(out); }

 private:
  Linear first_;
  Linear second_;
};

class Sgd {
 public:
  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}
  void step(const std::vector<Parameter*>& params, double lr) const;
  static void zero_grad(const std::vector<Parameter*>& params);

 private:
  double momentum_;
};

}  // namespace essential::nn
