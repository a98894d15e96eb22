#include "essential/layers.hpp"

#include "essential/error.hpp"

#include <cmath>

namespace essential::nn {

namespace {

Matrix he_normal(int rows, int cols, int fan_in, double gain, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / std::max(1, fan_in)));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

class MlpBackbone final : public Backbone {
 public:
  MlpBackbone(const BackboneSpec& spec, Rng& rng) : input_(spec.input) {
    require(!spec.hidden.empty(), ErrorKind::Config, "mlp backbone needs at least one stage");
    int in = spec.input.size();
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      const bool last = i + 1 == spec.hidden.size();
      stages_.emplace_back("mlp." + std::to_string(i), in, spec.hidden[i], rng, last ? 1.0 : 2.0);
      taps_.push_back(TapInfo{ImageShape{spec.hidden[i], 1, 1}});
      in = spec.hidden[i];
    }
  }

  BackboneOutput forward(const Var& x) const override {
    BackboneOutput out;
    Var h = x;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      h = stages_[i].forward(h);
      if (i + 1 < stages_.size()) h = relu(h);
      out.taps.push_back(h);
    }
    out.embedding = h;
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<MlpBackbone>(*this); }
  void collect(std::vector<Parameter*>& out) override {
    for (auto& s : stages_) s.collect(out);
  }
  int embedding_dim() const override { return stages_.back().out_features(); }
  const std::vector<TapInfo>& taps() const override { return taps_; }
  const ImageShape& input_shape() const override { return input_; }

 private:
  ImageShape input_;
  std::vector<Linear> stages_;
  std::vector<TapInfo> taps_;
};

// conv3x3 -> relu -> conv3x3 (zero-initialised) + shortcut -> relu.
struct BasicBlock {
  Conv2d conv1, conv2, shortcut;
  bool has_shortcut = false;

  BasicBlock(const std::string& name, int in_c, int out_c, int stride, Rng& rng)
      : conv1(name + ".conv1", in_c, out_c, 3, stride, 1, rng),
        conv2(name + ".conv2", out_c, out_c, 3, 1, 1, rng, /*zero_init=*/true) {
    if (stride != 1 || in_c != out_c) {
      has_shortcut = true;
      shortcut = Conv2d(name + ".shortcut", in_c, out_c, 1, stride, 0, rng);
    }
  }

  Var forward(const Var& x, const ImageShape& in, ImageShape* out) const {
    ImageShape mid, o;
    Var h = relu(conv1.forward(x, in, &mid));
    h = conv2.forward(h, mid, &o);
    Var skip = has_shortcut ? shortcut.forward(x, in, nullptr) : x;
    *out = o;
    return relu(add(h, skip));
  }

  void collect(std::vector<Parameter*>& out) {
    conv1.collect(out);
    conv2.collect(out);
    if (has_shortcut) shortcut.collect(out);
  }
};

struct StageSpec {
  int channels;
  int blocks;
  int stride;
};

class ResNetBackbone final : public Backbone {
 public:
  ResNetBackbone(const ImageShape& input, int stem_channels, int stem_kernel, int stem_stride,
                 bool stem_pool, const std::vector<StageSpec>& stages, Rng& rng)
      : input_(input), stem_pool_(stem_pool) {
    stem_ = Conv2d("stem", input.channels, stem_channels, stem_kernel, stem_stride, stem_kernel / 2, rng);
    ImageShape shape;
    shape.channels = stem_channels;
    shape.height = (input.height + 2 * (stem_kernel / 2) - stem_kernel) / stem_stride + 1;
    shape.width = (input.width + 2 * (stem_kernel / 2) - stem_kernel) / stem_stride + 1;
    if (stem_pool_) {
      shape.height = (shape.height + 2 - 3) / 2 + 1;
      shape.width = (shape.width + 2 - 3) / 2 + 1;
    }
    int in_c = stem_channels;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      std::vector<BasicBlock> blocks;
      for (int b = 0; b < stages[s].blocks; ++b) {
        const int stride = b == 0 ? stages[s].stride : 1;
        blocks.emplace_back("stage" + std::to_string(s) + ".block" + std::to_string(b), in_c,
                            stages[s].channels, stride, rng);
        in_c = stages[s].channels;
        shape.channels = in_c;
        shape.height = (shape.height + 2 - 3) / stride + 1;
        shape.width = (shape.width + 2 - 3) / stride + 1;
      }
      stages_.push_back(std::move(blocks));
      taps_.push_back(TapInfo{shape});
    }
    embedding_dim_ = in_c;
  }

  BackboneOutput forward(const Var& x) const override {
    BackboneOutput out;
    ImageShape shape;
    Var h = relu(stem_.forward(x, input_, &shape));
    if (stem_pool_) h = max_pool2d(h, shape, 3, 2, 1, &shape);
    for (const auto& stage : stages_) {
      for (const auto& block : stage) h = block.forward(h, shape, &shape);
      out.taps.push_back(h);
    }
    out.embedding = global_avg_pool(h, shape);
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<ResNetBackbone>(*this); }
  void collect(std::vector<Parameter*>& out) override {
    stem_.collect(out);
    for (auto& stage : stages_)
      for (auto& b : stage) b.collect(out);
  }
  int embedding_dim() const override { return embedding_dim_; }
  const std::vector<TapInfo>& taps() const override { return taps_; }
  const ImageShape& input_shape() const override { return input_; }

 private:
  ImageShape input_;
  bool stem_pool_;
  Conv2d stem_;
  std::vector<std::vector<BasicBlock>> stages_;
  std::vector<TapInfo> taps_;
  int embedding_dim_ = 0;
};

// Three conv blocks (conv3x3 + relu, 2x2 max-pool between blocks).
class Conv3Backbone final : public Backbone {
 public:
  Conv3Backbone(const ImageShape& input, int width, Rng& rng) : input_(input) {
    int in_c = input.channels;
    ImageShape shape = input;
    for (int b = 0; b < 3; ++b) {
      const int out_c = width << b;
      convs_.emplace_back("conv" + std::to_string(b), in_c, out_c, 3, 1, 1, rng);
      shape.channels = out_c;
      if (b < 2) {
        shape.height = (shape.height - 2) / 2 + 1;
        shape.width = (shape.width - 2) / 2 + 1;
      }
      taps_.push_back(TapInfo{shape});
      in_c = out_c;
    }
  }

  BackboneOutput forward(const Var& x) const override {
    BackboneOutput out;
    ImageShape shape = input_;
    Var h = x;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
      h = relu(convs_[b].forward(h, shape, &shape));
      if (b < 2) h = max_pool2d(h, shape, 2, 2, 0, &shape);
      out.taps.push_back(h);
    }
    out.embedding = global_avg_pool(h, shape);
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<Conv3Backbone>(*this); }
  void collect(std::vector<Parameter*>& out) override {
    for (auto& c : convs_) c.collect(out);
  }
  int embedding_dim() const override { return taps_.back().shape.channels; }
  const std::vector<TapInfo>& taps() const override { return taps_; }
  const ImageShape& input_shape() const override { return input_; }

 private:
  ImageShape input_;
  std::vector<Conv2d> convs_;
  std::vector<TapInfo> taps_;
};

}  // namespace

Linear::Linear(std::string name, int in, int out, Rng& rng, double gain)
    : weight_(name + ".weight", he_normal(in, out, in, gain, rng)),
      bias_(name + ".bias", Matrix::Zero(1, out)) {}

void Linear::grow_outputs(int new_out, Rng& rng) {
  const int old_out = out_features();
  if (new_out <= old_out) return;
  Matrix w(in_features(), new_out);
  w.leftCols(old_out) = weight_.value();
  w.rightCols(new_out - old_out) = he_normal(in_features(), new_out - old_out, in_features(), 1.0, rng);
  Matrix b = Matrix::Zero(1, new_out);
  b.leftCols(old_out) = bias_.value();
  weight_ = Parameter(weight_.name, std::move(w));
  bias_ = Parameter(bias_.name, std::move(b));
}

Conv2d::Conv2d(std::string name, int in_c, int out_c, int kernel, int stride, int pad, Rng& rng,
               bool zero_init)
    : weight_(name + ".weight", zero_init ? Matrix(Matrix::Zero(out_c, in_c * kernel * kernel))
                                          : he_normal(out_c, in_c * kernel * kernel,
                                                      in_c * kernel * kernel, 2.0, rng)),
      bias_(name + ".bias", Matrix::Zero(1, out_c)),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

BackboneKind parse_backbone_kind(const std::string& name) {
  if (name == "mlp") return BackboneKind::Mlp;
  if (name == "conv3") return BackboneKind::Conv3;
  if (name == "resnet20") return BackboneKind::ResNet20;
  if (name == "resnet18") return BackboneKind::ResNet18;
  fail(ErrorKind::Config, "unknown backbone '" + name + "' (expected mlp, conv3, resnet20, resnet18)");
}

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Mlp: return "mlp";
    case BackboneKind::Conv3: return "conv3";
    case BackboneKind::ResNet20: return "resnet20";
    case BackboneKind::ResNet18: return "resnet18";
  }
  return "mlp";
}

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case BackboneKind::Mlp: return std::make_unique<MlpBackbone>(spec, rng);
    case BackboneKind::Conv3: return std::make_unique<Conv3Backbone>(spec.input, spec.width, rng);
    case BackboneKind::ResNet20:
      return std::make_unique<ResNetBackbone>(
          spec.input, spec.width, 3, 1, false,
          std::vector<StageSpec>{{spec.width, 3, 1}, {spec.width * 2, 3, 2}, {spec.width * 4, 3, 2}}, rng);
    case BackboneKind::ResNet18:
      return std::make_unique<ResNetBackbone>(
          spec.input, 64, 7, 2, true,
          std::vector<StageSpec>{{64, 2, 1}, {128, 2, 2}, {256, 2, 2}, {512, 2, 2}}, rng);
  }
  fail(ErrorKind::Internal, "unhandled backbone kind");
}

Projector::Projector(int in, int hidden, int out, Rng& rng)
    : first_("projector.0", in, hidden, rng), second_("projector.1", hidden, out, rng, 1.0) {}

void Sgd::step(const std::vector<Parameter*>& params, double lr) const {
  for (Parameter* p : params) {
    if (p->var->grad.size() == 0) continue;
    if (!p->var->grad.allFinite()) fail(ErrorKind::Training, "non-finite gradient in " + p->name);
    p->velocity = momentum_ * p->velocity + p->var->grad;
    p->value() -= lr * p->velocity;
  }
}

void Sgd::zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace essential::nn
