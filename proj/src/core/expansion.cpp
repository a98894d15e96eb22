#include "essential/expansion.hpp"

#include "essential/error.hpp"

#include <cmath>
#include <set>

namespace essential {

namespace {

constexpr std::array<int, 3> kIdentity{0, 1, 2};
constexpr std::array<int, 3> kGbr{1, 2, 0};
constexpr std::array<int, 3> kBrg{2, 0, 1};

Transformation make(int turns, std::array<int, 3> perm) {
  Transformation t;
  t.quarter_turns = turns;
  t.channel_perm = perm;
  t.permutes_channels = perm != kIdentity;
  t.name = "rot" + std::to_string(90 * turns) + "_perm" + std::to_string(perm[0]) + std::to_string(perm[1]) +
           std::to_string(perm[2]);
  return t;
}

}  // namespace

bool TransformationBank::needs_rgb() const {
  for (const auto& t : transforms)
    if (t.permutes_channels) return true;
  return false;
}

TransformationBank make_transformation_bank(ExpansionVariant variant) {
  TransformationBank bank;
  bank.variant = variant;
  auto& ts = bank.transforms;
  switch (variant) {
    case ExpansionVariant::None:
      ts = {make(0, kIdentity)};
      break;
    case ExpansionVariant::Rotation:
      ts = {make(0, kIdentity), make(1, kIdentity), make(2, kIdentity), make(3, kIdentity)};
      break;
    case ExpansionVariant::Rotation2:
      ts = {make(0, kIdentity), make(2, kIdentity)};
      break;
    case ExpansionVariant::ColorPerm:
      ts = {make(0, {0, 1, 2}), make(0, {0, 2, 1}), make(0, {1, 0, 2}),
            make(0, {1, 2, 0}), make(0, {2, 0, 1}), make(0, {2, 1, 0})};
      break;
    case ExpansionVariant::ColorPerm3:
      ts = {make(0, kIdentity), make(0, kGbr), make(0, kBrg)};
      break;
    case ExpansionVariant::RotColorPerm6:
      for (int turns : {0, 2})
        for (const auto& p : {kIdentity, kGbr, kBrg}) ts.push_back(make(turns, p));
      break;
    case ExpansionVariant::RotColorPerm12:
      for (int turns : {0, 1, 2, 3})
        for (const auto& p : {kIdentity, kGbr, kBrg}) ts.push_back(make(turns, p));
      break;
  }
  return bank;
}

std::vector<float> apply_transformation(const Transformation& t, std::span<const float> image, int height, int width,
                                        int channels) {
  require(image.size() == static_cast<std::size_t>(height) * width * channels, ErrorKind::Input,
          "image size does not match its declared shape");
  if (t.permutes_channels)
    require(channels == 3, ErrorKind::Input, "colour permutation needs 3 channels, image has " + std::to_string(channels));
  const int turns = ((t.quarter_turns % 4) + 4) % 4;
  if (turns % 2 == 1)
    require(height == width, ErrorKind::Input, "90 degree rotation needs a square image");

  std::vector<float> out(image.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Source pixel for output (y, x) under a counter-clockwise rotation.
      int sy = y, sx = x;
      switch (turns) {
        case 1: sy = x; sx = width - 1 - y; break;
        case 2: sy = height - 1 - y; sx = width - 1 - x; break;
        case 3: sy = height - 1 - x; sx = y; break;
        default: break;
      }
      const float* src = image.data() + (static_cast<std::size_t>(sy) * width + sx) * channels;
      float* dst = out.data() + (static_cast<std::size_t>(y) * width + x) * channels;
      for (int c = 0; c < channels; ++c) dst[c] = t.permutes_channels ? src[t.channel_perm[static_cast<std::size_t>(c)]] : src[c];
    }
  }
  return out;
}

std::vector<std::vector<float>> expand(const Sample& sample, const TransformationBank& bank) {
  if (bank.needs_rgb())
    require(sample.channels == 3, ErrorKind::Input,
            "variant " + to_string(bank.variant) + " needs 3-channel images, sample " + std::to_string(sample.id) +
                " has " + std::to_string(sample.channels));
  std::vector<std::vector<float>> out;
  out.reserve(bank.transforms.size());
  out.push_back(sample.image);
  for (std::size_t m = 1; m < bank.transforms.size(); ++m)
    out.push_back(apply_transformation(bank.transforms[m], sample.image, sample.height, sample.width, sample.channels));
  return out;
}

void write_input_row(std::span<const float> hwc, int height, int width, int channels, double* row) {
  const int spatial = height * width;
  for (int p = 0; p < spatial; ++p)
    for (int c = 0; c < channels; ++c) row[c * spatial + p] = hwc[static_cast<std::size_t>(p) * channels + c];
}

std::vector<ClassId> ExpandedPrototypeSet::classes() const {
  std::set<ClassId> s;
  for (const auto& [key, v] : prototypes) s.insert(key.first);
  return {s.begin(), s.end()};
}

ExpandedPrototypeSet build_virtual_prototypes(const std::map<CellKey, std::vector<nn::Vector>>& cells,
                                              int num_transforms, int session) {
  require(num_transforms >= 1, ErrorKind::Input, "need at least one transformation");
  ExpandedPrototypeSet set;
  set.num_transforms = num_transforms;
  set.session = session;
  std::set<ClassId> classes;
  for (const auto& [key, vecs] : cells) {
    require(key.second >= 0 && key.second < num_transforms, ErrorKind::Input,
            "transformation index " + std::to_string(key.second) + " out of range");
    require(!vecs.empty(), ErrorKind::Input,
            "empty prototype cell (class " + std::to_string(key.first) + ", m " + std::to_string(key.second) + ")");
    nn::Vector mean = nn::Vector::Zero(vecs.front().size());
    for (const auto& v : vecs) {
      require(v.size() == mean.size(), ErrorKind::Input, "prototype cell vectors differ in dimension");
      mean += v;
    }
    mean /= static_cast<double>(vecs.size());
    const double norm = mean.norm();
    require(norm > 1e-12, ErrorKind::Input,
            "degenerate prototype (zero mean) for class " + std::to_string(key.first) + ", m " +
                std::to_string(key.second));
    set.prototypes[key] = mean / norm;
    classes.insert(key.first);
  }
  for (ClassId c : classes)
    for (int m = 0; m < num_transforms; ++m)
      require(set.prototypes.count({c, m}) != 0, ErrorKind::Input,
              "missing prototype cell (class " + std::to_string(c) + ", m " + std::to_string(m) + ")");
  return set;
}

std::map<ClassId, double> expanded_scores(const nn::Matrix& view_embeddings, const ExpandedPrototypeSet& protos) {
  require(view_embeddings.rows() == protos.num_transforms, ErrorKind::Input,
          "expected one embedding per transformation");
  std::map<ClassId, double> scores;
  for (ClassId c : protos.classes()) {
    double s = 0.0;
    for (int m = 0; m < protos.num_transforms; ++m) {
      auto it = protos.prototypes.find({c, m});
      require(it != protos.prototypes.end(), ErrorKind::Internal,
              "missing prototype cell (class " + std::to_string(c) + ", m " + std::to_string(m) + ")");
      const double n = view_embeddings.row(m).norm();
      require(n > 0.0, ErrorKind::Input, "zero embedding");
      s += view_embeddings.row(m).dot(it->second) / n;
    }
    scores[c] = s;
  }
  return scores;
}

ClassId expanded_argmax(const nn::Matrix& view_embeddings, const ExpandedPrototypeSet& protos) {
  const auto scores = expanded_scores(view_embeddings, protos);
  require(!scores.empty(), ErrorKind::Input, "no prototypes");
  ClassId best = scores.begin()->first;
  double best_score = scores.begin()->second;
  for (const auto& [c, s] : scores)
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  return best;
}

ClassId expanded_predict(const Sample& sample, const TransformationBank& bank, const ExpandedPrototypeSet& protos,
                         const nn::Backbone& backbone) {
  require(bank.size() == protos.num_transforms, ErrorKind::Input, "bank and prototype set disagree on M");
  const auto views = expand(sample, bank);
  const nn::ImageShape& in = backbone.input_shape();
  require(in.channels == sample.channels && in.height == sample.height && in.width == sample.width,
          ErrorKind::Input, "sample shape does not match the backbone input");
  nn::Matrix x(bank.size(), in.size());
  for (int m = 0; m < bank.size(); ++m)
    write_input_row(views[static_cast<std::size_t>(m)], sample.height, sample.width, sample.channels, x.row(m).data());
  nn::NoGradGuard guard;
  const auto out = backbone.forward(nn::constant(std::move(x)));
  return expanded_argmax(out.embedding->value, protos);
}

nn::Var multitask_loss(const nn::Var& embeddings, const std::vector<int>& class_labels,
                       const std::vector<int>& transform_indices, const nn::Linear& class_head,
                       const nn::Linear& transform_head) {
  const int m = transform_head.out_features();
  for (int j : transform_indices)
    require(j >= 0 && j < m, ErrorKind::Input,
            "transformation index " + std::to_string(j) + " outside 0.." + std::to_string(m - 1));
  nn::Var class_term = nn::softmax_cross_entropy(class_head.forward(embeddings), class_labels);
  nn::Var transform_term = nn::softmax_cross_entropy(transform_head.forward(embeddings), transform_indices);
  return nn::weighted_sum({{class_term, 1.0}, {transform_term, 1.0}});
}

}  // namespace essential
