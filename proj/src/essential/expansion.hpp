#pragma once

// Semantic expansion: deterministic transformation banks, virtual prototypes
// per (class, transformation), the multi-task loss and the expanded
// prediction rule.

#include "essential/autograd.hpp"
#include "essential/datamodel.hpp"
#include "essential/layers.hpp"

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace essential {

struct Transformation {
  int quarter_turns = 0;                 // counter-clockwise 90 degree steps
  std::array<int, 3> channel_perm{0, 1, 2};  // output channel c takes input channel perm[c]
  bool permutes_channels = false;
  std::string name;
};

struct TransformationBank {
  ExpansionVariant variant = ExpansionVariant::None;
  std::vector<Transformation> transforms;  // transforms[0] is the identity

  int size() const { return static_cast<int>(transforms.size()); }
  bool needs_rgb() const;
};

TransformationBank make_transformation_bank(ExpansionVariant variant);

// Applies one transformation to an H x W x C image.
std::vector<float> apply_transformation(const Transformation& t, std::span<const float> image, int height, int width,
                                        int channels);

// M transformed images; element 0 is a bit-exact copy of the input.
std::vector<std::vector<float>> expand(const Sample& sample, const TransformationBank& bank);

// H x W x C pixels -> one channel-major network input row.
void write_input_row(std::span<const float> hwc, int height, int width, int channels, double* row);

using CellKey = std::pair<ClassId, int>;  // (class, transformation index)

struct ExpandedPrototypeSet {
  int num_transforms = 1;
  int session = 0;
  std::map<CellKey, nn::Vector> prototypes;  // unit L2 norm

  std::vector<ClassId> classes() const;
  std::size_t size() const { return prototypes.size(); }
};

ExpandedPrototypeSet build_virtual_prototypes(const std::map<CellKey, std::vector<nn::Vector>>& cells,
                                              int num_transforms, int session = 0);

// Sum over transformations of cos(view embedding m, prototype (c, m)) for each
// class. `view_embeddings` has one row per transformation.
std::map<ClassId, double> expanded_scores(const nn::Matrix& view_embeddings, const ExpandedPrototypeSet& protos);

// Argmax of expanded_scores; ties go to the lowest class index.
ClassId expanded_argmax(const nn::Matrix& view_embeddings, const ExpandedPrototypeSet& protos);

ClassId expanded_predict(const Sample& sample, const TransformationBank& bank, const ExpandedPrototypeSet& protos,
                         const nn::Backbone& backbone);

// (1/M) sum_j [CE(class_head(z_ij), y_i) + CE(transform_head(z_ij), j)], averaged over the batch.
// Rows of `embeddings` are views; labels and transform indices are per row.
nn::Var multitask_loss(const nn::Var& embeddings, const std::vector<int>& class_labels,
                       const std::vector<int>& transform_indices, const nn::Linear& class_head,
                       const nn::Linear& transform_head);

}  // namespace essential
