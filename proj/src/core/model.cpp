#include "essential/model.hpp"

#include "essential/contrastive.hpp"
#include "essential/error.hpp"

namespace essential {

nn::BackboneSpec backbone_spec(const RunConfig& cfg) {
  nn::BackboneSpec spec;
  spec.kind = nn::parse_backbone_kind(cfg.backbone);
  spec.input = {cfg.schedule.channels, cfg.schedule.resolution, cfg.schedule.resolution};
  spec.hidden = cfg.mlp_hidden;
  spec.width = cfg.conv_width;
  return spec;
}

TargetModel::TargetModel(const RunConfig& cfg, int num_transforms, nn::Rng& rng) {
  require(num_transforms >= 1, ErrorKind::Input, "need at least one transformation");
  backbone_ = nn::make_backbone(backbone_spec(cfg), rng);
  const int d = backbone_->embedding_dim();
  projector_ = nn::Projector(d, cfg.projector_hidden, cfg.projector_dim, rng);
  class_head_ = nn::Linear("psi", d, cfg.schedule.base_classes, rng, 1.0);
  transform_head_ = nn::Linear("phi", d, num_transforms, rng, 1.0);
  predictor_ = PredictorHead(backbone_->taps(), cfg.tap_dim, cfg.schedule.base_classes, rng);
  reset_key();
}

TargetModel::TargetModel(const TargetModel& other)
    : backbone_(other.backbone_->clone()),
      key_backbone_(other.key_backbone_->clone()),
      projector_(other.projector_),
      key_projector_(other.key_projector_),
      class_head_(other.class_head_),
      transform_head_(other.transform_head_),
      predictor_(other.predictor_) {}

void TargetModel::grow_classes(int num_classes, nn::Rng& rng) {
  require(num_classes >= class_head_.out_features(), ErrorKind::Internal, "class heads cannot shrink");
  if (num_classes == class_head_.out_features()) return;
  class_head_.grow_outputs(num_classes, rng);
  predictor_.grow_classes(num_classes, rng);
}

void TargetModel::reset_key() {
  key_backbone_ = backbone_->clone();
  key_projector_ = projector_;
}

void TargetModel::momentum_step(double mu) { momentum_update(query_encoder(), key_encoder(), mu); }

std::vector<nn::Parameter*> TargetModel::trainable() {
  std::vector<nn::Parameter*> out;
  backbone_->collect(out);
  projector_.collect(out);
  class_head_.collect(out);
  transform_head_.collect(out);
  predictor_.collect(out);
  return out;
}

std::vector<nn::Parameter*> TargetModel::query_encoder() {
  std::vector<nn::Parameter*> out;
  backbone_->collect(out);
  projector_.collect(out);
  return out;
}

std::vector<nn::Parameter*> TargetModel::key_encoder() {
  std::vector<nn::Parameter*> out;
  key_backbone_->collect(out);
  key_projector_.collect(out);
  return out;
}

}  // namespace essential
