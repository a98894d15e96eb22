#pragma once

// The trainable target model (backbone, projector, class head psi, transformation
// head phi, trajectory predictor) and its momentum key network.

#include "essential/cepredictor.hpp"
#include "essential/datamodel.hpp"
#include "essential/layers.hpp"

#include <memory>
#include <vector>

namespace essential {

class TargetModel {
 public:
  TargetModel(const RunConfig& cfg, int num_transforms, nn::Rng& rng);
  TargetModel(const TargetModel& other);
  TargetModel& operator=(const TargetModel&) = delete;

  // Grows psi and the predictor to `num_classes` outputs.
  void grow_classes(int num_classes, nn::Rng& rng);
  // Copies the query backbone + projector into the key network.
  void reset_key();
  void momentum_step(double mu);

  nn::Backbone& backbone() { return *backbone_; }
  const nn::Backbone& backbone() const { return *backbone_; }
  const nn::Backbone& key_backbone() const { return *key_backbone_; }
  const nn::Projector& projector() const { return projector_; }
  const nn::Projector& key_projector() const { return key_projector_; }
  const nn::Linear& class_head() const { return class_head_; }
  const nn::Linear& transform_head() const { return transform_head_; }
  const PredictorHead& predictor() const { return predictor_; }
  int num_classes() const { return class_head_.out_features(); }
  int num_transforms() const { return transform_head_.out_features(); }

  // Everything the optimiser updates.
  std::vector<nn::Parameter*> trainable();
  // Backbone + projector, query side and key side, in matching order.
  std::vector<nn::Parameter*> query_encoder();
  std::vector<nn::Parameter*> key_encoder();

 private:
  std::unique_ptr<nn::Backbone> backbone_;
  std::unique_ptr<nn::Backbone> key_backbone_;
  nn::Projector projector_;
  nn::Projector key_projector_;
  nn::Linear class_head_;
  nn::Linear transform_head_;
  PredictorHead predictor_;
};

nn::BackboneSpec backbone_spec(const RunConfig& cfg);

}  // namespace essential
