#pragma once

// Shared vocabulary: samples, label spaces, session schedules, run config.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace essential {

using SampleId = std::int64_t;
using ClassId = int;

enum class DatasetName { PathMnist, BloodMnist, Synthetic };
enum class Composition { Imbalanced, LongTailed };
enum class SelectorKind { Uta, Random, Nme, Pool, Committee };
enum class SimilarityKind { Cos, Dot, Euc, Mah };
enum class ExpansionVariant { Rotation, Rotation2, ColorPerm, ColorPerm3, RotColorPerm6, RotColorPerm12, None };
enum class CumulativeMode { Sum, Trapezoid };

std::string to_string(DatasetName v);
std::string to_string(Composition v);
std::string to_string(SelectorKind v);
std::string to_string(SimilarityKind v);
std::string to_string(ExpansionVariant v);
std::string to_string(CumulativeMode v);

DatasetName parse_dataset(const std::string& s);
Composition parse_composition(const std::string& s);
SelectorKind parse_selector(const std::string& s);
SimilarityKind parse_similarity(const std::string& s);
ExpansionVariant parse_expansion_variant(const std::string& s);
CumulativeMode parse_cumulative_mode(const std::string& s);

// A view of one stored image. Pixels are H x W x C, row-major, in [0,1].
struct Sample {
  SampleId id = 0;
  std::vector<float> image;
  int height = 0;
  int width = 0;
  int channels = 0;
  ClassId label = 0;
  int session_of_origin = 0;
};

struct LabelSpace {
  std::vector<std::set<ClassId>> per_session_classes;
};

// True iff the per-session class sets are pairwise disjoint.
bool validate_label_spaces(const LabelSpace& ls);

struct SessionSchedule {
  int num_sessions = 3;  // T+1, session 0 is the base session
  int base_classes = 2;
  int classes_per_increment = 1;
  int samples_per_base_class = 200;
  int samples_per_increment_class = 20;
  int memory_size = 30;
  int resolution = 12;
  int channels = 3;

  int total_classes() const { return base_classes + (num_sessions - 1) * classes_per_increment; }
  // Classes introduced in session t, in remapped (contiguous) indices.
  std::vector<ClassId> classes_of_session(int t) const;
  int seen_classes_through(int t) const;
  LabelSpace label_space() const;
};

SessionSchedule build_schedule(DatasetName dataset, Composition composition);

struct SyntheticOptions {
  double noise = 0.05;
  int test_per_class = 50;
  // Extra train samples generated beyond the schedule so subsampling is real.
  int train_surplus = 0;
};

struct RunConfig {
  DatasetName dataset = DatasetName::Synthetic;
  Composition composition = Composition::Imbalanced;
  SessionSchedule schedule;

  SelectorKind selector = SelectorKind::Uta;
  SimilarityKind similarity = SimilarityKind::Cos;
  ExpansionVariant expansion_variant = ExpansionVariant::ColorPerm3;
  // Bank used to build augmented views for the intra-class metric when the run itself
  // has expansion disabled.
  ExpansionVariant metric_variant = ExpansionVariant::ColorPerm3;
  CumulativeMode cumulative_mode = CumulativeMode::Sum;

  double alpha = 0.5;   // SCL weight
  double beta = 1.0;    // JS weight in the predictor loss
  double tau = 0.07;    // contrastive temperature
  double mu = 0.999;    // key-network momentum
  double eta = 16.0;    // cosine sharpness
  double sgd_momentum = 0.9;
  double lr_base = 0.05;
  double lr_incremental = 0.005;
  int epochs_base = 12;
  int epochs_incremental = 8;
  int batch_size = 64;
  int queue_length = 256;
  std::uint64_t seed = 1;

  std::string backbone = "mlp";
  std::vector<int> mlp_hidden{64, 32};
  int conv_width = 16;
  int projector_hidden = 64;
  int projector_dim = 128;
  int tap_dim = 128;
  int reevaluate_factor = 2;  // k = factor * per-class quota
  double mahalanobis_shrinkage = 0.1;

  std::vector<ClassId> class_order;  // optional explicit original-label order
  std::string data_dir;              // empty: $ESSENTIAL_DATA_DIR
  SyntheticOptions synthetic;

  // Throws Error(Config) naming the offending field.
  void validate() const;
};

// Defaults for a dataset/composition pair (schedule, learning rates, epochs, backbone, variant).
RunConfig preset_config(DatasetName dataset, Composition composition);

}  // namespace essential
