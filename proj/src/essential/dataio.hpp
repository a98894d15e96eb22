#pragma once

// Dataset stores, MedMNIST archive loading, session materialisation and the
// synthetic pattern generator.

#include "essential/datamodel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace essential {

struct Split {
  std::vector<std::uint8_t> pixels;  // N x H x W x C
  std::vector<ClassId> labels;       // original labels
  std::size_t size() const { return labels.size(); }
};

struct DatasetStore {
  std::string name;
  int height = 0;
  int width = 0;
  int channels = 0;
  int num_classes = 0;  // declared label range [0, num_classes)
  Split train;
  Split test;

  std::size_t image_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  }
  // Pixels scaled to [0,1].
  std::vector<float> image(const Split& split, std::size_t index) const;
  std::vector<ClassId> distinct_labels() const;
  // Throws Error(Format) if labels fall outside [0, num_classes) or a split is empty.
  void validate() const;
};

// Reads train_images/train_labels/test_images/test_labels from a MedMNIST .npz.
// Grayscale (N,H,W) arrays become one channel.
DatasetStore load_medmnist_archive(const std::string& path);

// Archive path for a named dataset under `data_dir` (or $ESSENTIAL_DATA_DIR when empty).
std::string medmnist_path(DatasetName dataset, int resolution, const std::string& data_dir);

struct SessionData {
  std::vector<std::vector<Sample>> train;  // per session
  std::vector<std::vector<Sample>> test;   // per session, full test split of that session's classes
  std::vector<ClassId> original_label;     // remapped class -> original label

  // Test samples of every class seen through session t.
  std::vector<Sample> cumulative_test(int t) const;
};

// Remaps the chosen original labels to 0..K-1 (ascending order unless `class_order`
// is given) and subsamples training data to the schedule. Sample ids are train
// indices; test ids are offset by the train split size.
SessionData materialize_sessions(const DatasetStore& store, const SessionSchedule& schedule, std::uint64_t seed,
                                 const std::vector<ClassId>& class_order = {});

struct SyntheticSpec {
  int num_classes = 4;
  int per_class = 100;
  int test_per_class = 50;
  int resolution = 16;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

// Each class gets its own colour and one of three shapes (bars, disc, checker) with
// small positional and brightness jitter plus Gaussian pixel noise.
DatasetStore generate_synthetic(const SyntheticSpec& spec);

// The dataset a config refers to: synthetic data is generated, MedMNIST is loaded.
DatasetStore load_dataset(const RunConfig& cfg);

}  // namespace essential
