#include "essential/dataio.hpp"

#include "essential/error.hpp"
#include "essential/npz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

namespace essential {

std::vector<float> DatasetStore::image(const Split& split, std::size_t index) const {
  const std::size_t n = image_size();
  std::vector<float> out(n);
  const std::uint8_t* p = split.pixels.data() + index * n;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(p[i]) / 255.0f;
  return out;
}

std::vector<ClassId> DatasetStore::distinct_labels() const {
  std::set<ClassId> s(train.labels.begin(), train.labels.end());
  s.insert(test.labels.begin(), test.labels.end());
  return {s.begin(), s.end()};
}

void DatasetStore::validate() const {
  require(train.size() > 0 && test.size() > 0, ErrorKind::Format, name + ": empty train or test split");
  for (const Split* s : {&train, &test}) {
    require(s->pixels.size() == s->size() * image_size(), ErrorKind::Format, name + ": pixel count mismatch");
    for (ClassId c : s->labels)
      require(c >= 0 && c < num_classes, ErrorKind::Format, name + ": label " + std::to_string(c) + " out of range");
  }
}

namespace {

Split read_split(const std::map<std::string, NpyArray>& arrays, const std::string& prefix, DatasetStore& store) {
  const std::string ik = prefix + "_images", lk = prefix + "_labels";
  auto it = arrays.find(ik);
  require(it != arrays.end(), ErrorKind::Format, "archive is missing key '" + ik + "'");
  auto lt = arrays.find(lk);
  require(lt != arrays.end(), ErrorKind::Format, "archive is missing key '" + lk + "'");
  const NpyArray& img = it->second;
  const NpyArray& lab = lt->second;
  require(img.shape.size() == 3 || img.shape.size() == 4, ErrorKind::Format,
          "key '" + ik + "' must be (N,H,W) or (N,H,W,C)");
  const int h = static_cast<int>(img.shape[1]), w = static_cast<int>(img.shape[2]);
  const int c = img.shape.size() == 4 ? static_cast<int>(img.shape[3]) : 1;
  if (store.height == 0) {
    store.height = h;
    store.width = w;
    store.channels = c;
  }
  require(store.height == h && store.width == w && store.channels == c, ErrorKind::Format,
          "key '" + ik + "' has a different image shape than the other split");
  require(!lab.shape.empty() && lab.shape[0] == img.shape[0] && lab.count() == lab.shape[0], ErrorKind::Format,
          "key '" + lk + "' shape does not match '" + ik + "'");

  Split s;
  s.labels.resize(lab.count());
  for (std::size_t i = 0; i < lab.count(); ++i) s.labels[i] = static_cast<ClassId>(lab.at(i));
  if (img.dtype == "u1") {
    s.pixels = img.data;
  } else {
    s.pixels.resize(img.count());
    const bool unit = img.dtype[0] == 'f';
    for (std::size_t i = 0; i < img.count(); ++i) {
      const double v = unit ? img.at(i) * 255.0 : img.at(i);
      s.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return s;
}

}  // namespace

DatasetStore load_medmnist_archive(const std::string& path) {
  const auto arrays = read_npz(path);
  DatasetStore store;
  store.name = std::filesystem::path(path).stem().string();
  store.train = read_split(arrays, "train", store);
  store.test = read_split(arrays, "test", store);
  int max_label = -1;
  for (ClassId c : store.train.labels) max_label = std::max(max_label, c);
  for (ClassId c : store.test.labels) max_label = std::max(max_label, c);
  store.num_classes = max_label + 1;
  store.validate();
  return store;
}

std::string medmnist_path(DatasetName dataset, int resolution, const std::string& data_dir) {
  std::string dir = data_dir;
  if (dir.empty()) {
    const char* env = std::getenv("ESSENTIAL_DATA_DIR");
    dir = env ? env : ".";
  }
  std::string file = dataset == DatasetName::PathMnist ? "pathmnist" : "bloodmnist";
  if (resolution != 28) file += "_" + std::to_string(resolution);
  return (std::filesystem::path(dir) / (file + ".npz")).string();
}

std::vector<Sample> SessionData::cumulative_test(int t) const {
  require(t >= 0 && static_cast<std::size_t>(t) < test.size(), ErrorKind::Input, "cumulative_test: bad session");
  std::vector<Sample> out;
  for (int j = 0; j <= t; ++j) out.insert(out.end(), test[static_cast<std::size_t>(j)].begin(), test[static_cast<std::size_t>(j)].end());
  return out;
}

SessionData materialize_sessions(const DatasetStore& store, const SessionSchedule& schedule, std::uint64_t seed,
                                 const std::vector<ClassId>& class_order) {
  const int k = schedule.total_classes();
  std::vector<ClassId> order = class_order;
  if (order.empty()) {
    order = store.distinct_labels();
    require(static_cast<int>(order.size()) >= k, ErrorKind::Data,
            "dataset has " + std::to_string(order.size()) + " classes, schedule needs " + std::to_string(k));
    order.resize(static_cast<std::size_t>(k));
  }
  require(static_cast<int>(order.size()) == k, ErrorKind::Data,
          "class_order lists " + std::to_string(order.size()) + " classes, schedule needs " + std::to_string(k));
  require(std::set<ClassId>(order.begin(), order.end()).size() == order.size(), ErrorKind::Data,
          "class_order contains duplicates");
  require(store.height == schedule.resolution && store.width == schedule.resolution, ErrorKind::Data,
          "dataset resolution " + std::to_string(store.height) + " does not match schedule resolution " +
              std::to_string(schedule.resolution));

  std::map<ClassId, ClassId> remap;
  for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<ClassId>(i);
  std::map<ClassId, std::vector<std::size_t>> train_idx, test_idx;
  for (std::size_t i = 0; i < store.train.size(); ++i)
    if (auto it = remap.find(store.train.labels[i]); it != remap.end()) train_idx[it->second].push_back(i);
  for (std::size_t i = 0; i < store.test.size(); ++i)
    if (auto it = remap.find(store.test.labels[i]); it != remap.end()) test_idx[it->second].push_back(i);

  std::mt19937_64 rng(seed);
  SessionData out;
  out.original_label = order;
  out.train.resize(static_cast<std::size_t>(schedule.num_sessions));
  out.test.resize(static_cast<std::size_t>(schedule.num_sessions));
  auto make = [&](const Split& split, std::size_t idx, ClassId cls, int session, SampleId id) {
    Sample s;
    s.id = id;
    s.image = store.image(split, idx);
    s.height = store.height;
    s.width = store.width;
    s.channels = store.channels;
    s.label = cls;
    s.session_of_origin = session;
    return s;
  };
  for (int t = 0; t < schedule.num_sessions; ++t) {
    const int per_class = t == 0 ? schedule.samples_per_base_class : schedule.samples_per_increment_class;
    for (ClassId c : schedule.classes_of_session(t)) {
      auto pool = train_idx[c];
      require(static_cast<int>(pool.size()) >= per_class, ErrorKind::Data,
              "class " + std::to_string(order[static_cast<std::size_t>(c)]) + " has " + std::to_string(pool.size()) +
                  " training samples, session " + std::to_string(t) + " needs " + std::to_string(per_class));
      require(!test_idx[c].empty(), ErrorKind::Data,
              "class " + std::to_string(order[static_cast<std::size_t>(c)]) + " has no test samples");
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(static_cast<std::size_t>(per_class));
      std::sort(pool.begin(), pool.end());
      for (std::size_t i : pool)
        out.train[static_cast<std::size_t>(t)].push_back(make(store.train, i, c, t, static_cast<SampleId>(i)));
      for (std::size_t i : test_idx[c])
        out.test[static_cast<std::size_t>(t)].push_back(
            make(store.test, i, c, t, static_cast<SampleId>(store.train.size() + i)));
    }
  }
  return out;
}

namespace {

// Colours chosen so that no colour is a channel permutation of another.
constexpr std::array<std::array<double, 3>, 12> kColours = {{
    {0.95, 0.55, 0.10}, {0.15, 0.85, 0.35}, {0.25, 0.40, 0.90}, {0.85, 0.80, 0.05},
    {0.70, 0.15, 0.75}, {0.10, 0.65, 0.60}, {0.60, 0.30, 0.45}, {0.90, 0.90, 0.90},
    {0.45, 0.75, 0.20}, {0.35, 0.05, 0.50}, {0.80, 0.35, 0.65}, {0.55, 0.95, 0.70},
}};

std::array<double, 3> colour_of(int c) {
  if (c < static_cast<int>(kColours.size())) return kColours[static_cast<std::size_t>(c)];
  const double hue = std::fmod(0.618033988749895 * c, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
  const int seg = static_cast<int>(hue);
  const double v = 0.5 + 0.4 * ((c % 3) / 2.0);
  std::array<double, 3> rgb{};
  switch (seg) {
    case 0: rgb = {1, x, 0}; break;
    case 1: rgb = {x, 1, 0}; break;
    case 2: rgb = {0, 1, x}; break;
    case 3: rgb = {0, x, 1}; break;
    case 4: rgb = {x, 0, 1}; break;
    default: rgb = {1, 0, x}; break;
  }
  for (double& ch : rgb) ch = 0.1 + v * ch * 0.85;
  return rgb;
}

void draw(std::vector<std::uint8_t>& px, std::size_t base, int c, int res, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> bright(0.85, 1.15);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto colour = colour_of(c);
  const int shape = c % 3;
  const double gain = bright(rng);
  const double cx = (res - 1) / 2.0, cy = (res - 1) / 2.0, radius = res * 0.3;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      bool on = false;
      switch (shape) {
        case 0: on = (y / 2) % 2 == 0 && x >= res / 6 && x < res - res / 6; break;
        case 1: on = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius; break;
        default: on = (x / 3 + y / 3) % 2 == 0; break;
      }
      for (int ch = 0; ch < 3; ++ch) {
        double v = (on ? colour[static_cast<std::size_t>(ch)] * gain : 0.12 * colour[static_cast<std::size_t>(ch)]);
        if (noise > 0.0) v += noise * gauss(rng);
        v = std::clamp(v, 0.0, 1.0);
        px[base + (static_cast<std::size_t>(y) * res + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
}

}  // namespace

DatasetStore generate_synthetic(const SyntheticSpec& spec) {
  require(spec.num_classes >= 2, ErrorKind::Input, "synthetic: num_classes must be at least 2");
  require(spec.per_class >= 1 && spec.test_per_class >= 1, ErrorKind::Input, "synthetic: per-class counts must be positive");
  require(spec.resolution >= 4, ErrorKind::Input, "synthetic: resolution must be at least 4");
  require(spec.noise >= 0.0, ErrorKind::Input, "synthetic: noise must be non-negative");
  DatasetStore store;
  store.name = "synthetic";
  store.height = store.width = spec.resolution;
  store.channels = 3;
  store.num_classes = spec.num_classes;
  std::mt19937_64 rng(spec.seed);
  auto fill = [&](Split& split, int per_class) {
    const std::size_t n = static_cast<std::size_t>(spec.num_classes) * static_cast<std::size_t>(per_class);
    split.pixels.assign(n * store.image_size(), 0);
    split.labels.resize(n);
    std::size_t i = 0;
    for (int k = 0; k < per_class; ++k)
      for (int c = 0; c < spec.num_classes; ++c, ++i) {
        split.labels[i] = c;
        draw(split.pixels, i * store.image_size(), c, spec.resolution, rng, spec.noise);
      }
  };
  fill(store.train, spec.per_class);
  fill(store.test, spec.test_per_class);
  return store;
}

DatasetStore load_dataset(const RunConfig& cfg) {
  if (cfg.dataset == DatasetName::Synthetic) {
    SyntheticSpec s;
    s.num_classes = cfg.schedule.total_classes();
    s.per_class = std::max(cfg.schedule.samples_per_base_class, cfg.schedule.samples_per_increment_class) +
                  cfg.synthetic.train_surplus;
    s.test_per_class = cfg.synthetic.test_per_class;
    s.resolution = cfg.schedule.resolution;
    s.noise = cfg.synthetic.noise;
    s.seed = cfg.seed * 7919 + 17;
    return generate_synthetic(s);
  }
  const std::string path = medmnist_path(cfg.dataset, cfg.schedule.resolution, cfg.data_dir);
  require(std::filesystem::exists(path), ErrorKind::Data,
          "dataset archive not found: " + path + " (set ESSENTIAL_DATA_DIR or data_dir)");
  return load_medmnist_archive(path);
}

}  // namespace essential
