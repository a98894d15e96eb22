#include "essential/config.hpp"

#include "essential/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace essential {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    fail(ErrorKind::Config, key + ": expected an integer, got '" + v + "'");
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename Fn>
auto with_key(const std::string& key, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config && std::string(e.what()).rfind(key + ":", 0) != 0)
      fail(ErrorKind::Config, key + ": " + e.what());
    throw;
  }
}

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  const char* doc;
};

const std::map<std::string, KeyHandler>& handlers() {
  using K = const std::string&;
  static const std::map<std::string, KeyHandler> table = [] {
    std::map<std::string, KeyHandler> t;
    auto dbl = [&t](const char* key, double RunConfig::*field, const char* doc) {
      t[key] = {[field](RunConfig& c, K k, K v) { c.*field = to_double(k, v); },
                [field](const RunConfig& c) { return fmt_double(c.*field); }, doc};
    };
    auto integer = [&t](const char* key, int RunConfig::*field, const char* doc) {
      t[key] = {[field](RunConfig& c, K k, K v) { c.*field = static_cast<int>(to_int(k, v)); },
                [field](const RunConfig& c) { return std::to_string(c.*field); }, doc};
    };
    auto sched = [&t](const char* key, int SessionSchedule::*field, const char* doc) {
      t[key] = {[field](RunConfig& c, K k, K v) { c.schedule.*field = static_cast<int>(to_int(k, v)); },
                [field](const RunConfig& c) { return std::to_string(c.schedule.*field); }, doc};
    };

    t["dataset"] = {[](RunConfig& c, K, K v) { c.dataset = parse_dataset(v); },
                    [](const RunConfig& c) { return to_string(c.dataset); },
                    "pathmnist | bloodmnist | synthetic (default synthetic); selects the preset"};
    t["composition"] = {[](RunConfig& c, K, K v) { c.composition = parse_composition(v); },
                        [](const RunConfig& c) { return to_string(c.composition); },
                        "imbalanced | long_tailed (default imbalanced)"};
    t["selector"] = {[](RunConfig& c, K, K v) { c.selector = parse_selector(v); },
                     [](const RunConfig& c) { return to_string(c.selector); },
                     "exemplar selector: uta | random | nme | pool | committee (default uta)"};
    t["similarity"] = {[](RunConfig& c, K, K v) { c.similarity = parse_similarity(v); },
                       [](const RunConfig& c) { return to_string(c.similarity); },
                       "prototype similarity: cos | dot | euc | mah (default cos)"};
    t["expansion_variant"] = {[](RunConfig& c, K, K v) { c.expansion_variant = parse_expansion_variant(v); },
                              [](const RunConfig& c) { return to_string(c.expansion_variant); },
                              "transformation bank (dataset preset; none disables expansion)"};
    t["metric_variant"] = {[](RunConfig& c, K, K v) { c.metric_variant = parse_expansion_variant(v); },
                           [](const RunConfig& c) { return to_string(c.metric_variant); },
                           "bank used to form augmented views for the intra-class metric"};
    t["cumulative_entropy"] = {[](RunConfig& c, K, K v) { c.cumulative_mode = parse_cumulative_mode(v); },
                               [](const RunConfig& c) { return to_string(c.cumulative_mode); },
                               "sum | trapezoid (default sum); UTA selection score"};
    dbl("alpha", &RunConfig::alpha, "SCL loss weight (default 0.5)");
    dbl("beta", &RunConfig::beta, "JS weight in the predictor loss (default 1.0)");
    dbl("tau", &RunConfig::tau, "contrastive temperature (default 0.07)");
    dbl("mu", &RunConfig::mu, "key-network momentum (default 0.999)");
    dbl("eta", &RunConfig::eta, "cosine sharpness (default 16)");
    dbl("sgd_momentum", &RunConfig::sgd_momentum, "SGD momentum (default 0.9)");
    dbl("lr_base", &RunConfig::lr_base, "base-session learning rate (preset)");
    dbl("lr_incremental", &RunConfig::lr_incremental, "incremental-session learning rate (preset)");
    dbl("mahalanobis_shrinkage", &RunConfig::mahalanobis_shrinkage,
        "diagonal covariance shrinkage for similarity=mah (default 0.1)");
    integer("epochs_base", &RunConfig::epochs_base, "epochs in session 0 (preset)");
    integer("epochs_incremental", &RunConfig::epochs_incremental, "epochs per incremental session (preset)");
    integer("batch_size", &RunConfig::batch_size, "minibatch size in original samples (default 64)");
    integer("queue_length", &RunConfig::queue_length, "contrastive queue capacity (256 desk / 4096 full)");
    integer("conv_width", &RunConfig::conv_width, "base channel count for conv3/resnet20 (default 16)");
    integer("projector_hidden", &RunConfig::projector_hidden, "projector hidden width (default 64)");
    integer("projector_dim", &RunConfig::projector_dim, "projector output width (default 128)");
    integer("tap_dim", &RunConfig::tap_dim, "per-tap width in the entropy predictor (default 128)");
    integer("reevaluate_factor", &RunConfig::reevaluate_factor,
            "UTA re-evaluates factor x quota top candidates (default 2)");
    t["seed"] = {[](RunConfig& c, K k, K v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }, "RNG seed (default 1)"};
    t["backbone"] = {[](RunConfig& c, K, K v) { c.backbone = v; },
                     [](const RunConfig& c) { return c.backbone; },
                     "mlp | conv3 | resnet20 | resnet18 (preset)"};
    t["mlp_hidden"] = {[](RunConfig& c, K k, K v) { c.mlp_hidden = to_int_list(k, v); },
                       [](const RunConfig& c) { return join(c.mlp_hidden); },
                       "comma-separated MLP stage widths; last is the embedding (default 64,32)"};
    t["class_order"] = {[](RunConfig& c, K k, K v) { c.class_order = to_int_list(k, v); },
                        [](const RunConfig& c) { return join(c.class_order); },
                        "optional original-label order; first base_classes form session 0"};
    t["data_dir"] = {[](RunConfig& c, K, K v) { c.data_dir = v; }, [](const RunConfig& c) { return c.data_dir; },
                     "dataset root (default $ESSENTIAL_DATA_DIR)"};
    sched("schedule.num_sessions", &SessionSchedule::num_sessions, "sessions including the base session");
    sched("schedule.base_classes", &SessionSchedule::base_classes, "classes in session 0");
    sched("schedule.classes_per_increment", &SessionSchedule::classes_per_increment, "new classes per session");
    sched("schedule.samples_per_base_class", &SessionSchedule::samples_per_base_class, "train samples per base class");
    sched("schedule.samples_per_increment_class", &SessionSchedule::samples_per_increment_class,
          "train samples per incremental class");
    sched("schedule.memory_size", &SessionSchedule::memory_size, "total exemplar budget");
    sched("schedule.resolution", &SessionSchedule::resolution, "image side in pixels");
    sched("schedule.channels", &SessionSchedule::channels, "image channels");
    t["synthetic.noise"] = {[](RunConfig& c, K k, K v) { c.synthetic.noise = to_double(k, v); },
                            [](const RunConfig& c) { return fmt_double(c.synthetic.noise); },
                            "additive Gaussian pixel noise for the synthetic generator (default 0.05)"};
    t["synthetic.test_per_class"] = {
        [](RunConfig& c, K k, K v) { c.synthetic.test_per_class = static_cast<int>(to_int(k, v)); },
        [](const RunConfig& c) { return std::to_string(c.synthetic.test_per_class); },
        "synthetic test images per class (default 50)"};
    t["synthetic.train_surplus"] = {
        [](RunConfig& c, K k, K v) { c.synthetic.train_surplus = static_cast<int>(to_int(k, v)); },
        [](const RunConfig& c) { return std::to_string(c.synthetic.train_surplus); },
        "extra synthetic train images per class beyond the schedule (default 0)"};
    return t;
  }();
  return table;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::pair<std::string, std::string> parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
  return {trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1))};
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = handlers();
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Config, key + ": unknown configuration key");
  with_key(key, [&] {
    it->second.set(cfg, key, value);
    return 0;
  });
}

RunConfig config_from_key_values(const KeyValues& kv) {
  DatasetName dataset = DatasetName::Synthetic;
  Composition composition = Composition::Imbalanced;
  for (const auto& [k, v] : kv) {
    if (k == "dataset") dataset = with_key(k, [&] { return parse_dataset(v); });
    if (k == "composition") composition = with_key(k, [&] { return parse_composition(v); });
  }
  RunConfig cfg = preset_config(dataset, composition);
  bool metric_variant_set = false;
  for (const auto& [k, v] : kv) {
    if (k == "dataset" || k == "composition") continue;
    apply_config_key(cfg, k, v);
    metric_variant_set |= k == "metric_variant";
  }
  if (!metric_variant_set && cfg.expansion_variant != ExpansionVariant::None)
    cfg.metric_variant = cfg.expansion_variant;
  cfg.validate();
  return cfg;
}

RunConfig load_config_text(const std::string& text, const KeyValues& overrides) {
  KeyValues kv = parse_key_values(text);
  kv.insert(kv.end(), overrides.begin(), overrides.end());
  return config_from_key_values(kv);
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, h] : handlers()) out += key + " = " + h.get(cfg) + "\n";
  return out;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    fail(ErrorKind::Internal, "SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return git_blob_sha1(config_to_text(cfg)); }

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = [] {
    std::vector<ConfigKeyDoc> d;
    for (const auto& [key, h] : handlers()) d.push_back({key.c_str(), h.doc});
    return d;
  }();
  return docs;
}

}  // namespace essential
