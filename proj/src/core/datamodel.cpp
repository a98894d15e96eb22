#include "essential/datamodel.hpp"

#include "essential/error.hpp"

#include <algorithm>
#include <cctype>

namespace essential {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename E, std::size_t N>
E parse_enum(const std::string& raw, const std::pair<const char*, E> (&table)[N], const char* what) {
  const std::string s = lower(raw);
  for (const auto& [name, value] : table)
    if (s == name) return value;
  std::string options;
  for (const auto& [name, value] : table) options += (options.empty() ? "" : ", ") + std::string(name);
  fail(ErrorKind::Config, std::string("unknown ") + what + " '" + raw + "' (expected one of: " + options + ")");
}

template <typename E, std::size_t N>
std::string enum_name(E v, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table)
    if (v == value) return name;
  return "?";
}

const std::pair<const char*, DatasetName> kDatasets[] = {
    {"pathmnist", DatasetName::PathMnist}, {"bloodmnist", DatasetName::BloodMnist}, {"synthetic", DatasetName::Synthetic}};
const std::pair<const char*, Composition> kCompositions[] = {
    {"imbalanced", Composition::Imbalanced}, {"long_tailed", Composition::LongTailed}};
const std::pair<const char*, SelectorKind> kSelectors[] = {{"uta", SelectorKind::Uta},
                                                           {"random", SelectorKind::Random},
                                                           {"nme", SelectorKind::Nme},
                                                           {"pool", SelectorKind::Pool},
                                                           {"committee", SelectorKind::Committee}};
const std::pair<const char*, SimilarityKind> kSimilarities[] = {
    {"cos", SimilarityKind::Cos}, {"dot", SimilarityKind::Dot}, {"euc", SimilarityKind::Euc}, {"mah", SimilarityKind::Mah}};
const std::pair<const char*, ExpansionVariant> kVariants[] = {
    {"rotation", ExpansionVariant::Rotation},
    {"rotation2", ExpansionVariant::Rotation2},
    {"color_perm", ExpansionVariant::ColorPerm},
    {"color_perm3", ExpansionVariant::ColorPerm3},
    {"rot_color_perm6", ExpansionVariant::RotColorPerm6},
    {"rot_color_perm12", ExpansionVariant::RotColorPerm12},
    {"none", ExpansionVariant::None}};
const std::pair<const char*, CumulativeMode> kModes[] = {{"sum", CumulativeMode::Sum},
                                                         {"trapezoid", CumulativeMode::Trapezoid}};

}  // namespace

std::string to_string(DatasetName v) { return enum_name(v, kDatasets); }
std::string to_string(Composition v) { return enum_name(v, kCompositions); }
std::string to_string(SelectorKind v) { return enum_name(v, kSelectors); }
std::string to_string(SimilarityKind v) { return enum_name(v, kSimilarities); }
std::string to_string(ExpansionVariant v) { return enum_name(v, kVariants); }
std::string to_string(CumulativeMode v) { return enum_name(v, kModes); }

DatasetName parse_dataset(const std::string& s) { return parse_enum(s, kDatasets, "dataset"); }
Composition parse_composition(const std::string& s) {
  if (lower(s) == "long-tailed" || lower(s) == "longtailed") return Composition::LongTailed;
  return parse_enum(s, kCompositions, "composition");
}
SelectorKind parse_selector(const std::string& s) { return parse_enum(s, kSelectors, "selector"); }
SimilarityKind parse_similarity(const std::string& s) { return parse_enum(s, kSimilarities, "similarity"); }
ExpansionVariant parse_expansion_variant(const std::string& s) { return parse_enum(s, kVariants, "expansion variant"); }
CumulativeMode parse_cumulative_mode(const std::string& s) { return parse_enum(s, kModes, "cumulative mode"); }

bool validate_label_spaces(const LabelSpace& ls) {
  std::set<ClassId> seen;
  for (const auto& session : ls.per_session_classes)
    for (ClassId c : session)
      if (!seen.insert(c).second) return false;
  return true;
}

std::vector<ClassId> SessionSchedule::classes_of_session(int t) const {
  std::vector<ClassId> out;
  if (t < 0 || t >= num_sessions) return out;
  if (t == 0) {
    for (int c = 0; c < base_classes; ++c) out.push_back(c);
  } else {
    const int first = base_classes + (t - 1) * classes_per_increment;
    for (int c = 0; c < classes_per_increment; ++c) out.push_back(first + c);
  }
  return out;
}

int SessionSchedule::seen_classes_through(int t) const {
  return base_classes + std::max(0, std::min(t, num_sessions - 1)) * classes_per_increment;
}

LabelSpace SessionSchedule::label_space() const {
  LabelSpace ls;
  for (int t = 0; t < num_sessions; ++t) {
    auto cls = classes_of_session(t);
    ls.per_session_classes.emplace_back(cls.begin(), cls.end());
  }
  return ls;
}

SessionSchedule build_schedule(DatasetName dataset, Composition composition) {
  SessionSchedule s;
  const bool imbalanced = composition == Composition::Imbalanced;
  switch (dataset) {
    case DatasetName::PathMnist:
      s = SessionSchedule{7, 3, 1, 1000, imbalanced ? 50 : 20, imbalanced ? 200 : 70, 28, 3};
      break;
    case DatasetName::BloodMnist:
      s = SessionSchedule{7, 2, 1, 800, imbalanced ? 50 : 20, imbalanced ? 150 : 60, 224, 3};
      break;
    case DatasetName::Synthetic:
      s = SessionSchedule{3, 2, 1, 200, imbalanced ? 20 : 10, 30, 12, 3};
      break;
  }
  return s;
}

RunConfig preset_config(DatasetName dataset, Composition composition) {
  RunConfig c;
  c.dataset = dataset;
  c.composition = composition;
  c.schedule = build_schedule(dataset, composition);
  switch (dataset) {
    case DatasetName::PathMnist:
      c.lr_base = 0.1;
      c.lr_incremental = 0.001;
      c.epochs_base = 600;
      c.epochs_incremental = 600;
      c.backbone = "resnet20";
      c.expansion_variant = ExpansionVariant::ColorPerm;
      c.queue_length = 4096;
      c.batch_size = 128;
      break;
    case DatasetName::BloodMnist:
      c.lr_base = 0.002;
      c.lr_incremental = 0.000005;
      c.epochs_base = 120;
      c.epochs_incremental = 120;
      c.backbone = "resnet18";
      c.expansion_variant =
          composition == Composition::Imbalanced ? ExpansionVariant::Rotation2 : ExpansionVariant::ColorPerm;
      c.queue_length = 4096;
      c.batch_size = 128;
      break;
    case DatasetName::Synthetic:
      break;
  }
  c.metric_variant = c.expansion_variant;
  return c;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& field, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, field + ": " + msg);
  };
  check(mu > 0.0 && mu < 1.0, "mu", "must satisfy 0 < mu < 1");
  check(tau > 0.0, "tau", "must be > 0");
  check(eta > 0.0, "eta", "must be > 0");
  check(alpha >= 0.0, "alpha", "must be >= 0");
  check(beta >= 0.0, "beta", "must be >= 0");
  check(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "sgd_momentum", "must satisfy 0 <= m < 1");
  check(lr_base > 0.0, "lr_base", "must be > 0");
  check(lr_incremental > 0.0, "lr_incremental", "must be > 0");
  check(epochs_base >= 1, "epochs_base", "must be >= 1");
  check(epochs_incremental >= 1, "epochs_incremental", "must be >= 1");
  check(batch_size >= 1, "batch_size", "must be >= 1");
  check(queue_length >= 0, "queue_length", "must be >= 0");
  check(schedule.memory_size > 0, "schedule.memory_size", "must be > 0");
  check(schedule.num_sessions >= 1, "schedule.num_sessions", "must be >= 1");
  check(schedule.base_classes >= 1, "schedule.base_classes", "must be >= 1");
  check(schedule.classes_per_increment >= 1, "schedule.classes_per_increment", "must be >= 1");
  check(schedule.samples_per_base_class >= 1, "schedule.samples_per_base_class", "must be >= 1");
  check(schedule.samples_per_increment_class >= 1, "schedule.samples_per_increment_class", "must be >= 1");
  check(schedule.resolution >= 2, "schedule.resolution", "must be >= 2");
  check(schedule.channels >= 1, "schedule.channels", "must be >= 1");
  check(!mlp_hidden.empty(), "mlp_hidden", "needs at least one width");
  check(projector_dim >= 1 && projector_hidden >= 1, "projector_dim", "must be >= 1");
  check(tap_dim >= 1, "tap_dim", "must be >= 1");
  check(reevaluate_factor >= 1, "reevaluate_factor", "must be >= 1");
  check(mahalanobis_shrinkage >= 0.0 && mahalanobis_shrinkage <= 1.0, "mahalanobis_shrinkage", "must be in [0,1]");
  check(synthetic.noise >= 0.0, "synthetic.noise", "must be >= 0");
  check(synthetic.test_per_class >= 1, "synthetic.test_per_class", "must be >= 1");
  if (!class_order.empty()) {
    check(static_cast<int>(class_order.size()) == schedule.total_classes(), "class_order",
          "must list exactly " + std::to_string(schedule.total_classes()) + " classes");
    std::set<ClassId> uniq(class_order.begin(), class_order.end());
    check(uniq.size() == class_order.size(), "class_order", "contains duplicates");
  }
  const bool color = expansion_variant == ExpansionVariant::ColorPerm ||
                     expansion_variant == ExpansionVariant::ColorPerm3 ||
                     expansion_variant == ExpansionVariant::RotColorPerm6 ||
                     expansion_variant == ExpansionVariant::RotColorPerm12;
  check(!color || schedule.channels == 3, "expansion_variant", "color permutations need 3 channels");
}

}  // namespace essential
