#include "essential/experiment.hpp"

#include "essential/config.hpp"
#include "essential/error.hpp"
#include "essential/plots.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace essential {

std::vector<double> ExperimentResult::accuracies() const {
  return reports.empty() ? std::vector<double>{} : reports.back().accuracies;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Manifest {
 public:
  Manifest(std::string dir, const RunConfig& cfg) : path_((fs::path(dir) / "manifest.json").string()) {
    j_["config"] = config_to_text(cfg);
    j_["config_hash"] = config_hash(cfg);
    j_["run_dir"] = dir;
    j_["status"] = "running";
    j_["sessions"] = nlohmann::json::array();
    for (int t = 0; t < cfg.schedule.num_sessions; ++t) j_["sessions"].push_back({{"session", t}, {"status", "pending"}});
    write();
  }
  void session(int t, const std::string& status) {
    j_["sessions"][static_cast<std::size_t>(t)]["status"] = status;
    write();
  }
  void finish(const std::string& status, const std::string& error = {}) {
    j_["status"] = status;
    if (!error.empty()) j_["error"] = error;
    write();
  }

 private:
  void write() { write_text_file(path_, j_.dump(2) + "\n"); }
  std::string path_;
  nlohmann::json j_;
};

void write_session_artifacts(const std::string& dir, const SessionState& state, const SessionReport& report,
                             bool plots) {
  fs::create_directories(dir);
  write_text_file(dir + "/report.json", report_to_json(report) + "\n");
  {
    std::ostringstream os;
    write_bank_manifest(os, state.memory);
    write_text_file(dir + "/bank.tsv", os.str());
  }
  {
    std::ostringstream os;
    write_trajectories(os, state.trajectories);
    write_text_file(dir + "/trajectories.tsv", os.str());
  }
  {
    std::ostringstream os;
    write_trajectories(os, state.predicted);
    write_text_file(dir + "/predicted_trajectories.tsv", os.str());
  }
  {
    std::ostringstream os;
    os << "sample_id\tpredicted_score\ttrue_score\tselector_score\tstored\n" << std::setprecision(17);
    std::set<SampleId> ids;
    for (const auto* m : {&state.scores.predicted, &state.scores.true_score, &state.scores.selector})
      for (const auto& [id, v] : *m) ids.insert(id);
    auto cell = [](const std::map<SampleId, double>& m, SampleId id) {
      auto it = m.find(id);
      if (it == m.end()) return std::string();
      std::ostringstream c;
      c << std::setprecision(17) << it->second;
      return c.str();
    };
    for (SampleId id : ids)
      os << id << '\t' << cell(state.scores.predicted, id) << '\t' << cell(state.scores.true_score, id) << '\t'
         << cell(state.scores.selector, id) << '\t' << (state.memory.contains(id) ? 1 : 0) << '\n';
    write_text_file(dir + "/entropy_scores.tsv", os.str());
  }
  if (plots)
    write_text_file(dir + "/confusion.svg",
                    render_confusion_heatmap(report.confusion, "Confusion matrix, session " + std::to_string(report.session)));
}

void write_run_summary(const std::string& dir, const std::string& label, const std::vector<SessionReport>& reports,
                       bool plots) {
  if (reports.empty()) return;
  const std::vector<SummaryRow> rows{{label, reports.back().accuracies, false}};
  write_text_file(dir + "/summary.txt", format_summary_table(rows));
  write_text_file(dir + "/summary.tsv", format_summary_tsv(rows));
  if (!plots) return;

  LineChart acc{"Accuracy per session", "session", "accuracy (%)", {}};
  Series s{label, {}, reports.back().accuracies};
  for (std::size_t t = 0; t < s.y.size(); ++t) s.x.push_back(static_cast<double>(t));
  acc.series.push_back(s);
  write_text_file(dir + "/accuracy.svg", render_line_chart(acc));

  LineChart unc{"Model uncertainty per epoch", "epoch", "mean entropy (nats)", {}};
  LineChart bias{"New-class samples misclassified as base", "epoch", "fraction", {}};
  for (const auto& r : reports) {
    Series u{"session " + std::to_string(r.session), {}, r.uncertainty_per_epoch};
    for (std::size_t e = 0; e < u.y.size(); ++e) u.x.push_back(static_cast<double>(e + 1));
    unc.series.push_back(u);
    if (!r.misclassified_as_base_per_epoch.empty()) {
      Series b{"session " + std::to_string(r.session), {}, r.misclassified_as_base_per_epoch};
      for (std::size_t e = 0; e < b.y.size(); ++e) b.x.push_back(static_cast<double>(e + 1));
      bias.series.push_back(b);
    }
  }
  write_text_file(dir + "/uncertainty.svg", render_line_chart(unc));
  if (!bias.series.empty()) write_text_file(dir + "/bias.svg", render_line_chart(bias));
}

std::string run_label(const RunConfig& cfg) {
  return to_string(cfg.selector) + "/" + to_string(cfg.similarity) + "/" + to_string(cfg.expansion_variant);
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Columns {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> body;
};

Columns summary_columns(const std::vector<SummaryRow>& rows, std::optional<std::size_t> reference) {
  std::size_t sessions = 0;
  for (const auto& r : rows) sessions = std::max(sessions, r.accuracies.size());
  Columns c;
  c.header.push_back("method");
  for (std::size_t t = 0; t < sessions; ++t) c.header.push_back(std::to_string(t));
  const bool deltas_on = reference && *reference < rows.size() && !rows[*reference].failed;
  if (deltas_on) c.header.push_back("delta_final");
  c.header.push_back("average");
  if (deltas_on) c.header.push_back("delta_average");
  for (const auto& r : rows) {
    std::vector<std::string> line{r.label};
    const bool complete = !r.failed && r.accuracies.size() == sessions && sessions > 0;
    for (std::size_t t = 0; t < sessions; ++t)
      line.push_back(t < r.accuracies.size() ? fixed2(r.accuracies[t]) : (r.failed ? "failed" : "-"));
    if (deltas_on)
      line.push_back(complete ? fixed2(deltas(rows[*reference].accuracies, r.accuracies).final_delta) : "-");
    line.push_back(complete ? fixed2(mean_of(r.accuracies)) : "-");
    if (deltas_on)
      line.push_back(complete ? fixed2(deltas(rows[*reference].accuracies, r.accuracies).average_delta) : "-");
    c.body.push_back(std::move(line));
  }
  return c;
}

}  // namespace

std::string format_summary_table(const std::vector<SummaryRow>& rows, std::optional<std::size_t> reference) {
  const Columns c = summary_columns(rows, reference);
  std::vector<std::size_t> width(c.header.size());
  for (std::size_t k = 0; k < c.header.size(); ++k) {
    width[k] = c.header[k].size();
    for (const auto& line : c.body) width[k] = std::max(width[k], line[k].size());
  }
  std::ostringstream os;
  auto put = [&](const std::vector<std::string>& line) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (k == 0)
        os << std::left << std::setw(static_cast<int>(width[k])) << line[k];
      else
        os << "  " << std::right << std::setw(static_cast<int>(width[k])) << line[k];
    }
    os << '\n';
  };
  put(c.header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  os << std::string(total - 2, '-') << '\n';
  for (const auto& line : c.body) put(line);
  return os.str();
}

std::string format_summary_tsv(const std::vector<SummaryRow>& rows, std::optional<std::size_t> reference) {
  const Columns c = summary_columns(rows, reference);
  std::ostringstream os;
  auto put = [&](const std::vector<std::string>& line) {
    for (std::size_t k = 0; k < line.size(); ++k) os << (k ? "\t" : "") << line[k];
    os << '\n';
  };
  put(c.header);
  for (const auto& line : c.body) put(line);
  return os.str();
}

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options) {
  cfg.validate();
  ExperimentResult result;
  result.config_hash = config_hash(cfg);
  result.run_dir = options.run_dir;
  const bool persist = !options.run_dir.empty();
  std::optional<Manifest> manifest;
  if (persist) {
    fs::create_directories(options.run_dir);
    manifest.emplace(options.run_dir, cfg);
    write_text_file(options.run_dir + "/config.cfg", config_to_text(cfg));
  }
  result.label = run_label(cfg);
  int current = 0;
  try {
    const SessionData data = materialize_sessions(load_dataset(cfg), cfg.schedule, cfg.seed, cfg.class_order);
    SessionReport report;
    SessionState state = run_base_session(cfg, data, &report, options.hooks);
    for (int t = 0;; ++t) {
      current = t;
      if (t > 0) report = run_incremental_session(state, data, options.hooks);
      if (persist) {
        write_session_artifacts(options.run_dir + "/session_" + std::to_string(t), state, report, options.write_plots);
        manifest->session(t, "complete");
      }
      result.reports.push_back(report);
      if (options.on_session) options.on_session(report);
      if (t + 1 >= cfg.schedule.num_sessions) break;
      current = t + 1;
    }
  } catch (const std::exception& e) {
    if (persist) {
      manifest->session(current, "failed");
      manifest->finish("failed", e.what());
      write_run_summary(options.run_dir, run_label(cfg), result.reports, options.write_plots);
    }
    throw;
  }
  if (persist) {
    write_run_summary(options.run_dir, run_label(cfg), result.reports, options.write_plots);
    manifest->finish("complete");
  }
  return result;
}

AblationAxis parse_ablation_axis(const std::string& s) {
  if (s == "selector") return AblationAxis::Selector;
  if (s == "similarity") return AblationAxis::Similarity;
  if (s == "expansion_variant" || s == "expansion") return AblationAxis::ExpansionVariant;
  fail(ErrorKind::Input, "unknown ablation axis '" + s + "' (expected selector, similarity, expansion_variant)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Selector: return "selector";
    case AblationAxis::Similarity: return "similarity";
    case AblationAxis::ExpansionVariant: return "expansion_variant";
  }
  return "?";
}

namespace {

struct Cell {
  std::string label;
  RunConfig cfg;
  bool is_reference = false;
};

GridResult run_cells(const std::vector<Cell>& cells, const std::string& out_dir) {
  GridResult g;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    SummaryRow row{cell.label, {}, false};
    ExperimentOptions opt;
    if (!out_dir.empty()) {
      std::string dirname = cell.label;
      std::replace(dirname.begin(), dirname.end(), ',', '_');
      std::replace(dirname.begin(), dirname.end(), '=', '-');
      opt.run_dir = (fs::path(out_dir) / dirname).string();
    }
    try {
      row.accuracies = run_experiment(cell.cfg, opt).accuracies();
    } catch (const std::exception& e) {
      row.failed = true;
      ++g.failures;
    }
    if (cell.is_reference && !g.reference) g.reference = i;
    g.rows.push_back(std::move(row));
  }
  if (!g.reference && !g.rows.empty()) g.reference = 0;
  g.table = format_summary_table(g.rows, g.reference);
  g.tsv = format_summary_tsv(g.rows, g.reference);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/summary.txt", g.table);
    write_text_file(out_dir + "/summary.tsv", g.tsv);
  }
  return g;
}

}  // namespace

GridResult run_ablation(const RunConfig& base, const std::vector<AblationAxis>& axes, const std::string& out_dir) {
  require(!axes.empty(), ErrorKind::Input, "ablation needs at least one axis");
  std::vector<Cell> cells{{"", base, true}};
  std::set<AblationAxis> seen;
  for (AblationAxis axis : axes) {
    if (!seen.insert(axis).second) continue;
    std::vector<Cell> next;
    for (const Cell& c : cells) {
      auto add = [&](const std::string& token, auto apply, bool matches) {
        Cell n = c;
        apply(n.cfg);
        n.label += (n.label.empty() ? "" : ",") + to_string(axis) + "=" + token;
        n.is_reference = c.is_reference && matches;
        next.push_back(std::move(n));
      };
      switch (axis) {
        case AblationAxis::Selector:
          for (auto k : {SelectorKind::Uta, SelectorKind::Random, SelectorKind::Nme, SelectorKind::Pool,
                         SelectorKind::Committee})
            add(to_string(k), [k](RunConfig& r) { r.selector = k; }, k == base.selector);
          break;
        case AblationAxis::Similarity:
          for (auto k : {SimilarityKind::Cos, SimilarityKind::Dot, SimilarityKind::Euc, SimilarityKind::Mah})
            add(to_string(k), [k](RunConfig& r) { r.similarity = k; }, k == base.similarity);
          break;
        case AblationAxis::ExpansionVariant:
          for (auto k : {ExpansionVariant::None, ExpansionVariant::Rotation, ExpansionVariant::Rotation2,
                         ExpansionVariant::ColorPerm, ExpansionVariant::ColorPerm3, ExpansionVariant::RotColorPerm6,
                         ExpansionVariant::RotColorPerm12})
            add(to_string(k), [k](RunConfig& r) { r.expansion_variant = k; }, k == base.expansion_variant);
          break;
      }
    }
    cells = std::move(next);
  }
  return run_cells(cells, out_dir);
}

GridResult run_memory_sweep(const RunConfig& base, std::vector<int> sizes, const std::string& out_dir) {
  require(!sizes.empty(), ErrorKind::Input, "memory sweep needs at least one size");
  for (int s : sizes) require(s > 0, ErrorKind::Input, "memory size must be positive, got " + std::to_string(s));
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  std::vector<Cell> cells;
  for (int s : sizes) {
    Cell c{"memory_size=" + std::to_string(s), base, s == base.schedule.memory_size};
    c.cfg.schedule.memory_size = s;
    cells.push_back(std::move(c));
  }
  GridResult g = run_cells(cells, out_dir);
  if (!out_dir.empty()) {
    LineChart chart{"Accuracy vs memory size", "memory size", "accuracy (%)", {}};
    Series fin{"final session", {}, {}}, avg{"average", {}, {}};
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const auto& row = g.rows[i];
      if (row.failed || row.accuracies.empty()) continue;
      fin.x.push_back(sizes[i]);
      fin.y.push_back(row.accuracies.back());
      avg.x.push_back(sizes[i]);
      avg.y.push_back(mean_of(row.accuracies));
    }
    chart.series = {fin, avg};
    write_text_file(out_dir + "/memory_sweep.svg", render_line_chart(chart));
  }
  return g;
}

GridResult run_expansion_sweep(const RunConfig& base, std::vector<ExpansionVariant> variants,
                               const std::string& out_dir) {
  if (variants.empty())
    variants = {ExpansionVariant::None,      ExpansionVariant::Rotation,      ExpansionVariant::Rotation2,
                ExpansionVariant::ColorPerm, ExpansionVariant::ColorPerm3,    ExpansionVariant::RotColorPerm6,
                ExpansionVariant::RotColorPerm12};
  std::vector<Cell> cells;
  std::set<ExpansionVariant> seen;
  for (auto v : variants) {
    if (!seen.insert(v).second) continue;
    Cell c{"expansion_variant=" + to_string(v), base, v == base.expansion_variant};
    c.cfg.expansion_variant = v;
    cells.push_back(std::move(c));
  }
  return run_cells(cells, out_dir);
}

std::string report_run_dir(const std::string& run_dir) {
  const auto manifest = nlohmann::json::parse(read_file(run_dir + "/manifest.json"), nullptr, false);
  require(!manifest.is_discarded(), ErrorKind::Format, run_dir + "/manifest.json is not valid JSON");
  RunConfig cfg;
  try {
    cfg = load_config_text(manifest.at("config").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "manifest has no config snapshot");
  }
  std::vector<SessionReport> reports;
  for (int t = 0;; ++t) {
    const std::string p = run_dir + "/session_" + std::to_string(t) + "/report.json";
    if (!fs::exists(p)) break;
    reports.push_back(report_from_json(read_file(p)));
  }
  require(!reports.empty(), ErrorKind::Data, "no session reports under " + run_dir);
  write_run_summary(run_dir, run_label(cfg), reports, true);
  for (const auto& r : reports)
    write_text_file(run_dir + "/session_" + std::to_string(r.session) + "/confusion.svg",
                    render_confusion_heatmap(r.confusion, "Confusion matrix, session " + std::to_string(r.session)));
  std::ostringstream os;
  os << "run " << run_dir << " (" << manifest.value("status", std::string("unknown")) << ", config "
     << manifest.value("config_hash", std::string()) << ")\n";
  os << format_summary_table({{run_label(cfg), reports.back().accuracies, false}});
  return os.str();
}

}  // namespace essential
