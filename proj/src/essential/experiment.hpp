#pragma once

// Whole experiments: run directories, manifests, summary tables, ablation grids
// and parameter sweeps.

#include "essential/datamodel.hpp"
#include "essential/metrics.hpp"
#include "essential/sessions.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace essential {

struct ExperimentOptions {
  std::string run_dir;  // empty: keep everything in memory
  bool write_plots = true;
  SessionHooks hooks;
  std::function<void(const SessionReport&)> on_session;  // after each evaluated session
};

struct ExperimentResult {
  std::vector<SessionReport> reports;
  std::string run_dir;
  std::string config_hash;
  std::string label;  // selector/similarity/expansion
  bool ok = true;
  std::string error;

  std::vector<double> accuracies() const;
};

// Runs sessions 0..T. When run_dir is set, manifest.json is written before
// training and updated after each session; on failure the manifest records it
// and the error is rethrown with partial artifacts left in place.
ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options = {});

struct SummaryRow {
  std::string label;
  std::vector<double> accuracies;  // per session
  bool failed = false;
};

// Table layout: label, per-session accuracies, average; with a reference row also
// delta-final and delta-average (row minus reference, as published).
std::string format_summary_table(const std::vector<SummaryRow>& rows, std::optional<std::size_t> reference = {});
std::string format_summary_tsv(const std::vector<SummaryRow>& rows, std::optional<std::size_t> reference = {});

enum class AblationAxis { Selector, Similarity, ExpansionVariant };
AblationAxis parse_ablation_axis(const std::string& s);
std::string to_string(AblationAxis axis);

struct GridResult {
  std::vector<SummaryRow> rows;
  std::optional<std::size_t> reference;
  std::string table;
  std::string tsv;
  int failures = 0;
};

// One run per grid cell (cartesian product of the axes) under out_dir/<cell>/.
GridResult run_ablation(const RunConfig& base, const std::vector<AblationAxis>& axes, const std::string& out_dir);
// One run per memory size (deduplicated, ascending). Sizes must be positive.
GridResult run_memory_sweep(const RunConfig& base, std::vector<int> sizes, const std::string& out_dir);
// One run per expansion variant (all variants when `variants` is empty).
GridResult run_expansion_sweep(const RunConfig& base, std::vector<ExpansionVariant> variants,
                               const std::string& out_dir);

// Rebuilds summary and plots from an existing run directory.
std::string report_run_dir(const std::string& run_dir);

}  // namespace essential
