#include "essential/essential.h"

#include "essential/cepredictor.hpp"
#include "essential/config.hpp"
#include "essential/error.hpp"
#include "essential/experiment.hpp"
#include "essential/memorybank.hpp"
#include "essential/metrics.hpp"
#include "essential/trajectory.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

struct ess_config {
  essential::RunConfig cfg;
};

struct ess_result {
  essential::ExperimentResult result;
};

struct ess_grid {
  essential::GridResult grid;
};

namespace {

thread_local std::string g_last_error;

ess_status status_of(essential::ErrorKind kind) {
  using essential::ErrorKind;
  switch (kind) {
    case ErrorKind::Input: return ESS_ERR_INPUT;
    case ErrorKind::Config: return ESS_ERR_CONFIG;
    case ErrorKind::Data: return ESS_ERR_DATA;
    case ErrorKind::Format: return ESS_ERR_FORMAT;
    case ErrorKind::State: return ESS_ERR_STATE;
    case ErrorKind::Internal: return ESS_ERR_INTERNAL;
    case ErrorKind::Training: return ESS_ERR_TRAINING;
    case ErrorKind::Io: return ESS_ERR_IO;
  }
  return ESS_ERR_INTERNAL;
}

template <class F>
ess_status guarded(F&& f) {
  try {
    f();
    return ESS_OK;
  } catch (const essential::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ESS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ESS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ESS_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) essential::fail(essential::ErrorKind::Input, std::string(what) + " is NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> split_csv(const char* csv) {
  std::vector<std::string> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

extern "C" {

const char* ess_version(void) { return "0.1.0"; }

const char* ess_last_error(void) { return g_last_error.c_str(); }

const char* ess_status_name(ess_status status) {
  switch (status) {
    case ESS_OK: return "ok";
    case ESS_ERR_INPUT: return "input error";
    case ESS_ERR_CONFIG: return "config error";
    case ESS_ERR_DATA: return "data error";
    case ESS_ERR_FORMAT: return "format error";
    case ESS_ERR_STATE: return "state error";
    case ESS_ERR_INTERNAL: return "internal error";
    case ESS_ERR_TRAINING: return "training error";
    case ESS_ERR_IO: return "io error";
  }
  return "unknown status";
}

void ess_string_free(char* s) { std::free(s); }

ess_status ess_config_load_file(const char* path, ess_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ess_config{essential::load_config_file(path)};
  });
}

ess_status ess_config_load_text(const char* text, ess_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new ess_config{essential::load_config_text(text)};
  });
}

ess_status ess_config_set(ess_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    essential::RunConfig copy = cfg->cfg;
    essential::apply_config_key(copy, key, value);
    cfg->cfg = std::move(copy);
  });
}

ess_status ess_config_validate(const ess_config* cfg) {
  return guarded([&] {
    need(cfg, "config");
    cfg->cfg.validate();
  });
}

ess_status ess_config_to_text(const ess_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup(essential::config_to_text(cfg->cfg));
  });
}

ess_status ess_config_hash(const ess_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup(essential::config_hash(cfg->cfg));
  });
}

ess_status ess_config_get(const ess_config* cfg, const char* key, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(out, "out");
    for (const auto& [k, v] : essential::parse_key_values(essential::config_to_text(cfg->cfg)))
      if (k == key) {
        *out = dup(v);
        return;
      }
    essential::fail(essential::ErrorKind::Config, std::string("unknown config key '") + key + "'");
  });
}

ess_status ess_config_keys(char** out) {
  return guarded([&] {
    need(out, "out");
    std::string s;
    for (const auto& d : essential::config_key_docs()) s += std::string(d.key) + "\t" + d.description + "\n";
    *out = dup(s);
  });
}

void ess_config_free(ess_config* cfg) { delete cfg; }

ess_status ess_run(const ess_config* cfg, const char* run_dir, ess_progress_fn progress, void* user,
                   ess_result** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    essential::ExperimentOptions opt;
    if (run_dir) opt.run_dir = run_dir;
    auto r = std::make_unique<ess_result>();
    if (progress)
      opt.on_session = [progress, user](const essential::SessionReport& rep) { progress(rep.session, rep.accuracy(), user); };
    r->result = essential::run_experiment(cfg->cfg, opt);
    *out = r.release();
  });
}

int ess_result_num_sessions(const ess_result* r) { return r ? static_cast<int>(r->result.reports.size()) : 0; }

double ess_result_accuracy(const ess_result* r, int session) {
  if (!r || session < 0 || static_cast<std::size_t>(session) >= r->result.reports.size()) return -1.0;
  return r->result.reports[static_cast<std::size_t>(session)].accuracy();
}

double ess_result_average(const ess_result* r) {
  if (!r || r->result.reports.empty()) return -1.0;
  return essential::mean_of(r->result.accuracies());
}

ess_status ess_result_summary(const ess_result* r, int tsv, char** out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    const std::vector<essential::SummaryRow> rows{{r->result.label, r->result.accuracies(), false}};
    *out = dup(tsv ? essential::format_summary_tsv(rows) : essential::format_summary_table(rows));
  });
}

ess_status ess_result_report_json(const ess_result* r, int session, char** out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    essential::require(session >= 0 && static_cast<std::size_t>(session) < r->result.reports.size(),
                       essential::ErrorKind::Input, "session index out of range");
    *out = dup(essential::report_to_json(r->result.reports[static_cast<std::size_t>(session)]));
  });
}

void ess_result_free(ess_result* r) { delete r; }

ess_status ess_ablate(const ess_config* cfg, const char* axes_csv, const char* out_dir, ess_grid** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    std::vector<essential::AblationAxis> axes;
    for (const auto& a : split_csv(axes_csv)) axes.push_back(essential::parse_ablation_axis(a));
    *out = new ess_grid{essential::run_ablation(cfg->cfg, axes, out_dir ? out_dir : "")};
  });
}

ess_status ess_sweep_memory(const ess_config* cfg, const int* sizes, size_t n, const char* out_dir, ess_grid** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    if (n > 0) need(sizes, "sizes");
    std::vector<int> v(sizes, sizes + n);
    *out = new ess_grid{essential::run_memory_sweep(cfg->cfg, v, out_dir ? out_dir : "")};
  });
}

ess_status ess_sweep_expansion(const ess_config* cfg, const char* variants_csv, const char* out_dir, ess_grid** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    std::vector<essential::ExpansionVariant> variants;
    for (const auto& v : split_csv(variants_csv)) variants.push_back(essential::parse_expansion_variant(v));
    *out = new ess_grid{essential::run_expansion_sweep(cfg->cfg, variants, out_dir ? out_dir : "")};
  });
}

size_t ess_grid_rows(const ess_grid* g) { return g ? g->grid.rows.size() : 0; }

int ess_grid_failures(const ess_grid* g) { return g ? g->grid.failures : 0; }

ess_status ess_grid_table(const ess_grid* g, int tsv, char** out) {
  return guarded([&] {
    need(g, "grid");
    need(out, "out");
    *out = dup(tsv ? g->grid.tsv : g->grid.table);
  });
}

void ess_grid_free(ess_grid* g) { delete g; }

ess_status ess_report(const char* run_dir, char** out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    need(out, "out");
    *out = dup(essential::report_run_dir(run_dir));
  });
}

ess_status ess_static_entropy(const double* p, size_t n, double* out) {
  return guarded([&] {
    need(p, "p");
    need(out, "out");
    const std::span<const double> v(p, n);
    essential::check_probability_vector(v);
    *out = essential::static_entropy(v);
  });
}

ess_status ess_symmetric_kl(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    need(p, "p");
    need(q, "q");
    need(out, "out");
    *out = essential::symmetric_kl({p, p + n}, {q, q + n});
  });
}

ess_status ess_js_divergence(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    need(p, "p");
    need(q, "q");
    need(out, "out");
    *out = essential::js_divergence({p, n}, {q, n});
  });
}

ess_status ess_cumulative_entropy(const double* entropies, size_t n, int trapezoid, double* out) {
  return guarded([&] {
    need(entropies, "entropies");
    need(out, "out");
    essential::EntropyTrajectory t;
    t.entropies.assign(entropies, entropies + n);
    *out = trapezoid ? essential::cumulative_entropy_trapezoid(t) : essential::cumulative_entropy_sum(t);
  });
}

ess_status ess_deltas(const double* ours, const double* baseline, size_t n, double* final_delta,
                      double* average_delta) {
  return guarded([&] {
    need(ours, "ours");
    need(baseline, "baseline");
    need(final_delta, "final_delta");
    need(average_delta, "average_delta");
    const auto d = essential::deltas({ours, ours + n}, {baseline, baseline + n});
    *final_delta = d.final_delta;
    *average_delta = d.average_delta;
  });
}

ess_status ess_quota(int budget, int num_classes, int* out) {
  return guarded([&] {
    need(out, "out");
    const auto q = essential::quota(budget, num_classes);
    std::copy(q.begin(), q.end(), out);
  });
}

}  // extern "C"
