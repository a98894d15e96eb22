// Command-line front end. Talks to the library only through the C API.

#include "essential/essential.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kTraining = 3 };

int exit_for(ess_status s) {
  switch (s) {
    case ESS_OK: return kOk;
    case ESS_ERR_INPUT:
    case ESS_ERR_CONFIG: return kUsage;
    case ESS_ERR_DATA:
    case ESS_ERR_FORMAT:
    case ESS_ERR_IO: return kData;
    default: return kTraining;
  }
}

struct Failure {
  int code;
};

void check(ess_status s, const char* context, int code = -1) {
  if (s == ESS_OK) return;
  std::cerr << "essential: " << context << ": " << ess_last_error() << " (" << ess_status_name(s) << ")\n";
  throw Failure{code >= 0 ? code : exit_for(s)};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ess_string_free(s);
  return out;
}

struct ConfigDeleter {
  void operator()(ess_config* c) const { ess_config_free(c); }
};
using ConfigPtr = std::unique_ptr<ess_config, ConfigDeleter>;

ConfigPtr load(const std::string& path, const std::vector<std::string>& overrides) {
  ess_config* raw = nullptr;
  check(ess_config_load_file(path.c_str(), &raw), "loading config", kUsage);
  ConfigPtr cfg(raw);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "essential: --set expects key=value, got '" << o << "'\n";
      throw Failure{kUsage};
    }
    const std::string key = o.substr(0, eq), value = o.substr(eq + 1);
    check(ess_config_set(cfg.get(), key.c_str(), value.c_str()), ("--set " + o).c_str(), kUsage);
  }
  check(ess_config_validate(cfg.get()), "invalid config", kUsage);
  return cfg;
}

std::string default_dir(const ess_config* cfg, const std::string& prefix) {
  char* hash = nullptr;
  check(ess_config_hash(cfg, &hash), "hashing config");
  return "runs/" + prefix + "-" + take(hash).substr(0, 10);
}

void print_grid(ess_grid* g, bool tsv) {
  char* table = nullptr;
  check(ess_grid_table(g, tsv, &table), "formatting table");
  std::cout << take(table);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental learning experiments with uncertainty-guided exemplar replay"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, axes = "selector", variants;
  std::vector<std::string> overrides;
  std::vector<int> sizes;
  bool tsv = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Configuration file (key = value lines)")->required();
    sub->add_option("-s,--set", overrides, "Override a config key, e.g. --set selector=random");
    sub->add_option("-o,--out", out_dir, "Output directory (default runs/<name>-<config hash>)");
    sub->add_flag("--tsv", tsv, "Print the summary as tab-separated values");
  };

  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run);
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  add_common(ablate);
  ablate->add_option("-a,--axes", axes, "Comma list of selector, similarity, expansion_variant");
  auto* sweep_mem = app.add_subcommand("sweep-memory", "Accuracy against memory size");
  add_common(sweep_mem);
  sweep_mem->add_option("--sizes", sizes, "Memory sizes")->required()->delimiter(',');
  auto* sweep_exp = app.add_subcommand("sweep-expansion", "Accuracy against expansion variant");
  add_common(sweep_exp);
  sweep_exp->add_option("--variants", variants, "Comma list of variants (default: all)");
  auto* report = app.add_subcommand("report", "Summarise an existing run directory");
  report->add_option("run_dir", run_dir, "Run directory")->required();
  auto* keys = app.add_subcommand("keys", "List configuration keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*keys) {
      char* text = nullptr;
      check(ess_config_keys(&text), "listing keys");
      std::cout << take(text);
      return kOk;
    }
    if (*report) {
      char* text = nullptr;
      check(ess_report(run_dir.c_str(), &text), "report");
      std::cout << take(text);
      return kOk;
    }

    const ConfigPtr cfg = load(config_path, overrides);
    if (*run) {
      const std::string dir = out_dir.empty() ? default_dir(cfg.get(), "run") : out_dir;
      ess_result* raw = nullptr;
      const auto progress = [](int session, double acc, void*) {
        std::fprintf(stderr, "session %d: accuracy %.2f%%\n", session, acc);
      };
      check(ess_run(cfg.get(), dir.c_str(), progress, nullptr, &raw), "run");
      std::unique_ptr<ess_result, void (*)(ess_result*)> result(raw, ess_result_free);
      char* table = nullptr;
      check(ess_result_summary(result.get(), tsv, &table), "formatting summary");
      std::cout << take(table);
      std::cerr << "run directory: " << dir << "\n";
      return kOk;
    }

    ess_grid* raw = nullptr;
    std::string dir = out_dir;
    if (*ablate) {
      if (dir.empty()) dir = default_dir(cfg.get(), "ablate");
      check(ess_ablate(cfg.get(), axes.c_str(), dir.c_str(), &raw), "ablate", kUsage);
    } else if (*sweep_mem) {
      if (dir.empty()) dir = default_dir(cfg.get(), "memory");
      check(ess_sweep_memory(cfg.get(), sizes.data(), sizes.size(), dir.c_str(), &raw), "sweep-memory", kUsage);
    } else {
      if (dir.empty()) dir = default_dir(cfg.get(), "expansion");
      check(ess_sweep_expansion(cfg.get(), variants.c_str(), dir.c_str(), &raw), "sweep-expansion", kUsage);
    }
    std::unique_ptr<ess_grid, void (*)(ess_grid*)> grid(raw, ess_grid_free);
    print_grid(grid.get(), tsv);
    std::cerr << "output directory: " << dir << "\n";
    return ess_grid_failures(grid.get()) > 0 ? kTraining : kOk;
  } catch (const Failure& f) {
    return f.code;
  }
}
