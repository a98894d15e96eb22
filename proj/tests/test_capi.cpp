#include "doctest.h"

#include <essential/essential.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace {

// Takes ownership of a library-allocated string.
std::string take(char* s) {
  std::string out = s ? s : "";
  ess_string_free(s);
  return out;
}

const char* kTinyConfig =
    "dataset = synthetic\n"
    "schedule.samples_per_base_class = 30\n"
    "schedule.samples_per_increment_class = 8\n"
    "schedule.memory_size = 9\n"
    "epochs_base = 3\n"
    "epochs_incremental = 2\n"
    "batch_size = 32\n"
    "synthetic.test_per_class = 10\n";

std::string temp_dir(const std::string& name) {
  const char* root = std::getenv("ESSENTIAL_TEST_TMP");
  std::filesystem::path p = root ? root : std::filesystem::temp_directory_path() / "essential_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

void record(int session, double accuracy, void* user) {
  static_cast<std::vector<std::pair<int, double>>*>(user)->emplace_back(session, accuracy);
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and version") {
    CHECK(std::string(ess_status_name(ESS_OK)) == "ok");
    CHECK(std::string(ess_status_name(ESS_ERR_CONFIG)) == "config error");
    CHECK(std::string(ess_version()).size() > 0);
  }

  TEST_CASE("configuration handles") {
    ess_config* cfg = nullptr;
    REQUIRE(ess_config_load_text("selector = random\n", &cfg) == ESS_OK);
    char* v = nullptr;
    REQUIRE(ess_config_get(cfg, "selector", &v) == ESS_OK);
    CHECK(take(v) == "random");
    CHECK(ess_config_set(cfg, "similarity", "dot") == ESS_OK);
    REQUIRE(ess_config_get(cfg, "similarity", &v) == ESS_OK);
    CHECK(take(v) == "dot");

    CHECK(ess_config_set(cfg, "no_such_key", "1") == ESS_ERR_CONFIG);
    CHECK(std::string(ess_last_error()).find("no_such_key") != std::string::npos);
    CHECK(ess_config_get(cfg, "no_such_key", &v) == ESS_ERR_CONFIG);
    CHECK(ess_config_set(cfg, "schedule.memory_size", "0") == ESS_OK);
    CHECK(ess_config_validate(cfg) == ESS_ERR_CONFIG);
    CHECK(ess_config_set(cfg, "schedule.memory_size", "30") == ESS_OK);
    CHECK(ess_config_validate(cfg) == ESS_OK);

    char* text = nullptr;
    char* hash = nullptr;
    REQUIRE(ess_config_to_text(cfg, &text) == ESS_OK);
    REQUIRE(ess_config_hash(cfg, &hash) == ESS_OK);
    const std::string t = take(text), h = take(hash);
    CHECK(t.find("selector = random\n") != std::string::npos);
    CHECK(h.size() == 40);
    ess_config* again = nullptr;
    REQUIRE(ess_config_load_text(t.c_str(), &again) == ESS_OK);
    REQUIRE(ess_config_hash(again, &hash) == ESS_OK);
    CHECK(take(hash) == h);
    ess_config_free(again);
    ess_config_free(cfg);

    char* keys = nullptr;
    REQUIRE(ess_config_keys(&keys) == ESS_OK);
    CHECK(take(keys).find("schedule.memory_size\t") != std::string::npos);

    CHECK(ess_config_load_file("/nonexistent.cfg", &cfg) == ESS_ERR_IO);
    CHECK(ess_config_load_text("oops", &cfg) == ESS_ERR_CONFIG);
    CHECK(ess_config_load_text("x = 1", nullptr) == ESS_ERR_INPUT);
    CHECK(ess_config_get(nullptr, "seed", &v) == ESS_ERR_INPUT);
  }

  TEST_CASE("formulas") {
    const double p[] = {0.5, 0.5}, q[] = {1.0, 0.0}, a[] = {0.9, 0.1}, b[] = {0.1, 0.9};
    double out = 0.0;
    REQUIRE(ess_static_entropy(p, 2, &out) == ESS_OK);
    CHECK(out == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(ess_js_divergence(p, q, 2, &out) == ESS_OK);
    CHECK(out == doctest::Approx(0.215762).epsilon(1e-6));
    REQUIRE(ess_symmetric_kl(a, b, 2, &out) == ESS_OK);
    CHECK(out == doctest::Approx(1.757780).epsilon(1e-6));
    const double bad[] = {0.7, 0.7};
    CHECK(ess_static_entropy(bad, 2, &out) == ESS_ERR_INPUT);

    const double e1[] = {0.9, 0.7, 0.3}, e2[] = {1.0, 0.5, 0.25};
    REQUIRE(ess_cumulative_entropy(e1, 3, 0, &out) == ESS_OK);
    CHECK(out == doctest::Approx(1.9).epsilon(1e-12));
    REQUIRE(ess_cumulative_entropy(e2, 3, 1, &out) == ESS_OK);
    CHECK(out == doctest::Approx(1.125).epsilon(1e-12));

    const double ours[] = {99.89, 97.87, 90.56, 87.86, 80.86, 81.68, 84.06};
    const double cec[] = {97.78, 85.66, 69.34, 67.71, 55.04, 47.45, 46.39};
    double df = 0.0, da = 0.0;
    REQUIRE(ess_deltas(ours, cec, 7, &df, &da) == ESS_OK);
    CHECK(df == doctest::Approx(-37.67).epsilon(1e-9));
    CHECK(da == doctest::Approx(-21.92).epsilon(1e-9));

    int qs[9] = {};
    REQUIRE(ess_quota(200, 9, qs) == ESS_OK);
    CHECK(qs[0] == 23);
    CHECK(qs[1] == 23);
    CHECK(qs[2] == 22);
    CHECK(qs[8] == 22);
    CHECK(ess_quota(-1, 3, qs) == ESS_ERR_INPUT);
  }

  TEST_CASE("runs in memory and on disk") {
    ess_config* cfg = nullptr;
    REQUIRE(ess_config_load_text(kTinyConfig, &cfg) == ESS_OK);
    std::vector<std::pair<int, double>> progress;
    ess_result* r = nullptr;
    REQUIRE(ess_run(cfg, nullptr, record, &progress, &r) == ESS_OK);
    REQUIRE(ess_result_num_sessions(r) == 3);
    REQUIRE(progress.size() == 3);
    for (int t = 0; t < 3; ++t) {
      CHECK(progress[static_cast<std::size_t>(t)].first == t);
      CHECK(progress[static_cast<std::size_t>(t)].second == ess_result_accuracy(r, t));
    }
    CHECK(ess_result_accuracy(r, 3) == -1.0);
    CHECK(ess_result_average(r) >= 0.0);
    char* s = nullptr;
    REQUIRE(ess_result_summary(r, 1, &s) == ESS_OK);
    CHECK(take(s).find("uta/cos/color_perm3\t") != std::string::npos);
    REQUIRE(ess_result_report_json(r, 2, &s) == ESS_OK);
    CHECK(take(s).find("\"session\"") != std::string::npos);
    CHECK(ess_result_report_json(r, 7, &s) == ESS_ERR_INPUT);
    ess_result_free(r);

    const std::string dir = temp_dir("capi") + "/run";
    REQUIRE(ess_run(cfg, dir.c_str(), nullptr, nullptr, &r) == ESS_OK);
    ess_result_free(r);
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    REQUIRE(ess_report(dir.c_str(), &s) == ESS_OK);
    CHECK(take(s).find("complete") != std::string::npos);
    CHECK(ess_report("/nonexistent/run", &s) != ESS_OK);

    REQUIRE(ess_config_set(cfg, "class_order", "0,1,2,9") == ESS_OK);
    CHECK(ess_run(cfg, nullptr, nullptr, nullptr, &r) == ESS_ERR_DATA);
    CHECK(std::string(ess_last_error()).find("class 9") != std::string::npos);
    ess_config_free(cfg);
  }

  TEST_CASE("grids") {
    ess_config* cfg = nullptr;
    REQUIRE(ess_config_load_text(kTinyConfig, &cfg) == ESS_OK);
    ess_grid* g = nullptr;
    CHECK(ess_ablate(cfg, "optimizer", nullptr, &g) == ESS_ERR_INPUT);
    const int sizes[] = {6, 6, 9};
    REQUIRE(ess_sweep_memory(cfg, sizes, 3, nullptr, &g) == ESS_OK);
    CHECK(ess_grid_rows(g) == 2);
    CHECK(ess_grid_failures(g) == 0);
    char* t = nullptr;
    REQUIRE(ess_grid_table(g, 1, &t) == ESS_OK);
    CHECK(take(t).find("memory_size=9") != std::string::npos);
    ess_grid_free(g);
    const int bad[] = {6, -3};
    CHECK(ess_sweep_memory(cfg, bad, 2, nullptr, &g) == ESS_ERR_INPUT);
    REQUIRE(ess_sweep_expansion(cfg, "none,rotation", nullptr, &g) == ESS_OK);
    CHECK(ess_grid_rows(g) == 2);
    ess_grid_free(g);
    CHECK(ess_sweep_expansion(cfg, "sideways", nullptr, &g) != ESS_OK);
    ess_config_free(cfg);
  }
}
