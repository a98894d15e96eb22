#include "doctest.h"
#include "helpers.hpp"

#include "essential/config.hpp"
#include "essential/error.hpp"
#include "essential/experiment.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

using namespace essential;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig cfg = preset_config(DatasetName::Synthetic, Composition::Imbalanced);
  cfg.schedule.samples_per_base_class = 30;
  cfg.schedule.samples_per_increment_class = 8;
  cfg.schedule.memory_size = 9;
  cfg.epochs_base = 3;
  cfg.epochs_incremental = 2;
  cfg.batch_size = 32;
  cfg.synthetic.test_per_class = 10;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("a run directory holds every artifact") {
    const std::string dir = testutil::temp_dir("experiment") + "/run";
    const RunConfig cfg = tiny_config();
    int callbacks = 0;
    ExperimentOptions opt;
    opt.run_dir = dir;
    opt.on_session = [&](const SessionReport&) { ++callbacks; };
    const ExperimentResult r = run_experiment(cfg, opt);
    CHECK(callbacks == 3);
    CHECK(r.reports.size() == 3);
    CHECK(r.accuracies().size() == 3);
    CHECK(r.label == "uta/cos/color_perm3");
    CHECK(r.config_hash == config_hash(cfg));

    const auto manifest = nlohmann::json::parse(slurp(dir + "/manifest.json"));
    CHECK(manifest["status"] == "complete");
    CHECK(manifest["config_hash"] == r.config_hash);
    CHECK(manifest["sessions"].size() == 3);
    for (const auto& s : manifest["sessions"]) CHECK(s["status"] == "complete");
    CHECK(config_to_text(load_config_text(manifest["config"].get<std::string>())) == config_to_text(cfg));
    CHECK(config_to_text(load_config_file(dir + "/config.cfg")) == config_to_text(cfg));

    for (const char* f : {"summary.txt", "summary.tsv", "accuracy.svg", "uncertainty.svg"}) CHECK(fs::exists(dir + "/" + f));
    for (int t = 0; t < 3; ++t) {
      const std::string s = dir + "/session_" + std::to_string(t);
      for (const char* f : {"report.json", "bank.tsv", "trajectories.tsv", "predicted_trajectories.tsv",
                            "entropy_scores.tsv", "confusion.svg"})
        CHECK(fs::exists(s + "/" + f));
      const SessionReport back = report_from_json(slurp(s + "/report.json"));
      CHECK(back.accuracies == r.reports[static_cast<std::size_t>(t)].accuracies);
    }
    const std::string scores = slurp(dir + "/session_2/entropy_scores.tsv");
    CHECK(scores.rfind("sample_id\tpredicted_score\ttrue_score\tselector_score\tstored\n", 0) == 0);
    CHECK(count_lines(scores) == 1 + 8);

    fs::remove(dir + "/summary.txt");
    const std::string text = report_run_dir(dir);
    CHECK(text.find("complete") != std::string::npos);
    CHECK(fs::exists(dir + "/summary.txt"));
    CHECK_THROWS_AS(report_run_dir(dir + "/nothing"), Error);
  }

  TEST_CASE("in-memory runs match persisted runs") {
    const RunConfig cfg = tiny_config();
    ExperimentOptions opt;
    opt.run_dir = testutil::temp_dir("experiment_mem") + "/run";
    opt.write_plots = false;
    CHECK(run_experiment(cfg).accuracies() == run_experiment(cfg, opt).accuracies());
  }

  TEST_CASE("failures are recorded in the manifest") {
    RunConfig cfg = tiny_config();
    cfg.class_order = {0, 1, 2, 9};
    ExperimentOptions opt;
    opt.run_dir = testutil::temp_dir("experiment_fail") + "/run";
    CHECK_THROWS_AS(run_experiment(cfg, opt), Error);
    const auto manifest = nlohmann::json::parse(slurp(opt.run_dir + "/manifest.json"));
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["error"].get<std::string>().find("training samples") != std::string::npos);
  }

  TEST_CASE("summary tables") {
    const std::vector<SummaryRow> rows{{"ours", {90, 80}, false}, {"other", {88, 70}, false}, {"broken", {85}, true}};
    const std::string tsv = format_summary_tsv(rows, 0);
    std::istringstream in(tsv);
    std::string header, ours, other, broken;
    std::getline(in, header);
    std::getline(in, ours);
    std::getline(in, other);
    std::getline(in, broken);
    CHECK(header == "method\t0\t1\tdelta_final\taverage\tdelta_average");
    CHECK(ours == "ours\t90.00\t80.00\t0.00\t85.00\t0.00");
    CHECK(other == "other\t88.00\t70.00\t-10.00\t79.00\t-6.00");
    CHECK(broken == "broken\t85.00\tfailed\t-\t-\t-");
    CHECK(format_summary_tsv(rows).find("delta") == std::string::npos);
    const std::string table = format_summary_table(rows, 0);
    CHECK(table.find("-10.00") != std::string::npos);
    CHECK(count_lines(table) == 5);
  }

  TEST_CASE("ablation axes") {
    CHECK(parse_ablation_axis("selector") == AblationAxis::Selector);
    CHECK(parse_ablation_axis("similarity") == AblationAxis::Similarity);
    CHECK(parse_ablation_axis("expansion_variant") == AblationAxis::ExpansionVariant);
    CHECK(to_string(AblationAxis::Similarity) == "similarity");
    try {
      parse_ablation_axis("optimizer");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Input);
      CHECK(std::string(e.what()).find("optimizer") != std::string::npos);
    }
    CHECK_THROWS_AS(run_ablation(tiny_config(), {}, ""), Error);
  }

  TEST_CASE("similarity ablation runs one cell per kind") {
    RunConfig cfg = tiny_config();
    cfg.similarity = SimilarityKind::Dot;
    const std::string dir = testutil::temp_dir("ablation");
    const GridResult g = run_ablation(cfg, {AblationAxis::Similarity}, dir);
    REQUIRE(g.rows.size() == 4);
    CHECK(g.failures == 0);
    REQUIRE(g.reference.has_value());
    CHECK(g.rows[*g.reference].label == "similarity=dot");
    CHECK(fs::exists(dir + "/similarity-mah/manifest.json"));
    CHECK(fs::exists(dir + "/summary.tsv"));
  }

  TEST_CASE("memory sweep") {
    const std::string dir = testutil::temp_dir("sweep");
    const GridResult g = run_memory_sweep(tiny_config(), {12, 6, 12}, dir);
    REQUIRE(g.rows.size() == 2);
    CHECK(g.rows[0].label == "memory_size=6");
    CHECK(g.rows[1].label == "memory_size=12");
    CHECK(fs::exists(dir + "/memory_sweep.svg"));
    CHECK_THROWS_AS(run_memory_sweep(tiny_config(), {6, 0}, ""), Error);
    CHECK_THROWS_AS(run_memory_sweep(tiny_config(), {}, ""), Error);
  }
}
