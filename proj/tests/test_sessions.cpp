#include "doctest.h"
#include "helpers.hpp"

#include "essential/config.hpp"
#include "essential/error.hpp"
#include "essential/sessions.hpp"

#include <set>

using namespace essential;

namespace {

RunConfig small_config() {
  RunConfig cfg = preset_config(DatasetName::Synthetic, Composition::Imbalanced);
  cfg.schedule.samples_per_base_class = 60;
  cfg.schedule.samples_per_increment_class = 10;
  cfg.schedule.memory_size = 12;
  cfg.epochs_base = 6;
  cfg.epochs_incremental = 3;
  cfg.batch_size = 32;
  cfg.synthetic.test_per_class = 20;
  return cfg;
}

SessionData make_data(const RunConfig& cfg) { return materialize_sessions(load_dataset(cfg), cfg.schedule, cfg.seed); }

std::vector<nn::Vector> rows(const nn::Matrix& m) {
  std::vector<nn::Vector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

}  // namespace

TEST_SUITE("sessions") {
  TEST_CASE("hooks fire in order for every batch") {
    const RunConfig cfg = small_config();
    const SessionData data = make_data(cfg);
    std::vector<std::string> events;
    int batches = 0;
    SessionHooks hooks;
    hooks.on_event = [&](int, const std::string& e) { events.push_back(e); };
    hooks.on_batch = [&](int, const std::vector<SampleId>&) { ++batches; };
    run_base_session(cfg, data, nullptr, hooks);
    const int per_epoch = (120 + cfg.batch_size - 1) / cfg.batch_size;
    CHECK(batches == per_epoch * cfg.epochs_base);
    const std::vector<std::string> cycle{"forward", "losses", "step", "momentum", "enqueue"};
    std::size_t i = 0;
    for (int e = 0; e < cfg.epochs_base; ++e) {
      for (int b = 0; b < per_epoch; ++b)
        for (const auto& name : cycle) {
          REQUIRE(i < events.size());
          CHECK(events[i++] == name);
        }
      REQUIRE(i < events.size());
      CHECK(events[i++] == "record_epoch");
    }
    CHECK(i == events.size());
  }

  TEST_CASE("incremental sessions see only new data and stored exemplars") {
    const RunConfig cfg = small_config();
    const SessionData data = make_data(cfg);
    SessionState state = run_base_session(cfg, data);
    CHECK(state.seen_classes == 2);
    CHECK(state.memory.total() <= static_cast<std::size_t>(cfg.schedule.memory_size));
    for (int t = 1; t < cfg.schedule.num_sessions; ++t) {
      std::set<SampleId> allowed;
      for (const auto& s : data.train[static_cast<std::size_t>(t)]) allowed.insert(s.id);
      for (SampleId id : state.memory.all_ids()) allowed.insert(id);
      std::set<SampleId> seen;
      SessionHooks hooks;
      hooks.on_batch = [&](int, const std::vector<SampleId>& ids) { seen.insert(ids.begin(), ids.end()); };
      const SessionReport r = run_incremental_session(state, data, hooks);
      CHECK(r.seen_classes == 2 + t);
      CHECK(state.seen_classes == 2 + t);
      CHECK(seen == allowed);
      CHECK(r.accuracies.size() == static_cast<std::size_t>(t + 1));
      CHECK(r.confusion.size() == static_cast<std::size_t>(2 + t));
      CHECK(r.misclassified_as_base_per_epoch.size() == static_cast<std::size_t>(cfg.epochs_incremental));
      CHECK(state.memory.total() <= static_cast<std::size_t>(cfg.schedule.memory_size));
      for (int c = 0; c < state.seen_classes; ++c) CHECK(state.memory.entries.count(c) == 1);

      // Prototypes after an incremental session come from the bank exemplars alone.
      std::vector<const Sample*> ex;
      for (const auto& [id, s] : state.exemplars) ex.push_back(&s);
      const nn::Matrix emb = embed_views(state.model->backbone(), ex, state.bank);
      std::map<ClassId, std::vector<nn::Vector>> by_class;
      const auto n = static_cast<Eigen::Index>(ex.size());
      for (Eigen::Index i = 0; i < n; ++i) by_class[ex[static_cast<std::size_t>(i)]->label].push_back(emb.row(i).transpose());
      const PrototypeTable expect = build_prototype_table(by_class, cfg.similarity, cfg.eta, PrototypeSource::Exemplars);
      REQUIRE(state.prototypes.front().prototypes.size() == expect.prototypes.size());
      for (const auto& [c, p] : expect.prototypes) CHECK((state.prototypes.front().prototypes.at(c) - p).norm() == 0.0);
    }
    CHECK_THROWS_AS(run_incremental_session(state, data), Error);
  }

  TEST_CASE("runs are deterministic") {
    const RunConfig cfg = small_config();
    const SessionData data = make_data(cfg);
    SessionReport a, b;
    SessionState sa = run_base_session(cfg, data, &a);
    SessionState sb = run_base_session(cfg, data, &b);
    CHECK(a.loss_per_epoch == b.loss_per_epoch);
    CHECK(a.accuracies == b.accuracies);
    CHECK(sa.memory.all_ids() == sb.memory.all_ids());
    CHECK(run_incremental_session(sa, data).accuracies == run_incremental_session(sb, data).accuracies);
  }

  TEST_CASE("disabled expansion is the plain prototype classifier") {
    RunConfig cfg = small_config();
    cfg.expansion_variant = ExpansionVariant::None;
    const SessionData data = make_data(cfg);
    SessionState state = run_base_session(cfg, data);
    CHECK(state.bank.size() == 1);
    REQUIRE(state.prototypes.size() == 1);
    const auto test = data.cumulative_test(0);
    const Evaluation ev = evaluate(state, test);
    std::vector<const Sample*> ptrs;
    for (const auto& s : test) ptrs.push_back(&s);
    const auto emb = rows(embed_views(state.model->backbone(), ptrs, state.bank));
    for (std::size_t i = 0; i < test.size(); ++i) {
      CHECK(ev.predictions[i] == predict_class(emb[i], state.prototypes.front()));
      CHECK(ev.probs[i] == prototype_probabilities(emb[i], state.prototypes.front()));
    }
  }

  TEST_CASE("bad session data is rejected") {
    const RunConfig cfg = small_config();
    SessionData data = make_data(cfg);
    SessionState state = run_base_session(cfg, data);
    SessionData collide = data;
    collide.train[1].front().label = 0;
    try {
      run_incremental_session(state, collide);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
    }

    SessionData missing = data;
    auto& base = missing.train[0];
    base.erase(std::remove_if(base.begin(), base.end(), [](const Sample& s) { return s.label == 1; }), base.end());
    try {
      run_base_session(cfg, missing);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
      CHECK(std::string(e.what()).find("base class 1") != std::string::npos);
    }

    SessionState fresh;
    CHECK_THROWS_AS(run_incremental_session(fresh, data), Error);
    CHECK_THROWS_AS(evaluate(fresh, data.test[0]), Error);
  }

  TEST_CASE("base session learns the synthetic classes") {
    const RunConfig cfg = preset_config(DatasetName::Synthetic, Composition::Imbalanced);
    const SessionData data = make_data(cfg);
    SessionReport r;
    run_base_session(cfg, data, &r);
    CHECK(r.accuracy() >= 95.0);
    CHECK(r.loss_per_epoch.front() > r.loss_per_epoch.back());
    CHECK(r.uncertainty_per_epoch.size() == static_cast<std::size_t>(cfg.epochs_base));
    CHECK(r.intra_class.size() == 2);
  }
}
