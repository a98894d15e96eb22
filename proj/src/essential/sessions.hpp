#pragma once

// Session protocol: base training, incremental training over new data plus
// exemplars, trajectory recording, exemplar selection and evaluation.

#include "essential/classifier.hpp"
#include "essential/contrastive.hpp"
#include "essential/dataio.hpp"
#include "essential/expansion.hpp"
#include "essential/memorybank.hpp"
#include "essential/metrics.hpp"
#include "essential/model.hpp"
#include "essential/trajectory.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace essential {

// Optional instrumentation. Events, in order per batch: "forward", "losses", "step",
// "momentum", "enqueue"; then "record_epoch" once per epoch.
struct SessionHooks {
  std::function<void(int session, const std::string& event)> on_event;
  std::function<void(int session, const std::vector<SampleId>& batch)> on_batch;
};

// Per-candidate scores behind one session's exemplar selection.
struct SelectionScores {
  std::map<SampleId, double> predicted;  // predicted average cumulative entropy (UTA)
  std::map<SampleId, double> true_score; // recorded trajectory score where evaluated
  std::map<SampleId, double> selector;   // score the active selector ranked by
};

struct SessionState {
  int session = -1;
  RunConfig config;
  TransformationBank bank;         // training expansion (identity only when disabled)
  TransformationBank metric_bank;  // views used for the intra-class metric
  std::unique_ptr<TargetModel> model;
  std::vector<PrototypeTable> prototypes;  // one per transformation
  MemoryBank memory;
  std::map<SampleId, Sample> exemplars;    // raw samples behind the bank ids
  TrajectoryStore trajectories;            // recorded during the current session
  TrajectoryStore predicted;               // predictor output during the current session
  FeatureQueue queue;
  SelectionScores scores;
  int seen_classes = 0;
  std::vector<double> accuracies;
  nn::Rng rng;
};

// Trains session 0 and evaluates it. Throws Error(Data) if a base class has no data.
SessionState run_base_session(const RunConfig& cfg, const SessionData& data, SessionReport* report = nullptr,
                              const SessionHooks& hooks = {});

// Trains session state.session + 1 on its new data plus bank exemplars.
// Throws Error(Data) if the new classes collide with seen ones.
SessionReport run_incremental_session(SessionState& state, const SessionData& data, const SessionHooks& hooks = {});

struct Evaluation {
  std::vector<ClassId> predictions;
  std::vector<ClassId> labels;
  std::vector<ProbVector> probs;
};

// Classifies samples with the state's prototypes, summing per-view logits when
// expansion is active (plain prototype prediction when M = 1).
Evaluation evaluate(const SessionState& state, const std::vector<Sample>& samples);

// Embeddings of every sample under every view of `bank`; row m * N + i holds
// view m of sample i.
nn::Matrix embed_views(const nn::Backbone& backbone, const std::vector<const Sample*>& samples,
                       const TransformationBank& bank);

}  // namespace essential
