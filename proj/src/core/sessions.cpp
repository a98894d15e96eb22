#include "essential/sessions.hpp"

#include "essential/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace essential {

namespace {

constexpr std::size_t kEvalChunk = 256;

void emit(const SessionHooks& hooks, int session, const char* event) {
  if (hooks.on_event) hooks.on_event(session, event);
}

// Input rows for `samples` under every view, view-major.
nn::Matrix view_inputs(const std::vector<const Sample*>& samples, const TransformationBank& bank,
                       const nn::ImageShape& in) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  nn::Matrix x(n * bank.size(), in.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = *samples[static_cast<std::size_t>(i)];
    require(s.channels == in.channels && s.height == in.height && s.width == in.width, ErrorKind::Data,
            "sample " + std::to_string(s.id) + " does not match the network input shape");
    for (int m = 0; m < bank.size(); ++m) {
      const auto& t = bank.transforms[static_cast<std::size_t>(m)];
      if (m == 0 && t.quarter_turns == 0 && !t.permutes_channels) {
        write_input_row(s.image, s.height, s.width, s.channels, x.row(m * n + i).data());
      } else {
        const auto img = apply_transformation(t, s.image, s.height, s.width, s.channels);
        write_input_row(img, s.height, s.width, s.channels, x.row(m * n + i).data());
      }
    }
  }
  return x;
}

struct PoolPass {
  nn::Matrix embeddings;        // view-major
  std::vector<nn::Matrix> taps; // identity view only
};

PoolPass pool_pass(const TargetModel& model, const std::vector<const Sample*>& pool, const TransformationBank& bank,
                   bool want_taps) {
  nn::NoGradGuard guard;
  const auto n = static_cast<Eigen::Index>(pool.size());
  const int m = bank.size();
  PoolPass out;
  out.embeddings.resize(n * m, model.backbone().embedding_dim());
  for (std::size_t start = 0; start < pool.size(); start += kEvalChunk) {
    const std::size_t end = std::min(pool.size(), start + kEvalChunk);
    const std::vector<const Sample*> chunk(pool.begin() + static_cast<std::ptrdiff_t>(start),
                                          pool.begin() + static_cast<std::ptrdiff_t>(end));
    const auto c = static_cast<Eigen::Index>(chunk.size());
    const auto fwd = model.backbone().forward(nn::constant(view_inputs(chunk, bank, model.backbone().input_shape())));
    for (int v = 0; v < m; ++v)
      out.embeddings.middleRows(v * n + static_cast<Eigen::Index>(start), c) = fwd.embedding->value.middleRows(v * c, c);
    if (want_taps) {
      if (out.taps.empty())
        for (const auto& t : fwd.taps) out.taps.emplace_back(n, t->value.cols());
      for (std::size_t k = 0; k < fwd.taps.size(); ++k)
        out.taps[k].middleRows(static_cast<Eigen::Index>(start), c) = fwd.taps[k]->value.topRows(c);
    }
  }
  return out;
}

std::vector<PrototypeTable> build_tables(const nn::Matrix& emb, const std::vector<const Sample*>& pool, int m,
                                         const RunConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(pool.size());
  std::vector<PrototypeTable> tables;
  for (int v = 0; v < m; ++v) {
    std::map<ClassId, std::vector<nn::Vector>> by_class;
    for (Eigen::Index i = 0; i < n; ++i)
      by_class[pool[static_cast<std::size_t>(i)]->label].push_back(emb.row(v * n + i).transpose());
    tables.push_back(build_prototype_table(by_class, cfg.similarity, cfg.eta, PrototypeSource::Exemplars,
                                           cfg.mahalanobis_shrinkage));
  }
  return tables;
}

nn::Vector softmax_vec(const nn::Vector& logits) {
  nn::Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

ProbVector to_prob(const nn::Vector& v) { return {v.data(), v.data() + v.size()}; }

ClassId argmax_class(const nn::Vector& logits, const std::vector<ClassId>& classes) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return classes[static_cast<std::size_t>(best)];
}

// Classifies a view-major embedding block against per-view tables.
Evaluation classify(const nn::Matrix& emb, Eigen::Index n, const std::vector<PrototypeTable>& tables) {
  Evaluation ev;
  const int m = static_cast<int>(tables.size());
  const auto classes = tables.front().classes();
  for (Eigen::Index i = 0; i < n; ++i) {
    const nn::Vector z0 = emb.row(i).transpose();
    if (m == 1) {
      ev.predictions.push_back(predict_class(z0, tables.front()));
      ev.probs.push_back(prototype_probabilities(z0, tables.front()));
      continue;
    }
    nn::Vector total = prototype_logits(z0, tables.front());
    for (int v = 1; v < m; ++v) total += prototype_logits(emb.row(v * n + i).transpose(), tables[static_cast<std::size_t>(v)]);
    ev.predictions.push_back(argmax_class(total, classes));
    ev.probs.push_back(to_prob(softmax_vec(total / m)));
  }
  return ev;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

std::vector<ClassId> base_classes_of(const RunConfig& cfg) { return cfg.schedule.classes_of_session(0); }

std::vector<Sample> new_class_samples(const std::vector<Sample>& samples, int num_base) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.label >= num_base) out.push_back(s);
  return out;
}

double misclassified_fraction(const SessionState& state, const std::vector<Sample>& new_test) {
  if (new_test.empty()) return 0.0;
  const auto ev = evaluate(state, new_test);
  return misclassified_as_base(ev.predictions, ev.labels, base_classes_of(state.config));
}

Selection run_selection(SessionState& state, const std::vector<const Sample*>& candidates,
                        const std::map<SampleId, ProbVector>& final_probs, const std::map<SampleId, nn::Vector>& final_emb,
                        int epochs) {
  const RunConfig& cfg = state.config;
  const auto quotas = quota(cfg.schedule.memory_size, state.seen_classes);
  ClassOf class_of;
  std::vector<SampleId> ids;
  for (const Sample* s : candidates) {
    class_of[s->id] = s->label;
    ids.push_back(s->id);
  }
  SelectionScores& sc = state.scores;
  sc = {};
  for (SampleId id : ids) {
    auto it = state.predicted.find(id);
    if (it != state.predicted.end()) sc.predicted[id] = cumulative_score(it->second, cfg.cumulative_mode);
  }

  Selection sel;
  switch (cfg.selector) {
    case SelectorKind::Uta: {
      std::map<ClassId, std::vector<RankedCandidate>> per_class;
      for (SampleId id : ids) per_class[class_of[id]].push_back({id, sc.predicted.at(id)});
      for (auto& [c, cands] : per_class) {
        const int k = std::max(1, cfg.reevaluate_factor * quotas[static_cast<std::size_t>(c)]);
        const auto truth = reevaluate_top(cands, k, state.trajectories, cfg.cumulative_mode);
        sc.true_score.insert(truth.begin(), truth.end());
      }
      sel = select_uta(sc.true_score, class_of, quotas);
      sc.selector = sc.true_score;
      break;
    }
    case SelectorKind::Random:
      sel = select_random(ids, class_of, quotas, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(state.session));
      break;
    case SelectorKind::Nme: {
      std::map<SampleId, std::vector<double>> emb;
      for (SampleId id : ids) {
        const nn::Vector& e = final_emb.at(id);
        emb[id] = std::vector<double>(e.data(), e.data() + e.size());
      }
      sel = select_nme(emb, class_of, quotas);
      break;
    }
    case SelectorKind::Pool: {
      std::map<SampleId, ProbVector> probs;
      for (SampleId id : ids) probs[id] = final_probs.at(id);
      sel = select_pool(probs, class_of, quotas);
      break;
    }
    case SelectorKind::Committee: {
      // Members are the model's own snapshots at 25%, 50% and 100% of the session.
      std::vector<std::map<SampleId, ProbVector>> members;
      for (double frac : {0.25, 0.5, 1.0}) {
        const auto e = static_cast<std::size_t>(std::max(1.0, std::ceil(frac * epochs))) - 1;
        std::map<SampleId, ProbVector> snap;
        for (SampleId id : ids) snap[id] = state.trajectories.at(id).probs_per_epoch.at(e);
        members.push_back(std::move(snap));
      }
      sel = select_committee(members, class_of, quotas);
      break;
    }
  }
  if (cfg.selector != SelectorKind::Uta)
    for (const auto& [c, items] : sel.per_class)
      for (const auto& it : items) sc.selector[it.id] = it.score;
  return sel;
}

SessionReport train_and_evaluate(SessionState& state, const SessionData& data, const SessionHooks& hooks) {
  const int t = state.session;
  const RunConfig& cfg = state.config;
  const auto& new_train = data.train.at(static_cast<std::size_t>(t));
  const int m = state.bank.size();
  const double lr = t == 0 ? cfg.lr_base : cfg.lr_incremental;
  const int epochs = t == 0 ? cfg.epochs_base : cfg.epochs_incremental;
  TargetModel& model = *state.model;

  // Training pool: this session's data plus stored exemplars, nothing else.
  std::vector<const Sample*> pool = pointers(new_train);
  for (const auto& [id, s] : state.exemplars) pool.push_back(&s);
  std::set<SampleId> allowed;
  for (const Sample* s : pool) require(allowed.insert(s->id).second, ErrorKind::Internal,
                                       "sample " + std::to_string(s->id) + " appears twice in the training pool");

  model.grow_classes(state.seen_classes, state.rng);
  model.reset_key();
  state.queue = FeatureQueue(static_cast<std::size_t>(cfg.queue_length));
  state.trajectories.clear();
  state.predicted.clear();
  auto params = model.trainable();
  for (auto* p : params) p->velocity = nn::Matrix::Zero(p->value().rows(), p->value().cols());
  const nn::Sgd sgd(cfg.sgd_momentum);

  {
    const auto init = pool_pass(model, pool, state.bank, false);
    state.prototypes = build_tables(init.embeddings, pool, m, cfg);
  }

  SessionReport report;
  report.session = t;
  report.seen_classes = state.seen_classes;
  const auto new_test = new_class_samples(data.cumulative_test(t), cfg.schedule.base_classes);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  std::map<SampleId, ProbVector> final_probs;
  std::map<SampleId, nn::Vector> final_emb;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t end = std::min(order.size(), start + bsz);
      std::vector<const Sample*> batch;
      std::vector<SampleId> ids;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(pool[order[i]]);
        ids.push_back(pool[order[i]]->id);
        require(allowed.count(ids.back()) != 0, ErrorKind::Internal, "sample outside the training pool");
      }
      if (hooks.on_batch) hooks.on_batch(t, ids);
      const auto b = static_cast<Eigen::Index>(batch.size());

      std::vector<int> labels, groups, composite;
      for (int v = 0; v < m; ++v)
        for (const Sample* s : batch) {
          labels.push_back(s->label);
          groups.push_back(v);
          composite.push_back(expanded_label(s->label, v, m));
        }

      const nn::Matrix x = view_inputs(batch, state.bank, model.backbone().input_shape());
      const auto fwd = model.backbone().forward(nn::constant(x));
      const nn::Var q = model.projector().forward(fwd.embedding);
      nn::Matrix keys;
      {
        nn::NoGradGuard guard;
        keys = model.key_projector().forward(model.key_backbone().forward(nn::constant(x)).embedding)->value;
      }
      emit(hooks, t, "forward");

      const nn::Var ce = grouped_prototype_ce_var(fwd.embedding, labels, groups, state.prototypes);
      const nn::Var scl = scl_loss_var(q, composite, keys, composite, state.queue, cfg.tau);
      const nn::Var lmt = multitask_loss(fwd.embedding, labels, groups, model.class_head(), model.transform_head());

      // Predictor target: the model's current class distribution on the identity view.
      std::vector<nn::Var> id_taps;
      for (const auto& tap : fwd.taps) id_taps.push_back(nn::constant(tap->value.topRows(b)));
      nn::Matrix target(b, state.seen_classes);
      double ce_identity = 0.0;
      for (Eigen::Index i = 0; i < b; ++i) {
        const nn::Vector z = fwd.embedding->value.row(i).transpose();
        const auto p = prototype_probabilities(z, state.prototypes.front());
        for (std::size_t k = 0; k < p.size(); ++k) target(i, static_cast<Eigen::Index>(k)) = p[k];
        ce_identity -= std::log(std::max(p[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)]->label)], 1e-300));
      }
      ce_identity /= static_cast<double>(b);
      const nn::Var lpred =
          prediction_loss_var(model.predictor().forward_logits(id_taps), target, ce_identity, cfg.beta);
      const nn::Var total = nn::weighted_sum({{ce, 1.0}, {scl, cfg.alpha}, {lmt, 1.0}, {lpred, 1.0}});
      const double lv = total->value(0, 0);
      require(std::isfinite(lv), ErrorKind::Training,
              "non-finite loss in session " + std::to_string(t) + " epoch " + std::to_string(epoch));
      loss_sum += lv;
      ++batches;
      emit(hooks, t, "losses");

      nn::Sgd::zero_grad(params);
      nn::backward(total);
      sgd.step(params, lr);
      emit(hooks, t, "step");
      model.momentum_step(cfg.mu);
      emit(hooks, t, "momentum");
      state.queue.enqueue(keys, composite);
      emit(hooks, t, "enqueue");
    }
    report.loss_per_epoch.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(1, batches)));

    // Epoch end: refresh prototypes, then record true and predicted distributions.
    const auto pass = pool_pass(model, pool, state.bank, true);
    state.prototypes = build_tables(pass.embeddings, pool, m, cfg);
    std::vector<nn::Var> taps;
    for (const auto& tp : pass.taps) taps.push_back(nn::constant(tp));
    nn::Matrix predicted;
    {
      nn::NoGradGuard guard;
      predicted = model.predictor().predict_distribution(taps);
    }
    std::map<SampleId, ProbVector> true_epoch, pred_epoch;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const nn::Vector z = pass.embeddings.row(static_cast<Eigen::Index>(i)).transpose();
      true_epoch[pool[i]->id] = prototype_probabilities(z, state.prototypes.front());
      const auto row = predicted.row(static_cast<Eigen::Index>(i));
      pred_epoch[pool[i]->id] = ProbVector(row.data(), row.data() + row.size());
      if (epoch == epochs) final_emb[pool[i]->id] = z;
    }
    record_epoch(state.trajectories, true_epoch);
    record_epoch(state.predicted, pred_epoch);
    if (epoch == epochs) final_probs = std::move(true_epoch);
    emit(hooks, t, "record_epoch");
    if (t > 0) report.misclassified_as_base_per_epoch.push_back(misclassified_fraction(state, new_test));
  }

  // Exemplar selection among this session's new-class samples, then the bank update.
  const auto selection = run_selection(state, pointers(new_train), final_probs, final_emb, epochs);
  report.warnings = selection.warnings;
  state.memory = update_bank(state.memory, selection, state.seen_classes);
  std::map<SampleId, Sample> kept;
  for (SampleId id : state.memory.all_ids()) {
    if (auto it = state.exemplars.find(id); it != state.exemplars.end()) {
      kept.emplace(id, it->second);
      continue;
    }
    auto s = std::find_if(new_train.begin(), new_train.end(), [id](const Sample& x) { return x.id == id; });
    require(s != new_train.end(), ErrorKind::Internal, "bank references unknown sample " + std::to_string(id));
    kept.emplace(id, *s);
  }
  state.exemplars = std::move(kept);

  // Session 0 keeps the prototypes of all base samples; afterwards every class is
  // represented by its bank exemplars under the current backbone.
  if (t > 0) {
    std::vector<const Sample*> bank_samples;
    for (const auto& [id, s] : state.exemplars) bank_samples.push_back(&s);
    const auto pass = pool_pass(model, bank_samples, state.bank, false);
    state.prototypes = build_tables(pass.embeddings, bank_samples, m, cfg);
    for (int c = 0; c < state.seen_classes; ++c)
      require(state.prototypes.front().prototypes.count(c) != 0, ErrorKind::Data,
              "class " + std::to_string(c) + " has no exemplars; increase schedule.memory_size");
  }

  // Evaluation on every class seen so far.
  const auto test = data.cumulative_test(t);
  const auto ev = evaluate(state, test);
  state.accuracies.push_back(accuracy(ev.predictions, ev.labels));
  report.accuracies = state.accuracies;
  report.confusion = confusion_matrix(ev.predictions, ev.labels, state.seen_classes);
  report.uncertainty_per_epoch = uncertainty_curve(state.trajectories);

  const auto means = class_mean_distributions(ev.probs, ev.labels, state.seen_classes);
  report.inter_class.assign(static_cast<std::size_t>(state.seen_classes),
                            std::vector<double>(static_cast<std::size_t>(state.seen_classes), 0.0));
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j)
      report.inter_class[i][j] = report.inter_class[j][i] = inter_class_distance(means[i], means[j]);

  // Intra-class: original view against each augmented view, per class.
  const TransformationBank& mb = m > 1 ? state.bank : state.metric_bank;
  if (mb.size() > 1) {
    const auto ptrs = pointers(test);
    const auto n = static_cast<Eigen::Index>(test.size());
    const nn::Matrix emb = embed_views(model.backbone(), ptrs, mb);
    std::vector<std::vector<ProbVector>> view_probs(static_cast<std::size_t>(mb.size()));
    for (int v = 0; v < mb.size(); ++v) {
      const PrototypeTable& table = state.prototypes[m > 1 ? static_cast<std::size_t>(v) : 0];
      for (Eigen::Index i = 0; i < n; ++i)
        view_probs[static_cast<std::size_t>(v)].push_back(prototype_probabilities(emb.row(v * n + i).transpose(), table));
    }
    const auto original = class_mean_distributions(view_probs[0], ev.labels, state.seen_classes);
    report.intra_class.assign(static_cast<std::size_t>(state.seen_classes), 0.0);
    for (int v = 1; v < mb.size(); ++v) {
      const auto aug = class_mean_distributions(view_probs[static_cast<std::size_t>(v)], ev.labels, state.seen_classes);
      for (std::size_t c = 0; c < aug.size(); ++c)
        report.intra_class[c] += intra_class_distance(original[c], aug[c]) / (mb.size() - 1);
    }
  }
  if (t > 0) report.misclassified_as_base_final = misclassified_fraction(state, new_test);
  return report;
}

TransformationBank metric_bank_for(const RunConfig& cfg) {
  if (cfg.metric_variant == ExpansionVariant::None || cfg.schedule.channels != 3)
    return make_transformation_bank(ExpansionVariant::None);
  return make_transformation_bank(cfg.metric_variant);
}

}  // namespace

nn::Matrix embed_views(const nn::Backbone& backbone, const std::vector<const Sample*>& samples,
                       const TransformationBank& bank) {
  nn::NoGradGuard guard;
  const auto n = static_cast<Eigen::Index>(samples.size());
  nn::Matrix out(n * bank.size(), backbone.embedding_dim());
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    const std::vector<const Sample*> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                          samples.begin() + static_cast<std::ptrdiff_t>(end));
    const auto c = static_cast<Eigen::Index>(chunk.size());
    const auto emb = backbone.forward(nn::constant(view_inputs(chunk, bank, backbone.input_shape()))).embedding->value;
    for (int v = 0; v < bank.size(); ++v) out.middleRows(v * n + static_cast<Eigen::Index>(start), c) = emb.middleRows(v * c, c);
  }
  return out;
}

Evaluation evaluate(const SessionState& state, const std::vector<Sample>& samples) {
  require(state.model != nullptr, ErrorKind::State, "evaluate: session state has no model");
  require(!state.prototypes.empty(), ErrorKind::State, "evaluate: prototypes not built");
  const auto ptrs = pointers(samples);
  const nn::Matrix emb = embed_views(state.model->backbone(), ptrs, state.bank);
  Evaluation ev = classify(emb, static_cast<Eigen::Index>(samples.size()), state.prototypes);
  for (const auto& s : samples) ev.labels.push_back(s.label);
  return ev;
}

SessionState run_base_session(const RunConfig& cfg, const SessionData& data, SessionReport* report,
                              const SessionHooks& hooks) {
  cfg.validate();
  SessionState state;
  state.config = cfg;
  state.session = 0;
  state.rng.seed(cfg.seed);
  state.bank = make_transformation_bank(cfg.expansion_variant);
  state.metric_bank = metric_bank_for(cfg);
  require(!state.bank.needs_rgb() || cfg.schedule.channels == 3, ErrorKind::Config,
          "expansion_variant " + to_string(cfg.expansion_variant) + " needs 3-channel images");
  state.memory.budget = cfg.schedule.memory_size;
  state.seen_classes = cfg.schedule.seen_classes_through(0);
  require(!data.train.empty(), ErrorKind::Data, "no session data");
  std::set<ClassId> present;
  for (const auto& s : data.train.front()) present.insert(s.label);
  for (ClassId c : cfg.schedule.classes_of_session(0))
    require(present.count(c) != 0, ErrorKind::Data, "base class " + std::to_string(c) + " has no training data");
  state.model = std::make_unique<TargetModel>(cfg, state.bank.size(), state.rng);
  SessionReport r = train_and_evaluate(state, data, hooks);
  if (report) *report = std::move(r);
  return state;
}

SessionReport run_incremental_session(SessionState& state, const SessionData& data, const SessionHooks& hooks) {
  require(state.model != nullptr && state.session >= 0, ErrorKind::State, "run the base session first");
  const int t = state.session + 1;
  require(t < state.config.schedule.num_sessions && static_cast<std::size_t>(t) < data.train.size(), ErrorKind::State,
          "no session " + std::to_string(t) + " in the schedule");
  for (const auto& s : data.train[static_cast<std::size_t>(t)])
    require(s.label >= state.seen_classes, ErrorKind::Data,
            "session " + std::to_string(t) + " sample " + std::to_string(s.id) + " has already-seen class " +
                std::to_string(s.label));
  state.session = t;
  state.seen_classes = state.config.schedule.seen_classes_through(t);
  return train_and_evaluate(state, data, hooks);
}

}  // namespace essential
