#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ifsed/adaptation.hpp"
#include "ifsed/autodiff.hpp"
#include "ifsed/common.hpp"
#include "ifsed/config.hpp"
#include "ifsed/corpus.hpp"
#include "ifsed/encoders.hpp"
#include "ifsed/knowledge.hpp"
#include "ifsed/memory.hpp"
#include "ifsed/objectives.hpp"
#include "ifsed/session.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Variants and configuration
// ---------------------------------------------------------------------------

enum class VariantKind { ifsed_k, ifsed_kp, finetune };

inline std::string variant_name(VariantKind k) {
  switch (k) {
    case VariantKind::ifsed_k: return "ifsed-k";
    case VariantKind::ifsed_kp: return "ifsed-kp";
    default: return "finetune";
  }
}

inline VariantKind variant_from_name(const std::string& name) {
  if (name == "ifsed-k") return VariantKind::ifsed_k;
  if (name == "ifsed-kp") return VariantKind::ifsed_kp;
  if (name == "finetune") return VariantKind::finetune;
  throw ConfigError("unknown variant: " + name);
}

struct ModelVariant {
  VariantKind kind = VariantKind::ifsed_k;
  bool use_external_knowledge = true;   // EK
  bool use_mixture_loss = true;         // ML
  bool use_prototype_selection = true;  // PS

  // FINETUNE is the everything-off configuration; IFSED-KP keeps external
  // knowledge by construction (it is the support set of the meta-learner).
  void normalize() {
    if (kind == VariantKind::finetune) {
      use_external_knowledge = false;
      use_mixture_loss = false;
      use_prototype_selection = false;
    } else if (kind == VariantKind::ifsed_kp) {
      use_external_knowledge = true;
    }
  }

  bool prototype_classifier() const { return kind == VariantKind::ifsed_kp; }

  // The gated Bayesian layer belongs to the classifier family only.
  bool uses_adaptation() const {
    return use_external_knowledge && kind != VariantKind::ifsed_kp;
  }

  std::string describe() const {
    std::string s = variant_name(kind);
    s += use_external_knowledge ? "+ek" : "-ek";
    s += use_mixture_loss ? "+ml" : "-ml";
    s += use_prototype_selection ? "+ps" : "-ps";
    return s;
  }
};

struct TrainingConfig {
  ModelVariant variant;
  int epochs = 50;  // passes over N for the classifier family, episodes for KP
  int batch_size = 4;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  LossWeights weights;
  int exemplars_per_class = 1;     // j
  double knowledge_mixture = 0.2;  // kappa, knowledge share of class vectors
  bool include_base = false;
  int map_steps = 20;
  double map_step_size = 0.1;
  EncoderDims dims;
  BackendConfig backend;
  std::uint64_t encoder_seed = 7;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (exemplars_per_class < 0) {
      throw ConfigError("memory.exemplars_per_class must be >= 0");
    }
    if (knowledge_mixture < 0.0 || knowledge_mixture > 1.0) {
      throw ConfigError("model.knowledge_mixture must be in [0,1]");
    }
    weights.validate();
  }

  static TrainingConfig from_config(const KeyValueConfig& resolved) {
    TrainingConfig c;
    c.variant.kind = variant_from_name(resolved.get_string("model.variant"));
    c.variant.use_external_knowledge =
        resolved.get_bool("model.use_external_knowledge");
    c.variant.use_mixture_loss = resolved.get_bool("model.use_mixture_loss");
    c.variant.use_prototype_selection =
        resolved.get_bool("model.use_prototype_selection");
    c.variant.normalize();
    c.epochs = static_cast<int>(resolved.get_int("train.epochs"));
    c.batch_size = static_cast<int>(resolved.get_int("train.batch_size"));
    c.learning_rate = resolved.get_double("train.learning_rate");
    c.seed = static_cast<std::uint64_t>(resolved.get_int("train.seed"));
    c.weights.alpha = resolved.get_double("loss.alpha");
    c.weights.beta = resolved.get_double("loss.beta");
    c.weights.gamma = resolved.get_double("loss.gamma");
    c.weights.temperature = resolved.get_double("loss.temperature");
    c.exemplars_per_class =
        static_cast<int>(resolved.get_int("memory.exemplars_per_class"));
    c.knowledge_mixture = resolved.get_double("model.knowledge_mixture");
    c.include_base = resolved.get_bool("model.include_base");
    c.map_steps = static_cast<int>(resolved.get_int("adaptation.map_steps"));
    c.map_step_size = resolved.get_double("adaptation.step_size");
    c.dims.d = static_cast<int>(resolved.get_int("encoder.dim"));
    c.dims.ctx = static_cast<int>(resolved.get_int("encoder.ctx_dim"));
    if (c.dims.ctx <= 0) c.dims.ctx = c.dims.d;
    c.backend.kind = resolved.get_string("encoder.backend");
    c.backend.ctx_dim = c.dims.ctx;
    c.backend.seed = static_cast<std::uint64_t>(resolved.get_int("encoder.seed"));
    c.backend.freeze = resolved.get_bool("encoder.freeze_backend");
    c.backend.vectors_path = resolved.get_string("encoder.vectors_path");
    c.encoder_seed = c.backend.seed;
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

struct ModelState {
  ad::ParamStore params;  // encoders, gate, and class_vec.* entries
  std::vector<std::string> class_order;  // arrival order
  std::map<std::string, Vec> support_means;  // gate input per class
  std::map<std::string, KnowledgeEmbedding> knowledge_cache;

  int class_vec_handle(const std::string& label) const {
    return params.handle("class_vec." + label);
  }
};

struct RoundState {
  int round_index = 0;  // trained rounds so far
  std::vector<std::string> known_classes;
  ModelState model;
  std::optional<ModelState> snapshot;  // model that finished the previous round
  ExemplarStore store{1};
};

struct RoundData {
  int round_id = 0;
  std::vector<std::string> classes;
  std::vector<EventMention> train;
};

struct RoundTelemetry {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
};

class SessionContext {
 public:
  SessionContext(TrainingConfig config,
                 std::map<std::string, MappedFrame> frames,
                 std::unordered_map<std::string, EventMention> corpus_index)
      : config_(std::move(config)),
        model_(config_.dims, config_.backend),
        frames_(std::move(frames)),
        corpus_index_(std::move(corpus_index)) {
    config_.validate();
    model_.register_params(base_params_, config_.encoder_seed);
  }

  const TrainingConfig& config() const { return config_; }
  const EncoderModel& model() const { return model_; }
  const std::map<std::string, MappedFrame>& frames() const { return frames_; }
  const std::unordered_map<std::string, EventMention>& corpus_index() const {
    return corpus_index_;
  }

  const Frame& frame_for(const std::string& label) const {
    auto it = frames_.find(label);
    if (it == frames_.end()) {
      throw MissingKnowledge("no frame mapped for class " + label);
    }
    return it->second.frame;
  }

  const EventMention& mention_by_id(const std::string& id) const {
    auto it = corpus_index_.find(id);
    if (it == corpus_index_.end()) {
      throw MissingMention("mention not in corpus: " + id);
    }
    return it->second;
  }

  RoundState initial_state() const {
    RoundState s;
    s.model.params = base_params_;
    s.store = ExemplarStore(config_.exemplars_per_class);
    return s;
  }

 private:
  TrainingConfig config_;
  EncoderModel model_;
  std::map<std::string, MappedFrame> frames_;
  std::unordered_map<std::string, EventMention> corpus_index_;
  ad::ParamStore base_params_;
};

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct Classification {
  Vec scores;
  Vec probs;
  std::string predicted;
};

struct ClassifierContext {
  std::vector<std::string> classes;
  std::vector<Vec> vectors;        // class vectors or prototypes
  bool prototype_metric = false;   // negative squared distance vs dot product
};

inline Classification classify_embedding(const ClassifierContext& ctx,
                                         const Vec& s) {
  if (ctx.classes.empty()) throw NoKnownClasses("no classes learned yet");
  Vec scores(ctx.classes.size());
  for (std::size_t t = 0; t < ctx.vectors.size(); ++t) {
    scores[t] = ctx.prototype_metric ? -squared_distance(s, ctx.vectors[t])
                                     : dot(s, ctx.vectors[t]);
  }
  Classification out;
  out.scores = scores;
  out.probs = softmax(scores);
  std::size_t best = 0;
  for (std::size_t t = 1; t < scores.size(); ++t) {
    if (scores[t] > scores[best]) best = t;
  }
  out.predicted = ctx.classes[best];
  return out;
}

// Class vector of the classifier family: data-derived trainable vector,
// blended with the gated knowledge prior when external knowledge is on.
inline Vec classifier_class_vector(const ModelState& m,
                                   const SessionContext& ctx,
                                   const std::string& label) {
  const TrainingConfig& cfg = ctx.config();
  Vec u = m.params.value(m.class_vec_handle(label)).to_vec();
  if (!cfg.variant.uses_adaptation()) return u;

  auto kit = m.knowledge_cache.find(label);
  if (kit == m.knowledge_cache.end()) {
    throw MissingKnowledge("no knowledge embedding cached for " + label);
  }
  const Vec& k = kit->second.k;
  Vec offset(k.size(), 0.0);
  auto sit = m.support_means.find(label);
  if (sit != m.support_means.end()) {
    const EncoderHandles& h = ctx.model().handles();
    Vec lambda = gate_values(sit->second, k, m.params.value(h.gate_w),
                             m.params.value(h.gate_b).to_vec());
    offset = knowledge_offset(sit->second, k, lambda);
  }
  Vec mu = add(k, offset);
  double kappa = cfg.knowledge_mixture;
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out[i] = kappa * mu[i] + (1.0 - kappa) * u[i];
  }
  return out;
}

inline ClassifierContext build_classifier(const ModelState& m,
                                          const ExemplarStore& store,
                                          const SessionContext& ctx) {
  if (m.class_order.empty()) throw NoKnownClasses("no classes learned yet");
  ClassifierContext out;
  out.classes = m.class_order;
  out.prototype_metric = ctx.config().variant.prototype_classifier();
  for (const auto& label : m.class_order) {
    if (out.prototype_metric) {
      auto kit = m.knowledge_cache.find(label);
      if (kit == m.knowledge_cache.end()) {
        throw MissingKnowledge("no knowledge embedding cached for " + label);
      }
      std::vector<Vec> parts{kit->second.k};
      if (const auto* entries = store.find(label)) {
        for (const auto& e : *entries) {
          parts.push_back(
              ctx.model().encode_sample(m.params, ctx.mention_by_id(e.mention_id)).s);
        }
      }
      out.vectors.push_back(mean_of(parts));
    } else {
      out.vectors.push_back(classifier_class_vector(m, ctx, label));
    }
  }
  return out;
}

inline Classification classify_ifsed_k(const EventMention& mention,
                                       const RoundState& state,
                                       const SessionContext& ctx) {
  ClassifierContext c = build_classifier(state.model, state.store, ctx);
  if (c.prototype_metric) {
    throw ConfigError("classify_ifsed_k called on a prototype-network state");
  }
  return classify_embedding(c, ctx.model().encode_sample(state.model.params, mention).s);
}

inline Classification classify_ifsed_kp(const EventMention& mention,
                                        const RoundState& state,
                                        const SessionContext& ctx) {
  if (!ctx.config().variant.prototype_classifier()) {
    throw ConfigError("classify_ifsed_kp called on a classifier-family state");
  }
  ClassifierContext c = build_classifier(state.model, state.store, ctx);
  return classify_embedding(c, ctx.model().encode_sample(state.model.params, mention).s);
}

inline Classification classify_mention(const EventMention& mention,
                                       const RoundState& state,
                                       const SessionContext& ctx) {
  ClassifierContext c = build_classifier(state.model, state.store, ctx);
  return classify_embedding(c, ctx.model().encode_sample(state.model.params, mention).s);
}

// ---------------------------------------------------------------------------
// Training internals
// ---------------------------------------------------------------------------

namespace detail {

inline void refresh_support_means(ModelState& m, const SessionContext& ctx,
                                  const std::vector<EventMention>& samples) {
  std::map<std::string, std::vector<Vec>> by_class;
  for (const auto& x : samples) {
    by_class[x.label].push_back(ctx.model().encode_sample(m.params, x).s);
  }
  for (const auto& [label, vs] : by_class) {
    m.support_means[label] = mean_of(vs);
  }
}

// Per-class scoring vectors for one training graph: blended class vectors
// for the classifier family, knowledge-plus-retained prototypes for KP.
inline std::vector<int> build_scoring_nodes(GraphBuilder& g,
                                            const ModelState& m,
                                            const ExemplarStore& prev_store,
                                            const SessionContext& ctx) {
  ad::Tape& t = g.tape();
  const TrainingConfig& cfg = ctx.config();
  const EncoderHandles& h = ctx.model().handles();
  std::vector<int> nodes;
  nodes.reserve(m.class_order.size());

  for (const auto& label : m.class_order) {
    if (cfg.variant.prototype_classifier()) {
      KnowledgeGraph kg =
          ctx.model().encode_knowledge_graph(g, ctx.frame_for(label));
      std::vector<int> parts{kg.k};
      if (const auto* entries = prev_store.find(label)) {
        for (const auto& e : *entries) {
          SampleGraph sg = ctx.model().encode_sample_graph(
              g, ctx.mention_by_id(e.mention_id));
          parts.push_back(sg.s);
        }
      }
      nodes.push_back(t.mean(parts));
      continue;
    }

    int u = g.pnode(m.class_vec_handle(label));
    if (!cfg.variant.uses_adaptation()) {
      nodes.push_back(u);
      continue;
    }
    KnowledgeGraph kg =
        ctx.model().encode_knowledge_graph(g, ctx.frame_for(label));
    int support = t.leaf_column(m.support_means.at(label));
    int lambda = gate_graph(t, g.pnode(h.gate_w), g.pnode(h.gate_b), support, kg.k);
    int offset = offset_graph(t, lambda, support, kg.k);
    int mu = t.add(kg.k, offset);
    nodes.push_back(t.add(t.scale(mu, cfg.knowledge_mixture),
                          t.scale(u, 1.0 - cfg.knowledge_mixture)));
  }
  return nodes;
}

struct SnapshotTable {
  std::vector<SnapshotOutputs> outputs;  // parallel to N
};

inline SnapshotTable compute_snapshot_outputs(
    const ModelState& snapshot, const ExemplarStore& prev_store,
    const std::vector<EventMention>& samples, const SessionContext& ctx) {
  ClassifierContext cls = build_classifier(snapshot, prev_store, ctx);
  SnapshotTable table;
  table.outputs.reserve(samples.size());
  for (const auto& x : samples) {
    Vec s = ctx.model().encode_sample(snapshot.params, x).s;
    SnapshotOutputs o;
    double n = norm2(s);
    if (n < 1e-12) throw ZeroVector("snapshot feature has near-zero norm");
    o.feature = scaled(s, 1.0 / n);
    o.old_logits = classify_embedding(cls, s).scores;
    table.outputs.push_back(std::move(o));
  }
  return table;
}

// One gradient step on a batch; returns the batch loss before the update.
inline double train_batch(ModelState& m, const ExemplarStore& prev_store,
                          const std::vector<EventMention>& batch,
                          const std::vector<const SnapshotOutputs*>& snaps,
                          const std::map<std::string, int>& class_index,
                          std::size_t old_class_count,
                          const SessionContext& ctx) {
  const TrainingConfig& cfg = ctx.config();
  ad::Tape tape;
  GraphBuilder g = ctx.model().builder(tape, m.params, /*train=*/true);

  std::vector<int> class_nodes = build_scoring_nodes(g, m, prev_store, ctx);

  const bool distill = cfg.variant.use_mixture_loss && !snaps.empty();
  std::vector<int> ce_terms, fd_terms, pd_terms;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EventMention& x = batch[b];
    SampleGraph sg = ctx.model().encode_sample_graph(g, x);

    std::vector<int> score_nodes;
    score_nodes.reserve(class_nodes.size());
    for (int c : class_nodes) {
      if (cfg.variant.prototype_classifier()) {
        score_nodes.push_back(tape.scale(tape.squared_distance(sg.s, c), -1.0));
      } else {
        score_nodes.push_back(tape.dot(sg.s, c));
      }
    }
    int logits = tape.concat(score_nodes);

    auto git = class_index.find(x.label);
    if (git == class_index.end()) {
      throw UnknownClass("training sample with unknown label " + x.label);
    }
    ce_terms.push_back(ce_loss_graph(tape, logits, git->second));

    if (distill) {
      const SnapshotOutputs& snap = *snaps[b];
      fd_terms.push_back(feature_distill_graph(tape, sg.s, snap.feature));
      std::vector<int> old_scores(score_nodes.begin(),
                                  score_nodes.begin() + old_class_count);
      int old_logits = tape.concat(old_scores);
      pd_terms.push_back(prediction_distill_graph(
          tape, old_logits, snap.old_logits, cfg.weights.temperature));
    }
  }

  int loss = tape.scale(tape.mean(ce_terms), cfg.weights.gamma);
  if (distill) {
    loss = tape.add(loss, tape.scale(tape.mean(fd_terms), cfg.weights.alpha));
    loss = tape.add(loss, tape.scale(tape.mean(pd_terms), cfg.weights.beta));
  }

  double loss_value = tape.value(loss).a[0];
  if (!std::isfinite(loss_value)) {
    throw NonFiniteGradient("training loss is not finite");
  }
  tape.backward(loss);
  m.params.zero_grads();
  m.params.collect(tape);
  if (!m.params.grads_finite()) {
    throw NonFiniteGradient("non-finite gradient in training step");
  }
  m.params.sgd_step(cfg.learning_rate);
  return loss_value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Round loop
// ---------------------------------------------------------------------------

// One incremental round: snapshot the model, assemble the replay union,
// precompute snapshot outputs, construct class vectors for the arriving
// classes, train, then select exemplars and extend the known set.
inline RoundState run_round(const RoundState& state, const RoundData& round,
                            const SessionContext& ctx,
                            RoundTelemetry* telemetry = nullptr) {
  const TrainingConfig& cfg = ctx.config();
  if (round.train.empty()) {
    throw Error("round " + std::to_string(round.round_id) + ": no training data");
  }
  {
    std::set<std::string> seen(state.known_classes.begin(),
                               state.known_classes.end());
    for (const auto& cls : round.classes) {
      if (!seen.insert(cls).second) {
        throw DuplicateClass("class already known or repeated: " + cls);
      }
    }
  }

  RoundState next = state;
  next.snapshot.reset();
  if (state.round_index >= 1) next.snapshot = state.model;

  // Replay union (or new samples only without prototype selection).
  std::vector<EventMention> n_samples =
      cfg.variant.use_prototype_selection
          ? replay_union(state.store, round.train, ctx.corpus_index())
          : round.train;

  // Snapshot outputs under the frozen previous-round model.
  detail::SnapshotTable snapshot_table;
  if (next.snapshot) {
    snapshot_table = detail::compute_snapshot_outputs(*next.snapshot, state.store,
                                                      n_samples, ctx);
  }

  ModelState& model = next.model;

  // Class-vector construction for the arriving classes.
  std::map<std::string, std::vector<Vec>> new_support;
  std::vector<Vec> support_vecs;
  std::vector<std::string> support_labels;
  for (const auto& x : round.train) {
    bool is_new = std::find(round.classes.begin(), round.classes.end(),
                            x.label) != round.classes.end();
    if (!is_new) continue;
    Vec s = ctx.model().encode_sample(model.params, x).s;
    new_support[x.label].push_back(s);
    support_vecs.push_back(std::move(s));
    support_labels.push_back(x.label);
  }
  for (const auto& cls : round.classes) {
    if (!new_support.count(cls)) {
      throw InsufficientSamplesPerClass("round " + std::to_string(round.round_id) +
                                        ": no training samples for class " + cls);
    }
  }

  if (!cfg.variant.prototype_classifier()) {
    if (cfg.variant.uses_adaptation()) {
      const EncoderHandles& h = ctx.model().handles();
      PriorMap priors;
      for (const auto& cls : round.classes) {
        Vec k = ctx.model().encode_knowledge(model.params, ctx.frame_for(cls)).k;
        Vec support_mean = mean_of(new_support.at(cls));
        model.support_means[cls] = support_mean;
        Vec lambda = gate_values(support_mean, k, model.params.value(h.gate_w),
                                 model.params.value(h.gate_b).to_vec());
        priors[cls] = ClassPrior{k, knowledge_offset(support_mean, k, lambda)};
      }
      ClassVectorSet v = posterior_map(support_vecs, support_labels, priors,
                                       cfg.map_steps, cfg.map_step_size);
      for (const auto& cls : round.classes) {
        int idx = v.index_of(cls);
        model.params.add("class_vec." + cls,
                         ad::Tensor::column(v.vectors[idx]));
      }
    } else {
      for (const auto& cls : round.classes) {
        model.params.add("class_vec." + cls,
                         ad::Tensor::column(mean_of(new_support.at(cls))));
      }
    }
  }
  for (const auto& cls : round.classes) model.class_order.push_back(cls);

  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < model.class_order.size(); ++i) {
    class_index[model.class_order[i]] = static_cast<int>(i);
  }
  const std::size_t old_class_count = state.known_classes.size();

  // Index into the snapshot table by position in n_samples.
  std::unordered_map<std::string, const SnapshotOutputs*> snap_by_id;
  if (next.snapshot) {
    for (std::size_t i = 0; i < n_samples.size(); ++i) {
      snap_by_id[n_samples[i].id] = &snapshot_table.outputs[i];
    }
  }

  // Training. The classifier family runs `epochs` passes over N; the
  // prototype network runs `epochs` episodes of one batch each.
  if (telemetry) *telemetry = RoundTelemetry{};
  const bool episodic = cfg.variant.prototype_classifier();
  std::vector<EventMention> order = n_samples;
  std::size_t cursor = 0;
  int pass = 0;

  auto reshuffle = [&]() {
    Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(round.round_id)),
                     static_cast<std::uint64_t>(pass)));
    rng.shuffle(order);
    cursor = 0;
    ++pass;
  };

  auto next_batch = [&]() {
    if (cursor >= order.size()) {
      reshuffle();
      if (!episodic && cfg.variant.uses_adaptation()) {
        detail::refresh_support_means(model, ctx, n_samples);
      }
    }
    std::size_t end = std::min(order.size(), cursor + cfg.batch_size);
    std::vector<EventMention> batch(order.begin() + cursor, order.begin() + end);
    cursor = end;
    return batch;
  };

  reshuffle();
  if (!episodic && cfg.variant.uses_adaptation()) {
    detail::refresh_support_means(model, ctx, n_samples);
  }

  const std::size_t batches_per_pass =
      (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps =
      episodic ? static_cast<std::size_t>(cfg.epochs)
               : static_cast<std::size_t>(cfg.epochs) * batches_per_pass;

  for (std::size_t step = 0; step < total_steps; ++step) {
    std::vector<EventMention> batch = next_batch();
    std::vector<const SnapshotOutputs*> snaps;
    if (next.snapshot) {
      snaps.reserve(batch.size());
      for (const auto& x : batch) snaps.push_back(snap_by_id.at(x.id));
    }
    double loss = detail::train_batch(model, state.store, batch, snaps,
                                      class_index, old_class_count, ctx);
    if (telemetry) {
      if (step == 0) telemetry->initial_loss = loss;
      telemetry->final_loss = loss;
      ++telemetry->steps;
    }
  }

  // Exemplar selection with the post-round model.
  if (cfg.variant.use_prototype_selection) {
    for (const auto& cls : round.classes) {
      std::vector<std::pair<std::string, Vec>> class_samples;
      for (const auto& x : round.train) {
        if (x.label != cls) continue;
        class_samples.emplace_back(x.id,
                                   ctx.model().encode_sample(model.params, x).s);
      }
      std::vector<Vec> embs;
      embs.reserve(class_samples.size());
      for (const auto& [id, e] : class_samples) embs.push_back(e);
      Prototype proto = prototype(cls, embs);
      std::vector<std::string> ids =
          select_exemplars(class_samples, proto.mu, cfg.exemplars_per_class);
      std::vector<ExemplarStore::Entry> entries;
      for (const auto& id : ids) {
        for (const auto& [sid, e] : class_samples) {
          if (sid == id) {
            entries.push_back(ExemplarStore::Entry{id, e});
            break;
          }
        }
      }
      next.store.add_class(cls, std::move(entries));
    }
  }

  next.known_classes = model.class_order;
  next.round_index = state.round_index + 1;

  // Refresh the caches the classifier reads.
  if (cfg.variant.use_external_knowledge) {
    for (const auto& cls : model.class_order) {
      model.knowledge_cache[cls] =
          ctx.model().encode_knowledge(model.params, ctx.frame_for(cls));
    }
  }
  if (cfg.variant.uses_adaptation()) {
    std::map<std::string, std::vector<Vec>> support;
    for (const auto& cls : round.classes) {
      for (const auto& x : round.train) {
        if (x.label == cls) {
          support[cls].push_back(ctx.model().encode_sample(model.params, x).s);
        }
      }
    }
    for (const auto& [cls, entries] : next.store.classes()) {
      if (support.count(cls)) continue;
      for (const auto& e : entries) {
        support[cls].push_back(
            ctx.model().encode_sample(model.params, ctx.mention_by_id(e.mention_id)).s);
      }
    }
    for (const auto& [cls, vs] : support) {
      if (!vs.empty()) model.support_means[cls] = mean_of(vs);
    }
  }

  return next;
}

// ---------------------------------------------------------------------------
// Session loop
// ---------------------------------------------------------------------------

struct SessionInputs {
  std::vector<RoundData> rounds;  // training order (base first if included)
  std::map<int, std::vector<EventMention>> test_by_round;
  std::vector<EventMention> ood_test;
  std::map<std::string, MappedFrame> frames;
  std::unordered_map<std::string, EventMention> corpus_index;
};

// Groups split files into per-round training data and cumulative test pools.
inline SessionInputs assemble_session_inputs(
    const std::vector<EventMention>& corpus, const DatasetManifest& manifest,
    const SplitAssignment& assignment, bool include_base,
    const FrameStore* frame_store,
    const std::map<std::string, std::string>* curated_map) {
  SessionInputs inputs;
  for (const auto& m : corpus) inputs.corpus_index[m.id] = m;

  // Only the splits the session consumes are materialized: train and test of
  // trained rounds, plus the OOD test split. Dev splits are never read.
  std::map<int, RoundRole> needed;
  for (const auto& spec : manifest.rounds) {
    if (spec.role() == RoundRole::base && !include_base) continue;
    needed[spec.round_id] = spec.role();
  }

  std::map<std::pair<int, Split>, std::vector<EventMention>> buckets;
  for (const auto& e : assignment.entries) {
    if (e.split == Split::dev) continue;
    auto rit = needed.find(e.round_id);
    if (rit == needed.end()) continue;
    if (rit->second == RoundRole::ood && e.split != Split::test) continue;
    auto it = inputs.corpus_index.find(e.mention_id);
    if (it == inputs.corpus_index.end()) {
      throw MissingMention("assigned mention missing from corpus: " +
                           e.mention_id);
    }
    buckets[{e.round_id, e.split}].push_back(it->second);
  }

  std::vector<std::string> training_classes;
  for (const auto& spec : manifest.rounds) {
    if (spec.role() == RoundRole::ood) {
      inputs.ood_test = buckets[{spec.round_id, Split::test}];
      continue;
    }
    if (spec.role() == RoundRole::base && !include_base) continue;
    RoundData round;
    round.round_id = spec.round_id;
    round.classes = spec.classes;
    round.train = buckets[{spec.round_id, Split::train}];
    inputs.rounds.push_back(std::move(round));
    inputs.test_by_round[spec.round_id] = buckets[{spec.round_id, Split::test}];
    for (const auto& cls : spec.classes) training_classes.push_back(cls);
  }

  static const FrameStore empty_store;
  static const std::map<std::string, std::string> empty_map;
  inputs.frames = map_all_classes(training_classes,
                                  frame_store ? *frame_store : empty_store,
                                  curated_map ? *curated_map : empty_map);
  return inputs;
}

struct SessionOptions {
  std::function<void(const RoundState&, const SessionResult&)> after_round;
  std::function<void(int, const RoundTelemetry&)> on_telemetry;
};

namespace detail {

inline void check_inputs_against_manifest(const SessionInputs& inputs,
                                          const DatasetManifest& manifest) {
  for (const auto& round : inputs.rounds) {
    const RoundSpec* spec = manifest.find_round(round.round_id);
    if (!spec) {
      throw Error("round " + std::to_string(round.round_id) +
                  " not present in manifest");
    }
    if (std::set<std::string>(spec->classes.begin(), spec->classes.end()) !=
        std::set<std::string>(round.classes.begin(), round.classes.end())) {
      throw Error("round " + std::to_string(round.round_id) +
                  ": classes disagree with manifest");
    }
  }
}

inline RoundResult evaluate_round(const RoundState& state,
                                  const RoundData& round,
                                  const std::vector<EventMention>& cumulative_test,
                                  const std::vector<EventMention>& ood_test,
                                  const SessionContext& ctx) {
  RoundResult rr;
  rr.round_id = round.round_id;
  rr.known_classes = state.known_classes;
  rr.new_classes = round.classes;
  ClassifierContext cls = build_classifier(state.model, state.store, ctx);
  for (const auto& m : cumulative_test) {
    Classification c =
        classify_embedding(cls, ctx.model().encode_sample(state.model.params, m).s);
    rr.predictions.push_back(PredictionRecord{m.id, m.label, c.predicted, c.probs});
  }
  for (const auto& m : ood_test) {
    Classification c =
        classify_embedding(cls, ctx.model().encode_sample(state.model.params, m).s);
    rr.ood_predictions.push_back(
        PredictionRecord{m.id, m.label, c.predicted, c.probs});
  }
  return rr;
}

}  // namespace detail

// Runs every round in order, starting from `state` and appending to
// `result`; rounds already present in `result` are skipped (resume). After
// each trained round the model is evaluated on the union of the test splits
// of all rounds so far plus the OOD split.
inline SessionResult continue_session(const SessionInputs& inputs,
                                      const DatasetManifest& manifest,
                                      const TrainingConfig& config,
                                      RoundState state, SessionResult result,
                                      const SessionOptions& options = {}) {
  detail::check_inputs_against_manifest(inputs, manifest);
  SessionContext ctx(config, inputs.frames, inputs.corpus_index);
  const int resume_after =
      result.rounds.empty() ? -1 : result.rounds.back().round_id;

  std::vector<EventMention> cumulative_test;
  for (const auto& round : inputs.rounds) {
    cumulative_test.insert(cumulative_test.end(),
                           inputs.test_by_round.at(round.round_id).begin(),
                           inputs.test_by_round.at(round.round_id).end());
    if (round.round_id <= resume_after) continue;

    RoundTelemetry telemetry;
    state = run_round(state, round, ctx, &telemetry);
    if (options.on_telemetry) options.on_telemetry(round.round_id, telemetry);

    result.rounds.push_back(detail::evaluate_round(state, round, cumulative_test,
                                                   inputs.ood_test, ctx));
    if (options.after_round) options.after_round(state, result);
  }
  return result;
}

inline SessionResult run_session(const SessionInputs& inputs,
                                 const DatasetManifest& manifest,
                                 const TrainingConfig& config,
                                 const SessionOptions& options = {}) {
  SessionContext ctx(config, inputs.frames, inputs.corpus_index);
  SessionResult result;
  result.variant = config.variant.describe();
  result.seed = config.seed;
  return continue_session(inputs, manifest, config, ctx.initial_state(),
                          std::move(result), options);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline json round_state_to_json(const RoundState& state) {
  json support = json::object();
  for (const auto& [cls, v] : state.model.support_means) support[cls] = v;
  return json{{"format", "ifsed-checkpoint"},
              {"version", 1},
              {"round_index", state.round_index},
              {"known_classes", state.known_classes},
              {"class_order", state.model.class_order},
              {"support_means", support},
              {"store", state.store.to_json()},
              {"tensors", params_to_json(state.model.params)}};
}

inline RoundState round_state_from_json(const json& j,
                                        const SessionContext& ctx) {
  if (j.value("format", "") != "ifsed-checkpoint" || j.value("version", 0) != 1) {
    throw ParseError("unsupported checkpoint header");
  }
  RoundState state = ctx.initial_state();
  state.round_index = j.at("round_index").get<int>();
  state.known_classes = j.at("known_classes").get<std::vector<std::string>>();
  state.model.class_order = j.at("class_order").get<std::vector<std::string>>();

  const json& tensors = j.at("tensors").at("tensors");
  for (const auto& cls : state.model.class_order) {
    std::string name = "class_vec." + cls;
    if (tensors.contains(name)) {
      state.model.params.add(name, ad::Tensor(ctx.config().dims.d, 1));
    }
  }
  params_from_json(state.model.params, j.at("tensors"));

  for (auto it = j.at("support_means").begin(); it != j.at("support_means").end();
       ++it) {
    state.model.support_means[it.key()] = it.value().get<Vec>();
  }
  state.store = ExemplarStore::from_json(j.at("store"));

  if (ctx.config().variant.use_external_knowledge) {
    for (const auto& cls : state.model.class_order) {
      state.model.knowledge_cache[cls] =
          ctx.model().encode_knowledge(state.model.params, ctx.frame_for(cls));
    }
  }
  return state;
}

inline void write_checkpoint(const std::string& path, const RoundState& state) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << round_state_to_json(state).dump() << "\n";
}

inline RoundState read_checkpoint(const std::string& path,
                                  const SessionContext& ctx) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  try {
    json j;
    in >> j;
    return round_state_from_json(j, ctx);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace ifsed
