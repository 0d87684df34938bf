#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ifsed/autodiff.hpp"
#include "ifsed/common.hpp"
#include "ifsed/corpus.hpp"
#include "ifsed/knowledge.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Text encoder backends
//
// "toy": deterministic seeded hash-projection token embeddings followed by
// one trainable mixing layer; self-contained, used by all desk-scale tests.
// "pretrained": token vectors loaded from an embeddings file (word2vec text
// layout, optional "count dim" header), hash fallback for OOV, then the same
// mixing layer. Paper-scale contextual encoders are outside this artifact;
// the file-backed backend is the supported way to bring external
// representations in.
// ---------------------------------------------------------------------------

struct BackendConfig {
  std::string kind = "toy";  // "toy" or "pretrained"
  int ctx_dim = 64;
  std::uint64_t seed = 7;
  bool freeze = true;
  std::string vectors_path;  // pretrained only
};

class TextBackend {
 public:
  explicit TextBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.kind != "toy" && config_.kind != "pretrained") {
      throw ConfigError("unknown encoder backend: " + config_.kind);
    }
    input_dim_ = config_.ctx_dim;
    if (config_.kind == "pretrained") {
      load_vectors(config_.vectors_path);
    }
  }

  int ctx_dim() const { return config_.ctx_dim; }
  int input_dim() const { return input_dim_; }
  bool frozen() const { return config_.freeze; }
  const BackendConfig& config() const { return config_; }

  // Deterministic base embedding before the mixing layer.
  Vec base_embedding(const std::string& token) const {
    if (config_.kind == "pretrained") {
      auto it = table_.find(token);
      if (it != table_.end()) return it->second;
    }
    Vec e(input_dim_);
    std::uint64_t state = mix_seed(config_.seed, fnv1a(token));
    Rng rng(state);
    for (double& x : e) x = rng.uniform(-1.0, 1.0);
    return e;
  }

 private:
  void load_vectors(const std::string& path) {
    if (path.empty()) {
      throw ConfigError("pretrained backend requires encoder.vectors_path");
    }
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vectors file: " + path);
    std::string line;
    int line_no = 0;
    int dim = -1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string token;
      ss >> token;
      std::vector<double> vals;
      double v;
      while (ss >> v) vals.push_back(v);
      if (line_no == 1 && vals.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) {
        continue;  // "count dim" header
      }
      if (vals.empty()) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": no vector values for token " + token);
      }
      if (dim < 0) dim = static_cast<int>(vals.size());
      if (static_cast<int>(vals.size()) != dim) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": inconsistent vector width");
      }
      table_[token] = Vec(vals.begin(), vals.end());
    }
    if (dim <= 0) throw ParseError(path + ": empty vectors file");
    input_dim_ = dim;
  }

  BackendConfig config_;
  int input_dim_ = 0;
  std::unordered_map<std::string, Vec> table_;
};

// ---------------------------------------------------------------------------
// Encoder parameters
// ---------------------------------------------------------------------------

struct EncoderDims {
  int ctx = 64;  // backend context width d_ctx
  int d = 128;   // shared fusion width of k_t and s_t
};

struct AttentionHandles {
  int wq = -1, wk = -1, wv = -1;
};

struct FeedForwardHandles {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

struct EncoderHandles {
  int mix_w = -1, mix_b = -1;
  AttentionHandles lex_att;   // lexical-unit queries over definition context
  AttentionHandles ent_att;   // lexical summary query over entity encodings
  AttentionHandles samp_att;  // trigger query over sentence context
  int null_entity = -1;
  FeedForwardHandles know_ff;
  FeedForwardHandles samp_ff;
  int gate_w = -1, gate_b = -1;
};

inline ad::Tensor xavier_init(int rows, int cols, std::uint64_t seed) {
  ad::Tensor t(rows, cols);
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  for (double& x : t.a) x = rng.uniform(-limit, limit);
  return t;
}

// Registers every tensor the model can train. All variants register the full
// set with per-name seeds, so parameter initialization is identical whether
// or not a component is used; ablations then differ only in the graphs that
// touch them.
inline EncoderHandles register_encoder_params(ad::ParamStore& store,
                                              const EncoderDims& dims,
                                              int backend_input_dim,
                                              std::uint64_t seed) {
  auto mat = [&](const std::string& name, int r, int c) {
    return store.add(name, xavier_init(r, c, mix_seed(seed, fnv1a(name))));
  };
  auto zero_col = [&](const std::string& name, int r) {
    return store.add(name, ad::Tensor(r, 1));
  };
  EncoderHandles h;
  h.mix_w = mat("backend.mix.w", dims.ctx, backend_input_dim);
  h.mix_b = zero_col("backend.mix.b", dims.ctx);
  h.lex_att = {mat("know.att_lex.wq", dims.d, dims.ctx),
               mat("know.att_lex.wk", dims.d, dims.ctx),
               mat("know.att_lex.wv", dims.d, dims.ctx)};
  h.ent_att = {mat("know.att_ent.wq", dims.d, dims.d),
               mat("know.att_ent.wk", dims.d, dims.ctx),
               mat("know.att_ent.wv", dims.d, dims.ctx)};
  h.samp_att = {mat("samp.att.wq", dims.d, dims.ctx),
                mat("samp.att.wk", dims.d, dims.ctx),
                mat("samp.att.wv", dims.d, dims.ctx)};
  h.null_entity = mat("know.null_entity", dims.ctx, 1);
  h.know_ff = {mat("know.ff.w1", dims.d, 2 * dims.d), zero_col("know.ff.b1", dims.d),
               mat("know.ff.w2", dims.d, dims.d), zero_col("know.ff.b2", dims.d)};
  h.samp_ff = {mat("samp.ff.w1", dims.d, dims.d + dims.ctx),
               zero_col("samp.ff.b1", dims.d),
               mat("samp.ff.w2", dims.d, dims.d), zero_col("samp.ff.b2", dims.d)};
  h.gate_w = mat("gate.w", dims.d, 3 * dims.d);
  h.gate_b = zero_col("gate.b", dims.d);
  return h;
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

// Per-tape memoization of parameter nodes and token encodings. Frozen
// parameters enter as plain leaves so no gradient is ever applied to them.
class GraphBuilder {
 public:
  GraphBuilder(ad::Tape& tape, const ad::ParamStore& store, bool train,
               bool backend_frozen)
      : tape_(tape), store_(store), train_(train),
        backend_frozen_(backend_frozen) {}

  ad::Tape& tape() { return tape_; }

  int pnode(int handle) {
    auto it = cache_.find(handle);
    if (it != cache_.end()) return it->second;
    int id = train_ ? tape_.param(handle, store_.value(handle))
                    : tape_.leaf(store_.value(handle));
    cache_.emplace(handle, id);
    return id;
  }

  // Backend mixing parameters respect the freeze flag even in training.
  int backend_pnode(int handle) {
    if (!backend_frozen_) return pnode(handle);
    auto it = cache_.find(handle);
    if (it != cache_.end()) return it->second;
    int id = tape_.leaf(store_.value(handle));
    cache_.emplace(handle, id);
    return id;
  }

  int token_node(const std::string& token, const TextBackend& backend,
                 const EncoderHandles& h) {
    auto it = token_cache_.find(token);
    if (it != token_cache_.end()) return it->second;
    int base = tape_.leaf_column(backend.base_embedding(token));
    int mixed = tape_.tanh_(tape_.add(
        tape_.matvec(backend_pnode(h.mix_w), base), backend_pnode(h.mix_b)));
    token_cache_.emplace(token, mixed);
    return mixed;
  }

 private:
  ad::Tape& tape_;
  const ad::ParamStore& store_;
  bool train_;
  bool backend_frozen_;
  std::map<int, int> cache_;
  std::map<std::string, int> token_cache_;
};

// Single-head scaled dot-product attention with learned projections.
inline int attend(GraphBuilder& g, const AttentionHandles& att, int query,
                  const std::vector<int>& inputs, Vec* weights_out = nullptr) {
  ad::Tape& t = g.tape();
  int q = t.matvec(g.pnode(att.wq), query);
  std::vector<int> keys, values;
  keys.reserve(inputs.size());
  values.reserve(inputs.size());
  for (int x : inputs) {
    keys.push_back(t.matvec(g.pnode(att.wk), x));
    values.push_back(t.matvec(g.pnode(att.wv), x));
  }
  int kmat = t.stack_rows(keys);
  int scores = t.scale(t.matvec(kmat, q),
                       1.0 / std::sqrt(static_cast<double>(t.value(q).rows)));
  int w = t.softmax(scores);
  if (weights_out) *weights_out = t.value(w).to_vec();
  int vmat = t.stack_rows(values);
  return t.matvec_t(vmat, w);
}

// Projection-free attention pooling used by the mixed entity encoding.
inline int pool_attend(GraphBuilder& g, int query,
                       const std::vector<int>& inputs,
                       Vec* weights_out = nullptr) {
  ad::Tape& t = g.tape();
  int kmat = t.stack_rows(inputs);
  int scores = t.scale(
      t.matvec(kmat, query),
      1.0 / std::sqrt(static_cast<double>(t.value(query).rows)));
  int w = t.softmax(scores);
  if (weights_out) *weights_out = t.value(w).to_vec();
  return t.matvec_t(kmat, w);
}

inline int feed_forward(GraphBuilder& g, const FeedForwardHandles& ff, int x) {
  ad::Tape& t = g.tape();
  int h = t.tanh_(t.add(t.matvec(g.pnode(ff.w1), x), g.pnode(ff.b1)));
  return t.add(t.matvec(g.pnode(ff.w2), h), g.pnode(ff.b2));
}

// ---------------------------------------------------------------------------
// Embeddings (values plus test-visible intermediates)
// ---------------------------------------------------------------------------

struct KnowledgeEmbedding {
  Vec k;                      // fused knowledge vector k_t
  std::string frame_id;
  Vec lexical_summary;        // attention summary of lexical units in the definition
  Vec entity_summary;         // attention summary over entity encodings
  std::vector<Vec> lexical_attention;  // one distribution per lexical unit
  Vec entity_attention;                // distribution over entity slots
};

struct SampleEmbedding {
  Vec s;                      // fused sample vector s_t
  std::string mention_id;
  Vec trigger_encoding;       // mean-pooled contextual vectors of the span
  Vec sentence_summary;       // attention summary of the sentence
  Vec sentence_attention;     // distribution over sentence tokens
};

struct KnowledgeGraph {
  int k = -1;
  int lex_summary = -1;
  int ent_summary = -1;
  std::vector<Vec> lexical_attention;
  Vec entity_attention;
};

struct SampleGraph {
  int s = -1;
  int trigger = -1;
  int summary = -1;
  Vec sentence_attention;
};

class EncoderModel {
 public:
  EncoderModel(EncoderDims dims, BackendConfig backend_config)
      : dims_(dims), backend_(std::move(backend_config)) {
    if (backend_.ctx_dim() != dims_.ctx) {
      throw DimensionMismatch("backend ctx_dim differs from encoder dims");
    }
  }

  const EncoderDims& dims() const { return dims_; }
  const TextBackend& backend() const { return backend_; }

  void register_params(ad::ParamStore& store, std::uint64_t seed) {
    handles_ = register_encoder_params(store, dims_, backend_.input_dim(), seed);
  }

  const EncoderHandles& handles() const { return handles_; }

  GraphBuilder builder(ad::Tape& tape, const ad::ParamStore& store,
                       bool train) const {
    return GraphBuilder(tape, store, train, backend_.frozen());
  }

  // Pipeline: backend-encode definition and lexical units; mixed-encode the
  // frame elements against the definition context; lexical attention, entity
  // attention, then feed-forward fusion of the two summaries.
  KnowledgeGraph encode_knowledge_graph(GraphBuilder& g,
                                        const Frame& frame) const {
    frame.validate();
    ad::Tape& t = g.tape();
    KnowledgeGraph out;

    std::vector<int> def_ctx;
    def_ctx.reserve(frame.definition.size());
    for (const auto& tok : frame.definition) {
      def_ctx.push_back(g.token_node(tok, backend_, handles_));
    }

    std::vector<int> lex_outputs;
    for (const auto& lu : frame.lexical_units) {
      std::vector<int> parts;
      for (const auto& tok : lexical_unit_tokens(lu)) {
        parts.push_back(g.token_node(tok, backend_, handles_));
      }
      int lu_vec = t.mean(parts);
      Vec w;
      lex_outputs.push_back(attend(g, handles_.lex_att, lu_vec, def_ctx, &w));
      out.lexical_attention.push_back(std::move(w));
    }
    out.lex_summary = t.mean(lex_outputs);

    std::vector<int> entity_nodes;
    if (frame.frame_elements.empty()) {
      entity_nodes.push_back(g.pnode(handles_.null_entity));
    } else {
      for (const auto& name : frame.frame_elements) {
        std::vector<int> parts;
        for (const auto& tok : split_label_tokens(name)) {
          parts.push_back(g.token_node(tok, backend_, handles_));
        }
        if (parts.empty()) {
          parts.push_back(g.token_node("unknown", backend_, handles_));
        }
        int name_vec = t.mean(parts);
        int pooled = pool_attend(g, name_vec, def_ctx);
        entity_nodes.push_back(t.add(name_vec, pooled));
      }
    }
    out.ent_summary = attend(g, handles_.ent_att, out.lex_summary, entity_nodes,
                             &out.entity_attention);

    out.k = feed_forward(g, handles_.know_ff,
                         t.concat({out.lex_summary, out.ent_summary}));
    return out;
  }

  // Pipeline: backend-encode the sentence, mean-pool the trigger span,
  // attend from the trigger over the sentence, then feed-forward fusion of
  // [summary; trigger].
  SampleGraph encode_sample_graph(GraphBuilder& g,
                                  const EventMention& mention) const {
    mention.validate();
    ad::Tape& t = g.tape();
    SampleGraph out;

    std::vector<int> ctx;
    ctx.reserve(mention.tokens.size());
    for (const auto& tok : mention.tokens) {
      ctx.push_back(g.token_node(tok, backend_, handles_));
    }
    std::vector<int> span(ctx.begin() + mention.trigger_start,
                          ctx.begin() + mention.trigger_end);
    out.trigger = t.mean(span);
    out.summary = attend(g, handles_.samp_att, out.trigger, ctx,
                         &out.sentence_attention);
    out.s = feed_forward(g, handles_.samp_ff,
                         t.concat({out.summary, out.trigger}));
    return out;
  }

  KnowledgeEmbedding encode_knowledge(const ad::ParamStore& store,
                                      const Frame& frame) const {
    ad::Tape tape;
    GraphBuilder g = builder(tape, store, /*train=*/false);
    KnowledgeGraph kg = encode_knowledge_graph(g, frame);
    KnowledgeEmbedding out;
    out.k = tape.value(kg.k).to_vec();
    out.frame_id = frame.frame_id;
    out.lexical_summary = tape.value(kg.lex_summary).to_vec();
    out.entity_summary = tape.value(kg.ent_summary).to_vec();
    out.lexical_attention = kg.lexical_attention;
    out.entity_attention = kg.entity_attention;
    if (!all_finite(out.k)) {
      throw NonFiniteGradient("knowledge embedding not finite for frame " +
                              frame.frame_id);
    }
    return out;
  }

  SampleEmbedding encode_sample(const ad::ParamStore& store,
                                const EventMention& mention) const {
    ad::Tape tape;
    GraphBuilder g = builder(tape, store, /*train=*/false);
    SampleGraph sg = encode_sample_graph(g, mention);
    SampleEmbedding out;
    out.s = tape.value(sg.s).to_vec();
    out.mention_id = mention.id;
    out.trigger_encoding = tape.value(sg.trigger).to_vec();
    out.sentence_summary = tape.value(sg.summary).to_vec();
    out.sentence_attention = sg.sentence_attention;
    return out;
  }

  std::vector<SampleEmbedding> encode_batch(
      const ad::ParamStore& store,
      const std::vector<EventMention>& mentions) const {
    std::vector<SampleEmbedding> out;
    out.reserve(mentions.size());
    for (std::size_t i = 0; i < mentions.size(); ++i) {
      try {
        out.push_back(encode_sample(store, mentions[i]));
      } catch (const SpanOutOfRange& e) {
        throw SpanOutOfRange("batch item " + std::to_string(i) + ": " +
                             e.what());
      } catch (const Error& e) {
        throw Error("batch item " + std::to_string(i) + ": " + e.what());
      }
    }
    return out;
  }

  std::vector<KnowledgeEmbedding> encode_batch(
      const ad::ParamStore& store, const std::vector<Frame>& frames) const {
    std::vector<KnowledgeEmbedding> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      try {
        out.push_back(encode_knowledge(store, frames[i]));
      } catch (const Error& e) {
        throw Error("batch item " + std::to_string(i) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  EncoderDims dims_;
  TextBackend backend_;
  EncoderHandles handles_;
};

// ---------------------------------------------------------------------------
// Named-tensor container (version header + tensors), used by checkpoints.
// ---------------------------------------------------------------------------

inline json params_to_json(const ad::ParamStore& store) {
  json tensors = json::object();
  for (std::size_t h = 0; h < store.size(); ++h) {
    const ad::Tensor& t = store.value(static_cast<int>(h));
    tensors[store.name(static_cast<int>(h))] = {
        {"rows", t.rows}, {"cols", t.cols}, {"data", t.a}};
  }
  return json{{"format", "ifsed-tensors"}, {"version", 1}, {"tensors", tensors}};
}

inline void params_from_json(ad::ParamStore& store, const json& j) {
  if (j.value("format", "") != "ifsed-tensors" || j.value("version", 0) != 1) {
    throw ParseError("unsupported tensor container header");
  }
  const json& tensors = j.at("tensors");
  for (auto it = tensors.begin(); it != tensors.end(); ++it) {
    if (!store.contains(it.key())) {
      throw ParseError("unknown tensor in checkpoint: " + it.key());
    }
    int h = store.handle(it.key());
    ad::Tensor& t = store.value(h);
    int rows = it.value().at("rows").get<int>();
    int cols = it.value().at("cols").get<int>();
    if (rows != t.rows || cols != t.cols) {
      throw DimensionMismatch("checkpoint tensor " + it.key() +
                              " has mismatched shape");
    }
    t.a = it.value().at("data").get<Vec>();
  }
}

}  // namespace ifsed
