#pragma once

#include <map>
#include <string>
#include <vector>

#include "ifsed/common.hpp"
#include "ifsed/corpus.hpp"
#include "ifsed/knowledge.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Synthetic mention corpora and frame stores for desk-scale runs. Each class
// owns a small trigger/context vocabulary; a shared pool creates the
// cross-class interference that makes naive fine-tuning forget.
// ---------------------------------------------------------------------------

struct SyntheticCorpusSpec {
  int n_classes = 70;
  int big_classes = 10;  // classes with base-split-scale populations
  int big_count = 220;
  int small_count = 40;
  int sentence_len = 8;
  int class_tokens = 4;
  int shared_tokens = 12;
  double shared_prob = 0.35;  // context slots drawing from the shared pool
  int duplicate_every = 0;    // > 0: repeat every k-th mention verbatim
  std::uint64_t seed = 1;
};

inline std::vector<std::string> synthetic_labels(int n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (int c = 0; c < n; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ev%02d.Type", c);
    labels.emplace_back(buf);
  }
  return labels;
}

inline std::string synthetic_class_token(int cls, int k) {
  return "w" + std::to_string(cls) + "x" + std::to_string(k);
}

inline std::vector<EventMention> make_synthetic_corpus(
    const SyntheticCorpusSpec& spec) {
  std::vector<std::string> labels = synthetic_labels(spec.n_classes);
  std::vector<EventMention> corpus;
  Rng rng(mix_seed(spec.seed, fnv1a("synthetic-corpus")));
  int next_id = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    int count = c < spec.big_classes ? spec.big_count : spec.small_count;
    for (int i = 0; i < count; ++i) {
      EventMention m;
      m.id = "m" + std::to_string(next_id++);
      m.label = labels[c];
      int trigger_pos =
          1 + static_cast<int>(rng.below(std::max(1, spec.sentence_len - 2)));
      for (int t = 0; t < spec.sentence_len; ++t) {
        if (t == trigger_pos) {
          m.tokens.push_back(
              synthetic_class_token(c, static_cast<int>(rng.below(2))));
        } else if (rng.uniform() < spec.shared_prob) {
          m.tokens.push_back(
              "s" + std::to_string(rng.below(spec.shared_tokens)));
        } else {
          m.tokens.push_back(
              synthetic_class_token(c, static_cast<int>(rng.below(spec.class_tokens))));
        }
      }
      m.trigger_start = trigger_pos;
      m.trigger_end = trigger_pos + 1;
      corpus.push_back(m);
      if (spec.duplicate_every > 0 &&
          static_cast<int>(corpus.size()) % spec.duplicate_every == 0) {
        EventMention dup = m;
        dup.id = "m" + std::to_string(next_id++);
        corpus.push_back(dup);
      }
    }
  }
  return corpus;
}

struct SyntheticKnowledge {
  FrameStore store;
  std::map<std::string, std::string> curated_map;
};

// One frame per label whose definition and lexical units reuse the class
// vocabulary, so knowledge embeddings land near the class's samples.
inline SyntheticKnowledge make_synthetic_knowledge(
    const std::vector<std::string>& labels, std::uint64_t seed) {
  SyntheticKnowledge out;
  Rng rng(mix_seed(seed, fnv1a("synthetic-frames")));
  for (std::size_t c = 0; c < labels.size(); ++c) {
    Frame f;
    f.frame_id = "frame_" + std::to_string(c);
    f.definition = {"a",
                    synthetic_class_token(static_cast<int>(c), 0),
                    "event",
                    "involving",
                    synthetic_class_token(static_cast<int>(c), 1),
                    "s" + std::to_string(rng.below(6))};
    f.lexical_units = {synthetic_class_token(static_cast<int>(c), 0) + ".v",
                       synthetic_class_token(static_cast<int>(c), 1) + ".n"};
    if (c % 3 != 2) {
      f.frame_elements = {"Agent", "Theme"};
    }
    out.store.insert(f);
    out.curated_map[labels[c]] = f.frame_id;
  }
  return out;
}

}  // namespace ifsed
