#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ifsed/common.hpp"
#include "ifsed/corpus.hpp"

namespace ifsed {

struct Prototype {
  std::string label;
  Vec mu;
  int count = 0;  // samples used
};

inline Prototype prototype(const std::string& label,
                           const std::vector<Vec>& embeddings) {
  if (embeddings.empty()) throw EmptyClass("prototype: class " + label);
  Prototype p;
  p.label = label;
  p.mu = mean_of(embeddings);
  p.count = static_cast<int>(embeddings.size());
  return p;
}

// The j samples closest to the class prototype (Euclidean), ties broken by
// position in the training file. Embeddings are cached for diagnostics only;
// replay re-encodes retained mentions with the current model.
inline std::vector<std::string> select_exemplars(
    const std::vector<std::pair<std::string, Vec>>& class_samples,
    const Vec& mu, int j) {
  if (j <= 0) return {};
  std::vector<std::size_t> order(class_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> dist(class_samples.size());
  for (std::size_t i = 0; i < class_samples.size(); ++i) {
    dist[i] = squared_distance(class_samples[i].second, mu);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::size_t take = std::min<std::size_t>(j, order.size());
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back(class_samples[order[i]].first);
  }
  return out;
}

class ExemplarStore {
 public:
  struct Entry {
    std::string mention_id;
    Vec embedding;  // embedding at selection time (diagnostic)
  };

  explicit ExemplarStore(int capacity_per_class = 1)
      : capacity_(capacity_per_class) {}

  int capacity_per_class() const { return capacity_; }

  void add_class(const std::string& label, std::vector<Entry> entries) {
    if (find(label)) throw DuplicateClass("exemplars already stored for " + label);
    if (static_cast<int>(entries.size()) > capacity_) {
      throw Error("exemplar list for " + label + " exceeds capacity");
    }
    classes_.emplace_back(label, std::move(entries));
  }

  const std::vector<Entry>* find(const std::string& label) const {
    for (const auto& [cls, entries] : classes_) {
      if (cls == label) return &entries;
    }
    return nullptr;
  }

  std::size_t class_count() const { return classes_.size(); }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [cls, entries] : classes_) n += entries.size();
    return n;
  }

  const std::vector<std::pair<std::string, std::vector<Entry>>>& classes()
      const {
    return classes_;
  }

  json to_json() const {
    json classes = json::array();
    for (const auto& [cls, entries] : classes_) {
      json es = json::array();
      for (const auto& e : entries) {
        es.push_back(json{{"mention_id", e.mention_id}, {"embedding", e.embedding}});
      }
      classes.push_back(json{{"class", cls}, {"entries", es}});
    }
    return json{{"capacity_per_class", capacity_}, {"classes", classes}};
  }

  static ExemplarStore from_json(const json& j) {
    ExemplarStore store(j.at("capacity_per_class").get<int>());
    for (const auto& cj : j.at("classes")) {
      std::vector<Entry> entries;
      for (const auto& ej : cj.at("entries")) {
        entries.push_back(Entry{ej.at("mention_id").get<std::string>(),
                                ej.at("embedding").get<Vec>()});
      }
      store.add_class(cj.at("class").get<std::string>(), std::move(entries));
    }
    return store;
  }

 private:
  int capacity_;
  // insertion order preserved: replay and serialization stay deterministic
  std::vector<std::pair<std::string, std::vector<Entry>>> classes_;
};

// N = retained mentions (re-read from the corpus) + new samples, deduplicated
// by mention id, retained first.
inline std::vector<EventMention> replay_union(
    const ExemplarStore& store, const std::vector<EventMention>& new_samples,
    const std::unordered_map<std::string, EventMention>& corpus_index) {
  std::vector<EventMention> out;
  std::unordered_set<std::string> seen;
  for (const auto& [cls, entries] : store.classes()) {
    (void)cls;
    for (const auto& e : entries) {
      auto it = corpus_index.find(e.mention_id);
      if (it == corpus_index.end()) {
        throw MissingMention("retained mention missing from corpus: " +
                             e.mention_id);
      }
      if (seen.insert(e.mention_id).second) out.push_back(it->second);
    }
  }
  for (const auto& m : new_samples) {
    if (seen.insert(m.id).second) out.push_back(m);
  }
  return out;
}

}  // namespace ifsed
