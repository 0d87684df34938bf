#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ifsed/common.hpp"

namespace ifsed {

using json = nlohmann::json;

// One labeled sentence with a trigger span; the atom of every split.
struct EventMention {
  std::string id;
  std::vector<std::string> tokens;
  int trigger_start = 0;  // half-open [start, end), token units
  int trigger_end = 0;
  std::string label;

  void validate() const {
    if (id.empty()) throw ParseError("mention with empty id");
    if (label.empty()) throw ParseError("mention " + id + ": empty label");
    if (trigger_start < 0 || trigger_end <= trigger_start ||
        static_cast<std::size_t>(trigger_end) > tokens.size()) {
      throw SpanOutOfRange("mention " + id + ": trigger span [" +
                           std::to_string(trigger_start) + "," +
                           std::to_string(trigger_end) + ") invalid for " +
                           std::to_string(tokens.size()) + " tokens");
    }
  }

  std::string normalized_sentence() const {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) s += ' ';
      s += to_lower(tokens[i]);
    }
    return s;
  }

  // Duplicate key: whitespace-normalized lowercase sentence + span + label.
  std::string duplicate_key() const {
    return normalized_sentence() + "\x1f" + std::to_string(trigger_start) +
           ":" + std::to_string(trigger_end) + "\x1f" + label;
  }
};

enum class RoundRole { base, incremental, ood };

struct RoundSpec {
  int round_id = 0;  // 0 = base, 1..m = incremental, m+1 = OOD
  std::vector<std::string> classes;
  int shots_train = 0;
  int per_class_dev = 0;
  int per_class_test = 0;

  RoundRole role() const {
    if (round_id == 0) return RoundRole::base;
    return shots_train == 0 ? RoundRole::ood : RoundRole::incremental;
  }

  std::string name() const {
    switch (role()) {
      case RoundRole::base: return "base";
      case RoundRole::ood: return "ood";
      default: return "c" + std::to_string(round_id);
    }
  }
};

struct DatasetManifest {
  std::string config_name;
  int way = 0;
  int shot = 0;
  std::uint64_t seed = 0;
  std::vector<RoundSpec> rounds;
  std::vector<std::string> unused_classes;  // eligible but unassigned pool

  const RoundSpec* find_round(int round_id) const {
    for (const auto& r : rounds)
      if (r.round_id == round_id) return &r;
    return nullptr;
  }

  std::vector<const RoundSpec*> incremental_rounds() const {
    std::vector<const RoundSpec*> out;
    for (const auto& r : rounds)
      if (r.role() == RoundRole::incremental) out.push_back(&r);
    return out;
  }
};

enum class Split { train, dev, test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    default: return "test";
  }
}

struct SplitAssignment {
  struct Entry {
    std::string mention_id;
    int round_id;
    Split split;
  };
  std::vector<Entry> entries;  // emission order: round, class, sample order
  std::unordered_map<std::string, std::size_t> index;  // mention_id -> entry

  void add(const std::string& id, int round_id, Split split) {
    if (index.count(id)) {
      throw InsufficientSamplesPerClass("mention " + id +
                                        " assigned to two splits");
    }
    index.emplace(id, entries.size());
    entries.push_back({id, round_id, split});
  }

  std::optional<std::pair<int, Split>> lookup(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) return std::nullopt;
    const Entry& e = entries[it->second];
    return std::make_pair(e.round_id, e.split);
  }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Keeps exactly one representative per duplicate key, first occurrence wins.
inline std::vector<EventMention> dedupe_corpus(
    const std::vector<EventMention>& mentions) {
  std::vector<EventMention> out;
  std::unordered_set<std::string> seen;
  out.reserve(mentions.size());
  for (const auto& m : mentions) {
    if (seen.insert(m.duplicate_key()).second) out.push_back(m);
  }
  return out;
}

// Classes sorted by mention count, descending; ties lexicographic by label.
inline std::vector<std::pair<std::string, int>> rank_classes(
    const std::vector<EventMention>& mentions) {
  std::map<std::string, int> counts;
  for (const auto& m : mentions) ++counts[m.label];
  std::vector<std::pair<std::string, int>> ranked(counts.begin(),
                                                  counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  return ranked;
}

struct ManifestConfig {
  int way = 5;
  int shot = 5;
  int n_rounds = 5;
  int base_classes = 10;
  int base_train = 100;
  int base_eval = 50;   // per-class dev and test size for the base round
  int round_eval = 10;  // per-class dev and test size for incremental rounds
  int ood_classes = 7;
  int ood_eval = 15;
  int eligible_classes = 67;
  std::string config_name;  // derived "<way>-way-<shot>-shot" when empty
};

// Builds the round structure over the ranked class list. Base classes take
// the most-populated labels; the incremental block is seed-shuffled and cut
// into `way`-sized rounds (the final round may be short when classes run
// out); the next `ood_classes` labels become the test-only OOD round.
inline DatasetManifest build_manifest(
    const std::vector<std::pair<std::string, int>>& ranked_classes,
    const ManifestConfig& config, std::uint64_t seed,
    std::vector<std::string>* warnings = nullptr) {
  if (config.way <= 0 || config.shot <= 0) {
    throw InsufficientClasses("way and shot must be positive");
  }
  const int eligible_n = std::min<int>(
      config.eligible_classes, static_cast<int>(ranked_classes.size()));
  std::vector<std::string> eligible;
  eligible.reserve(eligible_n);
  for (int i = 0; i < eligible_n; ++i) eligible.push_back(ranked_classes[i].first);

  // Every round must be non-empty; only the final one may be short.
  const int min_incremental =
      config.n_rounds == 0 ? 0 : config.way * (config.n_rounds - 1) + 1;
  if (eligible_n < config.base_classes + min_incremental + config.ood_classes) {
    throw InsufficientClasses(
        "need at least " +
        std::to_string(config.base_classes + min_incremental +
                       config.ood_classes) +
        " classes, have " + std::to_string(eligible_n));
  }

  const int inc_count =
      std::min(config.way * config.n_rounds,
               eligible_n - config.base_classes - config.ood_classes);

  std::vector<std::string> base(eligible.begin(),
                                eligible.begin() + config.base_classes);
  std::vector<std::string> incremental(
      eligible.begin() + config.base_classes,
      eligible.begin() + config.base_classes + inc_count);
  std::vector<std::string> ood(
      eligible.begin() + config.base_classes + inc_count,
      eligible.begin() + config.base_classes + inc_count + config.ood_classes);
  std::vector<std::string> unused(
      eligible.begin() + config.base_classes + inc_count + config.ood_classes,
      eligible.end());

  Rng rng(mix_seed(seed, fnv1a("round-shuffle")));
  rng.shuffle(incremental);

  DatasetManifest manifest;
  manifest.way = config.way;
  manifest.shot = config.shot;
  manifest.seed = seed;
  manifest.config_name =
      config.config_name.empty()
          ? std::to_string(config.way) + "-way-" + std::to_string(config.shot) +
                "-shot"
          : config.config_name;
  manifest.unused_classes = unused;

  RoundSpec base_spec;
  base_spec.round_id = 0;
  base_spec.classes = base;
  base_spec.shots_train = config.base_train;
  base_spec.per_class_dev = config.base_eval;
  base_spec.per_class_test = config.base_eval;
  manifest.rounds.push_back(base_spec);

  int n_actual_rounds = 0;
  for (int i = 0; i < config.n_rounds; ++i) {
    int begin = i * config.way;
    if (begin >= inc_count) break;
    int end = std::min(inc_count, begin + config.way);
    RoundSpec r;
    r.round_id = ++n_actual_rounds;
    r.classes.assign(incremental.begin() + begin, incremental.begin() + end);
    r.shots_train = config.shot;
    r.per_class_dev = config.round_eval;
    r.per_class_test = config.round_eval;
    if (warnings && static_cast<int>(r.classes.size()) < config.way) {
      // Counts are always classes x shots; a published-table-verbatim reading
      // of a short round (class count below `way` with full-round totals) is
      // internally inconsistent and is reported, not reproduced.
      warnings->push_back("round " + std::to_string(r.round_id) +
                          " is short (" + std::to_string(r.classes.size()) +
                          " classes); totals derived as classes x shots");
    }
    manifest.rounds.push_back(r);
  }

  RoundSpec ood_spec;
  ood_spec.round_id = n_actual_rounds + 1;
  ood_spec.classes = ood;
  ood_spec.shots_train = 0;
  ood_spec.per_class_dev = config.ood_eval;
  ood_spec.per_class_test = config.ood_eval;
  manifest.rounds.push_back(ood_spec);

  // Verify the selected classes can fill their splits.
  std::unordered_map<std::string, int> counts;
  for (const auto& [label, count] : ranked_classes) counts[label] = count;
  for (const auto& r : manifest.rounds) {
    int need = r.shots_train + r.per_class_dev + r.per_class_test;
    for (const auto& cls : r.classes) {
      if (counts[cls] < need) {
        throw InsufficientSamplesPerClass(
            "class " + cls + " has " + std::to_string(counts[cls]) +
            " mentions, needs " + std::to_string(need));
      }
    }
  }
  return manifest;
}

// Deterministic per-class sampling without replacement. The corpus is
// deduplicated first so no duplicate key can cross splits.
inline SplitAssignment materialize_splits(
    const std::vector<EventMention>& mentions,
    const DatasetManifest& manifest) {
  std::vector<EventMention> unique = dedupe_corpus(mentions);
  std::map<std::string, std::vector<std::string>> by_class;  // label -> ids
  for (const auto& m : unique) by_class[m.label].push_back(m.id);

  SplitAssignment assignment;
  for (const auto& r : manifest.rounds) {
    for (const auto& cls : r.classes) {
      auto it = by_class.find(cls);
      const int need = r.shots_train + r.per_class_dev + r.per_class_test;
      if (it == by_class.end() || static_cast<int>(it->second.size()) < need) {
        int have = it == by_class.end() ? 0 : static_cast<int>(it->second.size());
        throw InsufficientSamplesPerClass(
            "class " + cls + " has " + std::to_string(have) +
            " unique mentions, needs " + std::to_string(need));
      }
      std::vector<std::string> pool = it->second;
      Rng rng(mix_seed(manifest.seed, fnv1a(cls)));
      rng.shuffle(pool);
      int k = 0;
      for (int i = 0; i < r.shots_train; ++i)
        assignment.add(pool[k++], r.round_id, Split::train);
      for (int i = 0; i < r.per_class_dev; ++i)
        assignment.add(pool[k++], r.round_id, Split::dev);
      for (int i = 0; i < r.per_class_test; ++i)
        assignment.add(pool[k++], r.round_id, Split::test);
    }
  }
  return assignment;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json mention_to_json(const EventMention& m) {
  return json{{"id", m.id},
              {"tokens", m.tokens},
              {"trigger", {m.trigger_start, m.trigger_end}},
              {"label", m.label}};
}

inline EventMention mention_from_json(const json& j) {
  EventMention m;
  m.id = j.at("id").get<std::string>();
  m.tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto& t = j.at("trigger");
  if (!t.is_array() || t.size() != 2) {
    throw ParseError("trigger must be [start, end]");
  }
  m.trigger_start = t[0].get<int>();
  m.trigger_end = t[1].get<int>();
  m.label = j.at("label").get<std::string>();
  m.validate();
  return m;
}

inline std::vector<EventMention> read_mentions_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  std::vector<EventMention> out;
  std::unordered_set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(mention_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(out.back().id).second) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": duplicate mention id " + out.back().id);
    }
  }
  return out;
}

inline void write_mentions_jsonl(const std::string& path,
                                 const std::vector<EventMention>& mentions) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& m : mentions) out << mention_to_json(m).dump() << "\n";
}

inline json manifest_to_json(const DatasetManifest& m) {
  json rounds = json::array();
  for (const auto& r : m.rounds) {
    rounds.push_back(json{{"round_id", r.round_id},
                          {"classes", r.classes},
                          {"shots_train", r.shots_train},
                          {"per_class_dev", r.per_class_dev},
                          {"per_class_test", r.per_class_test}});
  }
  return json{{"config_name", m.config_name}, {"way", m.way},
              {"shot", m.shot},               {"seed", m.seed},
              {"rounds", rounds},             {"unused_classes", m.unused_classes}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.config_name = j.at("config_name").get<std::string>();
  m.way = j.at("way").get<int>();
  m.shot = j.at("shot").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rj : j.at("rounds")) {
    RoundSpec r;
    r.round_id = rj.at("round_id").get<int>();
    r.classes = rj.at("classes").get<std::vector<std::string>>();
    r.shots_train = rj.at("shots_train").get<int>();
    r.per_class_dev = rj.at("per_class_dev").get<int>();
    r.per_class_test = rj.at("per_class_test").get<int>();
    m.rounds.push_back(r);
  }
  if (j.contains("unused_classes")) {
    m.unused_classes = j.at("unused_classes").get<std::vector<std::string>>();
  }
  return m;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << manifest_to_json(m).dump(2) << "\n";
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest: " + path);
  try {
    json j;
    in >> j;
    return manifest_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ParseError("unknown split name: " + s);
}

inline SplitAssignment read_split_assignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split assignment: " + path);
  SplitAssignment assignment;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      assignment.add(j.at("id").get<std::string>(), j.at("round").get<int>(),
                     split_from_name(j.at("split").get<std::string>()));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return assignment;
}

// Table-shaped per-round statistics block.
inline std::string manifest_stats_block(const DatasetManifest& m) {
  std::ostringstream out;
  out << "config: " << m.config_name << "\n";
  out << "round   #class  #train  #dev    #test\n";
  for (const auto& r : m.rounds) {
    auto cell = [](const std::string& s) {
      std::string t = s;
      t.resize(std::max<std::size_t>(8, t.size() + 1), ' ');
      return t;
    };
    int n = static_cast<int>(r.classes.size());
    std::string train =
        r.role() == RoundRole::ood ? "-" : std::to_string(r.shots_train * n);
    out << cell(r.name()) << cell(std::to_string(n)) << cell(train)
        << cell(std::to_string(r.per_class_dev * n))
        << std::to_string(r.per_class_test * n) << "\n";
  }
  if (!m.unused_classes.empty()) {
    out << "unused pool: " << m.unused_classes.size() << " classes\n";
  }
  return out.str();
}

// Three split files per round plus the assignment index.
inline void write_split_files(const std::string& dir,
                              const std::vector<EventMention>& corpus,
                              const DatasetManifest& manifest,
                              const SplitAssignment& assignment) {
  std::unordered_map<std::string, const EventMention*> by_id;
  for (const auto& m : corpus) by_id[m.id] = &m;

  std::map<std::pair<int, Split>, std::vector<const EventMention*>> buckets;
  for (const auto& e : assignment.entries) {
    auto it = by_id.find(e.mention_id);
    if (it == by_id.end()) {
      throw MissingMention("assigned mention missing from corpus: " +
                           e.mention_id);
    }
    buckets[{e.round_id, e.split}].push_back(it->second);
  }

  for (const auto& r : manifest.rounds) {
    for (Split s : {Split::train, Split::dev, Split::test}) {
      std::string path = dir + "/" + r.name() + "_" + split_name(s) + ".jsonl";
      std::ofstream out(path);
      if (!out) throw Error("cannot write " + path);
      for (const EventMention* m : buckets[{r.round_id, s}]) {
        out << mention_to_json(*m).dump() << "\n";
      }
    }
  }

  std::ofstream out(dir + "/split_assignment.jsonl");
  if (!out) throw Error("cannot write split_assignment.jsonl");
  for (const auto& e : assignment.entries) {
    out << json{{"id", e.mention_id},
                {"round", e.round_id},
                {"split", split_name(e.split)}}
               .dump()
        << "\n";
  }
}

}  // namespace ifsed
