#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ifsed/common.hpp"

namespace ifsed {

using json = nlohmann::json;

// External knowledge unit: a definition, frame elements (entity names) and
// lexical units ("word.pos" strings).
struct Frame {
  std::string frame_id;
  std::vector<std::string> definition;      // token sequence
  std::vector<std::string> frame_elements;  // entity names, may be empty
  std::vector<std::string> lexical_units;   // "chat.v" style

  void validate() const {
    if (frame_id.empty()) throw ParseError("frame with empty id");
    if (definition.empty())
      throw ParseError("frame " + frame_id + ": empty definition");
    if (lexical_units.empty())
      throw ParseError("frame " + frame_id + ": no lexical units");
  }
};

// Strips the ".pos" suffix of a lexical unit and splits the word part:
// "chit-chat.n" -> {"chit","chat"}.
inline std::vector<std::string> lexical_unit_tokens(const std::string& lu) {
  std::string word = lu;
  auto dotpos = word.rfind('.');
  if (dotpos != std::string::npos && dotpos + 1 < word.size() &&
      word.find_first_of(".- _", dotpos + 1) == std::string::npos) {
    word = word.substr(0, dotpos);
  }
  auto toks = split_label_tokens(word);
  if (toks.empty()) toks.push_back("unknown");
  return toks;
}

enum class MappingProvenance { curated, heuristic, fallback };

inline std::string provenance_name(MappingProvenance p) {
  switch (p) {
    case MappingProvenance::curated: return "curated";
    case MappingProvenance::heuristic: return "heuristic";
    default: return "fallback";
  }
}

class FrameStore {
 public:
  void insert(Frame frame) {
    frame.validate();
    if (by_id_.count(frame.frame_id)) {
      throw DuplicateFrameId("duplicate frame id: " + frame.frame_id);
    }
    order_.push_back(frame.frame_id);
    by_id_.emplace(frame.frame_id, std::move(frame));
  }

  const Frame* find(const std::string& frame_id) const {
    auto it = by_id_.find(frame_id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& ids() const { return order_; }

 private:
  std::unordered_map<std::string, Frame> by_id_;
  std::vector<std::string> order_;  // insertion order, for deterministic scans
};

// Synthesized frame for event types with no curated or heuristic match.
// Deterministic: the label itself supplies definition and lexical units.
inline Frame fallback_frame(const std::string& label) {
  Frame f;
  f.frame_id = label.empty() ? "unknown" : label;
  f.definition = split_label_tokens(label);
  if (f.definition.empty()) f.definition.push_back("unknown");
  for (const auto& tok : f.definition) f.lexical_units.push_back(tok + ".v");
  return f;
}

// Line-delimited frame records:
//   {"frame_id": ..., "definition": [...] or "text",
//    "frame_elements": [...], "lexical_units": [...]}
inline FrameStore ingest_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open frame file: " + path);
  FrameStore store;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      Frame f;
      f.frame_id = j.at("frame_id").get<std::string>();
      const auto& def = j.at("definition");
      if (def.is_array()) {
        f.definition = def.get<std::vector<std::string>>();
      } else {
        std::istringstream ss(def.get<std::string>());
        std::string tok;
        while (ss >> tok) f.definition.push_back(tok);
      }
      if (j.contains("frame_elements")) {
        f.frame_elements = j.at("frame_elements").get<std::vector<std::string>>();
      }
      f.lexical_units = j.at("lexical_units").get<std::vector<std::string>>();
      store.insert(std::move(f));
    } catch (const DuplicateFrameId&) {
      throw;
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

// Two-column text table: "event_type<TAB>frame_id".
inline std::map<std::string, std::string> read_curated_map(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open curated map: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 'event_type<TAB>frame_id'");
    }
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

struct MappedFrame {
  Frame frame;
  MappingProvenance provenance;
};

// Total mapping from event-type label to a frame: curated table first, then
// a token-overlap heuristic over frame ids and lexical units, then the
// synthesized fallback. Deterministic for a fixed (store, curated_map).
inline MappedFrame map_event_type(
    const std::string& label, const FrameStore& store,
    const std::map<std::string, std::string>& curated_map) {
  auto curated = curated_map.find(label);
  if (curated != curated_map.end()) {
    const Frame* f = store.find(curated->second);
    if (f) return {*f, MappingProvenance::curated};
  }

  auto label_tokens = split_label_tokens(label);
  std::set<std::string> label_set(label_tokens.begin(), label_tokens.end());

  int best_score = 0;
  const Frame* best = nullptr;
  for (const auto& id : store.ids()) {
    const Frame& f = *store.find(id);
    std::set<std::string> frame_tokens;
    for (const auto& t : split_label_tokens(f.frame_id)) frame_tokens.insert(t);
    for (const auto& lu : f.lexical_units) {
      for (const auto& t : lexical_unit_tokens(lu)) frame_tokens.insert(t);
    }
    int score = 0;
    for (const auto& t : label_set)
      if (frame_tokens.count(t)) ++score;
    if (score > best_score ||
        (score == best_score && score > 0 && best != nullptr &&
         f.frame_id < best->frame_id)) {
      best_score = score;
      best = &f;
    }
  }
  if (best) return {*best, MappingProvenance::heuristic};
  return {fallback_frame(label), MappingProvenance::fallback};
}

// Resolves every class of a manifest round structure ahead of training.
inline std::map<std::string, MappedFrame> map_all_classes(
    const std::vector<std::string>& labels, const FrameStore& store,
    const std::map<std::string, std::string>& curated_map) {
  std::map<std::string, MappedFrame> out;
  for (const auto& label : labels) {
    out.emplace(label, map_event_type(label, store, curated_map));
  }
  return out;
}

}  // namespace ifsed
