#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifsed/common.hpp"

namespace ifsed {

using json = nlohmann::json;

struct PredictionRecord {
  std::string mention_id;
  std::string gold;
  std::string predicted;
  Vec probs;  // over the known classes at evaluation time, in class order
};

struct RoundResult {
  int round_id = 0;
  std::vector<std::string> known_classes;  // order matches prob vectors
  std::vector<std::string> new_classes;    // introduced this round
  std::vector<PredictionRecord> predictions;      // cumulative test set
  std::vector<PredictionRecord> ood_predictions;  // OOD test split
};

struct SessionResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<RoundResult> rounds;
};

inline json prediction_to_json(const PredictionRecord& p) {
  return json{{"id", p.mention_id},
              {"gold", p.gold},
              {"pred", p.predicted},
              {"probs", p.probs}};
}

inline PredictionRecord prediction_from_json(const json& j) {
  return PredictionRecord{j.at("id").get<std::string>(),
                          j.at("gold").get<std::string>(),
                          j.at("pred").get<std::string>(),
                          j.at("probs").get<Vec>()};
}

inline json session_to_json(const SessionResult& s) {
  json rounds = json::array();
  for (const auto& r : s.rounds) {
    json preds = json::array();
    for (const auto& p : r.predictions) preds.push_back(prediction_to_json(p));
    json ood = json::array();
    for (const auto& p : r.ood_predictions) ood.push_back(prediction_to_json(p));
    rounds.push_back(json{{"round_id", r.round_id},
                          {"known_classes", r.known_classes},
                          {"new_classes", r.new_classes},
                          {"predictions", preds},
                          {"ood_predictions", ood}});
  }
  return json{{"format", "ifsed-session"},
              {"version", 1},
              {"variant", s.variant},
              {"seed", s.seed},
              {"rounds", rounds}};
}

inline SessionResult session_from_json(const json& j) {
  if (j.value("format", "") != "ifsed-session" || j.value("version", 0) != 1) {
    throw ParseError("unsupported session result header");
  }
  SessionResult s;
  s.variant = j.at("variant").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rj : j.at("rounds")) {
    RoundResult r;
    r.round_id = rj.at("round_id").get<int>();
    r.known_classes = rj.at("known_classes").get<std::vector<std::string>>();
    r.new_classes = rj.at("new_classes").get<std::vector<std::string>>();
    for (const auto& pj : rj.at("predictions"))
      r.predictions.push_back(prediction_from_json(pj));
    for (const auto& pj : rj.at("ood_predictions"))
      r.ood_predictions.push_back(prediction_from_json(pj));
    s.rounds.push_back(std::move(r));
  }
  return s;
}

inline void write_session_result(const std::string& path,
                                 const SessionResult& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << session_to_json(s).dump(2) << "\n";
}

inline SessionResult read_session_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open session result: " + path);
  try {
    json j;
    in >> j;
    return session_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace ifsed
