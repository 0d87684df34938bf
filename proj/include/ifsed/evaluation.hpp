#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifsed/common.hpp"
#include "ifsed/corpus.hpp"
#include "ifsed/session.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Per-round F1 matrix (lower triangular), the (new, p-1..p-n) aggregation,
// the forgetting rate, and OOD rejection reporting. All cells are macro F1
// percentages at full precision; rounding happens only in the text reports.
// ---------------------------------------------------------------------------

// One-vs-rest F1 for one class, as a percentage; 0 when precision and recall
// are both undefined or zero.
inline double per_class_f1(const std::vector<PredictionRecord>& predictions,
                           const std::string& cls) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& p : predictions) {
    bool gold = p.gold == cls;
    bool pred = p.predicted == cls;
    if (gold && pred) ++tp;
    else if (!gold && pred) ++fp;
    else if (gold && !pred) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

struct F1Matrix {
  std::vector<int> round_ids;            // learning order
  std::vector<std::string> round_names;  // "base", "c1", ...
  // cells[e][r]: mean F1 of round-r classes measured after round e, r <= e
  std::vector<std::vector<double>> cells;

  std::size_t size() const { return round_ids.size(); }
};

// cell[e][r] = macro F1 over the classes introduced in round r, measured on
// the cumulative round-e test predictions.
inline F1Matrix round_matrix(const SessionResult& result,
                             const DatasetManifest& manifest) {
  if (result.rounds.empty()) throw Error("round_matrix: empty session");
  F1Matrix m;
  for (const auto& r : result.rounds) {
    m.round_ids.push_back(r.round_id);
    const RoundSpec* spec = manifest.find_round(r.round_id);
    if (spec) {
      if (std::set<std::string>(spec->classes.begin(), spec->classes.end()) !=
          std::set<std::string>(r.new_classes.begin(), r.new_classes.end())) {
        throw Error("round " + std::to_string(r.round_id) +
                    ": session classes disagree with manifest");
      }
      m.round_names.push_back(spec->name());
    } else {
      m.round_names.push_back("r" + std::to_string(r.round_id));
    }
  }
  for (std::size_t e = 0; e < result.rounds.size(); ++e) {
    std::vector<double> row;
    for (std::size_t r = 0; r <= e; ++r) {
      const auto& classes = result.rounds[r].new_classes;
      double sum = 0.0;
      for (const auto& cls : classes) {
        sum += per_class_f1(result.rounds[e].predictions, cls);
      }
      row.push_back(classes.empty() ? 0.0
                                    : sum / static_cast<double>(classes.size()));
    }
    m.cells.push_back(std::move(row));
  }
  return m;
}

struct AggregateCurve {
  double new_avg = 0.0;   // mean of diagonal cells
  std::vector<double> p;  // p[n-1] = mean F1 of classes learned n rounds ago
};

// new = mean_e cell[e][e]; p_n = mean over e >= n of cell[e][e-n].
inline AggregateCurve aggregate_pn(const F1Matrix& matrix) {
  const std::size_t m = matrix.size();
  if (m == 0) throw Error("aggregate_pn: empty matrix");
  AggregateCurve curve;
  double diag = 0.0;
  for (std::size_t e = 0; e < m; ++e) diag += matrix.cells[e][e];
  curve.new_avg = diag / static_cast<double>(m);
  for (std::size_t n = 1; n < m; ++n) {
    double sum = 0.0;
    for (std::size_t e = n; e < m; ++e) sum += matrix.cells[e][e - n];
    curve.p.push_back(sum / static_cast<double>(m - n));
  }
  return curve;
}

// Mean relative successive drop over (new, p1, ..., pn), with 0-valued
// predecessors contributing 0 (covers the 0/0 case), as a percentage. This
// convention reproduces the published forgetting rates from the published
// F1 matrices.
inline double forgetting_rate(const AggregateCurve& curve) {
  std::vector<double> seq;
  seq.push_back(curve.new_avg);
  for (double x : curve.p) seq.push_back(x);
  if (seq.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    double prev = seq[i];
    double next = seq[i + 1];
    if (prev < 0.0) {
      throw NegativePrev("forgetting_rate: negative F1 value " +
                         std::to_string(prev));
    }
    if (prev == 0.0) continue;  // 0-drop by convention
    total += (prev - next) / prev;
  }
  return 100.0 * total / static_cast<double>(seq.size() - 1);
}

// The printed formula taken literally: [(p1-new) + (p2-p1) + ...] / steps,
// in F1 percentage points (telescopes to (p_last - new) / steps).
inline double forgetting_rate_literal(const AggregateCurve& curve) {
  if (curve.p.empty()) return 0.0;
  double steps = static_cast<double>(curve.p.size());
  return (curve.p.back() - curve.new_avg) / steps;
}

struct OODReport {
  double tau = 0.0;
  double ood_rejection_rate = 0.0;
  double id_false_rejection_rate = 0.0;
};

// A mention is rejected when its max class probability is below tau. Rates
// are computed on the final round (all classes learned).
inline OODReport ood_report(const SessionResult& result, double tau) {
  if (result.rounds.empty()) throw Error("ood_report: empty session");
  const RoundResult& last = result.rounds.back();
  auto rejected = [&](const PredictionRecord& p) {
    double mx = 0.0;
    for (double x : p.probs) mx = std::max(mx, x);
    return mx < tau;
  };
  OODReport report;
  report.tau = tau;
  if (!last.ood_predictions.empty()) {
    std::size_t n = 0;
    for (const auto& p : last.ood_predictions)
      if (rejected(p)) ++n;
    report.ood_rejection_rate =
        static_cast<double>(n) / static_cast<double>(last.ood_predictions.size());
  }
  if (!last.predictions.empty()) {
    std::size_t n = 0;
    for (const auto& p : last.predictions)
      if (rejected(p)) ++n;
    report.id_false_rejection_rate =
        static_cast<double>(n) / static_cast<double>(last.predictions.size());
  }
  return report;
}

inline std::vector<OODReport> ood_sweep(const SessionResult& result,
                                        const std::vector<double>& taus) {
  std::vector<OODReport> out;
  out.reserve(taus.size());
  for (double tau : taus) out.push_back(ood_report(result, tau));
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fixed2(double x) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << x;
  return ss.str();
}
inline std::string cell8(const std::string& s) {
  std::string t = s;
  t.resize(std::max<std::size_t>(8, t.size() + 1), ' ');
  return t;
}
}  // namespace detail

inline std::string matrix_text(const F1Matrix& m) {
  std::ostringstream out;
  out << detail::cell8("");
  for (const auto& name : m.round_names) out << detail::cell8(name);
  out << "\n";
  for (std::size_t e = 0; e < m.size(); ++e) {
    out << detail::cell8(m.round_names[e]);
    for (std::size_t r = 0; r <= e; ++r) {
      out << detail::cell8(detail::fixed2(m.cells[e][r]));
    }
    out << "\n";
  }
  return out.str();
}

inline json matrix_to_json(const F1Matrix& m) {
  return json{{"round_ids", m.round_ids},
              {"round_names", m.round_names},
              {"cells", m.cells}};
}

inline F1Matrix matrix_from_json(const json& j) {
  F1Matrix m;
  m.round_ids = j.at("round_ids").get<std::vector<int>>();
  m.round_names = j.at("round_names").get<std::vector<std::string>>();
  m.cells = j.at("cells").get<std::vector<std::vector<double>>>();
  if (m.round_ids.size() != m.cells.size() ||
      m.round_names.size() != m.cells.size()) {
    throw ParseError("matrix: inconsistent row counts");
  }
  for (std::size_t e = 0; e < m.cells.size(); ++e) {
    if (m.cells[e].size() != e + 1) {
      throw ParseError("matrix: row " + std::to_string(e) +
                       " is not lower-triangular");
    }
  }
  return m;
}

// (new, p-1..p-n) block plus both forgetting-rate conventions. Aggregates
// are macro F1 (mean of per-class F1) as noted in the header line.
inline std::string summary_text(const AggregateCurve& curve,
                                bool literal_rate = false) {
  std::ostringstream out;
  out << "# macro-F1 aggregates (percent)\n";
  out << detail::cell8("new");
  for (std::size_t n = 1; n <= curve.p.size(); ++n) {
    out << detail::cell8("p-" + std::to_string(n));
  }
  out << "\n" << detail::cell8(detail::fixed2(curve.new_avg));
  for (double x : curve.p) out << detail::cell8(detail::fixed2(x));
  out << "\n";
  if (literal_rate) {
    out << "forgetting_rate_literal: " << detail::fixed2(forgetting_rate_literal(curve))
        << "\n";
  } else {
    out << "forgetting_rate: " << detail::fixed2(forgetting_rate(curve)) << "%\n";
  }
  return out.str();
}

inline json summary_to_json(const AggregateCurve& curve) {
  return json{{"new", curve.new_avg},
              {"p", curve.p},
              {"forgetting_rate", forgetting_rate(curve)},
              {"forgetting_rate_literal", forgetting_rate_literal(curve)}};
}

inline std::string ood_sweep_text(const std::vector<OODReport>& reports) {
  std::ostringstream out;
  out << detail::cell8("tau") << detail::cell8("ood_rej") << "id_false_rej\n";
  for (const auto& r : reports) {
    out << detail::cell8(detail::fixed2(r.tau))
        << detail::cell8(detail::fixed2(r.ood_rejection_rate))
        << detail::fixed2(r.id_false_rejection_rate) << "\n";
  }
  return out.str();
}

inline json ood_sweep_to_json(const std::vector<OODReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back(json{{"tau", r.tau},
                       {"ood_rejection_rate", r.ood_rejection_rate},
                       {"id_false_rejection_rate", r.id_false_rejection_rate}});
  }
  return arr;
}

}  // namespace ifsed
