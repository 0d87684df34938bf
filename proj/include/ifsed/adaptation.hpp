#pragma once

#include <map>
#include <string>
#include <vector>

#include "ifsed/autodiff.hpp"
#include "ifsed/common.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Adaptive knowledge-enhanced Bayesian layer: a learnable gate blends the
// sample/knowledge difference into an offset, a unit-covariance Gaussian
// prior centers class vectors at knowledge-plus-offset, and MAP ascent fits
// them to the support samples.
// ---------------------------------------------------------------------------

// lambda = sigmoid(W [s; s-k; k] + b), every component strictly in (0,1).
inline Vec gate_values(const Vec& s, const Vec& k, const ad::Tensor& w_gate,
                       const Vec& b_gate) {
  require_same_dim(s, k, "gate_values");
  const int d = static_cast<int>(s.size());
  if (w_gate.rows != static_cast<int>(b_gate.size()) || w_gate.cols != 3 * d) {
    throw DimensionMismatch("gate_values: W is " + std::to_string(w_gate.rows) +
                            "x" + std::to_string(w_gate.cols) + ", expected " +
                            std::to_string(b_gate.size()) + "x" +
                            std::to_string(3 * d));
  }
  Vec input(3 * d);
  for (int i = 0; i < d; ++i) {
    input[i] = s[i];
    input[d + i] = s[i] - k[i];
    input[2 * d + i] = k[i];
  }
  Vec out(w_gate.rows);
  for (int i = 0; i < w_gate.rows; ++i) {
    double z = b_gate[i];
    for (int j = 0; j < w_gate.cols; ++j) z += w_gate.at(i, j) * input[j];
    out[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

// offset = lambda (element-wise) (s - k).
inline Vec knowledge_offset(const Vec& s, const Vec& k, const Vec& lambda) {
  require_same_dim(s, k, "knowledge_offset");
  require_same_dim(s, lambda, "knowledge_offset");
  Vec out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = lambda[i] * (s[i] - k[i]);
  }
  return out;
}

// log N(v | k + offset, I)
inline double prior_log_density(const Vec& v, const Vec& k,
                                const Vec& offset) {
  require_same_dim(v, k, "prior_log_density");
  require_same_dim(v, offset, "prior_log_density");
  const double d = static_cast<double>(v.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double diff = v[i] - (k[i] + offset[i]);
    sq += diff * diff;
  }
  return -0.5 * d * std::log(2.0 * M_PI) - 0.5 * sq;
}

struct ClassPrior {
  Vec knowledge;  // k_t
  Vec offset;     // gated offset

  Vec mean() const { return add(knowledge, offset); }
};

using PriorMap = std::map<std::string, ClassPrior>;

struct ClassVectorSet {
  std::vector<std::string> classes;  // sorted by label, stable
  std::vector<Vec> vectors;
  std::vector<Vec> prior_means;

  int index_of(const std::string& label) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == label) return static_cast<int>(i);
    }
    return -1;
  }
};

// log p(y | x, V) with a softmax over dot products against class vectors.
inline double likelihood_log_prob(const Vec& x, const std::string& y,
                                  const ClassVectorSet& v_set) {
  int idx = v_set.index_of(y);
  if (idx < 0) throw UnknownClass("likelihood_log_prob: unknown class " + y);
  Vec scores(v_set.vectors.size());
  for (std::size_t t = 0; t < v_set.vectors.size(); ++t) {
    scores[t] = dot(x, v_set.vectors[t]);
  }
  return log_softmax(scores)[idx];
}

namespace detail {

inline double map_objective(const ClassVectorSet& v,
                            const std::vector<Vec>& support,
                            const std::vector<int>& label_idx) {
  double obj = 0.0;
  for (std::size_t s = 0; s < support.size(); ++s) {
    Vec scores(v.vectors.size());
    for (std::size_t t = 0; t < v.vectors.size(); ++t) {
      scores[t] = dot(support[s], v.vectors[t]);
    }
    obj += log_softmax(scores)[label_idx[s]];
  }
  for (std::size_t t = 0; t < v.vectors.size(); ++t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < v.vectors[t].size(); ++i) {
      double diff = v.vectors[t][i] - v.prior_means[t][i];
      sq += diff * diff;
    }
    double d = static_cast<double>(v.vectors[t].size());
    obj += -0.5 * d * std::log(2.0 * M_PI) - 0.5 * sq;
  }
  return obj;
}

inline std::vector<Vec> map_gradient(const ClassVectorSet& v,
                                     const std::vector<Vec>& support,
                                     const std::vector<int>& label_idx) {
  std::vector<Vec> grad(v.vectors.size());
  for (std::size_t t = 0; t < v.vectors.size(); ++t) {
    grad[t] = Vec(v.vectors[t].size(), 0.0);
  }
  for (std::size_t s = 0; s < support.size(); ++s) {
    Vec scores(v.vectors.size());
    for (std::size_t t = 0; t < v.vectors.size(); ++t) {
      scores[t] = dot(support[s], v.vectors[t]);
    }
    Vec p = softmax(scores);
    for (std::size_t t = 0; t < v.vectors.size(); ++t) {
      double coef = (static_cast<int>(t) == label_idx[s] ? 1.0 : 0.0) - p[t];
      for (std::size_t i = 0; i < grad[t].size(); ++i) {
        grad[t][i] += coef * support[s][i];
      }
    }
  }
  for (std::size_t t = 0; t < v.vectors.size(); ++t) {
    for (std::size_t i = 0; i < grad[t].size(); ++i) {
      grad[t][i] -= v.vectors[t][i] - v.prior_means[t][i];
    }
  }
  return grad;
}

}  // namespace detail

// MAP point estimate of the class vectors: gradient ascent from the prior
// mean on sum(log-likelihood) + sum(log-prior), with backtracking so the
// objective never decreases. With no support samples the prior mean is
// returned exactly.
inline ClassVectorSet posterior_map(const std::vector<Vec>& support,
                                    const std::vector<std::string>& labels,
                                    const PriorMap& priors, int steps,
                                    double step_size) {
  if (support.size() != labels.size()) {
    throw DimensionMismatch("posterior_map: supports vs labels size");
  }
  ClassVectorSet v;
  for (const auto& [label, prior] : priors) {
    require_same_dim(prior.knowledge, prior.offset, "posterior_map");
    v.classes.push_back(label);
    v.prior_means.push_back(prior.mean());
    v.vectors.push_back(v.prior_means.back());
  }
  std::vector<int> label_idx(labels.size());
  for (std::size_t s = 0; s < labels.size(); ++s) {
    int idx = v.index_of(labels[s]);
    if (idx < 0) throw UnknownClass("posterior_map: unknown class " + labels[s]);
    label_idx[s] = idx;
  }
  if (support.empty() || steps <= 0) return v;

  double obj = detail::map_objective(v, support, label_idx);
  for (int step = 0; step < steps; ++step) {
    std::vector<Vec> grad = detail::map_gradient(v, support, label_idx);
    for (const Vec& g : grad) {
      if (!all_finite(g)) {
        throw NonFiniteGradient("posterior_map: non-finite gradient");
      }
    }
    double eta = step_size;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving) {
      ClassVectorSet trial = v;
      for (std::size_t t = 0; t < trial.vectors.size(); ++t) {
        for (std::size_t i = 0; i < trial.vectors[t].size(); ++i) {
          trial.vectors[t][i] += eta * grad[t][i];
        }
      }
      double trial_obj = detail::map_objective(trial, support, label_idx);
      if (trial_obj >= obj) {
        v = std::move(trial);
        obj = trial_obj;
        moved = true;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;  // at (numerical) stationarity
  }
  return v;
}

// ---------------------------------------------------------------------------
// Graph fragments for the gate path (trainable in the round loop)
// ---------------------------------------------------------------------------

inline int gate_graph(ad::Tape& tape, int w_node, int b_node, int s_node,
                      int k_node) {
  int diff = tape.sub(s_node, k_node);
  int input = tape.concat({s_node, diff, k_node});
  return tape.sigmoid(tape.add(tape.matvec(w_node, input), b_node));
}

inline int offset_graph(ad::Tape& tape, int lambda_node, int s_node,
                        int k_node) {
  return tape.hadamard(lambda_node, tape.sub(s_node, k_node));
}

}  // namespace ifsed
