#pragma once

#include <string>
#include <vector>

#include "ifsed/autodiff.hpp"
#include "ifsed/common.hpp"

namespace ifsed {

// ---------------------------------------------------------------------------
// Hybrid distillation objective: task cross-entropy plus feature-level
// (cosine) and prediction-level (temperature-softened) distillation.
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 0.1;  // feature distillation
  double beta = 0.1;   // prediction distillation
  double gamma = 0.5;  // cross-entropy
  double temperature = 2.0;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
    if (temperature < 1.0) {
      throw ConfigError("loss.temperature must be >= 1");
    }
  }
};

// Frozen previous-round model outputs for one training sample.
struct SnapshotOutputs {
  Vec feature;     // l2-normalized feature vector
  Vec old_logits;  // logits over the m old classes
};

namespace detail {

inline void check_probability(const Vec& p) {
  double sum = 0.0;
  for (double x : p) {
    if (x < -1e-5 || x > 1.0 + 1e-5) {
      throw NonProbabilityInput("probability entry outside [0,1]: " +
                                std::to_string(x));
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-5) {
    throw NonProbabilityInput("probabilities sum to " + std::to_string(sum));
  }
}

inline Vec l2_normalized(const Vec& v) {
  double n = norm2(v);
  if (n < 1e-12) throw ZeroVector("feature vector has near-zero norm");
  return scaled(v, 1.0 / n);
}

}  // namespace detail

// L_ce = -(1/|N|) sum_x sum_i y_i log p_i   (natural log, per-sample mean)
inline double ce_loss(const std::vector<Vec>& class_probs,
                      const std::vector<Vec>& one_hot_labels) {
  if (class_probs.size() != one_hot_labels.size()) {
    throw DimensionMismatch("ce_loss: batch sizes differ");
  }
  if (class_probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < class_probs.size(); ++s) {
    const Vec& p = class_probs[s];
    const Vec& y = one_hot_labels[s];
    require_same_dim(p, y, "ce_loss");
    detail::check_probability(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (y[i] != 0.0) {
        total -= y[i] * std::log(std::max(p[i], 1e-300));
      }
    }
  }
  return total / static_cast<double>(class_probs.size());
}

// L_fd = (1/|N|) sum_x (1 - <normalized snapshot feature, normalized current
// feature>), range [0, 2].
inline double feature_distill(const std::vector<Vec>& current,
                              const std::vector<Vec>& snapshot) {
  if (current.size() != snapshot.size()) {
    throw DimensionMismatch("feature_distill: batch sizes differ");
  }
  if (current.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < current.size(); ++s) {
    Vec f = detail::l2_normalized(current[s]);
    Vec fp = detail::l2_normalized(snapshot[s]);
    total += 1.0 - dot(fp, f);
  }
  return total / static_cast<double>(current.size());
}

// L_pd = -(1/|N|) sum_x sum_i softmax(o'/T)_i log softmax(o/T)_i over the m
// old classes. Callers must skip the term in round 1 (m = 0).
inline double prediction_distill(const std::vector<Vec>& current_old_logits,
                                 const std::vector<Vec>& snapshot_old_logits,
                                 double temperature) {
  if (current_old_logits.size() != snapshot_old_logits.size()) {
    throw DimensionMismatch("prediction_distill: batch sizes differ");
  }
  if (current_old_logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < current_old_logits.size(); ++s) {
    const Vec& o = current_old_logits[s];
    const Vec& op = snapshot_old_logits[s];
    require_same_dim(o, op, "prediction_distill");
    if (o.empty()) {
      throw EmptyOldClassSet("prediction_distill: no old classes (m = 0)");
    }
    Vec target = softmax(scaled(op, 1.0 / temperature));
    Vec log_probs = log_softmax(scaled(o, 1.0 / temperature));
    for (std::size_t i = 0; i < o.size(); ++i) {
      total -= target[i] * log_probs[i];
    }
  }
  return total / static_cast<double>(current_old_logits.size());
}

// L = alpha L_fd + beta L_pd + gamma L_ce. In round 1 the caller passes zero
// distillation terms.
inline double total_loss(double l_fd, double l_pd, double l_ce,
                         const LossWeights& weights) {
  weights.validate();
  if (!std::isfinite(l_fd) || !std::isfinite(l_pd) || !std::isfinite(l_ce)) {
    throw NonFiniteGradient("total_loss: non-finite component");
  }
  return weights.alpha * l_fd + weights.beta * l_pd + weights.gamma * l_ce;
}

// ---------------------------------------------------------------------------
// Graph fragments (training path; the plain functions above are the value
// reference the tests compare against)
// ---------------------------------------------------------------------------

// -log softmax(logits)[gold]
inline int ce_loss_graph(ad::Tape& tape, int logits_node, int gold_index) {
  int ls = tape.log_softmax(logits_node);
  Vec one_hot(tape.value(logits_node).rows, 0.0);
  one_hot[gold_index] = 1.0;
  return tape.scale(tape.dot(ls, tape.leaf_column(one_hot)), -1.0);
}

// 1 - <const normalized snapshot feature, normalized current feature>
inline int feature_distill_graph(ad::Tape& tape, int feature_node,
                                 const Vec& snapshot_feature) {
  int normalized = tape.l2_normalize(feature_node);
  int snap = tape.leaf_column(detail::l2_normalized(snapshot_feature));
  int cos = tape.dot(snap, normalized);
  Vec one{1.0};
  return tape.sub(tape.leaf_column(one), cos);
}

// -sum_i softmax(o'/T)_i log softmax(o/T)_i
inline int prediction_distill_graph(ad::Tape& tape, int old_logits_node,
                                    const Vec& snapshot_old_logits,
                                    double temperature) {
  if (snapshot_old_logits.empty()) {
    throw EmptyOldClassSet("prediction_distill_graph: no old classes");
  }
  int scaled_logits = tape.scale(old_logits_node, 1.0 / temperature);
  int log_probs = tape.log_softmax(scaled_logits);
  Vec target = softmax(scaled(snapshot_old_logits, 1.0 / temperature));
  return tape.scale(tape.dot(tape.leaf_column(target), log_probs), -1.0);
}

}  // namespace ifsed
