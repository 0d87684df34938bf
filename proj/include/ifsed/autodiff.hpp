#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ifsed/common.hpp"

// Minimal reverse-mode automatic differentiation over small dense tensors.
// Graphs are built per batch on a Tape; creation order is the topological
// order, so backward() is a single reverse sweep. Everything is sequential
// and allocation-deterministic, which keeps training runs bit-reproducible.
namespace ifsed::ad {

struct Tensor {
  int rows = 0, cols = 0;
  Vec a;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

  static Tensor column(const Vec& v) {
    Tensor t(static_cast<int>(v.size()), 1);
    t.a = v;
    return t;
  }

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const {
    return a[static_cast<std::size_t>(i) * cols + j];
  }
  int size() const { return rows * cols; }
  bool is_column() const { return cols == 1; }

  Vec to_vec() const { return a; }
};

class Tape {
 public:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Tape() { nodes_.reserve(256); }

  int leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int leaf_column(const Vec& v) { return leaf(Tensor::column(v)); }

  // Parameter leaf; handle is an opaque caller-side identifier used to
  // collect gradients after backward().
  int param(int handle, const Tensor& value) {
    int id = leaf(value);
    params_.emplace_back(handle, id);
    return id;
  }

  const Tensor& value(int id) const { return nodes_[id].val; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Tensor out = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    for (int i = 0; i < out.size(); ++i) out.a[i] += vb.a[i];
    return make(std::move(out), [a, b](Tape& t) {
      t.accumulate(a, t.nodes_[t.cur_].grad);
      t.accumulate(b, t.nodes_[t.cur_].grad);
    });
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    Tensor out = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    for (int i = 0; i < out.size(); ++i) out.a[i] -= vb.a[i];
    return make(std::move(out), [a, b](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      t.accumulate(a, g);
      t.accumulate_scaled(b, g, -1.0);
    });
  }

  int scale(int a, double c) {
    Tensor out = nodes_[a].val;
    for (double& x : out.a) x *= c;
    return make(std::move(out), [a, c](Tape& t) {
      t.accumulate_scaled(a, t.nodes_[t.cur_].grad, c);
    });
  }

  int hadamard(int a, int b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    for (int i = 0; i < out.size(); ++i) out.a[i] *= vb.a[i];
    return make(std::move(out), [a, b](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      const Tensor& va = t.nodes_[a].val;
      const Tensor& vb2 = t.nodes_[b].val;
      Tensor ga = g, gb = g;
      for (int i = 0; i < g.size(); ++i) {
        ga.a[i] *= vb2.a[i];
        gb.a[i] *= va.a[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  // (r x c) matrix times (c x 1) column.
  int matvec(int W, int x) {
    const Tensor& w = nodes_[W].val;
    const Tensor& v = nodes_[x].val;
    if (!v.is_column() || w.cols != v.rows) {
      throw DimensionMismatch("matvec: " + shape(W) + " * " + shape(x));
    }
    Tensor out(w.rows, 1);
    for (int i = 0; i < w.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < w.cols; ++j) s += w.at(i, j) * v.a[j];
      out.a[i] = s;
    }
    return make(std::move(out), [W, x](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      const Tensor& w = t.nodes_[W].val;
      const Tensor& v = t.nodes_[x].val;
      Tensor gw(w.rows, w.cols);
      Tensor gx(v.rows, 1);
      for (int i = 0; i < w.rows; ++i) {
        for (int j = 0; j < w.cols; ++j) {
          gw.at(i, j) = g.a[i] * v.a[j];
          gx.a[j] += w.at(i, j) * g.a[i];
        }
      }
      t.accumulate(W, gw);
      t.accumulate(x, gx);
    });
  }

  // A^T x for A (m x n), x (m x 1) -> (n x 1).
  int matvec_t(int A, int x) {
    const Tensor& a = nodes_[A].val;
    const Tensor& v = nodes_[x].val;
    if (!v.is_column() || a.rows != v.rows) {
      throw DimensionMismatch("matvec_t: " + shape(A) + "^T * " + shape(x));
    }
    Tensor out(a.cols, 1);
    for (int i = 0; i < a.rows; ++i) {
      for (int j = 0; j < a.cols; ++j) out.a[j] += a.at(i, j) * v.a[i];
    }
    return make(std::move(out), [A, x](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      const Tensor& a = t.nodes_[A].val;
      const Tensor& v = t.nodes_[x].val;
      Tensor ga(a.rows, a.cols);
      Tensor gx(v.rows, 1);
      for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) {
          ga.at(i, j) = v.a[i] * g.a[j];
          gx.a[i] += a.at(i, j) * g.a[j];
        }
      }
      t.accumulate(A, ga);
      t.accumulate(x, gx);
    });
  }

  int concat(const std::vector<int>& parts) {
    int total = 0;
    for (int p : parts) {
      if (!nodes_[p].val.is_column())
        throw DimensionMismatch("concat expects column vectors");
      total += nodes_[p].val.rows;
    }
    Tensor out(total, 1);
    int k = 0;
    for (int p : parts) {
      for (double x : nodes_[p].val.a) out.a[k++] = x;
    }
    return make(std::move(out), [parts](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      int k = 0;
      for (int p : parts) {
        Tensor gp(t.nodes_[p].val.rows, 1);
        for (int i = 0; i < gp.rows; ++i) gp.a[i] = g.a[k++];
        t.accumulate(p, gp);
      }
    });
  }

  // Column vectors (d x 1) stacked as rows of an (m x d) matrix.
  int stack_rows(const std::vector<int>& rows) {
    if (rows.empty()) throw DimensionMismatch("stack_rows: empty");
    int d = nodes_[rows.front()].val.rows;
    Tensor out(static_cast<int>(rows.size()), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor& v = nodes_[rows[r]].val;
      if (!v.is_column() || v.rows != d)
        throw DimensionMismatch("stack_rows: ragged input");
      for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = v.a[j];
    }
    return make(std::move(out), [rows](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        Tensor gp(g.cols, 1);
        for (int j = 0; j < g.cols; ++j)
          gp.a[j] = g.at(static_cast<int>(r), j);
        t.accumulate(rows[r], gp);
      }
    });
  }

  int sigmoid(int a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.a) x = 1.0 / (1.0 + std::exp(-x));
    int id = make(std::move(out), nullptr);
    nodes_[id].back = [a, id](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      Tensor ga = g;
      for (int i = 0; i < g.size(); ++i) ga.a[i] *= y.a[i] * (1.0 - y.a[i]);
      t.accumulate(a, ga);
    };
    return id;
  }

  int tanh_(int a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.a) x = std::tanh(x);
    int id = make(std::move(out), nullptr);
    nodes_[id].back = [a, id](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      Tensor ga = g;
      for (int i = 0; i < g.size(); ++i) ga.a[i] *= 1.0 - y.a[i] * y.a[i];
      t.accumulate(a, ga);
    };
    return id;
  }

  int mean(const std::vector<int>& xs) {
    if (xs.empty()) throw DimensionMismatch("mean: empty");
    Tensor out = nodes_[xs.front()].val;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      check_same_shape(xs.front(), xs[i], "mean");
      const Tensor& v = nodes_[xs[i]].val;
      for (int j = 0; j < out.size(); ++j) out.a[j] += v.a[j];
    }
    double inv = 1.0 / static_cast<double>(xs.size());
    for (double& x : out.a) x *= inv;
    return make(std::move(out), [xs, inv](Tape& t) {
      const Tensor& g = t.nodes_[t.cur_].grad;
      for (int p : xs) t.accumulate_scaled(p, g, inv);
    });
  }

  int dot(int a, int b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    for (int i = 0; i < va.size(); ++i) s += va.a[i] * vb.a[i];
    Tensor out(1, 1);
    out.a[0] = s;
    return make(std::move(out), [a, b](Tape& t) {
      double g = t.nodes_[t.cur_].grad.a[0];
      t.accumulate_scaled(a, t.nodes_[b].val, g);
      t.accumulate_scaled(b, t.nodes_[a].val, g);
    });
  }

  int sum(int a) {
    double s = 0.0;
    for (double x : nodes_[a].val.a) s += x;
    Tensor out(1, 1);
    out.a[0] = s;
    return make(std::move(out), [a](Tape& t) {
      double g = t.nodes_[t.cur_].grad.a[0];
      Tensor ga(t.nodes_[a].val.rows, t.nodes_[a].val.cols, g);
      t.accumulate(a, ga);
    });
  }

  int softmax(int a) {
    const Tensor& v = nodes_[a].val;
    Tensor out = Tensor::column(ifsed::softmax(v.a));
    int id = make(std::move(out), nullptr);
    nodes_[id].back = [a, id](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      double gy = 0.0;
      for (int i = 0; i < y.size(); ++i) gy += g.a[i] * y.a[i];
      Tensor ga(y.rows, 1);
      for (int i = 0; i < y.size(); ++i) ga.a[i] = y.a[i] * (g.a[i] - gy);
      t.accumulate(a, ga);
    };
    return id;
  }

  int log_softmax(int a) {
    const Tensor& v = nodes_[a].val;
    Tensor out = Tensor::column(ifsed::log_softmax(v.a));
    int id = make(std::move(out), nullptr);
    nodes_[id].back = [a, id](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& ls = t.nodes_[id].val;
      double gsum = 0.0;
      for (double x : g.a) gsum += x;
      Tensor ga(ls.rows, 1);
      for (int i = 0; i < ls.size(); ++i)
        ga.a[i] = g.a[i] - std::exp(ls.a[i]) * gsum;
      t.accumulate(a, ga);
    };
    return id;
  }

  int l2_normalize(int a) {
    const Tensor& v = nodes_[a].val;
    double n = 0.0;
    for (double x : v.a) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-12) throw ZeroVector("l2_normalize: zero vector");
    Tensor out = v;
    for (double& x : out.a) x /= n;
    int id = make(std::move(out), nullptr);
    nodes_[id].back = [a, id, n](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      double gy = 0.0;
      for (int i = 0; i < y.size(); ++i) gy += g.a[i] * y.a[i];
      Tensor ga(y.rows, y.cols);
      for (int i = 0; i < y.size(); ++i) ga.a[i] = (g.a[i] - y.a[i] * gy) / n;
      t.accumulate(a, ga);
    };
    return id;
  }

  // Squared Euclidean distance between two columns -> scalar.
  int squared_distance(int a, int b) {
    int d = sub(a, b);
    return dot(d, d);
  }

  void backward(int root) {
    if (nodes_[root].val.size() != 1) {
      throw DimensionMismatch("backward: root must be scalar");
    }
    for (auto& n : nodes_) {
      n.grad = Tensor(n.val.rows, n.val.cols);
    }
    nodes_[root].grad.a[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (!nodes_[i].back) continue;
      bool nonzero = false;
      for (double x : nodes_[i].grad.a) {
        if (x != 0.0) {
          nonzero = true;
          break;
        }
      }
      if (!nonzero) continue;
      cur_ = i;
      nodes_[i].back(*this);
    }
  }

  template <typename F>
  void for_each_param(F&& f) const {
    for (const auto& [handle, id] : params_) f(handle, nodes_[id].grad);
  }

 private:
  friend struct Node;

  int make(Tensor out, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(out), Tensor{}, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(int id, const Tensor& g) {
    Tensor& dst = nodes_[id].grad;
    for (int i = 0; i < dst.size(); ++i) dst.a[i] += g.a[i];
  }

  void accumulate_scaled(int id, const Tensor& g, double c) {
    Tensor& dst = nodes_[id].grad;
    for (int i = 0; i < dst.size(); ++i) dst.a[i] += c * g.a[i];
  }

  void check_same_shape(int a, int b, const char* where) const {
    const Tensor& va = nodes_[a].val;
    const Tensor& vb = nodes_[b].val;
    if (va.rows != vb.rows || va.cols != vb.cols) {
      throw DimensionMismatch(std::string(where) + ": " + shape(a) + " vs " +
                              shape(b));
    }
  }

  std::string shape(int id) const {
    return std::to_string(nodes_[id].val.rows) + "x" +
           std::to_string(nodes_[id].val.cols);
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> params_;  // (handle, node id)
  int cur_ = -1;
};

// Named trainable tensors with gradient accumulators and plain SGD updates.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter: " + name);
    int h = static_cast<int>(values_.size());
    index_.emplace(name, h);
    names_.push_back(name);
    grads_.emplace_back(init.rows, init.cols);
    values_.push_back(std::move(init));
    return h;
  }

  bool contains(const std::string& name) const { return index_.count(name); }

  int handle(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  const std::string& name(int h) const { return names_[h]; }
  Tensor& value(int h) { return values_[h]; }
  const Tensor& value(int h) const { return values_[h]; }
  Tensor& grad(int h) { return grads_[h]; }
  std::size_t size() const { return values_.size(); }

  void zero_grads() {
    for (auto& g : grads_) std::fill(g.a.begin(), g.a.end(), 0.0);
  }

  void collect(const Tape& tape) {
    tape.for_each_param([this](int handle, const Tensor& g) {
      Tensor& dst = grads_[handle];
      for (int i = 0; i < dst.size(); ++i) dst.a[i] += g.a[i];
    });
  }

  void sgd_step(double lr) {
    for (std::size_t h = 0; h < values_.size(); ++h) {
      Tensor& v = values_[h];
      const Tensor& g = grads_[h];
      for (int i = 0; i < v.size(); ++i) v.a[i] -= lr * g.a[i];
    }
  }

  bool grads_finite() const {
    for (const auto& g : grads_) {
      for (double x : g.a)
        if (!std::isfinite(x)) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::map<std::string, int> index_;
};

}  // namespace ifsed::ad
