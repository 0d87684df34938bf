#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifsed {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DuplicateFrameId : Error { using Error::Error; };
struct InsufficientClasses : Error { using Error::Error; };
struct InsufficientSamplesPerClass : Error { using Error::Error; };
struct SpanOutOfRange : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct MissingMention : Error { using Error::Error; };
struct NonProbabilityInput : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct EmptyOldClassSet : Error { using Error::Error; };
struct UnknownClass : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };
struct NoKnownClasses : Error { using Error::Error; };
struct MissingKnowledge : Error { using Error::Error; };
struct DuplicateClass : Error { using Error::Error; };
struct NegativePrev : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic RNG helpers
//
// All randomness in the library flows through splitmix64 streams derived from
// explicit seeds, so results are identical across platforms and standard
// library versions (std::shuffle / distributions are not portable).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() { return splitmix64(state_); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  // uniform double in [0, 1)
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Small dense-vector math
// ---------------------------------------------------------------------------

inline void require_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(std::string(where) + ": dimensions " +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
}

inline double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline Vec add(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "add");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "sub");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec hadamard(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "hadamard");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

inline Vec scaled(const Vec& a, double c) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
  return r;
}

inline Vec mean_of(const std::vector<Vec>& vs) {
  if (vs.empty()) throw EmptyClass("mean_of: empty vector set");
  Vec r(vs.front().size(), 0.0);
  for (const Vec& v : vs) {
    require_same_dim(r, v, "mean_of");
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += v[i];
  }
  for (double& x : r) x /= static_cast<double>(vs.size());
  return r;
}

inline Vec softmax(const Vec& z) {
  if (z.empty()) return {};
  double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

inline Vec log_softmax(const Vec& z) {
  if (z.empty()) return {};
  double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - m);
  double lse = m + std::log(sum);
  Vec r(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) r[i] = z[i] - lse;
  return r;
}

inline bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// String helpers shared by corpus/knowledge tokenization
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return s;
}

// Splits an identifier-like label into lowercase word tokens: breaks on
// punctuation/whitespace and on lowercase->uppercase camel-case boundaries.
// "Life.Marry" -> {"life","marry"}, "ChitChat" -> {"chit","chat"}.
inline std::vector<std::string> split_label_tokens(const std::string& label) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(to_lower(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < label.size(); ++i) {
    unsigned char c = label[i];
    if (std::isalnum(c)) {
      if (!cur.empty() && std::isupper(c) &&
          std::islower(static_cast<unsigned char>(cur.back()))) {
        flush();
      }
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace ifsed
