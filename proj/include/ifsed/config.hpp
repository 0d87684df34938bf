#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ifsed/common.hpp"

namespace ifsed {

// Flat key=value experiment configuration with dotted namespaces
// (loss.alpha, memory.exemplars_per_class). One file fully describes a run;
// resolved copies with all defaults materialized are written next to outputs
// so any run can be reproduced from its own record.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected 'key = value', got: " + s);
      }
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": empty key");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
  }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long long get_int(const std::string& key) const {
    return parse_int(key, get_string(key));
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_int(key, it->second);
  }

  double get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_double(key, it->second);
  }

  bool get_bool(const std::string& key) const {
    return parse_bool(key, get_string(key));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_bool(key, it->second);
  }

  // Environment overrides: IFSED_LOSS__ALPHA=0.3 sets loss.alpha. Double
  // underscore separates namespaces; names are matched case-insensitively.
  void apply_env_overrides(const char* const* envp,
                           const std::string& prefix = "IFSED_") {
    for (const char* const* e = envp; e && *e; ++e) {
      std::string entry(*e);
      auto eq = entry.find('=');
      if (eq == std::string::npos) continue;
      std::string name = entry.substr(0, eq);
      if (name.size() <= prefix.size() ||
          name.compare(0, prefix.size(), prefix) != 0) {
        continue;
      }
      std::string key = to_lower(name.substr(prefix.size()));
      std::size_t pos;
      while ((pos = key.find("__")) != std::string::npos) {
        key.replace(pos, 2, ".");
      }
      values_[key] = entry.substr(eq + 1);
    }
  }

  // Sorted, diff-able serialization.
  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << serialize();
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static long long parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      long long x = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not an integer: " + v);
    }
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: " + v);
    }
  }

  static bool parse_bool(const std::string& key, const std::string& v) {
    std::string s = to_lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key " + key + ": not a boolean: " + v);
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Known keys and defaults
// ---------------------------------------------------------------------------

struct ConfigKey {
  std::string name;
  std::string default_value;  // "" when derived or required at point of use
};

inline const std::vector<ConfigKey>& known_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"corpus.path", ""},
      {"frames.path", ""},
      {"frames.curated_map", ""},
      {"dataset.dir", ""},
      {"dataset.config_name", ""},
      {"dataset.way", "5"},
      {"dataset.shot", "5"},
      {"dataset.n_rounds", "5"},
      {"dataset.base_classes", "10"},
      {"dataset.base_train", "100"},
      {"dataset.base_eval", "50"},
      {"dataset.round_eval", "10"},
      {"dataset.ood_classes", "7"},
      {"dataset.ood_eval", "15"},
      {"dataset.eligible_classes", "67"},
      {"dataset.seed", "1"},
      {"model.variant", "ifsed-k"},
      {"model.use_external_knowledge", ""},
      {"model.use_mixture_loss", ""},
      {"model.use_prototype_selection", ""},
      {"model.knowledge_mixture", "0.2"},
      {"model.include_base", "false"},
      {"encoder.backend", "toy"},
      {"encoder.dim", "128"},
      {"encoder.ctx_dim", "64"},
      {"encoder.seed", "7"},
      {"encoder.freeze_backend", "true"},
      {"encoder.vectors_path", ""},
      {"adaptation.map_steps", "20"},
      {"adaptation.step_size", "0.1"},
      {"memory.exemplars_per_class", "1"},
      {"loss.alpha", ""},
      {"loss.beta", ""},
      {"loss.gamma", ""},
      {"loss.temperature", "2"},
      {"train.epochs", ""},
      {"train.batch_size", "4"},
      {"train.learning_rate", "0.05"},
      {"train.seed", "1"},
      {"output.dir", "out"},
  };
  return keys;
}

inline void validate_known_keys(const KeyValueConfig& cfg) {
  for (const auto& [k, v] : cfg.entries()) {
    (void)v;
    bool known = false;
    for (const auto& spec : known_config_keys()) {
      if (spec.name == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key: " + k);
  }
}

// Fills every known key, applying per-variant defaults for the loss weights
// and epoch count, and derives dependent defaults (dataset.dir, config name).
inline KeyValueConfig resolve_config(const KeyValueConfig& raw) {
  validate_known_keys(raw);
  KeyValueConfig out = raw;

  std::string variant = to_lower(out.get_string("model.variant", "ifsed-k"));
  if (variant != "ifsed-k" && variant != "ifsed-kp" && variant != "finetune") {
    throw ConfigError("model.variant must be ifsed-k, ifsed-kp or finetune");
  }
  out.set("model.variant", variant);

  auto default_for = [&](const std::string& key) -> std::string {
    if (key == "loss.alpha") return variant == "finetune" ? "0" : "0.1";
    if (key == "loss.beta") {
      if (variant == "finetune") return "0";
      return variant == "ifsed-kp" ? "0.5" : "0.1";
    }
    if (key == "loss.gamma") {
      if (variant == "finetune") return "1";
      return variant == "ifsed-kp" ? "0.7" : "0.5";
    }
    if (key == "train.epochs") return variant == "ifsed-kp" ? "500" : "50";
    if (key == "model.use_external_knowledge")
      return variant == "finetune" ? "false" : "true";
    if (key == "model.use_mixture_loss")
      return variant == "finetune" ? "false" : "true";
    if (key == "model.use_prototype_selection")
      return variant == "finetune" ? "false" : "true";
    return "";
  };

  for (const auto& spec : known_config_keys()) {
    if (out.has(spec.name)) continue;
    std::string v = default_for(spec.name);
    if (v.empty()) v = spec.default_value;
    out.set(spec.name, v);
  }

  if (out.get_string("dataset.dir").empty()) {
    out.set("dataset.dir", out.get_string("output.dir") + "/dataset");
  }
  if (out.get_string("dataset.config_name").empty()) {
    out.set("dataset.config_name",
            std::to_string(out.get_int("dataset.way")) + "-way-" +
                std::to_string(out.get_int("dataset.shot")) + "-shot");
  }

  // FINETUNE has no ablation degrees of freedom; IFSED-KP always uses
  // external knowledge as its support set.
  if (variant == "finetune") {
    out.set("model.use_external_knowledge", "false");
    out.set("model.use_mixture_loss", "false");
    out.set("model.use_prototype_selection", "false");
  } else if (variant == "ifsed-kp") {
    out.set("model.use_external_knowledge", "true");
  }

  return out;
}

}  // namespace ifsed
