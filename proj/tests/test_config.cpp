#include <catch2/catch_amalgamated.hpp>

#include "ifsed/config.hpp"
#include "support/testutil.hpp"

using ifsed::KeyValueConfig;

TEST_CASE("key=value parsing with comments and blanks", "[config]") {
  auto cfg = KeyValueConfig::parse_string(
      "# experiment\n"
      "loss.alpha = 0.3\n"
      "\n"
      "corpus.path = /tmp/some corpus.jsonl\n"
      "model.include_base=true\n");
  CHECK(cfg.get_double("loss.alpha") == 0.3);
  CHECK(cfg.get_string("corpus.path") == "/tmp/some corpus.jsonl");
  CHECK(cfg.get_bool("model.include_base"));
}

TEST_CASE("parse errors carry location and reason", "[config]") {
  CHECK_THROWS_AS(KeyValueConfig::parse_string("no equals sign"),
                  ifsed::ConfigError);
  auto cfg = KeyValueConfig::parse_string("train.epochs = twelve");
  CHECK_THROWS_AS(cfg.get_int("train.epochs"), ifsed::ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("train.epochs"), ifsed::ConfigError);
  CHECK_THROWS_AS(cfg.get_string("missing.key"), ifsed::ConfigError);
}

TEST_CASE("unknown keys are rejected at resolution", "[config]") {
  auto cfg = KeyValueConfig::parse_string("loss.alhpa = 0.1\n");
  CHECK_THROWS_WITH(ifsed::resolve_config(cfg),
                    Catch::Matchers::ContainsSubstring("loss.alhpa"));
}

TEST_CASE("environment overrides map double underscores to dots", "[config]") {
  auto cfg = KeyValueConfig::parse_string("loss.alpha = 0.1\n");
  const char* envp[] = {"IFSED_LOSS__ALPHA=0.9",
                        "IFSED_MEMORY__EXEMPLARS_PER_CLASS=2",
                        "UNRELATED=x", nullptr};
  cfg.apply_env_overrides(envp);
  CHECK(cfg.get_double("loss.alpha") == 0.9);
  CHECK(cfg.get_int("memory.exemplars_per_class") == 2);
  CHECK_FALSE(cfg.has("unrelated"));
}

TEST_CASE("per-variant defaults materialize", "[config]") {
  SECTION("ifsed-k") {
    auto r = ifsed::resolve_config(
        KeyValueConfig::parse_string("model.variant = ifsed-k\n"));
    CHECK(r.get_double("loss.alpha") == 0.1);
    CHECK(r.get_double("loss.beta") == 0.1);
    CHECK(r.get_double("loss.gamma") == 0.5);
    CHECK(r.get_int("train.epochs") == 50);
    CHECK(r.get_double("model.knowledge_mixture") == 0.2);
    CHECK(r.get_int("memory.exemplars_per_class") == 1);
    CHECK(r.get_bool("model.use_external_knowledge"));
  }
  SECTION("ifsed-kp") {
    auto r = ifsed::resolve_config(
        KeyValueConfig::parse_string("model.variant = ifsed-kp\n"));
    CHECK(r.get_double("loss.alpha") == 0.1);
    CHECK(r.get_double("loss.beta") == 0.5);
    CHECK(r.get_double("loss.gamma") == 0.7);
    CHECK(r.get_int("train.epochs") == 500);
    CHECK(r.get_bool("model.use_external_knowledge"));
  }
  SECTION("finetune forces ablation flags off") {
    auto r = ifsed::resolve_config(KeyValueConfig::parse_string(
        "model.variant = finetune\n"
        "model.use_external_knowledge = true\n"));
    CHECK_FALSE(r.get_bool("model.use_external_knowledge"));
    CHECK_FALSE(r.get_bool("model.use_mixture_loss"));
    CHECK_FALSE(r.get_bool("model.use_prototype_selection"));
    CHECK(r.get_double("loss.gamma") == 1.0);
    CHECK(r.get_double("loss.alpha") == 0.0);
  }
}

TEST_CASE("derived defaults and deterministic serialization", "[config]") {
  auto r = ifsed::resolve_config(KeyValueConfig::parse_string(
      "output.dir = /tmp/run1\n"
      "dataset.way = 10\n"
      "dataset.shot = 10\n"));
  CHECK(r.get_string("dataset.dir") == "/tmp/run1/dataset");
  CHECK(r.get_string("dataset.config_name") == "10-way-10-shot");

  std::string once = r.serialize();
  auto reparsed = KeyValueConfig::parse_string(once);
  CHECK(reparsed.serialize() == once);
  CHECK(ifsed::resolve_config(reparsed).serialize() == once);
}
