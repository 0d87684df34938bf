#include <catch2/catch_amalgamated.hpp>

#include "ifsed/encoders.hpp"
#include "support/testutil.hpp"

namespace {

struct TestModel {
  ifsed::EncoderModel model;
  ifsed::ad::ParamStore params;

  explicit TestModel(int ctx = 6, int d = 8, std::uint64_t seed = 11,
                     bool freeze = true)
      : model(ifsed::EncoderDims{ctx, d},
              ifsed::BackendConfig{"toy", ctx, 123, freeze, ""}) {
    model.register_params(params, seed);
  }
};

ifsed::Frame small_frame() {
  ifsed::Frame f;
  f.frame_id = "meeting";
  f.definition = {"people", "gather", "to", "talk"};
  f.frame_elements = {"Attendees", "Place"};
  f.lexical_units = {"meet.v", "gathering.n"};
  return f;
}

}  // namespace

TEST_CASE("sample and knowledge embeddings share one space", "[encoders]") {
  TestModel tm;
  auto mention = testutil::mention("m1", {"they", "met", "yesterday"}, 1, 2, "X");
  auto s = tm.model.encode_sample(tm.params, mention);
  auto k = tm.model.encode_knowledge(tm.params, small_frame());
  CHECK(s.s.size() == k.k.size());
  CHECK(s.s.size() == 8);
  CHECK(ifsed::all_finite(s.s));
  CHECK(ifsed::all_finite(k.k));
}

TEST_CASE("encoding is deterministic", "[encoders]") {
  TestModel tm;
  auto mention = testutil::mention("m1", {"a", "storm", "hit"}, 1, 2, "X");
  auto s1 = tm.model.encode_sample(tm.params, mention);
  auto s2 = tm.model.encode_sample(tm.params, mention);
  CHECK(s1.s == s2.s);  // bit-identical

  auto k1 = tm.model.encode_knowledge(tm.params, small_frame());
  auto k2 = tm.model.encode_knowledge(tm.params, small_frame());
  CHECK(k1.k == k2.k);
  CHECK(k1.lexical_summary == k2.lexical_summary);
  CHECK(k1.entity_summary == k2.entity_summary);
}

TEST_CASE("single-token sentence puts all attention on the trigger",
          "[encoders]") {
  TestModel tm;
  auto mention = testutil::mention("m1", {"explode"}, 0, 1, "X");
  auto s = tm.model.encode_sample(tm.params, mention);
  REQUIRE(s.sentence_attention.size() == 1);
  CHECK(s.sentence_attention[0] == 1.0);
}

TEST_CASE("attention distributions are valid probabilities", "[encoders]") {
  TestModel tm;
  auto k = tm.model.encode_knowledge(tm.params, small_frame());
  REQUIRE(k.lexical_attention.size() == 2);  // one distribution per lexical unit
  for (const auto& w : k.lexical_attention) {
    REQUIRE(w.size() == 4);  // definition length
    double sum = 0.0;
    for (double x : w) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-6));
  }
  REQUIRE(k.entity_attention.size() == 2);  // one weight per frame element
  double esum = 0.0;
  for (double x : k.entity_attention) esum += x;
  CHECK(esum == Catch::Approx(1.0).margin(1e-6));

  auto mention = testutil::mention("m1", {"the", "crowd", "met", "here"}, 2, 3, "X");
  auto s = tm.model.encode_sample(tm.params, mention);
  double ssum = 0.0;
  for (double x : s.sentence_attention) ssum += x;
  CHECK(ssum == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("frames without elements use the null-entity path", "[encoders]") {
  TestModel tm;
  ifsed::Frame f = small_frame();
  f.frame_elements.clear();
  auto k = tm.model.encode_knowledge(tm.params, f);
  CHECK(ifsed::all_finite(k.k));
  CHECK(k.entity_attention.size() == 1);
  CHECK(k.entity_attention[0] == 1.0);
}

TEST_CASE("invalid spans are rejected", "[encoders]") {
  TestModel tm;
  auto bad = testutil::mention("m1", {"a", "b"}, 2, 3, "X");
  CHECK_THROWS_AS(tm.model.encode_sample(tm.params, bad), ifsed::SpanOutOfRange);
}

TEST_CASE("in-span token changes always move the embedding", "[encoders]") {
  TestModel tm;
  ifsed::Rng rng(2024);
  int changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> tokens;
    int len = 3 + static_cast<int>(rng.below(6));
    for (int i = 0; i < len; ++i) {
      tokens.push_back("t" + std::to_string(rng.below(50)));
    }
    int pos = static_cast<int>(rng.below(len));
    auto base = testutil::mention("m", tokens, pos, pos + 1, "X");
    auto perturbed = base;
    perturbed.tokens[pos] = "q" + std::to_string(trial);  // new token id
    auto s0 = tm.model.encode_sample(tm.params, base);
    auto s1 = tm.model.encode_sample(tm.params, perturbed);
    if (s0.s != s1.s) ++changed;
  }
  CHECK(changed == 100);
}

TEST_CASE("batch encoding equals the sequential oracle", "[encoders]") {
  TestModel tm;
  CHECK(tm.model.encode_batch(tm.params, std::vector<ifsed::EventMention>{})
            .empty());

  ifsed::Rng rng(7);
  std::vector<ifsed::EventMention> batch;
  for (int i = 0; i < 128; ++i) {
    std::vector<std::string> tokens;
    int len = 2 + static_cast<int>(rng.below(5));
    for (int j = 0; j < len; ++j)
      tokens.push_back("w" + std::to_string(rng.below(40)));
    int pos = static_cast<int>(rng.below(len));
    batch.push_back(testutil::mention("b" + std::to_string(i), tokens, pos,
                                      pos + 1, "X"));
  }
  auto encoded = tm.model.encode_batch(tm.params, batch);
  REQUIRE(encoded.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto single = tm.model.encode_sample(tm.params, batch[i]);
    REQUIRE(encoded[i].s == single.s);  // bit-for-bit
  }
}

TEST_CASE("batch errors carry the failing index", "[encoders]") {
  TestModel tm;
  std::vector<ifsed::EventMention> batch = {
      testutil::mention("ok", {"a", "b"}, 0, 1, "X"),
      testutil::mention("bad", {"a", "b"}, 0, 5, "X")};
  CHECK_THROWS_WITH(tm.model.encode_batch(tm.params, batch),
                    Catch::Matchers::ContainsSubstring("item 1"));
}

TEST_CASE("feed-forward gradients match finite differences", "[encoders]") {
  TestModel tm(5, 6, 21, true);
  auto mention = testutil::mention("m", {"x1", "x2", "x3"}, 1, 2, "X");
  ifsed::Rng probe_rng(5);
  ifsed::Vec probe = testutil::random_vec(probe_rng, 6);

  const ifsed::FeedForwardHandles& ff = tm.model.handles().samp_ff;
  for (int handle : {ff.w1, ff.b1, ff.w2, ff.b2}) {
    ifsed::ad::Tape tape;
    ifsed::GraphBuilder g = tm.model.builder(tape, tm.params, /*train=*/true);
    ifsed::SampleGraph sg = tm.model.encode_sample_graph(g, mention);
    int root = tape.dot(sg.s, tape.leaf_column(probe));
    tape.backward(root);

    ifsed::ad::Tensor analytic;
    tape.for_each_param([&](int h, const ifsed::ad::Tensor& grad) {
      if (h == handle) analytic = grad;
    });
    REQUIRE(analytic.size() > 0);

    const double eps = 1e-5;
    ifsed::ad::Tensor& value = tm.params.value(handle);
    for (int i = 0; i < value.size(); i += std::max(1, value.size() / 17)) {
      double saved = value.a[i];
      auto eval = [&](double delta) {
        value.a[i] = saved + delta;
        auto s = tm.model.encode_sample(tm.params, mention);
        value.a[i] = saved;
        return ifsed::dot(s.s, probe);
      };
      double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
      REQUIRE(std::abs(analytic.a[i] - fd) <=
              1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("frozen backends keep the mixing layer out of the gradient",
          "[encoders]") {
  auto grads_for = [](bool freeze) {
    TestModel tm(5, 6, 3, freeze);
    auto mention = testutil::mention("m", {"a", "b"}, 0, 1, "X");
    ifsed::ad::Tape tape;
    ifsed::GraphBuilder g = tm.model.builder(tape, tm.params, true);
    ifsed::SampleGraph sg = tm.model.encode_sample_graph(g, mention);
    tape.backward(tape.sum(sg.s));
    bool mix_seen = false;
    tape.for_each_param([&](int h, const ifsed::ad::Tensor&) {
      if (h == tm.model.handles().mix_w) mix_seen = true;
    });
    return mix_seen;
  };
  CHECK_FALSE(grads_for(true));
  CHECK(grads_for(false));
}

TEST_CASE("pretrained backend reads a vectors file with hash fallback",
          "[encoders]") {
  testutil::TempDir dir("vectors");
  testutil::write_file(dir.file("vec.txt"),
                       "2 3\nhello 0.1 0.2 0.3\nworld -1 0 1\n");
  ifsed::BackendConfig bc{"pretrained", 4, 9, true, dir.file("vec.txt")};
  ifsed::TextBackend backend(bc);
  CHECK(backend.input_dim() == 3);
  CHECK(backend.base_embedding("hello") == ifsed::Vec{0.1, 0.2, 0.3});
  auto oov1 = backend.base_embedding("zzz");
  auto oov2 = backend.base_embedding("zzz");
  CHECK(oov1 == oov2);
  CHECK(oov1.size() == 3);

  // the mixing layer maps the file width onto the configured context width
  ifsed::EncoderModel model(ifsed::EncoderDims{4, 8}, bc);
  ifsed::ad::ParamStore params;
  model.register_params(params, 1);
  auto s = model.encode_sample(
      params, testutil::mention("m", {"hello", "world"}, 0, 1, "X"));
  CHECK(s.s.size() == 8);

  CHECK_THROWS_AS(
      ifsed::TextBackend(ifsed::BackendConfig{"pretrained", 4, 9, true, ""}),
      ifsed::ConfigError);
  testutil::write_file(dir.file("ragged.txt"), "a 1 2\nb 1\n");
  CHECK_THROWS_AS(ifsed::TextBackend(ifsed::BackendConfig{
                      "pretrained", 4, 9, true, dir.file("ragged.txt")}),
                  ifsed::ParseError);
}

TEST_CASE("named-tensor container round trips bit-for-bit", "[encoders]") {
  TestModel tm;
  ifsed::json j = ifsed::params_to_json(tm.params);
  CHECK(j.at("format") == "ifsed-tensors");
  CHECK(j.at("version") == 1);

  TestModel other(6, 8, 999);  // different init
  ifsed::params_from_json(other.params, j);
  for (std::size_t h = 0; h < tm.params.size(); ++h) {
    REQUIRE(other.params.value(static_cast<int>(h)).a ==
            tm.params.value(static_cast<int>(h)).a);
  }

  ifsed::json bad = j;
  bad["version"] = 2;
  CHECK_THROWS_AS(ifsed::params_from_json(other.params, bad), ifsed::ParseError);
}
