#include <catch2/catch_amalgamated.hpp>

#include "ifsed/objectives.hpp"
#include "support/testutil.hpp"

using ifsed::Vec;

TEST_CASE("cross entropy basics", "[objectives]") {
  SECTION("perfect one-hot prediction is zero") {
    CHECK(ifsed::ce_loss({{0.0, 1.0, 0.0}}, {{0.0, 1.0, 0.0}}) == 0.0);
  }
  SECTION("uniform prediction over C classes is log C") {
    for (int c : {2, 3, 7}) {
      Vec p(c, 1.0 / c);
      Vec y(c, 0.0);
      y[1 % c] = 1.0;
      CHECK(ifsed::ce_loss({p}, {y}) ==
            Catch::Approx(std::log(double(c))).margin(1e-12));
    }
  }
  SECTION("random batch matches a scalar loop oracle") {
    ifsed::Rng rng(3);
    std::vector<Vec> probs, labels;
    double expected = 0.0;
    const int batch = 9;
    for (int s = 0; s < batch; ++s) {
      Vec z = testutil::random_vec(rng, 5, -2.0, 2.0);
      Vec p = ifsed::softmax(z);
      int gold = static_cast<int>(rng.below(5));
      Vec y(5, 0.0);
      y[gold] = 1.0;
      probs.push_back(p);
      labels.push_back(y);
      expected += -std::log(p[gold]);
    }
    expected /= batch;
    CHECK(ifsed::ce_loss(probs, labels) == Catch::Approx(expected).margin(1e-12));
  }
  SECTION("inputs off the simplex are rejected") {
    CHECK_THROWS_AS(ifsed::ce_loss({{0.5, 0.6}}, {{1.0, 0.0}}),
                    ifsed::NonProbabilityInput);
    CHECK_THROWS_AS(ifsed::ce_loss({{-0.1, 1.1}}, {{1.0, 0.0}}),
                    ifsed::NonProbabilityInput);
    // small numerical slack is tolerated
    CHECK_NOTHROW(ifsed::ce_loss({{0.5 + 4e-6, 0.5}}, {{1.0, 0.0}}));
  }
}

TEST_CASE("feature distillation", "[objectives]") {
  SECTION("identical features give zero") {
    std::vector<Vec> f = {{1.0, 2.0}, {-3.0, 0.5}};
    CHECK(ifsed::feature_distill(f, f) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("antipodal features give two") {
    std::vector<Vec> f = {{1.0, 2.0}};
    std::vector<Vec> g = {{-2.0, -4.0}};
    CHECK(ifsed::feature_distill(f, g) == Catch::Approx(2.0).margin(1e-12));
  }
  SECTION("random batch matches the normalize-then-dot oracle") {
    ifsed::Rng rng(8);
    std::vector<Vec> cur, snap;
    double expected = 0.0;
    for (int s = 0; s < 7; ++s) {
      Vec a = testutil::random_vec(rng, 6);
      Vec b = testutil::random_vec(rng, 6);
      a[0] += 2.0;
      b[0] += 2.0;
      cur.push_back(a);
      snap.push_back(b);
      double na = ifsed::norm2(a), nb = ifsed::norm2(b);
      double cos = ifsed::dot(a, b) / (na * nb);
      expected += 1.0 - cos;
    }
    expected /= 7.0;
    CHECK(ifsed::feature_distill(cur, snap) ==
          Catch::Approx(expected).margin(1e-10));
    CHECK(ifsed::feature_distill(cur, snap) >= 0.0);
    CHECK(ifsed::feature_distill(cur, snap) <= 2.0);
  }
  SECTION("zero vectors are rejected") {
    CHECK_THROWS_AS(ifsed::feature_distill({{0.0, 0.0}}, {{1.0, 0.0}}),
                    ifsed::ZeroVector);
  }
}

TEST_CASE("prediction distillation", "[objectives]") {
  SECTION("matching logits give the soft-target entropy") {
    Vec o{1.0, -0.5, 2.0};
    double t = 2.0;
    Vec soft = ifsed::softmax(ifsed::scaled(o, 1.0 / t));
    double entropy = 0.0;
    for (double p : soft) entropy -= p * std::log(p);
    CHECK(ifsed::prediction_distill({o}, {o}, t) ==
          Catch::Approx(entropy).margin(1e-12));
  }
  SECTION("one old class is exactly zero") {
    CHECK(ifsed::prediction_distill({{3.7}}, {{-12.0}}, 2.0) == 0.0);
  }
  SECTION("large temperature flattens both to uniform") {
    Vec o{2.0, -1.0, 0.5, 1.0};
    Vec op{-3.0, 0.0, 4.0, 1.5};
    CHECK(ifsed::prediction_distill({o}, {op}, 1e4) ==
          Catch::Approx(std::log(4.0)).margin(1e-3));
  }
  SECTION("empty old-class set is an error") {
    CHECK_THROWS_AS(ifsed::prediction_distill({Vec{}}, {Vec{}}, 2.0),
                    ifsed::EmptyOldClassSet);
  }
}

TEST_CASE("total loss composition", "[objectives]") {
  ifsed::LossWeights finetune{0.0, 0.0, 1.0, 2.0};
  CHECK(ifsed::total_loss(0.7, 0.3, 1.9, finetune) == 1.9);

  ifsed::LossWeights k{0.1, 0.1, 0.5, 2.0};
  CHECK(ifsed::total_loss(1.0, 2.0, 3.0, k) ==
        Catch::Approx(0.1 + 0.2 + 1.5).margin(1e-12));

  ifsed::LossWeights kp{0.1, 0.5, 0.7, 2.0};
  CHECK(ifsed::total_loss(1.0, 1.0, 1.0, kp) ==
        Catch::Approx(1.3).margin(1e-12));

  SECTION("scaling all weights scales the total") {
    ifsed::Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      double fd = rng.uniform(0.0, 2.0), pd = rng.uniform(0.0, 2.0),
             ce = rng.uniform(0.0, 2.0), c = rng.uniform(0.1, 5.0);
      ifsed::LossWeights w{0.2, 0.4, 0.8, 2.0};
      ifsed::LossWeights scaled_w{0.2 * c, 0.4 * c, 0.8 * c, 2.0};
      CHECK(ifsed::total_loss(fd, pd, ce, scaled_w) ==
            Catch::Approx(c * ifsed::total_loss(fd, pd, ce, w)).margin(1e-10));
    }
  }
  SECTION("monotone in each component") {
    ifsed::LossWeights w{0.1, 0.1, 0.5, 2.0};
    CHECK(ifsed::total_loss(1.1, 1.0, 1.0, w) > ifsed::total_loss(1.0, 1.0, 1.0, w));
    CHECK(ifsed::total_loss(1.0, 1.1, 1.0, w) > ifsed::total_loss(1.0, 1.0, 1.0, w));
    CHECK(ifsed::total_loss(1.0, 1.0, 1.1, w) > ifsed::total_loss(1.0, 1.0, 1.0, w));
  }
  SECTION("weight validation") {
    CHECK_THROWS_AS(ifsed::LossWeights({-0.1, 0.0, 1.0, 2.0}).validate(),
                    ifsed::ConfigError);
    CHECK_THROWS_AS(ifsed::LossWeights({0.1, 0.1, 0.5, 0.5}).validate(),
                    ifsed::ConfigError);
  }
  SECTION("non-finite components are rejected") {
    ifsed::LossWeights w{0.1, 0.1, 0.5, 2.0};
    CHECK_THROWS_AS(
        ifsed::total_loss(std::numeric_limits<double>::infinity(), 0, 0, w),
        ifsed::NonFiniteGradient);
  }
}

TEST_CASE("graph losses agree with the plain formulas", "[objectives]") {
  ifsed::Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(5));
    Vec logits = testutil::random_vec(rng, m, -2.0, 2.0);
    int gold = static_cast<int>(rng.below(m));

    ifsed::ad::Tape tape;
    int z = tape.leaf_column(logits);
    double graph_ce = tape.value(ifsed::ce_loss_graph(tape, z, gold)).a[0];
    Vec y(m, 0.0);
    y[gold] = 1.0;
    CHECK(graph_ce ==
          Catch::Approx(ifsed::ce_loss({ifsed::softmax(logits)}, {y}))
              .margin(1e-10));

    Vec f = testutil::random_vec(rng, 5);
    Vec fp = testutil::random_vec(rng, 5);
    f[0] += 2.0;
    fp[0] += 2.0;
    double graph_fd =
        tape.value(ifsed::feature_distill_graph(tape, tape.leaf_column(f), fp))
            .a[0];
    CHECK(graph_fd ==
          Catch::Approx(ifsed::feature_distill({f}, {fp})).margin(1e-10));

    Vec o = testutil::random_vec(rng, m, -2.0, 2.0);
    Vec op = testutil::random_vec(rng, m, -2.0, 2.0);
    double graph_pd =
        tape.value(ifsed::prediction_distill_graph(tape, tape.leaf_column(o),
                                                   op, 2.0))
            .a[0];
    CHECK(graph_pd ==
          Catch::Approx(ifsed::prediction_distill({o}, {op}, 2.0)).margin(1e-10));
  }
}

TEST_CASE("total loss gradients match finite differences", "[objectives]") {
  // d(total)/d(logits) and d(total)/d(features) on batches <= 8, dims <= 16
  ifsed::Rng rng(33);
  ifsed::LossWeights w{0.1, 0.1, 0.5, 2.0};
  const int batch = 4, m = 6, dim = 12;

  std::vector<Vec> snap_logits, snap_feats;
  for (int s = 0; s < batch; ++s) {
    snap_logits.push_back(testutil::random_vec(rng, m, -1.5, 1.5));
    Vec f = testutil::random_vec(rng, dim);
    f[0] += 2.0;
    snap_feats.push_back(f);
  }

  std::vector<Vec> logits, feats;
  std::vector<int> gold;
  for (int s = 0; s < batch; ++s) {
    logits.push_back(testutil::random_vec(rng, m, -1.5, 1.5));
    Vec f = testutil::random_vec(rng, dim);
    f[0] += 2.0;
    feats.push_back(f);
    gold.push_back(static_cast<int>(rng.below(m)));
  }

  auto build = [&](ifsed::ad::Tape& tape, const std::vector<int>& logit_nodes,
                   const std::vector<int>& feat_nodes) {
    std::vector<int> ce, fd, pd;
    for (int s = 0; s < batch; ++s) {
      ce.push_back(ifsed::ce_loss_graph(tape, logit_nodes[s], gold[s]));
      fd.push_back(ifsed::feature_distill_graph(tape, feat_nodes[s], snap_feats[s]));
      pd.push_back(ifsed::prediction_distill_graph(tape, logit_nodes[s],
                                                   snap_logits[s], w.temperature));
    }
    int loss = tape.scale(tape.mean(ce), w.gamma);
    loss = tape.add(loss, tape.scale(tape.mean(fd), w.alpha));
    return tape.add(loss, tape.scale(tape.mean(pd), w.beta));
  };

  auto eval_at = [&]() {
    ifsed::ad::Tape tape;
    std::vector<int> ln, fn;
    for (int s = 0; s < batch; ++s) {
      ln.push_back(tape.leaf_column(logits[s]));
      fn.push_back(tape.leaf_column(feats[s]));
    }
    return tape.value(build(tape, ln, fn)).a[0];
  };

  ifsed::ad::Tape tape;
  std::vector<int> ln, fn;
  for (int s = 0; s < batch; ++s) {
    ln.push_back(tape.leaf_column(logits[s]));
    fn.push_back(tape.leaf_column(feats[s]));
  }
  int loss = build(tape, ln, fn);
  tape.backward(loss);

  const double eps = 1e-6;
  for (int s = 0; s < batch; ++s) {
    for (int i = 0; i < m; ++i) {
      double saved = logits[s][i];
      logits[s][i] = saved + eps;
      double plus = eval_at();
      logits[s][i] = saved - eps;
      double minus = eval_at();
      logits[s][i] = saved;
      double fd_grad = (plus - minus) / (2.0 * eps);
      REQUIRE(std::abs(tape.grad(ln[s]).a[i] - fd_grad) <=
              1e-4 * std::max(1.0, std::abs(fd_grad)));
    }
    for (int i = 0; i < dim; ++i) {
      double saved = feats[s][i];
      feats[s][i] = saved + eps;
      double plus = eval_at();
      feats[s][i] = saved - eps;
      double minus = eval_at();
      feats[s][i] = saved;
      double fd_grad = (plus - minus) / (2.0 * eps);
      REQUIRE(std::abs(tape.grad(fn[s]).a[i] - fd_grad) <=
              1e-4 * std::max(1.0, std::abs(fd_grad)));
    }
  }
}

TEST_CASE("prediction distillation is minimized at matching softmax",
          "[objectives]") {
  // optimize a free logit vector by gradient descent
  ifsed::Rng rng(5);
  Vec target = testutil::random_vec(rng, 5, -2.0, 2.0);
  Vec o = testutil::random_vec(rng, 5, -2.0, 2.0);
  const double t = 2.0;
  for (int step = 0; step < 4000; ++step) {
    ifsed::ad::Tape tape;
    int on = tape.leaf_column(o);
    int loss = ifsed::prediction_distill_graph(tape, on, target, t);
    tape.backward(loss);
    for (int i = 0; i < 5; ++i) o[i] -= 0.5 * tape.grad(on).a[i];
  }
  Vec got = ifsed::softmax(ifsed::scaled(o, 1.0 / t));
  Vec want = ifsed::softmax(ifsed::scaled(target, 1.0 / t));
  for (int i = 0; i < 5; ++i) {
    CHECK(got[i] == Catch::Approx(want[i]).margin(1e-4));
  }
}
