#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "cape/errors.hpp"
#include "cape/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cape;

TEST_CASE("init: zero biases, He variance, reproducible") {
  Rng rng(1);
  const ModelParams p = init_params(3, 40, rng);  // 1080 k1 draws
  CHECK(p.b1 == Tensor({40}));
  CHECK(p.b2 == Tensor({1}));
  const auto k = p.k1.data();
  const double mu = mean(k);
  double var = 0;
  for (double v : k) var += (v - mu) * (v - mu);
  var /= static_cast<double>(k.size() - 1);
  CHECK(std::abs(var / (2.0 / 27.0) - 1.0) < 0.2);

  Rng a(9), b(9);
  CHECK(init_params(3, 8, a) == init_params(3, 8, b));
  CHECK(p.parameter_count() == 40 * 3 * 9 + 40 + 40 * 9 + 1);
}

TEST_CASE("zero parameters predict one half") {
  const ModelParams p(3, 8);
  Rng rng(2);
  const Tensor probs = predict(p, oracle::random_tensor({3, 5, 6}, rng));
  CHECK(probs.shape() == Shape{5, 6});
  for (double v : probs.storage()) CHECK(v == 0.5);
}

TEST_CASE("large output bias saturates") {
  ModelParams p(3, 8);
  Rng rng(3);
  p.k1 = oracle::random_tensor(p.k1.shape(), rng);
  p.b2[0] = 20.0;
  const Tensor probs = predict(p, oracle::random_tensor({3, 4, 4}, rng));
  for (double v : probs.storage()) CHECK(std::abs(v - 1.0) < 1e-8);
}

TEST_CASE("forward matches the straight-line reference") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.below(3), f = 1 + rng.below(8);
    const std::size_t h = 1 + rng.below(7), w = 1 + rng.below(7);
    ModelParams p = init_params(c, f, rng);
    p.b1 = oracle::random_tensor(p.b1.shape(), rng, 0.3);
    p.b2 = oracle::random_tensor(p.b2.shape(), rng, 0.3);
    const Tensor x = oracle::random_tensor({c, h, w}, rng);
    const Tensor ref = oracle::model_forward(p.k1, p.b1, p.k2, p.b2, x);
    CHECK(max_abs_diff(predict(p, x), ref) < 1e-12);
  }
}

TEST_CASE("outputs stay strictly inside (0, 1)") {
  Rng rng(5);
  ModelParams p = init_params(3, 8, rng);
  for (auto* block : p.blocks()) *block *= 1e3;
  const Tensor probs = predict(p, oracle::random_tensor({3, 6, 6}, rng, 100.0));
  for (double v : probs.storage()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("interior of the output is translation equivariant") {
  Rng rng(6);
  const ModelParams p = init_params(3, 8, rng);
  const std::size_t H = 9, W = 10;
  const Tensor x = oracle::random_tensor({3, H, W}, rng);
  Tensor shifted({3, H, W});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) shifted.at(c, i, j) = j == 0 ? rng.normal() : x.at(c, i, j - 1);
    }
  }
  const Tensor a = predict(p, x);
  const Tensor b = predict(p, shifted);
  for (std::size_t i = 2; i + 2 < H; ++i) {
    for (std::size_t j = 3; j + 2 < W; ++j) CHECK(b.at(i, j) == a.at(i, j - 1));
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(7);
  const ModelParams p = init_params(2, 4, rng);
  ForwardCache cache;
  const Tensor probs = forward(p, oracle::random_tensor({2, 4, 4}, rng), cache);
  CHECK(backward(p, cache, Tensor(probs.shape())) == ModelGrads(2, 4));
}

TEST_CASE("gradient through the clamped logit is zero") {
  Rng rng(8);
  ModelParams p = init_params(2, 4, rng);
  p.b2[0] = 100.0;
  ForwardCache cache;
  const Tensor probs = forward(p, oracle::random_tensor({2, 4, 4}, rng), cache);
  CHECK(backward(p, cache, Tensor(probs.shape(), 1.0)) == ModelGrads(2, 4));
}

TEST_CASE("model gradients match central differences for L_D and L_C") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gd = support::make_grad_instance(rng, support::Loss::kD);
    CHECK(support::model_gradient_error(gd, support::Loss::kD) < 1e-5);
    const auto gc = support::make_grad_instance(rng, support::Loss::kC);
    CHECK(support::model_gradient_error(gc, support::Loss::kC) < 1e-5);
  }
}

TEST_CASE("gradient check on assorted shapes") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + rng.below(3), f = 1 + rng.below(5), s = 3 + rng.below(3);
    const auto g = support::make_grad_instance(rng, support::Loss::kD, c, f, s);
    CHECK(support::model_gradient_error(g, support::Loss::kD) < 1e-5);
  }
}

TEST_CASE("flatten and unflatten round-trip") {
  Rng rng(11);
  const ModelParams p = init_params(3, 5, rng);
  const Tensor flat = flatten(p);
  CHECK(flat.size() == p.parameter_count());
  CHECK(unflatten(flat, 3, 5) == p);
  CHECK_THROWS_AS(unflatten(flat, 3, 4), std::invalid_argument);
}

TEST_CASE("validate rejects inconsistent or non-finite parameters") {
  Rng rng(12);
  ModelParams p = init_params(3, 4, rng);
  CHECK_NOTHROW(p.validate());
  ModelParams bad = p;
  bad.b1 = Tensor({5});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.k2[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), NumericError);
  CHECK_THROWS_AS(predict(p, Tensor({2, 4, 4})), std::invalid_argument);
}

TEST_CASE("optimizer rejects a non-finite block before touching any weights") {
  Rng rng(13);
  ModelParams p = init_params(3, 4, rng);
  const ModelParams before = p;
  ModelOptimizer opt(p, AdamHyperParams{.lr = 1e-2});
  ModelGrads g = init_params(3, 4, rng);
  g.b2[0] = std::numeric_limits<double>::infinity();
  try {
    opt.step(p, g);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b2") != std::string::npos);
  }
  CHECK(p == before);
  CHECK(opt.steps() == 0);

  g.b2[0] = 0.5;
  opt.step(p, g);
  CHECK(opt.steps() == 1);
  CHECK_FALSE(p == before);
}

TEST_CASE("training steps reduce L_D on a fixed batch") {
  Rng rng(14);
  ModelParams p = init_params(2, 4, rng);
  const Tensor x = oracle::random_tensor({2, 6, 6}, rng);
  std::vector<double> y(36);
  for (std::size_t i = 0; i < 36; ++i) y[i] = x[i] > 0 ? 1.0 : 0.0;
  ModelOptimizer opt(p, AdamHyperParams{.lr = 1e-2});
  auto loss_at = [&](const ModelParams& q) { return loss_d(predict(q, x).data(), y).value; };
  const double start = loss_at(p);
  for (int i = 0; i < 200; ++i) {
    ForwardCache cache;
    const Tensor probs = forward(p, x, cache);
    LossResult r = loss_d(probs.data(), y);
    opt.step(p, backward(p, cache, Tensor(probs.shape(), std::move(r.grad))));
  }
  CHECK(loss_at(p) < 0.5 * start);
}
