#include <cmath>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "terra/autodiff/ops.hpp"
#include "terra/autodiff/optim.hpp"
#include "terra/autodiff/params.hpp"

using namespace terra;
using namespace terra::ad;

TEST_CASE("conv2d with a 1x1 identity kernel leaves the input unchanged") {
  Rng rng(3);
  Tape<float> tape;
  Tensor<float> x({2, 3, 4, 5});
  for (float& v : x.data()) v = static_cast<float>(rng.normal());
  Tensor<float> k({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) k[c * 3 + c] = 1.0f;
  auto y = conv2d(tape.constant(x), tape.constant(k), std::nullopt, {1, 0});
  CHECK(y.value() == x);
}

TEST_CASE("conv2d of ones with a 3x3 ones kernel sums the neighbourhood") {
  Tape<double> tape;
  auto y = conv2d(tape.constant(Tensor<double>({1, 1, 5, 5}, 1.0)), tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0)),
                  std::nullopt, {1, 1});
  CHECK(y.value().at(0, 0, 2, 2) == 9.0);
  CHECK(y.value().at(0, 0, 0, 0) == 4.0);
  CHECK(y.value().at(0, 0, 0, 2) == 6.0);
}

TEST_CASE("group_norm of a constant tensor is zero before the affine") {
  Tape<double> tape;
  auto y = group_norm(tape.constant(Tensor<double>({2, 4, 3, 3}, 7.5)), tape.constant(Tensor<double>({4}, 1.0)),
                      tape.constant(Tensor<double>({4}, 0.0)), 2);
  for (double v : y.value().data()) CHECK(v == 0.0);
}

TEST_CASE("shape mismatches and unknown kinds are rejected") {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({3, 2}));
  CHECK_THROWS_AS(add(a, b), InvalidArgument);
  CHECK_THROWS_AS(matmul(a, a), InvalidArgument);
  CHECK_THROWS_AS(op_kind_from_string("softmax"), InvalidArgument);
  CHECK(op_kind_from_string("conv2d") == OpKind::kConv2d);
  auto img = tape.constant(Tensor<float>({1, 3, 4, 4}));
  CHECK_THROWS_AS(split_channels(img, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(group_norm(img, tape.constant(Tensor<float>({3})), tape.constant(Tensor<float>({3})), 2),
                  InvalidArgument);
}

TEST_CASE("non-finite values are a hard error") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1}, 1000.0));
  CHECK_THROWS_AS(exp(x), NumericError);
}

TEST_CASE("backward on mean((w*x - y)^2) matches the closed form") {
  const std::vector<double> xs{0.5, -1.0, 2.0, 3.0}, ys{1.0, 0.0, -2.0, 4.0};
  const double w = 0.7;
  Tape<double> tape;
  auto wv = tape.variable(Tensor<double>({4}, w));
  auto x = tape.constant(Tensor<double>({4}, xs));
  auto y = tape.constant(Tensor<double>({4}, ys));
  auto loss = mean_square(sub(mul(wv, x), y));
  tape.backward(loss);
  // The shared scalar w is broadcast as four copies; their gradients sum.
  const Tensor<double> gw = tape.grad(wv);
  double grad = 0;
  for (double g : gw.data()) grad += g;
  double expected = 0;
  for (size_t i = 0; i < xs.size(); ++i) expected += xs[i] * (w * xs[i] - ys[i]);
  expected *= 2.0 / static_cast<double>(xs.size());
  CHECK(grad == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("unreachable parameters get zero gradients; tape is single-use") {
  BasicParameterSet<double> params;
  params.add("used", Tensor<double>({3}, 2.0));
  params.add("unused", Tensor<double>({2}, 5.0));
  params.add("frozen", Tensor<double>({3}, 1.0), false);
  Tape<double> tape;
  Binder<double> bind(tape, params);
  auto loss = mean_square(mul(bind("used"), bind("frozen")));
  auto grads = backward(bind, loss);
  CHECK(grads.size() == 2);
  CHECK(grads.at("unused") == Tensor<double>({2}));
  CHECK(grads.at("used")[0] == doctest::Approx(2.0 * 2.0 / 3.0));
  CHECK_THROWS_AS(tape.backward(loss), InvalidArgument);
  CHECK_THROWS_AS(mean(bind("used")), InvalidArgument);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2, 2}, 1.0));
  CHECK_THROWS_AS(tape.backward(scalar_affine(x, 2.0)), InvalidArgument);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParameterSet p;
  p.add("a", Tensor<float>({1}));
  CHECK_THROWS_AS(p.add("a", Tensor<float>({1})), InvalidArgument);
}

TEST_CASE("concat then split is the identity on values and gradients") {
  Rng rng(11);
  Tape<double> tape;
  auto a = tape.variable(test::random_tensor(rng, {2, 3, 2, 2}));
  auto b = tape.variable(test::random_tensor(rng, {2, 1, 2, 2}));
  auto parts = split_channels(concat_channels<double>({a, b}), {3, 1});
  CHECK(parts[0].value() == a.value());
  CHECK(parts[1].value() == b.value());
  auto wa = test::random_tensor(rng, {2, 3, 2, 2});
  auto wb = test::random_tensor(rng, {2, 1, 2, 2});
  tape.backward(add(sum(mul(parts[0], tape.constant(wa))), sum(mul(parts[1], tape.constant(wb)))));
  CHECK(tape.grad(a) == wa);
  CHECK(tape.grad(b) == wb);
}

TEST_CASE("every op kind passes the finite-difference gradient check") {
  Rng rng(2024);
  for (OpKind kind : all_op_kinds()) {
    for (int trial = 0; trial < 20; ++trial) {
      auto c = test::random_case(kind, rng);
      auto res = test::check_gradients(c, rng);
      INFO(c.description << " trial " << trial);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    Rng rng(5);
    Tape<float> tape;
    Tensor<float> x({2, 4, 6, 6}), w({8, 4, 3, 3});
    for (float& v : x.data()) v = static_cast<float>(rng.normal());
    for (float& v : w.data()) v = static_cast<float>(rng.normal());
    auto wv = tape.variable(w);
    auto y = silu(conv2d(tape.constant(x), wv, std::nullopt, {2, 1}));
    tape.backward(mean_square(y));
    return std::make_pair(y.value(), tape.grad(wv));
  };
  CHECK(run() == run());
}

// --- optimizers -------------------------------------------------------------

TEST_CASE("adamw with zero gradient only applies the decay") {
  BasicParameterSet<double> p;
  p.add("w", Tensor<double>({3}, std::vector<double>{1.0, -2.0, 4.0}));
  GradMap<double> g{{"w", Tensor<double>({3})}};
  OptimizerState<double> st;
  adamw_step(p, g, st, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.01});
  CHECK(p.at("w").value[0] == doctest::Approx(0.999));
  CHECK(p.at("w").value[1] == doctest::Approx(-1.998));
  CHECK(p.at("w").value[2] == doctest::Approx(3.996));
  for (double m : st.first_moment.at("w").data()) CHECK(m == 0.0);
  for (double v : st.second_moment.at("w").data()) CHECK(v == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step with unit gradient moves by -lr") {
  BasicParameterSet<double> p;
  p.add("w", Tensor<double>({1}, 0.0));
  GradMap<double> g{{"w", Tensor<double>({1}, 1.0)}};
  OptimizerState<double> st;
  adamw_step(p, g, st, AdamConfig{0.05, 0.9, 0.999, 1e-8, 0.0});
  CHECK(p.at("w").value[0] == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("adamw drives (p-3)^2 near its minimum within 100 steps") {
  BasicParameterSet<double> p;
  p.add("p", Tensor<double>({1}, 0.0));
  OptimizerState<double> st;
  for (int i = 0; i < 100; ++i) {
    GradMap<double> g{{"p", Tensor<double>({1}, 2.0 * (p.at("p").value[0] - 3.0))}};
    adamw_step(p, g, st, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  }
  CHECK(std::abs(p.at("p").value[0] - 3.0) < 0.5);
}

namespace {
// Scalar transcription of the Adam update, used as the reference.
struct ReferenceAdam {
  double m = 0, v = 0;
  int64_t t = 0;
  double step(double p, double g, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return p - lr * mhat / (std::sqrt(vhat) + eps);
  }
};
}  // namespace

TEST_CASE("adam equals adamw with wd=0 and the reference update bit-for-bit") {
  Rng rng(9);
  BasicParameterSet<double> pa, pw;
  std::vector<double> ref(4);
  std::vector<ReferenceAdam> oracle(4);
  Tensor<double> init({4});
  for (int i = 0; i < 4; ++i) init[i] = ref[static_cast<size_t>(i)] = rng.normal();
  pa.add("w", init);
  pw.add("w", init);
  OptimizerState<double> sa, sw;
  const AdamConfig cfg{1e-2, 0.9, 0.999, 1e-8, 0.0};
  for (int step = 0; step < 50; ++step) {
    Tensor<double> g({4});
    for (int i = 0; i < 4; ++i) g[i] = rng.normal();
    adam_step(pa, GradMap<double>{{"w", g}}, sa, cfg);
    adamw_step(pw, GradMap<double>{{"w", g}}, sw, cfg);
    for (int i = 0; i < 4; ++i)
      ref[static_cast<size_t>(i)] = oracle[static_cast<size_t>(i)].step(ref[static_cast<size_t>(i)], g[i], cfg.lr,
                                                                         cfg.beta1, cfg.beta2, cfg.eps);
  }
  CHECK(pa.at("w").value == pw.at("w").value);
  for (int i = 0; i < 4; ++i) CHECK(pa.at("w").value[i] == ref[static_cast<size_t>(i)]);
}

TEST_CASE("adam leaves frozen parameters and zero gradients alone") {
  BasicParameterSet<double> p;
  p.add("frozen", Tensor<double>({2}, 1.5), false);
  p.add("w", Tensor<double>({2}, 0.25));
  OptimizerState<double> st;
  adam_step(p, GradMap<double>{{"w", Tensor<double>({2})}}, st, AdamConfig{0.1});
  CHECK(p.at("frozen").value == Tensor<double>({2}, 1.5));
  CHECK(p.at("w").value == Tensor<double>({2}, 0.25));
  CHECK_THROWS_AS(adam_step(p, GradMap<double>{{"w", Tensor<double>({3})}}, st, AdamConfig{0.1}), InvalidArgument);
}
