#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "s2cast/error.hpp"
#include "s2cast/ops.hpp"
#include "s2cast/optimizer.hpp"

namespace s2cast::nn {
namespace {

constexpr double kStep = 1e-6;
constexpr double kTol = 1e-5;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.values()) v = static_cast<Real>(nd(rng));
  return t;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces the op output with a fixed random projection so every output entry matters.
double check_op(std::vector<Tensor> inputs, const Builder& build, std::uint64_t seed = 1) {
  auto projection = std::make_shared<Tensor>();
  auto f = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : in) vars.push_back(grads ? tape.variable(t) : tape.constant(t));
    Var y = build(tape, vars);
    const std::size_t n = y.value().size();
    if (projection->empty()) {
      std::mt19937_64 rng(seed);
      *projection = random_tensor({n, 1}, rng);
    }
    Var loss = sum(linear(reshape(y, {1, n}), tape.constant(*projection)));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const auto& v : vars) grads->push_back(v.grad().empty() ? Tensor(v.shape()) : v.grad());
    }
    return static_cast<double>(loss.value()[0]);
  };
  const auto r = testing::check_input_gradients(inputs, f, kStep);
  EXPECT_GT(r.checked, 0u);
  return r.max_rel_error;
}

SlotMask mask_of(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> valid) {
  return SlotMask{rows, cols, std::move(valid)};
}

TEST(OpGradients, Linear) {
  std::mt19937_64 rng(1);
  EXPECT_LT(check_op({random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return linear(v[0], v[1]); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }),
            kTol);
}

TEST(OpGradients, ElementwiseAndShapeOps) {
  std::mt19937_64 rng(2);
  EXPECT_LT(check_op({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({5}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return scale(v[0], Real(-2.5)); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({4, 6}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({2, 6}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return reshape(v[0], {3, 4}); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({2, 3, 2}, rng), random_tensor({2, 3, 4}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return concat_last(v[0], v[1]); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 7}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return slice_last(v[0], 2, 3); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 4}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return broadcast_expand(v[0], 5); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 4}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return repeat_leading(v[0], 3); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({2, 3, 4}, rng), random_tensor({4}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return scale_columns(v[0], v[1]); }),
            kTol);
}

TEST(OpGradients, GatherLookupAndMasking) {
  std::mt19937_64 rng(3);
  auto rows = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{2, -1, 0, 2});
  EXPECT_LT(check_op({random_tensor({3, 5}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return gather_rows(v[0], rows, {2, 2, 5}); }),
            kTol);
  auto index = std::make_shared<const std::vector<std::int32_t>>(std::vector<std::int32_t>{0, 1, 1, 3, 3, 3});
  EXPECT_LT(check_op({random_tensor({4}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return lookup(v[0], index, {2, 3}); }),
            kTol);
  const auto mask = mask_of(2, 3, {1, 1, 0, 1, 0, 0});
  EXPECT_LT(check_op({random_tensor({4, 3, 2}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return mask_rows(v[0], mask); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({4, 3, 2}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return masked_mean(v[0], &mask); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({4, 3, 2}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return masked_mean(v[0], nullptr); }),
            kTol);
}

TEST(OpGradients, AttentionPieces) {
  std::mt19937_64 rng(4);
  for (std::size_t heads : {1u, 2u}) {
    EXPECT_LT(check_op({random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)},
                       [&](Tape&, const std::vector<Var>& v) { return attention_scores(v[0], v[1], heads); }),
              kTol);
    EXPECT_LT(check_op({random_tensor({2, heads, 3, 5}, rng), random_tensor({2, 5, 4}, rng)},
                       [](Tape&, const std::vector<Var>& v) { return attention_apply(v[0], v[1]); }),
              kTol);
  }
  const auto mask = mask_of(2, 4, {1, 1, 1, 0, 1, 0, 1, 1});
  EXPECT_LT(check_op({random_tensor({4, 2, 4, 4}, rng), random_tensor({2, 4, 4}, rng)},
                     [&](Tape&, const std::vector<Var>& v) { return masked_softmax(v[0], &v[1], &mask); }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 1, 2, 5}, rng)},
                     [](Tape&, const std::vector<Var>& v) { return masked_softmax(v[0], nullptr, nullptr); }),
            kTol);
}

TEST(OpGradients, ComposedAttentionAndFfn) {
  std::mt19937_64 rng(5);
  const auto mask = mask_of(1, 4, {1, 1, 1, 0});
  EXPECT_LT(check_op({random_tensor({2, 4, 4}, rng), random_tensor({4, 4}, rng, 0.5),
                      random_tensor({4, 4}, rng, 0.5), random_tensor({4, 4}, rng, 0.5),
                      random_tensor({1, 4, 4}, rng)},
                     [&](Tape&, const std::vector<Var>& v) {
                       const Var* bias = &v[4];
                       return attention(v[0], {v[1], v[2], v[3]}, 2, bias, &mask).context;
                     }),
            kTol);
  EXPECT_LT(check_op({random_tensor({3, 4}, rng), random_tensor({4, 6}, rng), random_tensor({6}, rng),
                      random_tensor({6, 4}, rng), random_tensor({4}, rng)},
                     [](Tape&, const std::vector<Var>& v) {
                       return ffn(v[0], {v[1], v[2], v[3], v[4]});
                     }),
            kTol);
}

TEST(OpGradients, MaeLossAwayFromKinks) {
  std::mt19937_64 rng(6);
  const Tensor target = random_tensor({3, 4}, rng);
  std::vector<Tensor> in = {random_tensor({3, 4}, rng)};
  auto f = [&](const std::vector<Tensor>& x, std::vector<Tensor>* grads) {
    Tape tape;
    Var p = grads ? tape.variable(x[0]) : tape.constant(x[0]);
    Var loss = mae_loss(p, target);
    if (grads) {
      tape.backward(loss);
      *grads = {p.grad()};
    }
    return static_cast<double>(loss.value()[0]);
  };
  EXPECT_LT(testing::check_input_gradients(in, f, kStep).max_rel_error, kTol);
}

TEST(MaskedSoftmax, RowsSumToOneAndMaskedKeysAreZero) {
  std::mt19937_64 rng(7);
  Tape tape;
  const auto mask = mask_of(1, 5, {1, 0, 1, 1, 0});
  Var w = masked_softmax(tape.constant(random_tensor({2, 1, 5, 5}, rng, 10.0)), nullptr, &mask);
  for (std::size_t row = 0; row < 10; ++row) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      const double v = w.value()[row * 5 + k];
      s += v;
      if (!mask(0, k)) EXPECT_EQ(v, 0.0);
      EXPECT_GE(v, 0.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Masked query rows are uniform over valid keys.
  EXPECT_NEAR(w.value()[1 * 5 + 0], 1.0 / 3.0, 1e-15);
}

TEST(MaskedSoftmax, StableForLargeScores) {
  Tape tape;
  Tensor s({1, 1, 1, 3}, std::vector<Real>{1000, 999, -1000});
  Var w = masked_softmax(tape.constant(s), nullptr, nullptr);
  EXPECT_NEAR(w.value()[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(w.value()[2], 0.0);
}

TEST(MaskedSoftmax, BiasShiftsLogits) {
  Tape tape;
  Tensor s({1, 1, 1, 2}, std::vector<Real>{0, 0});
  Var bias = tape.constant(Tensor({1, 1, 2}, std::vector<Real>{std::log(3.0), 0}));
  Var w = masked_softmax(tape.constant(s), &bias, nullptr);
  EXPECT_NEAR(w.value()[0], 0.75, 1e-15);
}

TEST(Tape, NonFiniteValuesNameTheOp) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, std::vector<Real>{1e308, 1e308}));
  try {
    scale(x, Real(10));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos) << e.what();
  }
  EXPECT_THROW(tape.constant(Tensor({1}, std::vector<Real>{std::nan("")})), NumericalError);
}

TEST(Tape, ParameterGradientsAccumulateAcrossBackwardCalls) {
  ParameterStore store;
  auto& p = store.add("w", Tensor({2}, std::vector<Real>{1, 2}));
  store.zero_grad();
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(scale(tape.param(p), Real(3))));
  }
  EXPECT_EQ(p.grad[0], 6.0);
  EXPECT_EQ(p.grad[1], 6.0);
  store.zero_grad();
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, SharedInputReceivesBothContributions) {
  Tape tape;
  Var x = tape.variable(Tensor({3}, std::vector<Real>{1, -2, 3}));
  tape.backward(sum(add(x, scale(x, Real(2)))));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 3.0);
}

TEST(Tape, ShapeErrorsAreInvalidArgument) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 2}));
  EXPECT_THROW(linear(a, b), std::invalid_argument);
  EXPECT_THROW(add(a, b), std::invalid_argument);
}

TEST(ParameterStore, LookupAndCounts) {
  ParameterStore store;
  store.add("a", Tensor({2, 3}));
  store.add("b", Tensor({4}));
  EXPECT_EQ(store.scalar_count(), 10u);
  EXPECT_TRUE(store.contains("b"));
  EXPECT_FALSE(store.contains("c"));
  EXPECT_THROW(store.get("c"), std::out_of_range);
}

TEST(Optimizer, SgdStep) {
  ParameterStore store;
  auto& p = store.add("w", Tensor({2}, std::vector<Real>{1, 1}));
  p.grad = Tensor({2}, std::vector<Real>{0.5, -1});
  sgd_step(store, Real(0.1));
  EXPECT_NEAR(p.value[0], 0.95, 1e-15);
  EXPECT_NEAR(p.value[1], 1.1, 1e-15);
}

TEST(Optimizer, AdamMatchesHandComputedSteps) {
  ParameterStore store;
  auto& p = store.add("w", Tensor({1}, std::vector<Real>{1}));
  auto& frozen = store.add("f", Tensor({1}, std::vector<Real>{5}));
  frozen.trainable = false;
  Adam adam(store, {Real(0.1), Real(0.9), Real(0.999), Real(1e-8)});
  double m = 0, v = 0, w = 1;
  const double grads[] = {0.5, -0.2, 0.3};
  for (int t = 1; t <= 3; ++t) {
    p.grad[0] = grads[t - 1];
    frozen.grad[0] = 1.0;
    adam.step();
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value[0], w, 1e-12);
  }
  EXPECT_EQ(frozen.value[0], 5.0);
  EXPECT_EQ(adam.steps(), 3);
}

}  // namespace
}  // namespace s2cast::nn
