#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "qubolab/qubo.hpp"
#include "qubolab/tensor.hpp"

using namespace qubolab;
using nn::Tape;
using nn::Tensor;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, bool rg = true, double lo = -1.0,
                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor::from(r, c, std::move(v), rg);
}

using LossFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

/// Largest relative error between tape gradients and central differences.
double grad_check(std::vector<Tensor> inputs, const LossFn& fn, double h = 1e-6) {
  Tape tape;
  auto loss = fn(tape, inputs);
  tape.backward(loss);
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.data()[i];
      Tape tp;
      tp.set_grad_enabled(false);
      t.data()[i] = orig + h;
      const double up = fn(tp, inputs).item();
      t.data()[i] = orig - h;
      const double down = fn(tp, inputs).item();
      t.data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = t.grad()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor::from(2, 2, {1, 2, 3}), nn::ShapeError);
  Tensor t(3, 4);
  EXPECT_EQ(t.numel(), 12u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), 12u);
  auto c = t.clone();
  EXPECT_FALSE(c.same_storage(t));
}

TEST(Ops, MatmulIdentity) {
  Tape tape;
  auto x = random_tensor(5, 4, 1, false);
  auto y = tape.matmul(x, Tensor::identity(4));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  EXPECT_THROW(tape.matmul(x, Tensor(5, 2)), nn::ShapeError);
}

TEST(Ops, SigmoidAndBceAtZero) {
  Tape tape;
  EXPECT_DOUBLE_EQ(tape.sigmoid(Tensor(1, 1)).item(), 0.5);
  Tensor z(4, 1);
  auto y = Tensor::from(4, 1, {0, 1, 1, 0});
  EXPECT_NEAR(tape.bce_with_logits(z, y).item(), std::log(2.0), 1e-15);
}

TEST(Ops, SpmmLaplacianAnnihilatesOnes) {
  auto lap = gen_lattice_laplacian(4);
  Tape tape;
  auto y = tape.spmm(lap.csr(), Tensor(16, 3, 1.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ops, SpmmBlockDiagonalOnStackedRows) {
  auto inst = gen_random_dense(3, 5);
  auto x = random_tensor(6, 2, 3, false);
  Tape tape;
  auto y = tape.spmm(inst.csr(), x);
  for (std::size_t blk = 0; blk < 2; ++blk) {
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<double> col(3);
      for (std::size_t i = 0; i < 3; ++i) col[i] = x.at(blk * 3 + i, c);
      auto ref = inst.csr().multiply(col);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.at(blk * 3 + i, c), ref[i], 1e-14);
    }
  }
  EXPECT_THROW(tape.spmm(inst.csr(), Tensor(4, 2)), nn::ShapeError);
}

TEST(Ops, BceMatchesNaiveForm) {
  Tape tape;
  for (double z = -20.0; z <= 20.0; z += 0.37) {
    for (double y : {0.0, 1.0}) {
      const long double s = 1.0L / (1.0L + std::exp(-static_cast<long double>(z)));
      const long double naive = -(y * std::log(s) + (1 - y) * std::log(1.0L - s));
      EXPECT_NEAR(tape.bce_with_logits(Tensor::from(1, 1, {z}), Tensor::from(1, 1, {y})).item(),
                  static_cast<double>(naive), 1e-9);
    }
  }
}

TEST(Ops, BroadcastsAndShapeErrors) {
  Tape tape;
  auto a = random_tensor(3, 2, 1, false);
  auto v = Tensor::from(3, 1, {1, 2, 3});
  auto r = Tensor::from(1, 2, {10, 20});
  auto b = tape.broadcast_add_col(a, v);
  auto c = tape.add_row(a, r);
  auto m = tape.mul_row(a, r);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_DOUBLE_EQ(b.at(i, j), a.at(i, j) + v.at(i, 0));
      EXPECT_DOUBLE_EQ(c.at(i, j), a.at(i, j) + r.at(0, j));
      EXPECT_DOUBLE_EQ(m.at(i, j), a.at(i, j) * r.at(0, j));
    }
  }
  EXPECT_THROW(tape.broadcast_add_col(a, Tensor(2, 1)), nn::ShapeError);
  EXPECT_THROW(tape.add_row(a, Tensor(1, 3)), nn::ShapeError);
  EXPECT_THROW(tape.add(a, Tensor(2, 3)), nn::ShapeError);
  EXPECT_THROW(tape.hadamard(a, Tensor(3, 1)), nn::ShapeError);
  EXPECT_THROW(tape.bce_with_logits(a, Tensor(2, 3)), nn::ShapeError);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Tape tape;
  Tensor x(1, 1, 0.0, true);
  tape.backward(tape.sum(tape.sigmoid(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  auto x = random_tensor(4, 3, 7);
  tape.backward(tape.sum(tape.hadamard(x, x)));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x.data()[i]);
}

TEST(Backward, ErrorsOnMisuse) {
  Tape tape;
  auto x = random_tensor(2, 2, 1);
  auto loss = tape.sum(tape.tanh(x));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
  tape.reset();
  auto y = tape.tanh(x);
  EXPECT_THROW(tape.backward(y), nn::ShapeError);
  Tape other;
  EXPECT_THROW(other.backward(Tensor(1, 1)), std::logic_error);
}

TEST(Backward, NoGradModeRecordsNothing) {
  Tape tape;
  tape.set_grad_enabled(false);
  auto x = random_tensor(2, 2, 1);
  auto y = tape.sum(tape.relu(x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, EveryPrimitive) {
  auto lap = gen_lattice_laplacian(2);
  auto a = gen_random_dense(4, 2);
  const std::vector<std::pair<const char*, LossFn>> cases = {
      {"matmul", [](Tape& t, auto& in) { return t.sum(t.matmul(in[0], in[1])); }},
      {"spmm", [&](Tape& t, auto& in) { return t.sum(t.hadamard(t.spmm(a.csr(), in[0]), in[0])); }},
      {"spmm_lap", [&](Tape& t, auto& in) { return t.sum(t.tanh(t.spmm(lap.csr(), in[0]))); }},
      {"add_sub", [](Tape& t, auto& in) { return t.sum(t.hadamard(t.add(in[0], in[0]), t.sub(in[0], t.scale(in[0], 0.3)))); }},
      {"broadcast_add_col", [](Tape& t, auto& in) { return t.sum(t.tanh(t.broadcast_add_col(in[0], in[2]))); }},
      {"row_ops", [](Tape& t, auto& in) { return t.sum(t.tanh(t.mul_row(t.add_row(in[0], in[3]), in[3]))); }},
      {"relu", [](Tape& t, auto& in) { return t.sum(t.hadamard(t.relu(in[0]), in[0])); }},
      {"sigmoid", [](Tape& t, auto& in) { return t.sum(t.sigmoid(t.scale(in[0], 2.0))); }},
      {"softplus", [](Tape& t, auto& in) { return t.sum(t.hadamard(t.softplus(in[0]), in[0])); }},
      {"asinh", [](Tape& t, auto& in) { return t.sum(t.asinh(t.scale(in[0], 5.0))); }},
      {"bce", [](Tape& t, auto& in) { return t.bce_with_logits(in[0], t.sigmoid(in[4])); }},
  };
  for (const auto& [name, fn] : cases) {
    std::vector<Tensor> in{random_tensor(4, 3, 1), random_tensor(3, 2, 2), random_tensor(4, 1, 3),
                           random_tensor(1, 3, 4), random_tensor(4, 3, 5)};
    EXPECT_LT(grad_check(in, fn), 1e-6) << name;
  }
}

TEST(Dropout, EvalIdentityAndUnbiasedInTraining) {
  Tape tape;
  auto x = Tensor(100000, 1, 2.0);
  auto e = tape.dropout(x, 0.5, false, 1);
  EXPECT_TRUE(e.same_storage(x));
  auto y = tape.dropout(x, 0.3, true, 1);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    mean += v;
    zeros += v == 0.0;
  }
  mean /= 1e5;
  EXPECT_NEAR(mean, 2.0, 0.02);
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.3, 0.01);
  auto y2 = tape.dropout(x, 0.3, true, 1);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_EQ(y.data()[i], y2.data()[i]);
  EXPECT_THROW(tape.dropout(x, 1.0, true, 1), std::invalid_argument);
  EXPECT_THROW(tape.dropout(x, -0.1, true, 1), std::invalid_argument);
}

TEST(Dropout, GradientFollowsMask) {
  Tape tape;
  auto x = random_tensor(10, 10, 3);
  auto y = tape.dropout(x, 0.5, true, 9);
  tape.backward(tape.sum(y));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], y.data()[i] == 0.0 ? 0.0 : 2.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = random_tensor(3, 3, 1);
  auto before = std::vector<double>(p.data().begin(), p.data().end());
  p.grad();
  std::vector<Tensor> ps{p};
  nn::AdamState st;
  for (int i = 0; i < 5; ++i) nn::adam_step(ps, st);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), before);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {0.3, -2.0, 1e-3}) {
    auto p = Tensor::from(1, 1, {1.0}, true);
    p.grad()[0] = g;
    std::vector<Tensor> ps{p};
    nn::AdamState st;
    st.options.lr = 0.01;
    nn::adam_step(ps, st);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    EXPECT_NEAR(p.data()[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Adam, WeightDecayEntersGradient) {
  auto p = Tensor::from(1, 1, {2.0}, true);
  p.grad();
  std::vector<Tensor> ps{p};
  nn::AdamState st;
  st.options.lr = 0.1;
  st.options.weight_decay = 0.5;
  nn::adam_step(ps, st);
  EXPECT_NEAR(p.data()[0], 2.0 - 0.1 * 1.0 / (1.0 + 1e-8), 1e-15);  // effective gradient 1.0
}

TEST(Adam, DeterministicTrajectories) {
  auto run = [] {
    auto w = random_tensor(3, 1, 4);
    auto x = random_tensor(8, 3, 5, false);
    std::vector<Tensor> ps{w};
    nn::AdamState st;
    for (int it = 0; it < 20; ++it) {
      w.zero_grad();
      Tape t;
      t.backward(t.sum(t.hadamard(t.matmul(x, w), t.matmul(x, w))));
      nn::adam_step(ps, st);
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatch) {
  std::vector<Tensor> ps{Tensor(2, 2, 0.0, true)};
  nn::AdamState st;
  nn::adam_step(ps, st);
  std::vector<Tensor> other{Tensor(3, 2, 0.0, true)};
  EXPECT_THROW(nn::adam_step(other, st), nn::ShapeError);
}
