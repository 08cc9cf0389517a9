#include "gradcheck.hpp"
#include "deskwarp/autodiff.hpp"

#include <gtest/gtest.h>

using namespace dw::ad;
using gradcheck::random_tensor;
using gradcheck::relative_error;
using gradcheck::weighted_sum;

namespace {

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autodiff, AddPassesGradientThrough) {
  Tape tape;
  const Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  const Tensor c = Tensor::from({3}, {5, 5, 5});
  const Tensor y = add(tape, x, c);
  const Tensor w = Tensor::from({3}, {0.5, -1, 2});
  tape.backward(sum(tape, mul(tape, y, w)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0.5, -1, 2}));
}

TEST(Autodiff, IdentityConvolution) {
  std::mt19937_64 rng(1);
  Tape tape;
  const Tensor x = random_tensor({2, 3, 4, 5}, rng, false);
  std::vector<double> w(9, 0.0);
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  const Tensor y = conv2d(tape, x, Tensor::from({3, 3, 1, 1}, w), Tensor());
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()),
            std::vector<double>(x.values().begin(), x.values().end()));
}

TEST(Autodiff, SumAndSquareGradients) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({4, 3}, rng);
  {
    Tape tape;
    tape.backward(sum(tape, x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  }
  x.data()->grad.assign(x.size(), 0.0);
  {
    Tape tape;
    tape.backward(sum(tape, mul(tape, x, x)));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.values()[i]);
  }
}

TEST(GradCheck, Add) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng), w = random_tensor({2, 3}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, add(t, a, b), w); }, {a, b}), kTol);
}

TEST(GradCheck, Sub) {
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng), w = random_tensor({5}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, sub(t, a, b), w); }, {a, b}), kTol);
}

TEST(GradCheck, Mul) {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({2, 2, 2}, rng), b = random_tensor({2, 2, 2}, rng);
  const Tensor w = random_tensor({2, 2, 2}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, mul(t, a, b), w); }, {a, b}), kTol);
}

TEST(GradCheck, Scale) {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor({7}, rng), w = random_tensor({7}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, scale(t, a, -1.7), w); }, {a}), kTol);
}

TEST(GradCheck, Silu) {
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor({3, 4}, rng, true, 2.0), w = random_tensor({3, 4}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, silu(t, a), w); }, {a}), kTol);
}

TEST(GradCheck, Matmul) {
  std::mt19937_64 rng(8);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), w = random_tensor({3, 2}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, matmul(t, a, b), w); }, {a, b}), kTol);
}

TEST(GradCheck, Conv3x3WithBias) {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({2, 3, 5, 4}, rng), k = random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = random_tensor({4}, rng), w = random_tensor({2, 4, 5, 4}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, conv2d(t, x, k, b), w); }, {x, k, b}), kTol);
}

TEST(GradCheck, Conv1x1NoBias) {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({3, 4, 3, 3}, rng), k = random_tensor({2, 4, 1, 1}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, conv2d(t, x, k, Tensor()), w); }, {x, k}), kTol);
}

TEST(GradCheck, Concat) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor({2, 1, 2, 3}, rng), b = random_tensor({2, 3, 2, 3}, rng);
  const Tensor w = random_tensor({2, 4, 2, 3}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, concat(t, {a, b}), w); }, {a, b}), kTol);
}

TEST(GradCheck, ExpandChannels) {
  std::mt19937_64 rng(12);
  const Tensor a = random_tensor({2, 1, 3, 3}, rng), w = random_tensor({2, 5, 3, 3}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, expand_channels(t, a, 5), w); }, {a}), kTol);
}

TEST(GradCheck, Reshape) {
  std::mt19937_64 rng(13);
  const Tensor a = random_tensor({2, 6}, rng), w = random_tensor({3, 4}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, reshape(t, a, {3, 4}), w); }, {a}), kTol);
}

TEST(GradCheck, SumAndMean) {
  std::mt19937_64 rng(14);
  const Tensor a = random_tensor({4, 5}, rng);
  EXPECT_LT(relative_error([&](Tape& t) { return sum(t, mul(t, a, a)); }, {a}), kTol);
  EXPECT_LT(relative_error([&](Tape& t) { return mean(t, mul(t, a, a)); }, {a}), kTol);
}

TEST(GradCheck, FrameAttention) {
  std::mt19937_64 rng(15);
  const Tensor q = random_tensor({6, 4, 2, 2}, rng), k = random_tensor({6, 4, 2, 2}, rng);
  const Tensor v = random_tensor({6, 4, 2, 2}, rng), w = random_tensor({6, 4, 2, 2}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, frame_attention(t, q, k, v, 3), w); }, {q, k, v}),
            kTol);
}

TEST(GradCheck, FrameMix) {
  std::mt19937_64 rng(16);
  const Tensor x = random_tensor({8, 3, 2, 2}, rng), m = random_tensor({4, 4}, rng);
  const Tensor w = random_tensor({8, 3, 2, 2}, rng, false);
  EXPECT_LT(relative_error([&](Tape& t) { return weighted_sum(t, frame_mix(t, x, m, 4), w); }, {x, m}), kTol);
}

TEST(GradCheck, ThreeLayerComposition) {
  std::mt19937_64 rng(17);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor k1 = random_tensor({3, 2, 3, 3}, rng, true, 0.5), b1 = random_tensor({3}, rng);
  const Tensor k2 = random_tensor({3, 3, 3, 3}, rng, true, 0.5);
  const Tensor k3 = random_tensor({1, 3, 1, 1}, rng, true, 0.5), w = random_tensor({1, 1, 4, 4}, rng, false);
  const auto f = [&](Tape& t) {
    const Tensor h1 = silu(t, conv2d(t, x, k1, b1));
    const Tensor h2 = add(t, h1, silu(t, conv2d(t, h1, k2, Tensor())));
    return weighted_sum(t, conv2d(t, h2, k3, Tensor()), w);
  };
  EXPECT_LT(relative_error(f, {x, k1, b1, k2, k3}), kTol);
}

TEST(Autodiff, BackwardIsLinear) {
  std::mt19937_64 rng(18);
  const Tensor x = random_tensor({6}, rng), w = random_tensor({6}, rng, false);
  const auto l1 = [&](Tape& t) { return sum(t, mul(t, x, x)); };
  const auto l2 = [&](Tape& t) { return weighted_sum(t, silu(t, x), w); };
  auto grad_of = [&](const std::function<Tensor(Tape&)>& f) {
    x.data()->grad.assign(x.size(), 0.0);
    Tape t;
    t.backward(f(t));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const auto g1 = grad_of(l1), g2 = grad_of(l2);
  const auto g = grad_of([&](Tape& t) { return add(t, scale(t, l1(t), 2.0), scale(t, l2(t), -3.0)); });
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 2.0 * g1[i] - 3.0 * g2[i], 1e-12);
}

TEST(Autodiff, Errors) {
  Tape tape;
  const Tensor a = Tensor::from({2}, {1, 2}, true), b = Tensor::from({3}, {1, 2, 3}, true);
  EXPECT_THROW(add(tape, a, b), std::domain_error);
  EXPECT_THROW(matmul(tape, a, b), std::domain_error);
  EXPECT_THROW(tape.backward(a), std::domain_error);
  const Tensor s = sum(tape, a);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), std::logic_error);
}

TEST(Autodiff, SkipsNodesWithoutGradient) {
  Tape tape;
  const Tensor c = Tensor::from({2}, {1, 2}), x = Tensor::from({2}, {3, 4}, true);
  const Tensor cc = mul(tape, c, c);
  const Tensor l = sum(tape, mul(tape, x, x));
  (void)cc;
  tape.backward(l);
  EXPECT_EQ(tape.last_backward_visits(), 2u);
}

TEST(Adam, StepsTowardMinimum) {
  Adam adam({0.1, 0.9, 0.999, 1e-8});
  const auto slot = adam.add_slot(1);
  std::vector<double> p{3.0};
  for (int i = 0; i < 300; ++i) {
    std::vector<double> g{2.0 * (p[0] - 1.0)};
    adam.begin_step();
    adam.update(slot, p, g);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-2);
}
