#include <gtest/gtest.h>

#include "dinosd/gradcheck.hpp"

using namespace dsd;

namespace {
std::mt19937_64 test_rng(std::uint64_t salt) { return std::mt19937_64(mix_seed(99, salt)); }
}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {3.5, -1.0, 2.0, 7.25});
  Tensor out = matmul(eye, a);
  EXPECT_EQ(out.data(), a.data());
}

TEST(Matmul, HandOracle) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {5, 6});
  Tensor out = matmul(a, b);
  EXPECT_DOUBLE_EQ(out.data()[0], 17.0);
  EXPECT_DOUBLE_EQ(out.data()[1], 39.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({2, 2}, std::vector<double>(4, 1.0));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[2,2]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  auto rng = test_rng(1);
  Tensor a = rand_uniform({3, 4}, -1, 1, rng);
  Tensor b = rand_uniform({4, 2}, -1, 1, rng);
  double err = finite_diff_check_multi(
      [](const std::vector<Tensor>& v) { return sum_all(matmul(v[0], v[1])); }, {a, b});
  EXPECT_LT(err, 1e-6);
}

TEST(Softmax, UniformOnEqualInputs) {
  Tensor x({3}, {0, 0, 0});
  Tensor y = softmax(x, 0);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, StableUnderLargeInputs) {
  Tensor y = softmax(Tensor({2}, {1000.0, 0.0}), 0);
  EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
  EXPECT_GE(y.data()[1], 0.0);
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Softmax, LogWeightsHandOracle) {
  Tensor x({3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
  Tensor y = softmax(x, 0);
  EXPECT_NEAR(y.data()[0], 1.0 / 6.0, 1e-14);
  EXPECT_NEAR(y.data()[1], 2.0 / 6.0, 1e-14);
  EXPECT_NEAR(y.data()[2], 3.0 / 6.0, 1e-14);
}

TEST(Softmax, SumsToOneForRandomInputs) {
  auto rng = test_rng(2);
  for (int t = 0; t < 20; ++t) {
    Tensor x = rand_uniform({4, 7}, -50, 50, rng);
    Tensor y = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) s += y.data()[r * 7 + c];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  auto rng = test_rng(3);
  Tensor x = rand_uniform({1, 1, 4, 5}, -1, 1, rng);
  Tensor w = Tensor::zeros({1, 1, 3, 3});
  w.data()[4] = 1.0;  // center tap
  Tensor y = conv2d(x, w);
  EXPECT_EQ(y.data(), x.data());
}

TEST(Conv2d, AllOnesKernelHandOracle) {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w);
  EXPECT_DOUBLE_EQ(y.data()[4], 9.0);  // center
  EXPECT_DOUBLE_EQ(y.data()[0], 4.0);  // corner
  EXPECT_DOUBLE_EQ(y.data()[8], 4.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 6.0);  // edge
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor w = Tensor::zeros({1, 3, 3, 3});
  EXPECT_THROW(conv2d(x, w), ShapeError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  auto rng = test_rng(4);
  Tensor x = rand_uniform({1, 2, 4, 4}, -1, 1, rng);
  Tensor w = rand_uniform({2, 2, 3, 3}, -1, 1, rng);
  double err = finite_diff_check_multi(
      [](const std::vector<Tensor>& v) { return sum_all(square(conv2d(v[0], v[1]))); }, {x, w});
  EXPECT_LT(err, 1e-6);
}

TEST(Resample, ScaleOneIsBitIdentical) {
  auto rng = test_rng(5);
  Tensor x = rand_uniform({2, 3, 5, 7}, -1, 1, rng);
  Tensor y = resample_bilinear(x, 1.0);
  EXPECT_EQ(y.data(), x.data());
}

TEST(Resample, ConstantImageStaysConstant) {
  Tensor x = Tensor::full({1, 1, 4, 6}, 0.731);
  for (double s : {0.5, 1.3, 2.0, 3.7}) {
    Tensor y = resample_bilinear(x, s);
    for (double v : y.data()) EXPECT_NEAR(v, 0.731, 1e-12);
  }
}

namespace {
// Independent per-pixel bilinear oracle (align_corners = false).
double bilinear_ref(const std::vector<double>& img, std::size_t h, std::size_t w, std::size_t oh,
                    std::size_t ow, std::size_t oy, std::size_t ox) {
  auto sample = [&](double sy, double sx) {
    sy = std::clamp(sy, 0.0, double(h - 1));
    sx = std::clamp(sx, 0.0, double(w - 1));
    std::size_t y0 = std::size_t(sy), x0 = std::size_t(sx);
    std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    double fy = sy - y0, fx = sx - x0;
    return (1 - fy) * ((1 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x1]) +
           fy * ((1 - fx) * img[y1 * w + x0] + fx * img[y1 * w + x1]);
  };
  double sy = (oy + 0.5) * double(h) / double(oh) - 0.5;
  double sx = (ox + 0.5) * double(w) / double(ow) - 0.5;
  return sample(sy, sx);
}
}  // namespace

TEST(Resample, UpsampleMatchesScalarOracle) {
  Tensor x({1, 1, 2, 2}, {0, 1, 2, 3});
  Tensor y = resample_bilinear(x, 2.0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 4; ++ox)
      EXPECT_NEAR(y.data()[oy * 4 + ox], bilinear_ref(x.data(), 2, 2, 4, 4, oy, ox), 1e-14)
          << "at (" << oy << "," << ox << ")";
}

TEST(Elementwise, SigmoidAtZero) { EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5); }

TEST(Elementwise, LogExpInverse) {
  for (double v = -5.0; v <= 5.0; v += 0.5)
    EXPECT_NEAR(log(exp(Tensor::scalar(v))).item(), v, 1e-12);
}

TEST(Elementwise, ReluGradient) {
  Tensor x({2}, {3.0, -2.0});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum_all(relu(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Reduce, MeanAndSum) {
  EXPECT_DOUBLE_EQ(reduce_mean(Tensor({3}, {1, 2, 3})).item(), 2.0);
  EXPECT_DOUBLE_EQ(reduce_sum(Tensor::full({2, 3, 4}, 1.0)).item(), 24.0);
}

TEST(Reduce, MeanGradientIsOneOverN) {
  Tensor x = Tensor::full({5}, 3.0, true);
  Tape tape;
  tape.backward(reduce_mean(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.2);
}

TEST(Reduce, EmptyReductionThrows) {
  Tensor x({2, 0}, {});
  EXPECT_THROW(reduce_sum(x), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::full({4}, 2.0, true);
  Tape tape;
  tape.backward(sum_all(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Tensor x({3}, {1.0, -2.0, 0.5}, true);
  Tape tape;
  tape.backward(sum_all(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 1.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::full({3}, 1.0, true);
  Tape tape;
  Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), TapeError);
}

TEST(Backward, DoubleBackwardThrows) {
  Tensor x = Tensor::full({3}, 1.0, true);
  Tape tape;
  Tensor loss = sum_all(x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), TapeError);
}

TEST(Backward, StaleTapeThrows) {
  Tensor x = Tensor::full({3}, 1.0, true);
  Tensor loss;
  {
    Tape t1;
    loss = sum_all(x);
  }
  Tape t2;
  EXPECT_THROW(t2.backward(loss), TapeError);
}

TEST(Backward, LinearInLoss) {
  auto rng = test_rng(6);
  Tensor base = rand_uniform({3, 3}, 0.5, 2.0, rng);
  auto grad_of = [&](double a, double b) {
    Tensor x = base.clone();
    x.set_requires_grad(true);
    Tape tape;
    Tensor l1 = sum_all(square(x));
    Tensor l2 = sum_all(log(x));
    tape.backward(add(mul_scalar(l1, a), mul_scalar(l2, b)));
    return x.grad();
  };
  auto g10 = grad_of(1, 0), g01 = grad_of(0, 1), gab = grad_of(2.5, -1.5);
  for (std::size_t i = 0; i < g10.size(); ++i)
    EXPECT_NEAR(gab[i], 2.5 * g10[i] - 1.5 * g01[i], 1e-12);
}

TEST(FiniteDiff, SumOfSquaresTight) {
  auto rng = test_rng(7);
  Tensor x = rand_uniform({4, 3}, -2, 2, rng);
  double err = finite_diff_check([](const Tensor& t) { return sum_all(square(t)); }, x);
  EXPECT_LT(err, 1e-8);
}

TEST(FiniteDiff, SoftmaxFirstComponent) {
  auto rng = test_rng(8);
  Tensor x = rand_uniform({5}, -2, 2, rng);
  double err = finite_diff_check(
      [](const Tensor& t) { return slice(softmax(t, 0), 0, 0, 1); }, x);
  EXPECT_LT(err, 1e-6);
}

TEST(Broadcast, TrailingAxes) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3}, {10, 20, 30});
  Tensor y = add(a, b);
  std::vector<double> expect{11, 22, 33, 14, 25, 36};
  EXPECT_EQ(y.data(), expect);
}

TEST(Broadcast, GradientReducesOverBroadcastAxes) {
  Tensor a = Tensor::full({2, 3}, 1.0, true);
  Tensor b = Tensor::full({3}, 1.0, true);
  Tape tape;
  tape.backward(sum_all(mul(a, b)));
  for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
}
