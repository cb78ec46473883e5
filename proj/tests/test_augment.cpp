#include <gtest/gtest.h>

#include "dinosd/augmix.hpp"
#include "dinosd/corrupt.hpp"

using namespace dsd;

namespace {

Image test_image(std::size_t h = 16, std::size_t w = 24, std::uint64_t seed = 1) {
  std::mt19937_64 rng(mix_seed(44, seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img(h, w);
  for (auto& v : img.data) v = unit(rng);
  return img;
}

Image ramp_image(std::size_t h = 16, std::size_t w = 24) {
  Image img(h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) img.at(c, y, x) = double(x) / double(w - 1);
  return img;
}

double mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / double(a.data.size());
}

}  // namespace

TEST(AugMix, DeterministicPerSeed) {
  Image img = test_image();
  AugMixSpec spec;
  EXPECT_EQ(augmix(img, spec, 42).data, augmix(img, spec, 42).data);
  EXPECT_NE(augmix(img, spec, 42).data, augmix(img, spec, 43).data);
}

TEST(AugMix, SkipWeightOneIsIdentity) {
  Image img = test_image();
  AugMixSpec spec;
  spec.skip_override = 1.0;
  EXPECT_EQ(augmix(img, spec, 7).data, img.data);
}

TEST(AugMix, OutputStaysInUnitRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Image out = augmix(test_image(16, 24, seed), AugMixSpec{}, seed);
    for (double v : out.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(AugMix, InputUntouched) {
  Image img = test_image();
  std::vector<double> before = img.data;
  augmix(img, AugMixSpec{}, 5);
  EXPECT_EQ(img.data, before);
}

TEST(Corrupt, BrightnessTableOracle) {
  Image img(8, 8, 0.5);
  for (int s = 1; s <= 5; ++s) {
    Image out = corrupt(img, {CorruptionKind::Brightness, s, 0});
    double expect = std::min(1.0, 0.5 + 0.1 * s);
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, expect);
  }
}

TEST(Corrupt, GaussianVarianceGrowsWithSeverity) {
  Image img(16, 24, 0.5);
  auto variance_at = [&](int severity) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Image out = corrupt(img, {CorruptionKind::GaussianNoise, severity, seed});
      for (double v : out.data) {
        acc += (v - 0.5) * (v - 0.5);
        ++n;
      }
    }
    return acc / double(n);
  };
  EXPECT_GT(variance_at(5), variance_at(1));
}

TEST(Corrupt, NoiseSeverityMseMonotone) {
  Image img = ramp_image();
  for (CorruptionKind kind :
       {CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise}) {
    double prev = -1.0;
    for (int s = 1; s <= 5; ++s) {
      double acc = 0.0;
      for (std::uint64_t seed = 0; seed < 50; ++seed)
        acc += mse(corrupt(img, {kind, s, seed}), img);
      acc /= 50.0;
      EXPECT_GE(acc, prev) << to_string(kind) << " severity " << s;
      prev = acc;
    }
  }
}

TEST(Corrupt, PixelateIdempotent) {
  Image img = test_image();
  for (int s = 1; s <= 5; ++s) {
    CorruptionSpec spec{CorruptionKind::Pixelate, s, 0};
    Image once = corrupt(img, spec);
    EXPECT_EQ(corrupt(once, spec).data, once.data) << "severity " << s;
  }
}

TEST(Corrupt, DeterministicAndValidated) {
  Image img = test_image();
  CorruptionSpec spec{CorruptionKind::ShotNoise, 3, 9};
  EXPECT_EQ(corrupt(img, spec).data, corrupt(img, spec).data);
  EXPECT_THROW(corrupt(img, {CorruptionKind::GaussianNoise, 0, 0}), ValueError);
  EXPECT_THROW(corrupt(img, {CorruptionKind::GaussianNoise, 6, 0}), ValueError);
  EXPECT_THROW(corruption_kind_from("fog"), ValueError);
}

TEST(Corrupt, OutputsClampedToUnitRange) {
  Image img = test_image();
  for (CorruptionKind kind : {CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
                              CorruptionKind::ImpulseNoise, CorruptionKind::Brightness,
                              CorruptionKind::Contrast, CorruptionKind::Pixelate})
    for (int s : {1, 5}) {
      Image out = corrupt(img, {kind, s, 3});
      for (double v : out.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
}

TEST(Denoise, ConstantImageFixedPoint) {
  Image img(16, 24, 0.5);
  Image out = denoise_wavelet(img);
  for (double v : out.data) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST(Denoise, ReducesNoiseMse) {
  Image clean = ramp_image();
  double noisy_mse = 0.0, denoised_mse = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Image noisy = corrupt(clean, {CorruptionKind::GaussianNoise, 3, seed});
    noisy_mse += mse(noisy, clean);
    denoised_mse += mse(denoise_wavelet(noisy), clean);
  }
  EXPECT_LT(denoised_mse, noisy_mse);
}

TEST(Denoise, ZeroThresholdIsPerfectReconstruction) {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{16, 24}, {15, 23}}) {
    Image img = test_image(h, w, 3);
    Image out = denoise_wavelet(img, 0.0);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1e-10);
  }
}

TEST(Equalize, TwoLevelHandOracle) {
  Image img(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = img.at(c, 0, 1) = 0.2;
    img.at(c, 1, 0) = img.at(c, 1, 1) = 0.8;
  }
  Image out = equalize_hist(img);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(out.at(c, 0, 0), 0.5, 1e-12);
    EXPECT_NEAR(out.at(c, 1, 1), 1.0, 1e-12);
  }
}

TEST(Equalize, UniformHistogramNearFixedPoint) {
  Image img(16, 16);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 256; ++i) img.data[c * 256 + i] = double(i) / 255.0;
  Image out = equalize_hist(img);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    EXPECT_LE(std::abs(out.data[i] - img.data[i]), 1.0 / 256.0 + 1e-12);
}

TEST(Equalize, FlattensContinuousToneCdf) {
  Image img = test_image(64, 64, 8);
  Image out = equalize_hist(img);
  std::size_t n = out.pixels();
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> vals(out.data.begin() + c * n, out.data.begin() + (c + 1) * n);
    std::sort(vals.begin(), vals.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(vals[i] - double(i + 1) / double(n)));
    EXPECT_LE(worst, 2.0 / 256.0) << "channel " << c;
  }
}

TEST(Preprocess, ComposesBitIdentically) {
  Image img = test_image();
  PreprocessFlags flags{true, true, false};
  EXPECT_EQ(preprocess_test(img, flags).data, equalize_hist(denoise_wavelet(img)).data);
  flags.equalize_first = true;
  EXPECT_EQ(preprocess_test(img, flags).data, denoise_wavelet(equalize_hist(img)).data);
}

TEST(Preprocess, DisabledFlagsAreIdentity) {
  Image img = test_image();
  EXPECT_EQ(preprocess_test(img, PreprocessFlags{}).data, img.data);
}
