#pragma once

#include <algorithm>
#include <array>

#include "dinosd/image.hpp"

namespace dsd {

// Per-channel 256-bin histogram equalization: v -> cdf(bin(v)) / N.
inline Image equalize_hist(const Image& img) {
  Image out = img;
  std::size_t n = img.pixels();
  for (std::size_t c = 0; c < 3; ++c) {
    const double* src = img.data.data() + c * n;
    double* dst = out.data.data() + c * n;
    std::array<std::size_t, 256> hist{};
    auto bin = [](double v) {
      int b = static_cast<int>(std::min(std::max(v, 0.0), 1.0) * 255.0 + 0.5);
      return std::min(b, 255);
    };
    for (std::size_t i = 0; i < n; ++i) hist[bin(src[i])]++;
    std::array<double, 256> cdf{};
    std::size_t run = 0;
    for (int b = 0; b < 256; ++b) {
      run += hist[b];
      cdf[b] = static_cast<double>(run) / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) dst[i] = cdf[bin(src[i])];
  }
  return out;
}

namespace detail {
// Single-level 2D Haar analysis of one channel (even dims assumed).
struct HaarBands {
  std::size_t h2, w2;
  std::vector<double> ll, lh, hl, hh;
};

inline HaarBands haar_forward(const double* x, std::size_t H, std::size_t W) {
  HaarBands b;
  b.h2 = H / 2;
  b.w2 = W / 2;
  std::size_t n = b.h2 * b.w2;
  b.ll.resize(n);
  b.lh.resize(n);
  b.hl.resize(n);
  b.hh.resize(n);
  for (std::size_t y = 0; y < b.h2; ++y)
    for (std::size_t xx = 0; xx < b.w2; ++xx) {
      double a = x[(2 * y) * W + 2 * xx];
      double bb = x[(2 * y) * W + 2 * xx + 1];
      double c = x[(2 * y + 1) * W + 2 * xx];
      double d = x[(2 * y + 1) * W + 2 * xx + 1];
      std::size_t i = y * b.w2 + xx;
      b.ll[i] = (a + bb + c + d) / 2.0;  // orthonormal Haar
      b.lh[i] = (a - bb + c - d) / 2.0;
      b.hl[i] = (a + bb - c - d) / 2.0;
      b.hh[i] = (a - bb - c + d) / 2.0;
    }
  return b;
}

inline void haar_inverse(const HaarBands& b, double* x, std::size_t H, std::size_t W) {
  for (std::size_t y = 0; y < b.h2; ++y)
    for (std::size_t xx = 0; xx < b.w2; ++xx) {
      std::size_t i = y * b.w2 + xx;
      double ll = b.ll[i], lh = b.lh[i], hl = b.hl[i], hh = b.hh[i];
      x[(2 * y) * W + 2 * xx] = (ll + lh + hl + hh) / 2.0;
      x[(2 * y) * W + 2 * xx + 1] = (ll - lh + hl - hh) / 2.0;
      x[(2 * y + 1) * W + 2 * xx] = (ll + lh - hl - hh) / 2.0;
      x[(2 * y + 1) * W + 2 * xx + 1] = (ll - lh - hl + hh) / 2.0;
    }
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}
}  // namespace detail

// Wavelet shrinkage: single-level Haar, soft threshold at the universal
// threshold sigma * sqrt(2 ln N) with sigma = median(|HH|) / 0.6745.
// threshold_override, when >= 0, replaces the estimated threshold (tests).
inline Image denoise_wavelet(const Image& img, double threshold_override = -1.0) {
  std::size_t H = img.height, W = img.width;
  std::size_t He = H + (H % 2), We = W + (W % 2);
  Image out = img;
  std::vector<double> chan(He * We);
  for (std::size_t c = 0; c < 3; ++c) {
    // reflect-pad odd dims by one row/col
    for (std::size_t y = 0; y < He; ++y)
      for (std::size_t x = 0; x < We; ++x)
        chan[y * We + x] = img.at(c, std::min(y, H - 1), std::min(x, W - 1));
    auto bands = detail::haar_forward(chan.data(), He, We);
    double t;
    if (threshold_override >= 0.0) {
      t = threshold_override;
    } else {
      std::vector<double> mag(bands.hh.size());
      for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(bands.hh[i]);
      std::nth_element(mag.begin(), mag.begin() + mag.size() / 2, mag.end());
      double sigma = mag[mag.size() / 2] / 0.6745;
      t = sigma * std::sqrt(2.0 * std::log(static_cast<double>(He * We)));
    }
    for (auto* band : {&bands.lh, &bands.hl, &bands.hh})
      for (auto& v : *band) v = detail::soft_threshold(v, t);
    detail::haar_inverse(bands, chan.data(), He, We);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = chan[y * We + x];
  }
  return clamp01(std::move(out));
}

struct PreprocessFlags {
  bool denoise = false;
  bool equalize = false;
  bool equalize_first = false;  // pipeline default: denoise, then equalize
};

inline Image preprocess_test(const Image& img, const PreprocessFlags& flags) {
  Image out = img;
  if (flags.equalize_first) {
    if (flags.equalize) out = equalize_hist(out);
    if (flags.denoise) out = denoise_wavelet(out);
  } else {
    if (flags.denoise) out = denoise_wavelet(out);
    if (flags.equalize) out = equalize_hist(out);
  }
  return out;
}

}  // namespace dsd
