#pragma once

#include <optional>
#include <random>

#include "dinosd/preprocess.hpp"

namespace dsd {

// The AugMix op set. Deliberately disjoint from the corruption kinds so the
// test-time degradations are never seen during training.
enum class AugOp { Rotate, Translate, Shear, Equalize, Posterize, Solarize, Autocontrast };

inline constexpr std::array<AugOp, 7> kAugOps = {
    AugOp::Rotate,    AugOp::Translate, AugOp::Shear,       AugOp::Equalize,
    AugOp::Posterize, AugOp::Solarize,  AugOp::Autocontrast};

struct AugMixSpec {
  std::size_t chain_width = 3;
  std::size_t max_chain_depth = 3;
  std::optional<double> skip_override;  // forces the Beta(1,1) skip weight (tests)
};

namespace detail {
// Inverse-map affine warp with bilinear sampling and clamp-to-edge borders.
inline Image affine_warp(const Image& img, double m00, double m01, double m10, double m11,
                         double tx, double ty) {
  Image out(img.height, img.width);
  double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      double sx = m00 * dx + m01 * dy + cx - tx;
      double sy = m10 * dx + m11 * dy + cy - ty;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(img.width - 1));
      sy = std::min(std::max(sy, 0.0), static_cast<double>(img.height - 1));
      std::size_t x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      double wx = sx - static_cast<double>(x0), wy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        double v = (1 - wy) * ((1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1)) +
                   wy * ((1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1));
        out.at(c, y, x) = v;
      }
    }
  return out;
}
}  // namespace detail

inline Image apply_aug_op(const Image& img, AugOp op, double magnitude, std::mt19937_64& rng) {
  switch (op) {
    case AugOp::Rotate: {
      double a = magnitude * 15.0 * M_PI / 180.0;  // up to +-15 degrees
      return detail::affine_warp(img, std::cos(a), -std::sin(a), std::sin(a), std::cos(a), 0, 0);
    }
    case AugOp::Translate: {
      double tx = magnitude * 0.1 * static_cast<double>(img.width);
      double ty = magnitude * 0.1 * static_cast<double>(img.height);
      std::uniform_int_distribution<int> axis(0, 1);
      return axis(rng) ? detail::affine_warp(img, 1, 0, 0, 1, tx, 0)
                       : detail::affine_warp(img, 1, 0, 0, 1, 0, ty);
    }
    case AugOp::Shear: {
      double s = std::tan(magnitude * 10.0 * M_PI / 180.0);
      std::uniform_int_distribution<int> axis(0, 1);
      return axis(rng) ? detail::affine_warp(img, 1, s, 0, 1, 0, 0)
                       : detail::affine_warp(img, 1, 0, s, 1, 0, 0);
    }
    case AugOp::Equalize:
      return equalize_hist(img);
    case AugOp::Posterize: {
      int bits = 4 + static_cast<int>(std::abs(magnitude) * 2.999);  // 4..6 bits
      double levels = static_cast<double>(1 << bits) - 1.0;
      Image out = img;
      for (auto& v : out.data) v = std::round(v * levels) / levels;
      return out;
    }
    case AugOp::Solarize: {
      double t = 0.5 + std::abs(magnitude) * 0.5;
      Image out = img;
      for (auto& v : out.data)
        if (v >= t) v = 1.0 - v;
      return out;
    }
    case AugOp::Autocontrast: {
      Image out = img;
      std::size_t n = img.pixels();
      for (std::size_t c = 0; c < 3; ++c) {
        double lo = 1.0, hi = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          lo = std::min(lo, img.data[c * n + i]);
          hi = std::max(hi, img.data[c * n + i]);
        }
        if (hi - lo < 1e-9) continue;
        for (std::size_t i = 0; i < n; ++i)
          out.data[c * n + i] = (img.data[c * n + i] - lo) / (hi - lo);
      }
      return out;
    }
  }
  return img;
}

// AugMix composition: chain_width chains of 1..max_chain_depth sampled ops,
// Dirichlet(1,..,1)-weighted pixel mix, Beta(1,1)-weighted blend with the input.
inline Image augmix(const Image& img, const AugMixSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  std::vector<double> w(spec.chain_width);
  double wsum = 0.0;
  for (auto& v : w) {
    v = expo(rng);  // Dirichlet(1,...,1) via normalized exponentials
    wsum += v;
  }
  for (auto& v : w) v /= wsum;
  double skip = spec.skip_override ? *spec.skip_override : unit(rng);  // Beta(1,1)

  Image mix(img.height, img.width, 0.0);
  std::uniform_int_distribution<std::size_t> pick_op(0, kAugOps.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_depth(1, spec.max_chain_depth);
  std::uniform_real_distribution<double> mag(-1.0, 1.0);
  for (std::size_t k = 0; k < spec.chain_width; ++k) {
    Image chain = img;
    std::size_t depth = pick_depth(rng);
    for (std::size_t d = 0; d < depth; ++d)
      chain = apply_aug_op(chain, kAugOps[pick_op(rng)], mag(rng), rng);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] += w[k] * chain.data[i];
  }
  Image out(img.height, img.width);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = skip * img.data[i] + (1.0 - skip) * mix.data[i];
  return clamp01(std::move(out));
}

}  // namespace dsd
