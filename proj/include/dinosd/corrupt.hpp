#pragma once

#include <random>

#include "dinosd/image.hpp"

namespace dsd {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  Brightness,
  Contrast,
  Pixelate,
};

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::Pixelate: return "pixelate";
  }
  return "?";
}

inline CorruptionKind corruption_kind_from(const std::string& s) {
  if (s == "gaussian_noise") return CorruptionKind::GaussianNoise;
  if (s == "shot_noise") return CorruptionKind::ShotNoise;
  if (s == "impulse_noise") return CorruptionKind::ImpulseNoise;
  if (s == "brightness") return CorruptionKind::Brightness;
  if (s == "contrast") return CorruptionKind::Contrast;
  if (s == "pixelate") return CorruptionKind::Pixelate;
  throw ValueError("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 3;  // 1..5
  std::uint64_t seed = 0;
};

// Severity parameter tables (documented in docs/corruptions.md).
namespace severity_table {
inline constexpr double gaussian_sigma[5] = {0.08, 0.12, 0.18, 0.26, 0.38};
inline constexpr double shot_photons[5] = {60.0, 25.0, 12.0, 5.0, 3.0};
inline constexpr double impulse_fraction[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
inline constexpr double brightness_delta[5] = {0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr double contrast_factor[5] = {0.75, 0.6, 0.45, 0.3, 0.2};
inline constexpr int pixelate_block[5] = {2, 3, 4, 6, 8};
}  // namespace severity_table

inline Image corrupt(const Image& img, const CorruptionSpec& spec) {
  if (spec.severity < 1 || spec.severity > 5)
    throw ValueError("corrupt: severity must be 1..5, got " + std::to_string(spec.severity));
  int s = spec.severity - 1;
  std::mt19937_64 rng(spec.seed);
  Image out = img;
  switch (spec.kind) {
    case CorruptionKind::GaussianNoise: {
      std::normal_distribution<double> nd(0.0, severity_table::gaussian_sigma[s]);
      for (auto& v : out.data) v += nd(rng);
      break;
    }
    case CorruptionKind::ShotNoise: {
      double lam = severity_table::shot_photons[s];
      for (auto& v : out.data) {
        std::poisson_distribution<int> pd(std::max(v, 0.0) * lam);
        v = pd(rng) / lam;
      }
      break;
    }
    case CorruptionKind::ImpulseNoise: {
      double frac = severity_table::impulse_fraction[s];
      std::uniform_real_distribution<double> ud(0.0, 1.0);
      for (std::size_t p = 0; p < out.pixels(); ++p) {
        double u = ud(rng);
        double salt = ud(rng) < 0.5 ? 0.0 : 1.0;
        if (u < frac)
          for (std::size_t c = 0; c < 3; ++c) out.data[c * out.pixels() + p] = salt;
      }
      break;
    }
    case CorruptionKind::Brightness: {
      double delta = severity_table::brightness_delta[s];
      for (auto& v : out.data) v += delta;
      break;
    }
    case CorruptionKind::Contrast: {
      double f = severity_table::contrast_factor[s];
      double mean = 0.0;
      for (double v : out.data) mean += v;
      mean /= static_cast<double>(out.data.size());
      for (auto& v : out.data) v = (v - mean) * f + mean;
      break;
    }
    case CorruptionKind::Pixelate: {
      int blk = severity_table::pixelate_block[s];
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t by = 0; by < out.height; by += blk)
          for (std::size_t bx = 0; bx < out.width; bx += blk) {
            std::size_t ye = std::min(by + blk, out.height), xe = std::min(bx + blk, out.width);
            // average anchored at the first value so constant blocks are a
            // bit-exact fixed point (idempotence)
            double v0 = img.at(c, by, bx), sum = 0.0;
            for (std::size_t y = by; y < ye; ++y)
              for (std::size_t x = bx; x < xe; ++x) sum += img.at(c, y, x) - v0;
            double avg = v0 + sum / static_cast<double>((ye - by) * (xe - bx));
            for (std::size_t y = by; y < ye; ++y)
              for (std::size_t x = bx; x < xe; ++x) out.at(c, y, x) = avg;
          }
      break;
    }
  }
  return clamp01(std::move(out));
}

}  // namespace dsd
