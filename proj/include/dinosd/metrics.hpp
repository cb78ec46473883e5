#pragma once

#include <nlohmann/json.hpp>

#include "dinosd/losses.hpp"

namespace dsd {

struct MetricReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double log_rmse = 0.0;
  double a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t pixel_count = 0;

  nlohmann::json to_json() const {
    return {{"abs_rel", abs_rel}, {"sq_rel", sq_rel},   {"rmse", rmse}, {"log_rmse", log_rmse},
            {"a1", a1},           {"a2", a2},           {"a3", a3},     {"pixels", pixel_count}};
  }
};

// Per-pixel terms are kept and pairwise-summed at finalize time so the result
// is independent of accumulation chunking.
class MetricAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
    if (pred.shape() != gt.shape() || pred.shape() != valid.shape())
      throw ShapeError("metrics: shape mismatch " + shape_str(pred.shape()) + " vs " +
                       shape_str(gt.shape()));
    const auto& p = pred.data();
    const auto& g = gt.data();
    const auto& m = valid.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (m[i] == 0.0) continue;
      double d = p[i], t = g[i];
      double err = d - t;
      abs_rel_.push_back(std::abs(err) / t);
      sq_rel_.push_back(err * err / t);
      sq_err_.push_back(err * err);
      double ld = std::log(d) - std::log(t);
      sq_log_err_.push_back(ld * ld);
      double ratio = std::max(d / t, t / d);
      a1_.push_back(ratio < 1.25 ? 1.0 : 0.0);
      a2_.push_back(ratio < 1.25 * 1.25 ? 1.0 : 0.0);
      a3_.push_back(ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0);
    }
  }

  std::size_t count() const { return abs_rel_.size(); }

  MetricReport finalize() const {
    std::size_t n = abs_rel_.size();
    if (n == 0) throw ValueError("metrics: no valid pixels accumulated");
    double dn = static_cast<double>(n);
    MetricReport r;
    r.pixel_count = n;
    r.abs_rel = pairwise_sum(abs_rel_) / dn;
    r.sq_rel = pairwise_sum(sq_rel_) / dn;
    r.rmse = std::sqrt(pairwise_sum(sq_err_) / dn);
    r.log_rmse = std::sqrt(pairwise_sum(sq_log_err_) / dn);
    r.a1 = pairwise_sum(a1_) / dn;
    r.a2 = pairwise_sum(a2_) / dn;
    r.a3 = pairwise_sum(a3_) / dn;
    return r;
  }

 private:
  std::vector<double> abs_rel_, sq_rel_, sq_err_, sq_log_err_, a1_, a2_, a3_;
};

inline MetricReport compute_metrics(const Tensor& pred, const SparseDepthTarget& target) {
  MetricAccumulator acc;
  acc.add(pred, target.gt, target.valid);
  return acc.finalize();
}

// Cosine annealing with warm restarts; step is measured in T_0 units
// (typically epochs, fractional steps allowed).
inline double lr_schedule(double step, double t0, double t_mult, double lr_max, double lr_min) {
  if (t0 < 1.0 || t_mult < 1.0) throw ValueError("lr_schedule: need T_0 >= 1 and T_mult >= 1");
  double t = step, ti = t0;
  if (t_mult == 1.0) {
    t = std::fmod(t, t0);
  } else {
    while (t >= ti) {
      t -= ti;
      ti *= t_mult;
    }
  }
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * t / ti));
}

}  // namespace dsd
