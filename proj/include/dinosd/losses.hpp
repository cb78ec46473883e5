#pragma once

#include "dinosd/ops.hpp"

namespace dsd {

struct LossWeights {
  double lambda_silog = 0.85;
  double alpha_smooth = 1e-3;
  double beta_augmix = 1e-2;
};

struct SparseDepthTarget {
  Tensor gt;     // meters, positive wherever valid
  Tensor valid;  // 0/1 mask, same shape as gt
};

inline Tensor clamp_min(const Tensor& x, double lo) {
  return unary_op(
      x, [lo](double v) { return std::max(v, lo); },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

// Scale-invariant log loss over valid pixels:
//   L = (1/n) sum d_i^2 - (lambda/n^2) (sum d_i)^2,  d_i = log(pred) - log(gt)
inline Tensor silog_loss(const Tensor& pred, const SparseDepthTarget& target, double lambda = 0.85) {
  if (pred.shape() != target.gt.shape() || pred.shape() != target.valid.shape())
    throw ShapeError("silog: pred " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.gt.shape()));
  if (lambda < 0.0 || lambda > 1.0) throw ValueError("silog: lambda must be in [0,1]");
  double n = 0.0;
  for (double v : target.valid.data()) n += (v != 0.0) ? 1.0 : 0.0;
  if (n == 0.0) throw ValueError("silog: target has zero valid pixels (broken mask?)");
  Tensor d = mul(sub(log(pred), log(target.gt)), target.valid);
  Tensor sum_sq = sum_all(square(d));
  Tensor s = sum_all(d);
  return sub(mul_scalar(sum_sq, 1.0 / n), mul_scalar(square(s), lambda / (n * n)));
}

// Edge-aware smoothness on mean-normalized depth with forward differences.
// depth:[B,1,H,W], image:[B,3,H,W]; the two directional terms are mean-reduced.
inline Tensor smooth_loss(const Tensor& depth, const Tensor& image) {
  const Shape& ds = depth.shape();
  const Shape& is = image.shape();
  if (ds.size() != 4 || is.size() != 4 || ds[0] != is[0] || ds[2] != is[2] || ds[3] != is[3])
    throw ShapeError("smooth: depth " + shape_str(ds) + " vs image " + shape_str(is));
  std::size_t H = ds[2], W = ds[3];
  Tensor mean_d = reduce_mean(depth, {1, 2, 3}, true);
  Tensor dstar = div(depth, mean_d);
  Tensor gray = reduce_mean(image, {1}, true);
  Tensor dx = abs(sub(slice(dstar, 3, 1, W), slice(dstar, 3, 0, W - 1)));
  Tensor dy = abs(sub(slice(dstar, 2, 1, H), slice(dstar, 2, 0, H - 1)));
  Tensor ix = abs(sub(slice(gray, 3, 1, W), slice(gray, 3, 0, W - 1)));
  Tensor iy = abs(sub(slice(gray, 2, 1, H), slice(gray, 2, 0, H - 1)));
  Tensor tx = mean_all(mul(dx, exp(neg(ix))));
  Tensor ty = mean_all(mul(dy, exp(neg(iy))));
  return add(tx, ty);
}

// Generalized JS divergence of three per-view pixel distributions p,q,r,
// each [B,1,H,W] summing to 1 per view. Entries may be exactly zero.
inline Tensor js_divergence3(const Tensor& p, const Tensor& q, const Tensor& r) {
  if (p.shape() != q.shape() || p.shape() != r.shape())
    throw ShapeError("js_divergence3: shape mismatch");
  // m = (p+q+r)/3, written so identical inputs give m == p bit-exactly
  Tensor m = add(p, mul_scalar(add(sub(q, p), sub(r, p)), 1.0 / 3.0));
  Tensor log_m = log(m);
  auto kl = [&log_m](const Tensor& x) {
    return reduce_sum(mul(x, sub(log(x), log_m)), {1, 2, 3}, false);  // [B]
  };
  Tensor total = add(add(kl(p), kl(q)), kl(r));
  return mul_scalar(reduce_mean(total), 1.0 / 3.0);
}

inline Tensor normalize_per_view(const Tensor& depth) {
  Tensor floored = clamp_min(depth, kClampEps);
  return div(floored, reduce_sum(floored, {1, 2, 3}, true));
}

// AugMix consistency loss: per-view normalized depth maps compared with their
// mixture by averaged KL terms.
inline Tensor augmix_js_loss(const Tensor& d_s, const Tensor& d_a1, const Tensor& d_a2) {
  for (const Tensor* t : {&d_s, &d_a1, &d_a2})
    for (double v : t->data())
      if (!(v > 0.0)) throw ValueError("augmix_js_loss: depth maps must be strictly positive");
  return js_divergence3(normalize_per_view(d_s), normalize_per_view(d_a1),
                        normalize_per_view(d_a2));
}

// L = L_silog + alpha * L_smooth + beta * L_AugMix. Ground truth supervises
// the clean-path prediction; supervise_augmented extends silog to all three.
inline Tensor total_loss(const Tensor& pred_clean, const Tensor& pred_aug1, const Tensor& pred_aug2,
                         const SparseDepthTarget& target, const Tensor& image_clean,
                         const LossWeights& w, bool supervise_augmented = false) {
  Tensor silog = silog_loss(pred_clean, target, w.lambda_silog);
  if (supervise_augmented) {
    Tensor s1 = silog_loss(pred_aug1, target, w.lambda_silog);
    Tensor s2 = silog_loss(pred_aug2, target, w.lambda_silog);
    silog = mul_scalar(add(add(silog, s1), s2), 1.0 / 3.0);
  }
  Tensor smooth = smooth_loss(pred_clean, image_clean);
  Tensor augmix = augmix_js_loss(pred_clean, pred_aug1, pred_aug2);
  return add(add(silog, mul_scalar(smooth, w.alpha_smooth)), mul_scalar(augmix, w.beta_augmix));
}

}  // namespace dsd
