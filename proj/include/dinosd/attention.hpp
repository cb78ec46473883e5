#pragma once

#include <array>
#include <optional>

#include "dinosd/ops.hpp"

namespace dsd {

constexpr std::size_t kViewCount = 6;

struct AttentionParams {
  Tensor wq, wk, wv;  // square [C,C] projections
  std::size_t head_count = 2;

  static AttentionParams init(std::size_t channels, std::size_t heads, std::mt19937_64& rng) {
    if (heads < 1 || channels % heads != 0)
      throw ShapeError("attention: head_count must divide channel dim");
    AttentionParams p;
    p.wq = randn_trunc({channels, channels}, 0.02, rng);
    p.wk = randn_trunc({channels, channels}, 0.02, rng);
    p.wv = randn_trunc({channels, channels}, 0.02, rng);
    p.head_count = heads;
    return p;
  }
};

// Score-buffer accounting, used to verify the self/adjacent cost asymmetry.
struct AttentionStats {
  std::size_t score_elements = 0;
};

inline std::pair<std::size_t, std::size_t> ring_neighbors(std::size_t i) {
  if (i >= kViewCount)
    throw ValueError("ring_neighbors: view index " + std::to_string(i) + " out of range 0..5");
  return {(i + kViewCount - 1) % kViewCount, (i + 1) % kViewCount};
}

// Multi-head scaled dot-product attention. q:[N,Tq,C], kv:[N,Tk,C].
inline Tensor scaled_dot_attention(const Tensor& q_tokens, const Tensor& kv_tokens,
                                   const AttentionParams& p, AttentionStats* stats = nullptr) {
  const Shape& qs = q_tokens.shape();
  const Shape& ks = kv_tokens.shape();
  if (qs.size() != 3 || ks.size() != 3)
    throw ShapeError("attention: tokens must be [N,T,C]");
  if (qs[2] != ks[2] || qs[0] != ks[0])
    throw ShapeError("attention: dimension mismatch " + shape_str(qs) + " vs " + shape_str(ks));
  std::size_t C = qs[2];
  if (C % p.head_count != 0) throw ShapeError("attention: head_count does not divide C");
  std::size_t dk = C / p.head_count;
  Tensor q = matmul(q_tokens, p.wq);
  Tensor k = matmul(kv_tokens, p.wk);
  Tensor v = matmul(kv_tokens, p.wv);
  std::vector<Tensor> heads;
  heads.reserve(p.head_count);
  for (std::size_t h = 0; h < p.head_count; ++h) {
    Tensor qh = slice(q, 2, h * dk, (h + 1) * dk);
    Tensor kh = slice(k, 2, h * dk, (h + 1) * dk);
    Tensor vh = slice(v, 2, h * dk, (h + 1) * dk);
    Tensor scores = mul_scalar(matmul(qh, transpose_last2(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
    if (stats) stats->score_elements += scores.size();
    Tensor attn = softmax(scores, 2);
    heads.push_back(matmul(attn, vh));
  }
  return concat(heads, 2);
}

// Eq.-style cross-view self attention: all 6 views' tokens joined into one
// sequence, attended jointly, then split back. Plain replacement by default;
// residual optionally wraps the attended term.
inline std::array<Tensor, kViewCount> cross_view_self_attention(
    const std::array<Tensor, kViewCount>& views, const AttentionParams& p, bool residual = false,
    AttentionStats* stats = nullptr) {
  const Shape& s0 = views[0].shape();
  for (const auto& v : views)
    if (v.shape() != s0)
      throw ShapeError("cross_view_self_attention: views disagree: " + shape_str(v.shape()) +
                       " vs " + shape_str(s0));
  std::size_t T = s0[1];
  Tensor joined = concat(std::vector<Tensor>(views.begin(), views.end()), 1);
  Tensor attended = scaled_dot_attention(joined, joined, p, stats);
  std::array<Tensor, kViewCount> out;
  for (std::size_t i = 0; i < kViewCount; ++i) {
    Tensor part = slice(attended, 1, i * T, (i + 1) * T);
    out[i] = residual ? add(views[i], part) : part;
  }
  return out;
}

// Adjacent-view cross attention: view i queries the joined tokens of its two
// ring neighbors (single joint softmax over 2T keys). Residual by default.
inline std::array<Tensor, kViewCount> adjacent_view_cross_attention(
    const std::array<Tensor, kViewCount>& views, const AttentionParams& p, bool residual = true,
    AttentionStats* stats = nullptr) {
  const Shape& s0 = views[0].shape();
  for (const auto& v : views)
    if (v.shape() != s0)
      throw ShapeError("adjacent_view_cross_attention: views disagree: " + shape_str(v.shape()) +
                       " vs " + shape_str(s0));
  std::array<Tensor, kViewCount> out;
  for (std::size_t i = 0; i < kViewCount; ++i) {
    auto [prev, next] = ring_neighbors(i);
    Tensor kv = concat({views[prev], views[next]}, 1);
    Tensor attended = scaled_dot_attention(views[i], kv, p, stats);
    out[i] = residual ? add(views[i], attended) : attended;
  }
  return out;
}

}  // namespace dsd
