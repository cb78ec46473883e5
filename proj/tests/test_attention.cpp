#include <gtest/gtest.h>

#include "dinosd/attention.hpp"
#include "dinosd/gradcheck.hpp"

using namespace dsd;

namespace {

std::mt19937_64 test_rng(std::uint64_t salt) { return std::mt19937_64(mix_seed(77, salt)); }

Tensor identity_proj(std::size_t c) {
  Tensor w = Tensor::zeros({c, c});
  for (std::size_t i = 0; i < c; ++i) w.data()[i * c + i] = 1.0;
  return w;
}

// Independent scalar reference: single-batch multi-head attention computed
// with plain loops, no shared tensor code.
std::vector<double> ref_attention(const std::vector<double>& q_tokens,
                                  const std::vector<double>& kv_tokens, std::size_t tq,
                                  std::size_t tk, std::size_t c, const std::vector<double>& wq,
                                  const std::vector<double>& wk, const std::vector<double>& wv,
                                  std::size_t heads) {
  auto project = [c](const std::vector<double>& x, std::size_t t, const std::vector<double>& w) {
    std::vector<double> out(t * c, 0.0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t k = 0; k < c; ++k) out[i * c + j] += x[i * c + k] * w[k * c + j];
    return out;
  };
  std::vector<double> q = project(q_tokens, tq, wq);
  std::vector<double> k = project(kv_tokens, tk, wk);
  std::vector<double> v = project(kv_tokens, tk, wv);
  std::size_t dk = c / heads;
  std::vector<double> out(tq * c, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < tq; ++i) {
      std::vector<double> scores(tk, 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j < tk; ++j) {
        for (std::size_t d = 0; d < dk; ++d)
          scores[j] += q[i * c + h * dk + d] * k[j * c + h * dk + d];
        scores[j] /= std::sqrt(double(dk));
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t j = 0; j < tk; ++j)
        for (std::size_t d = 0; d < dk; ++d)
          out[i * c + h * dk + d] += scores[j] / z * v[j * c + h * dk + d];
    }
  return out;
}

std::array<Tensor, kViewCount> random_views(std::size_t t, std::size_t c, std::mt19937_64& rng) {
  std::array<Tensor, kViewCount> views;
  for (auto& v : views) v = rand_uniform({1, t, c}, -1, 1, rng);
  return views;
}

}  // namespace

TEST(RingNeighbors, WraparoundTable) {
  EXPECT_EQ(ring_neighbors(0), (std::pair<std::size_t, std::size_t>{5, 1}));
  EXPECT_EQ(ring_neighbors(3), (std::pair<std::size_t, std::size_t>{2, 4}));
  EXPECT_EQ(ring_neighbors(5), (std::pair<std::size_t, std::size_t>{4, 0}));
}

TEST(RingNeighbors, OutOfRangeThrows) { EXPECT_THROW(ring_neighbors(6), ValueError); }

TEST(SelfAttention, IdenticalTokensIdentityWeightsAreFixedPoint) {
  Tensor token({1, 1, 4}, {0.3, -0.7, 1.1, 0.5});
  std::array<Tensor, kViewCount> views;
  views.fill(token);
  AttentionParams p{identity_proj(4), identity_proj(4), identity_proj(4), 2};
  auto out = cross_view_self_attention(views, p);
  for (const auto& o : out)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(o.data()[i], token.data()[i], 1e-12);
}

TEST(SelfAttention, MatchesScalarHandComputation) {
  auto rng = test_rng(1);
  std::array<Tensor, kViewCount> views = random_views(1, 2, rng);
  AttentionParams p{rand_uniform({2, 2}, -1, 1, rng), rand_uniform({2, 2}, -1, 1, rng),
                    rand_uniform({2, 2}, -1, 1, rng), 1};
  auto out = cross_view_self_attention(views, p);

  std::vector<double> joined;
  for (const auto& v : views) joined.insert(joined.end(), v.data().begin(), v.data().end());
  std::vector<double> ref =
      ref_attention(joined, joined, 6, 6, 2, p.wq.data(), p.wk.data(), p.wv.data(), 1);
  for (std::size_t i = 0; i < kViewCount; ++i)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(out[i].data()[d], ref[i * 2 + d], 1e-12);
}

TEST(SelfAttention, PermutationEquivariant) {
  auto rng = test_rng(2);
  std::array<Tensor, kViewCount> views = random_views(2, 4, rng);
  AttentionParams p = AttentionParams::init(4, 2, rng);
  auto base = cross_view_self_attention(views, p);

  std::array<std::size_t, kViewCount> perm{3, 0, 5, 1, 4, 2};
  std::array<Tensor, kViewCount> permuted;
  for (std::size_t i = 0; i < kViewCount; ++i) permuted[i] = views[perm[i]];
  auto out = cross_view_self_attention(permuted, p);
  for (std::size_t i = 0; i < kViewCount; ++i)
    for (std::size_t d = 0; d < out[i].size(); ++d)
      EXPECT_NEAR(out[i].data()[d], base[perm[i]].data()[d], 1e-12);
}

TEST(AdjacentAttention, UniformInputAttendedPartEqualsToken) {
  Tensor token({1, 1, 4}, {0.2, 0.9, -0.4, 0.1});
  std::array<Tensor, kViewCount> views;
  views.fill(token);
  AttentionParams p{identity_proj(4), identity_proj(4), identity_proj(4), 2};
  auto plain = adjacent_view_cross_attention(views, p, false);
  auto resid = adjacent_view_cross_attention(views, p, true);
  for (std::size_t i = 0; i < kViewCount; ++i)
    for (std::size_t d = 0; d < 4; ++d) {
      EXPECT_NEAR(plain[i].data()[d], token.data()[d], 1e-12);
      EXPECT_NEAR(resid[i].data()[d], 2.0 * token.data()[d], 1e-12);
    }
}

TEST(AdjacentAttention, MatchesScalarHandComputation) {
  auto rng = test_rng(3);
  std::array<Tensor, kViewCount> views = random_views(1, 2, rng);
  AttentionParams p{rand_uniform({2, 2}, -1, 1, rng), rand_uniform({2, 2}, -1, 1, rng),
                    rand_uniform({2, 2}, -1, 1, rng), 1};
  auto out = adjacent_view_cross_attention(views, p, false);

  // view 0 attends over views 5 and 1 only
  std::vector<double> kv = views[5].data();
  kv.insert(kv.end(), views[1].data().begin(), views[1].data().end());
  std::vector<double> ref =
      ref_attention(views[0].data(), kv, 1, 2, 2, p.wq.data(), p.wk.data(), p.wv.data(), 1);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(out[0].data()[d], ref[d], 1e-12);
}

TEST(AdjacentAttention, NonAdjacentViewsCannotInfluence) {
  auto rng = test_rng(4);
  std::array<Tensor, kViewCount> views = random_views(2, 4, rng);
  AttentionParams p = AttentionParams::init(4, 2, rng);
  auto base = adjacent_view_cross_attention(views, p);

  for (std::size_t i = 0; i < kViewCount; ++i) {
    std::array<Tensor, kViewCount> perturbed = views;
    for (std::size_t off : {2, 3, 4})
      perturbed[(i + off) % kViewCount] = rand_uniform({1, 2, 4}, -5, 5, rng);
    auto out = adjacent_view_cross_attention(perturbed, p);
    EXPECT_EQ(out[i].data(), base[i].data()) << "view " << i;
  }
}

TEST(BothMechanisms, RotationEquivariant) {
  auto rng = test_rng(5);
  std::array<Tensor, kViewCount> views = random_views(2, 4, rng);
  AttentionParams p = AttentionParams::init(4, 2, rng);
  auto base_self = cross_view_self_attention(views, p);
  auto base_adj = adjacent_view_cross_attention(views, p);

  for (std::size_t k : {1, 2, 5}) {
    std::array<Tensor, kViewCount> rotated;
    for (std::size_t i = 0; i < kViewCount; ++i) rotated[i] = views[(i + k) % kViewCount];
    auto out_self = cross_view_self_attention(rotated, p);
    auto out_adj = adjacent_view_cross_attention(rotated, p);
    for (std::size_t i = 0; i < kViewCount; ++i) {
      EXPECT_EQ(out_adj[i].data(), base_adj[(i + k) % kViewCount].data());
      for (std::size_t d = 0; d < out_self[i].size(); ++d)
        EXPECT_NEAR(out_self[i].data()[d], base_self[(i + k) % kViewCount].data()[d], 1e-12);
    }
  }
}

TEST(BothMechanisms, ScoreBufferAsymmetry) {
  auto rng = test_rng(6);
  constexpr std::size_t T = 3, C = 4, heads = 2;
  std::array<Tensor, kViewCount> views = random_views(T, C, rng);
  AttentionParams p = AttentionParams::init(C, heads, rng);

  AttentionStats self_stats, adj_stats;
  cross_view_self_attention(views, p, false, &self_stats);
  adjacent_view_cross_attention(views, p, true, &adj_stats);
  EXPECT_EQ(self_stats.score_elements, heads * (6 * T) * (6 * T));
  EXPECT_EQ(adj_stats.score_elements, heads * 6 * T * (2 * T));
}

TEST(BothMechanisms, ShapeMismatchAcrossViewsThrows) {
  auto rng = test_rng(7);
  std::array<Tensor, kViewCount> views = random_views(2, 4, rng);
  views[3] = rand_uniform({1, 3, 4}, -1, 1, rng);
  AttentionParams p = AttentionParams::init(4, 2, rng);
  EXPECT_THROW(cross_view_self_attention(views, p), ShapeError);
  EXPECT_THROW(adjacent_view_cross_attention(views, p), ShapeError);
}

TEST(BothMechanisms, GradientsMatchFiniteDifferences) {
  auto rng = test_rng(8);
  for (bool adjacent : {false, true}) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < kViewCount; ++i) inputs.push_back(rand_uniform({1, 2, 4}, -1, 1, rng));
    inputs.push_back(rand_uniform({4, 4}, -1, 1, rng));
    inputs.push_back(rand_uniform({4, 4}, -1, 1, rng));
    inputs.push_back(rand_uniform({4, 4}, -1, 1, rng));
    double err = finite_diff_check_multi(
        [adjacent](const std::vector<Tensor>& v) {
          std::array<Tensor, kViewCount> views;
          for (std::size_t i = 0; i < kViewCount; ++i) views[i] = v[i];
          AttentionParams p{v[6], v[7], v[8], 2};
          auto out = adjacent ? adjacent_view_cross_attention(views, p)
                              : cross_view_self_attention(views, p);
          Tensor total = Tensor::scalar(0.0);
          for (const auto& o : out) total = add(total, sum_all(square(o)));
          return total;
        },
        inputs, 1e-5);
    EXPECT_LT(err, 1e-4) << (adjacent ? "adjacent" : "self");
  }
}
