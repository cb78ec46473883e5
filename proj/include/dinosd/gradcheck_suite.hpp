#pragma once

#include "dinosd/attention.hpp"
#include "dinosd/gradcheck.hpp"
#include "dinosd/losses.hpp"

namespace dsd {

struct GradCheckResult {
  std::string name;
  double max_err = 0.0;
  bool pass = false;
};

// Finite-difference verification of every registered differentiable op plus
// the three losses, on `trials` random inputs each.
inline std::vector<GradCheckResult> run_gradcheck_suite(double tol = 1e-4, int trials = 10) {
  std::vector<GradCheckResult> results;

  // values bounded away from relu/abs kinks and div/log singularities
  auto safe_rand = [](Shape s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    std::uniform_int_distribution<int> sign(0, 1);
    std::vector<double> v(numel(s));
    for (auto& x : v) x = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    return Tensor(std::move(s), std::move(v));
  };
  auto pos_rand = [](Shape s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.5, 3.0);
    std::vector<double> v(numel(s));
    for (auto& x : v) x = mag(rng);
    return Tensor(std::move(s), std::move(v));
  };

  using CaseFn = std::function<double(std::mt19937_64&)>;
  auto run = [&](const std::string& name, CaseFn one_trial) {
    GradCheckResult r;
    r.name = name;
    for (int t = 0; t < trials; ++t) {
      std::mt19937_64 rng(mix_seed(0x6EAD, static_cast<std::uint64_t>(t)));
      r.max_err = std::max(r.max_err, one_trial(rng));
    }
    r.pass = r.max_err < tol;
    results.push_back(r);
  };

  auto scalarize = [](std::function<Tensor(const std::vector<Tensor>&)> f) { return f; };

  run("matmul", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(mul(matmul(v[0], v[1]), v[2])); }),
        {safe_rand({3, 4}, rng), safe_rand({4, 2}, rng), safe_rand({3, 2}, rng)});
  });
  run("matmul_batched", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(matmul(v[0], v[1]))); }),
        {safe_rand({2, 3, 4}, rng), safe_rand({4, 2}, rng)});
  });
  run("softmax", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          return sum_all(mul(softmax(v[0], 1), v[1]));
        }),
        {safe_rand({3, 5}, rng), safe_rand({3, 5}, rng)});
  });
  run("conv2d", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(conv2d(v[0], v[1]))); }),
        {safe_rand({1, 2, 4, 4}, rng), safe_rand({3, 2, 3, 3}, rng)});
  });
  run("resample_bilinear", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          return sum_all(square(resample_bilinear(v[0], 1.7)));
        }),
        {safe_rand({1, 2, 4, 5}, rng)});
  });
  run("add_broadcast", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(add(v[0], v[1]))); }),
        {safe_rand({2, 3, 4}, rng), safe_rand({4}, rng)});
  });
  run("sub", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(sub(v[0], v[1]))); }),
        {safe_rand({3, 4}, rng), safe_rand({3, 4}, rng)});
  });
  run("mul", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(mul(v[0], v[1]))); }),
        {safe_rand({3, 4}, rng), safe_rand({3, 4}, rng)});
  });
  run("div", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(div(v[0], v[1]))); }),
        {safe_rand({3, 4}, rng), pos_rand({3, 4}, rng)});
  });
  run("log", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(log(v[0]))); }),
        {pos_rand({3, 4}, rng)});
  });
  run("exp", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(exp(v[0]))); }),
        {safe_rand({3, 4}, rng)});
  });
  run("sigmoid", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(sigmoid(v[0]))); }),
        {safe_rand({3, 4}, rng)});
  });
  run("relu", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(relu(v[0]))); }),
        {safe_rand({3, 4}, rng)});
  });
  run("abs", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(abs(v[0]))); }),
        {safe_rand({3, 4}, rng)});
  });
  run("square", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(square(v[0]))); }),
        {safe_rand({3, 4}, rng)});
  });
  run("sqrt", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(sqrt(v[0])); }),
        {pos_rand({3, 4}, rng)});
  });
  run("reduce_sum", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          return sum_all(square(reduce_sum(v[0], {1}, false)));
        }),
        {safe_rand({3, 4, 2}, rng)});
  });
  run("reduce_mean", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          return sum_all(square(reduce_mean(v[0], {0, 2}, true)));
        }),
        {safe_rand({3, 4, 2}, rng)});
  });
  run("reshape_permute", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          return sum_all(square(permute(reshape(v[0], {2, 3, 4}), {2, 0, 1})));
        }),
        {safe_rand({6, 4}, rng)});
  });
  run("slice_concat", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) {
          Tensor joined = concat({v[0], v[1]}, 1);
          return sum_all(square(slice(joined, 1, 1, 5)));
        }),
        {safe_rand({2, 3}, rng), safe_rand({2, 3}, rng)});
  });
  run("im2patch", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return sum_all(square(im2patch(v[0], 2))); }),
        {safe_rand({1, 2, 4, 4}, rng)});
  });

  auto make_views = [&](std::mt19937_64& rng) {
    std::vector<Tensor> vs;
    for (std::size_t i = 0; i < kViewCount; ++i) vs.push_back(safe_rand({1, 2, 4}, rng));
    vs.push_back(safe_rand({4, 4}, rng));  // wq
    vs.push_back(safe_rand({4, 4}, rng));  // wk
    vs.push_back(safe_rand({4, 4}, rng));  // wv
    return vs;
  };
  auto attn_case = [&](bool adjacent) {
    return [adjacent](const std::vector<Tensor>& v) {
      std::array<Tensor, kViewCount> views;
      for (std::size_t i = 0; i < kViewCount; ++i) views[i] = v[i];
      AttentionParams p{v[6], v[7], v[8], 2};
      auto out = adjacent ? adjacent_view_cross_attention(views, p)
                          : cross_view_self_attention(views, p);
      Tensor total = Tensor::scalar(0.0);
      for (const auto& o : out) total = add(total, sum_all(square(o)));
      return total;
    };
  };
  run("cross_view_self_attention", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(scalarize(attn_case(false)), make_views(rng), 1e-5);
  });
  run("adjacent_view_cross_attention", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(scalarize(attn_case(true)), make_views(rng), 1e-5);
  });

  // the three losses on 6-view 8x12 inputs
  run("silog_loss", [&](std::mt19937_64& rng) {
    Tensor gt = pos_rand({6, 1, 8, 12}, rng);
    Tensor mask = Tensor::zeros({6, 1, 8, 12});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& m : mask.data()) m = unit(rng) < 0.3 ? 1.0 : 0.0;
    mask.data()[0] = 1.0;
    return finite_diff_check_multi(
        scalarize([gt, mask](const std::vector<Tensor>& v) {
          return silog_loss(v[0], {gt, mask}, 0.85);
        }),
        {pos_rand({6, 1, 8, 12}, rng)});
  });
  run("smooth_loss", [&](std::mt19937_64& rng) {
    Tensor img = pos_rand({6, 3, 8, 12}, rng);
    return finite_diff_check_multi(
        scalarize([img](const std::vector<Tensor>& v) { return smooth_loss(v[0], img); }),
        {pos_rand({6, 1, 8, 12}, rng)});
  });
  run("augmix_js_loss", [&](std::mt19937_64& rng) {
    return finite_diff_check_multi(
        scalarize([](const std::vector<Tensor>& v) { return augmix_js_loss(v[0], v[1], v[2]); }),
        {pos_rand({6, 1, 8, 12}, rng), pos_rand({6, 1, 8, 12}, rng), pos_rand({6, 1, 8, 12}, rng)});
  });

  return results;
}

}  // namespace dsd
