#pragma once

#include <functional>
#include <random>

#include "dinosd/ops.hpp"

namespace dsd {

// Central finite-difference check of reverse-mode gradients.
// f must be scalar-valued and finite near the given point. Returns the max
// over checked coordinates of |analytic - fd| / (|analytic| + 1e-10).
// max_coords = 0 checks every coordinate of every input.
inline double finite_diff_check_multi(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                      std::vector<Tensor> xs, double h = 1e-5,
                                      std::size_t max_coords = 0, std::uint64_t sample_seed = 0) {
  for (auto& x : xs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor y = f(xs);
    tape.backward(y);
    for (auto& x : xs) analytic.push_back(x.has_grad() ? x.grad() : std::vector<double>(x.size(), 0.0));
  }
  std::mt19937_64 rng(sample_seed);
  double worst = 0.0;
  for (std::size_t xi = 0; xi < xs.size(); ++xi) {
    Tensor& x = xs[xi];
    std::size_t n = x.size();
    std::vector<std::size_t> coords;
    if (max_coords == 0 || max_coords >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(pick(rng));
    }
    for (std::size_t i : coords) {
      double orig = x.data()[i];
      x.data()[i] = orig + h;
      double fp = f(xs).item();
      x.data()[i] = orig - h;
      double fm = f(xs).item();
      x.data()[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double err = std::abs(analytic[xi][i] - fd) / (std::abs(analytic[xi][i]) + 1e-10);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                double h = 1e-5, std::size_t max_coords = 0) {
  return finite_diff_check_multi([&f](const std::vector<Tensor>& xs) { return f(xs[0]); }, {x}, h,
                                 max_coords);
}

}  // namespace dsd
