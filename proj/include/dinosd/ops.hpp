#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "dinosd/tensor.hpp"

namespace dsd {

constexpr double kClampEps = 1e-8;   // floor for log/div arguments
constexpr double kExpMax = 709.0;    // exp input ceiling, keeps outputs finite

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace detail {

inline void maybe_record(std::initializer_list<Tensor> inputs, Tensor& out,
                         std::function<void()> backward_fn) {
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  out.set_requires_grad(rg);
  if (rg && Tape::active()) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    nodes.reserve(inputs.size());
    for (const auto& t : inputs) nodes.push_back(t.node());
    Tape::active()->record(std::move(nodes), out.node(), std::move(backward_fn));
  }
}

inline Shape broadcast_shapes(const Shape& a, const Shape& b, const char* opname) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(opname) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major index map from a broadcast output shape back into an input shape.
inline std::vector<std::size_t> broadcast_index_map(const Shape& out, const Shape& in) {
  std::size_t r = out.size();
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t stride = 1;
  std::size_t off = r - in.size();
  for (std::size_t i = r; i-- > 0;) {
    if (i >= off && in[i - off] != 1) {
      in_stride[i] = stride;
      stride *= in[i - off];
    }
  }
  std::size_t n = numel(out);
  std::vector<std::size_t> map(n);
  Shape idx(r, 0);
  for (std::size_t li = 0; li < n; ++li) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[i];
    map[li] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

// f(x) -> y; df(x, y) -> dy/dx
template <class F, class DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.size());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  Tensor y(x.shape(), std::move(out));
  auto xn = x.node();
  auto yn = y.node();
  detail::maybe_record({x}, y, [xn, yn, df]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += yn->grad[i] * df(xn->data[i], yn->data[i]);
  });
  return y;
}

template <class F, class DFA, class DFB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa, DFB dfb) {
  Tensor out;
  std::shared_ptr<std::vector<std::size_t>> ma, mb;  // null when no broadcast needed
  if (a.shape() == b.shape()) {
    std::vector<double> od(a.size());
    const auto &ad = a.data(), &bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(ad[i], bd[i]);
    out = Tensor(a.shape(), std::move(od));
  } else {
    Shape os = detail::broadcast_shapes(a.shape(), b.shape(), name);
    ma = std::make_shared<std::vector<std::size_t>>(detail::broadcast_index_map(os, a.shape()));
    mb = std::make_shared<std::vector<std::size_t>>(detail::broadcast_index_map(os, b.shape()));
    std::vector<double> od(numel(os));
    const auto &ad = a.data(), &bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(ad[(*ma)[i]], bd[(*mb)[i]]);
    out = Tensor(os, std::move(od));
  }
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  detail::maybe_record({a, b}, out, [an, bn, on, ma, mb, dfa, dfb]() {
    const auto& go = on->grad;
    if (an->requires_grad) {
      auto& ga = ensure_grad(an);
      for (std::size_t i = 0; i < go.size(); ++i) {
        std::size_t ia = ma ? (*ma)[i] : i;
        std::size_t ib = mb ? (*mb)[i] : i;
        ga[ia] += go[i] * dfa(an->data[ia], bn->data[ib]);
      }
    }
    if (bn->requires_grad) {
      auto& gb = ensure_grad(bn);
      for (std::size_t i = 0; i < go.size(); ++i) {
        std::size_t ia = ma ? (*ma)[i] : i;
        std::size_t ib = mb ? (*mb)[i] : i;
        gb[ib] += go[i] * dfb(an->data[ia], bn->data[ib]);
      }
    }
  });
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

namespace detail {
inline double clamp_denom(double y) {
  if (y >= 0.0) return std::max(y, kClampEps);
  return std::min(y, -kClampEps);
}
}  // namespace detail

inline Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / detail::clamp_denom(y); },
      [](double, double y) { return 1.0 / detail::clamp_denom(y); },
      [](double x, double y) {
        double yc = detail::clamp_denom(y);
        return (y == yc) ? -x / (yc * yc) : 0.0;
      });
}

inline Tensor add_scalar(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor mul_scalar(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }

inline Tensor neg(const Tensor& x) {
  return unary_op(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}
inline Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(std::max(v, kClampEps)); },
      [](double v, double) { return v > kClampEps ? 1.0 / v : 0.0; });
}
inline Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(std::min(v, kExpMax)); },
      [](double v, double y) { return v < kExpMax ? y : 0.0; });
}
inline Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sqrt(std::max(v, 0.0)); },
      [](double v, double y) { return v > 0.0 ? 0.5 / y : 0.0; });
}
inline Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-std::max(std::min(v, kExpMax), -kExpMax))); },
      [](double, double y) { return y * (1.0 - y); });
}
inline Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}
inline Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}
inline Tensor square(const Tensor& x) {
  return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// --- reductions -------------------------------------------------------------

enum class Reduce { Sum, Mean };

// axes empty -> reduce over all axes.
inline Tensor reduce(const Tensor& x, Reduce kind, std::vector<std::size_t> axes,
                     bool keepdims = false) {
  const Shape& xs = x.shape();
  std::vector<bool> reduced(xs.size(), false);
  if (axes.empty()) {
    std::fill(reduced.begin(), reduced.end(), true);
  } else {
    for (auto a : axes) {
      if (a >= xs.size()) throw ShapeError("reduce: axis " + std::to_string(a) + " out of range for " + shape_str(xs));
      reduced[a] = true;
    }
  }
  std::size_t count = 1;
  Shape os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (reduced[i]) {
      count *= xs[i];
      if (keepdims) os.push_back(1);
    } else {
      os.push_back(xs[i]);
    }
  }
  if (os.empty()) os.push_back(1);
  if (count == 0 || x.size() == 0) throw ShapeError("reduce: empty reduction set");

  // map each input element -> output slot
  Shape kept = os;
  Shape full(xs.size());
  for (std::size_t i = 0, j = 0; i < xs.size(); ++i) full[i] = reduced[i] ? 1 : xs[i];
  auto map = std::make_shared<std::vector<std::size_t>>(detail::broadcast_index_map(xs, full));

  std::vector<double> od(numel(os), 0.0);
  const auto& xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[(*map)[i]] += xd[i];
  double scale = kind == Reduce::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  if (kind == Reduce::Mean)
    for (auto& v : od) v *= scale;
  Tensor out(os, std::move(od));

  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, map, scale]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[(*map)[i]] * scale;
  });
  return out;
}

inline Tensor reduce_sum(const Tensor& x, std::vector<std::size_t> axes = {}, bool keepdims = false) {
  return reduce(x, Reduce::Sum, std::move(axes), keepdims);
}
inline Tensor reduce_mean(const Tensor& x, std::vector<std::size_t> axes = {}, bool keepdims = false) {
  return reduce(x, Reduce::Mean, std::move(axes), keepdims);
}

// --- shape ops ---------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape ns) {
  if (numel(ns) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(ns) + " changes size");
  Tensor out(ns, x.data());
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
  });
  return out;
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& dims) {
  const Shape& xs = x.shape();
  if (dims.size() != xs.size()) throw ShapeError("permute: dims rank mismatch");
  Shape os(xs.size());
  for (std::size_t i = 0; i < dims.size(); ++i) os[i] = xs[dims[i]];
  // out[idx] = x[idx permuted back]
  std::vector<std::size_t> xstride(xs.size());
  std::size_t s = 1;
  for (std::size_t i = xs.size(); i-- > 0;) {
    xstride[i] = s;
    s *= xs[i];
  }
  auto map = std::make_shared<std::vector<std::size_t>>(x.size());
  Shape idx(os.size(), 0);
  for (std::size_t li = 0; li < x.size(); ++li) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < os.size(); ++i) src += idx[i] * xstride[dims[i]];
    (*map)[li] = src;
    for (std::size_t i = os.size(); i-- > 0;) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> od(x.size());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[(*map)[i]];
  Tensor out(os, std::move(od));
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, map]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t i = 0; i < on->grad.size(); ++i) gx[(*map)[i]] += on->grad[i];
  });
  return out;
}

inline Tensor transpose_last2(const Tensor& x) {
  std::vector<std::size_t> dims(x.rank());
  for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = i;
  std::swap(dims[dims.size() - 1], dims[dims.size() - 2]);
  return permute(x, dims);
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t end) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || start >= end || end > xs[axis])
    throw ShapeError("slice: invalid range [" + std::to_string(start) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(xs));
  Shape os = xs;
  os[axis] = end - start;
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  std::size_t in_block = xs[axis] * inner, out_block = (end - start) * inner;
  std::vector<double> od(numel(os));
  const auto& xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xd.data() + o * in_block + start * inner, out_block, od.data() + o * out_block);
  Tensor out(os, std::move(od));
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, outer, inner, in_block, out_block, start]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = gx.data() + o * in_block + start * inner;
      const double* src = on->grad.data() + o * out_block;
      for (std::size_t i = 0; i < out_block; ++i) dst[i] += src[i];
    }
  });
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  Shape os = s0;
  os[axis] = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (i != axis && ps[i] != s0[i])
        throw ShapeError("concat: shape mismatch " + shape_str(ps) + " vs " + shape_str(s0));
    os[axis] += ps[axis];
  }
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::vector<double> od(numel(os));
  std::size_t out_block = os[axis] * inner;
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::size_t blk = p.shape()[axis] * inner;
    const auto& pd = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pd.data() + o * blk, blk, od.data() + o * out_block + off);
    off += blk;
  }
  Tensor out(os, std::move(od));
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  out.set_requires_grad(rg);
  if (rg && Tape::active()) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto on = out.node();
    auto blocks = std::make_shared<std::vector<std::size_t>>(offsets);
    Tape::active()->record(nodes, on, [nodes, on, blocks, outer, inner, out_block]() {
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        auto& n = nodes[pi];
        if (!n->requires_grad) continue;
        auto& gx = ensure_grad(n);
        std::size_t blk = gx.size() / outer;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = on->grad.data() + o * out_block + (*blocks)[pi];
          double* dst = gx.data() + o * blk;
          for (std::size_t i = 0; i < blk; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

// --- softmax -----------------------------------------------------------------

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& xs = x.shape();
  if (axis >= xs.size()) throw ShapeError("softmax: axis out of range for " + shape_str(xs));
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  std::size_t len = xs[axis];
  std::size_t outer = x.size() / (inner * len);
  std::vector<double> od(x.size());
  const auto& xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const double* src = xd.data() + o * len * inner + in;
      double* dst = od.data() + o * len * inner + in;
      double mx = src[0];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, src[k * inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        double e = std::exp(src[k * inner] - mx);
        dst[k * inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < len; ++k) dst[k * inner] /= sum;
    }
  Tensor out(xs, std::move(od));
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, outer, inner, len]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    const auto& y = on->data;
    const auto& gy = on->grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += gy[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k)
          gx[base + k * inner] += y[base + k * inner] * (gy[base + k * inner] - dot);
      }
  });
  return out;
}

// --- matmul ------------------------------------------------------------------

// Batched matrix product [..,M,K] x [..,K,P]; batch dims broadcast from 1.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(as) + " and " +
                     shape_str(bs));
  std::size_t M = as[as.size() - 2], K = as[as.size() - 1];
  std::size_t Kb = bs[bs.size() - 2], P = bs[bs.size() - 1];
  if (K != Kb)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(as) + " vs " + shape_str(bs));
  Shape abatch(as.begin(), as.end() - 2), bbatch(bs.begin(), bs.end() - 2);
  Shape obatch = detail::broadcast_shapes(abatch, bbatch, "matmul");
  std::size_t nb = numel(obatch);
  auto amap = std::make_shared<std::vector<std::size_t>>(
      detail::broadcast_index_map(obatch.empty() ? Shape{1} : obatch,
                                  abatch.empty() ? Shape{1} : abatch));
  auto bmap = std::make_shared<std::vector<std::size_t>>(
      detail::broadcast_index_map(obatch.empty() ? Shape{1} : obatch,
                                  bbatch.empty() ? Shape{1} : bbatch));
  Shape os = obatch;
  os.push_back(M);
  os.push_back(P);
  std::vector<double> od(nb * M * P);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < nb; ++i) {
    ConstMatMap A(ad.data() + (*amap)[i] * M * K, M, K);
    ConstMatMap B(bd.data() + (*bmap)[i] * K * P, K, P);
    MatMap O(od.data() + i * M * P, M, P);
    O.noalias() = A * B;
  }
  Tensor out(os, std::move(od));
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  detail::maybe_record({a, b}, out, [an, bn, on, amap, bmap, nb, M, K, P]() {
    for (std::size_t i = 0; i < nb; ++i) {
      ConstMatMap GO(on->grad.data() + i * M * P, M, P);
      if (an->requires_grad) {
        auto& ga = ensure_grad(an);
        ConstMatMap B(bn->data.data() + (*bmap)[i] * K * P, K, P);
        MatMap GA(ga.data() + (*amap)[i] * M * K, M, K);
        GA.noalias() += GO * B.transpose();
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(bn);
        ConstMatMap A(an->data.data() + (*amap)[i] * M * K, M, K);
        MatMap GB(gb.data() + (*bmap)[i] * K * P, K, P);
        GB.noalias() += A.transpose() * GO;
      }
    }
  });
  return out;
}

// --- conv2d ------------------------------------------------------------------

namespace detail {
inline void im2col3x3(const double* x, std::size_t C, std::size_t H, std::size_t W, double* cols) {
  // cols is [C*9, H*W]
  std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (int ky = -1; ky <= 1; ++ky)
      for (int kx = -1; kx <= 1; ++kx) {
        double* row = cols + ((c * 3 + (ky + 1)) * 3 + (kx + 1)) * HW;
        const double* src = x + c * HW;
        for (std::size_t y = 0; y < H; ++y) {
          long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            std::fill_n(row + y * W, W, 0.0);
            continue;
          }
          for (std::size_t xx = 0; xx < W; ++xx) {
            long sx = static_cast<long>(xx) + kx;
            row[y * W + xx] =
                (sx < 0 || sx >= static_cast<long>(W)) ? 0.0 : src[sy * W + sx];
          }
        }
      }
}

inline void col2im3x3_add(const double* cols, std::size_t C, std::size_t H, std::size_t W,
                          double* gx) {
  std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (int ky = -1; ky <= 1; ++ky)
      for (int kx = -1; kx <= 1; ++kx) {
        const double* row = cols + ((c * 3 + (ky + 1)) * 3 + (kx + 1)) * HW;
        double* dst = gx + c * HW;
        for (std::size_t y = 0; y < H; ++y) {
          long sy = static_cast<long>(y) + ky;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          for (std::size_t xx = 0; xx < W; ++xx) {
            long sx = static_cast<long>(xx) + kx;
            if (sx < 0 || sx >= static_cast<long>(W)) continue;
            dst[sy * W + sx] += row[y * W + xx];
          }
        }
      }
}
}  // namespace detail

// 3x3 cross-correlation, stride 1, zero pad 1 (same spatial size).
inline Tensor conv2d(const Tensor& x, const Tensor& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[2] != 3 || ws[3] != 3)
    throw ShapeError("conv2d: expected x[N,C,H,W], w[O,C,3,3]; got " + shape_str(xs) + ", " +
                     shape_str(ws));
  if (xs[1] != ws[1])
    throw ShapeError("conv2d: channel mismatch: input has " + std::to_string(xs[1]) +
                     ", kernel expects " + std::to_string(ws[1]));
  std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0];
  std::size_t HW = H * W, CK = C * 9;
  std::vector<double> od(N * O * HW);
  std::vector<double> cols(CK * HW);
  const auto& xd = x.data();
  const auto& wd = w.data();
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col3x3(xd.data() + n * C * HW, C, H, W, cols.data());
    ConstMatMap Wm(wd.data(), O, CK);
    ConstMatMap Cm(cols.data(), CK, HW);
    MatMap Om(od.data() + n * O * HW, O, HW);
    Om.noalias() = Wm * Cm;
  }
  Tensor out({N, O, H, W}, std::move(od));
  auto xn = x.node();
  auto wn = w.node();
  auto on = out.node();
  detail::maybe_record({x, w}, out, [xn, wn, on, N, C, H, W, O]() {
    std::size_t HW = H * W, CK = C * 9;
    std::vector<double> cols(CK * HW);
    std::vector<double> gcols(CK * HW);
    for (std::size_t n = 0; n < N; ++n) {
      ConstMatMap GO(on->grad.data() + n * O * HW, O, HW);
      if (wn->requires_grad) {
        detail::im2col3x3(xn->data.data() + n * C * HW, C, H, W, cols.data());
        auto& gw = ensure_grad(wn);
        ConstMatMap Cm(cols.data(), CK, HW);
        MatMap GW(gw.data(), O, CK);
        GW.noalias() += GO * Cm.transpose();
      }
      if (xn->requires_grad) {
        auto& gx = ensure_grad(xn);
        ConstMatMap Wm(wn->data.data(), O, CK);
        MatMap GC(gcols.data(), CK, HW);
        GC.noalias() = Wm.transpose() * GO;
        detail::col2im3x3_add(gcols.data(), C, H, W, gx.data() + n * C * HW);
      }
    }
  });
  return out;
}

// --- bilinear resampling ------------------------------------------------------

namespace detail {
struct LerpAxis {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w;  // weight on i1
};
inline LerpAxis lerp_axis(std::size_t in, std::size_t out) {
  LerpAxis ax;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.w.resize(out);
  double s = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * s - 0.5;  // align_corners=false
    src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    std::size_t i1 = std::min(i0 + 1, in - 1);
    ax.i0[o] = i0;
    ax.i1[o] = i1;
    ax.w[o] = src - static_cast<double>(i0);
  }
  return ax;
}
}  // namespace detail

inline Tensor resize_bilinear(const Tensor& x, std::size_t oh, std::size_t ow) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("resize_bilinear: expected [N,C,H,W], got " + shape_str(xs));
  if (oh < 1 || ow < 1) throw ShapeError("resize_bilinear: output dims must be >= 1");
  std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  auto ay = std::make_shared<detail::LerpAxis>(detail::lerp_axis(H, oh));
  auto axx = std::make_shared<detail::LerpAxis>(detail::lerp_axis(W, ow));
  std::vector<double> od(N * C * oh * ow);
  const auto& xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* src = xd.data() + nc * H * W;
    double* dst = od.data() + nc * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      std::size_t y0 = ay->i0[y], y1 = ay->i1[y];
      double wy = ay->w[y];
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t x0 = axx->i0[xo], x1 = axx->i1[xo];
        double wx = axx->w[xo];
        double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
        double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
        dst[y * ow + xo] = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                           wy * ((1.0 - wx) * v10 + wx * v11);
      }
    }
  }
  Tensor out({N, C, oh, ow}, std::move(od));
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, ay, axx, N, C, H, W, oh, ow]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      double* dst = gx.data() + nc * H * W;
      const double* go = on->grad.data() + nc * oh * ow;
      for (std::size_t y = 0; y < oh; ++y) {
        std::size_t y0 = ay->i0[y], y1 = ay->i1[y];
        double wy = ay->w[y];
        for (std::size_t xo = 0; xo < ow; ++xo) {
          std::size_t x0 = axx->i0[xo], x1 = axx->i1[xo];
          double wx = axx->w[xo];
          double g = go[y * ow + xo];
          dst[y0 * W + x0] += g * (1.0 - wy) * (1.0 - wx);
          dst[y0 * W + x1] += g * (1.0 - wy) * wx;
          dst[y1 * W + x0] += g * wy * (1.0 - wx);
          dst[y1 * W + x1] += g * wy * wx;
        }
      }
    }
  });
  return out;
}

inline Tensor resample_bilinear(const Tensor& x, double scale) {
  if (scale <= 0.0) throw ShapeError("resample_bilinear: scale must be positive");
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("resample_bilinear: expected [N,C,H,W]");
  auto round_dim = [scale](std::size_t d) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scale * static_cast<double>(d))));
  };
  return resize_bilinear(x, round_dim(xs[2]), round_dim(xs[3]));
}

// --- patch rearrangement --------------------------------------------------------

// [N,C,H,W] -> [N, T, C*n*n] with T=(H/n)*(W/n); within a token: (c, py, px).
inline Tensor im2patch(const Tensor& x, std::size_t n) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("im2patch: expected [N,C,H,W]");
  std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (H % n != 0 || W % n != 0)
    throw ShapeError("im2patch: dims " + shape_str(xs) + " not divisible by patch size " +
                     std::to_string(n));
  std::size_t gh = H / n, gw = W / n, T = gh * gw, D = C * n * n;
  auto map = std::make_shared<std::vector<std::size_t>>(N * T * D);
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t ty = 0; ty < gh; ++ty)
      for (std::size_t tx = 0; tx < gw; ++tx)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t py = 0; py < n; ++py)
            for (std::size_t px = 0; px < n; ++px) {
              std::size_t t = ty * gw + tx;
              std::size_t d = (c * n + py) * n + px;
              (*map)[(b * T + t) * D + d] =
                  ((b * C + c) * H + ty * n + py) * W + tx * n + px;
            }
  std::vector<double> od(N * T * D);
  const auto& xd = x.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[(*map)[i]];
  Tensor out({N, T, D}, std::move(od));
  auto xn = x.node();
  auto on = out.node();
  detail::maybe_record({x}, out, [xn, on, map]() {
    if (!xn->requires_grad) return;
    auto& gx = ensure_grad(xn);
    for (std::size_t i = 0; i < on->grad.size(); ++i) gx[(*map)[i]] += on->grad[i];
  });
  return out;
}

// [N,T,C] tokens -> [N,C,h,w] spatial map (row-major token grid).
inline Tensor tokens_to_spatial(const Tensor& t, std::size_t h, std::size_t w) {
  const Shape& ts = t.shape();
  if (ts.size() != 3 || ts[1] != h * w)
    throw ShapeError("tokens_to_spatial: token count " + shape_str(ts) + " != " +
                     std::to_string(h) + "x" + std::to_string(w));
  Tensor grid = reshape(t, {ts[0], h, w, ts[2]});
  return permute(grid, {0, 3, 1, 2});
}

inline Tensor sum_all(const Tensor& x) { return reduce_sum(x, {}, false); }
inline Tensor mean_all(const Tensor& x) { return reduce_mean(x, {}, false); }

}  // namespace dsd
