// SPDX-License-Identifier: Apache-2.0

#include "urwkv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace urwkv {

using detail::make_result;
using detail::TensorImpl;

namespace {

using Index = std::ptrdiff_t;

void expect_rank(const Tensor &t, std::size_t rank, const char *what) {
  if (t.ndim() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + ", got shape " +
                                shape_str(t.shape()));
  }
}

std::vector<std::size_t> broadcast_strides(const Shape &src,
                                           const Shape &out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t offset = out.size() - src.size();
  std::size_t stride = 1;
  for (std::size_t i = src.size(); i-- > 0;) {
    strides[offset + i] = (src[i] == 1 && out[offset + i] != 1) ? 0 : stride;
    stride *= src[i];
  }
  return strides;
}

/// Visits (out, a, b) flat offsets of a broadcast binary op.
template <class F>
void for_each_broadcast(const Shape &out, const std::vector<std::size_t> &sa,
                        const std::vector<std::size_t> &sb, F &&f) {
  const std::size_t nd = out.size();
  const std::size_t inner = out[nd - 1];
  const std::size_t outer = shape_numel(out) / inner;
  const std::size_t a_step = sa[nd - 1];
  const std::size_t b_step = sb[nd - 1];
  std::vector<std::size_t> idx(nd, 0);
  std::size_t o = 0;
  for (std::size_t r = 0; r < outer; ++r) {
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t d = 0; d + 1 < nd; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    for (std::size_t j = 0; j < inner; ++j) {
      f(o++, ia + j * a_step, ib + j * b_step);
    }
    for (std::size_t d = nd - 1; d-- > 0;) {
      if (++idx[d] < out[d]) {
        break;
      }
      idx[d] = 0;
    }
  }
}

double apply(BinaryOp op, double a, double b) {
  switch (op) {
  case BinaryOp::kAdd:
    return a + b;
  case BinaryOp::kSub:
    return a - b;
  case BinaryOp::kMul:
    return a * b;
  case BinaryOp::kDiv:
    return a / b;
  }
  return 0.0;
}

const char *op_name(BinaryOp op) {
  switch (op) {
  case BinaryOp::kAdd:
    return "add";
  case BinaryOp::kSub:
    return "sub";
  case BinaryOp::kMul:
    return "mul";
  case BinaryOp::kDiv:
    return "div";
  }
  return "binary";
}

const char *op_name(UnaryOp op) {
  switch (op) {
  case UnaryOp::kNeg:
    return "neg";
  case UnaryOp::kSigmoid:
    return "sigmoid";
  case UnaryOp::kTanh:
    return "tanh";
  case UnaryOp::kRelu:
    return "relu";
  case UnaryOp::kSquaredRelu:
    return "squared_relu";
  case UnaryOp::kAbs:
    return "abs";
  case UnaryOp::kSquare:
    return "square";
  }
  return "unary";
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

} // namespace

Shape broadcast_shape(const Shape &a, const Shape &b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("cannot broadcast shapes " + shape_str(a) +
                                  " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor &a, const Tensor &b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  std::vector<double> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  const bool same = a.shape() == b.shape();
  if (same) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = apply(op, ad[i], bd[i]);
    }
  } else {
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         out[o] = apply(op, ad[ia], bd[ib]);
                       });
  }
  Shape a_shape = a.shape();
  Shape b_shape = b.shape();
  return make_result(
      out_shape, std::move(out), op_name(op), {a, b},
      [op, same, out_shape, a_shape, b_shape](TensorImpl &self) {
        TensorImpl &pa = *self.parents[0];
        TensorImpl &pb = *self.parents[1];
        const auto &g = self.grad;
        const auto &av = pa.data;
        const auto &bv = pb.data;
        double *ga = pa.requires_grad ? pa.grad_ref().data() : nullptr;
        double *gb = pb.requires_grad ? pb.grad_ref().data() : nullptr;
        auto step = [&](std::size_t o, std::size_t ia, std::size_t ib) {
          const double go = g[o];
          switch (op) {
          case BinaryOp::kAdd:
            if (ga) ga[ia] += go;
            if (gb) gb[ib] += go;
            break;
          case BinaryOp::kSub:
            if (ga) ga[ia] += go;
            if (gb) gb[ib] -= go;
            break;
          case BinaryOp::kMul:
            if (ga) ga[ia] += go * bv[ib];
            if (gb) gb[ib] += go * av[ia];
            break;
          case BinaryOp::kDiv:
            if (ga) ga[ia] += go / bv[ib];
            if (gb) gb[ib] -= go * av[ia] / (bv[ib] * bv[ib]);
            break;
          }
        };
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            step(i, i, i);
          }
        } else {
          for_each_broadcast(out_shape, broadcast_strides(a_shape, out_shape),
                             broadcast_strides(b_shape, out_shape), step);
        }
      });
}

Tensor elementwise(UnaryOp op, const Tensor &a) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    switch (op) {
    case UnaryOp::kNeg:
      out[i] = -v;
      break;
    case UnaryOp::kSigmoid:
      out[i] = sigmoid_scalar(v);
      break;
    case UnaryOp::kTanh:
      out[i] = std::tanh(v);
      break;
    case UnaryOp::kRelu:
      out[i] = v > 0.0 ? v : 0.0;
      break;
    case UnaryOp::kSquaredRelu:
      out[i] = v > 0.0 ? v * v : 0.0;
      break;
    case UnaryOp::kAbs:
      out[i] = std::fabs(v);
      break;
    case UnaryOp::kSquare:
      out[i] = v * v;
      break;
    }
  }
  return make_result(
      a.shape(), std::move(out), op_name(op), {a}, [op](TensorImpl &self) {
        TensorImpl &p = *self.parents[0];
        auto &gp = p.grad_ref();
        const auto &g = self.grad;
        const auto &x = p.data;
        const auto &y = self.data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = 0.0;
          switch (op) {
          case UnaryOp::kNeg:
            d = -1.0;
            break;
          case UnaryOp::kSigmoid:
            d = y[i] * (1.0 - y[i]);
            break;
          case UnaryOp::kTanh:
            d = 1.0 - y[i] * y[i];
            break;
          case UnaryOp::kRelu:
            d = x[i] > 0.0 ? 1.0 : 0.0;
            break;
          case UnaryOp::kSquaredRelu:
            d = x[i] > 0.0 ? 2.0 * x[i] : 0.0;
            break;
          case UnaryOp::kAbs:
            d = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            break;
          case UnaryOp::kSquare:
            d = 2.0 * x[i];
            break;
          }
          gp[i] += g[i] * d;
        }
      });
}

Tensor scale(const Tensor &a, double s) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = s * x[i];
  }
  return make_result(a.shape(), std::move(out), "scale", {a},
                     [s](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t i = 0; i < gp.size(); ++i) {
                         gp[i] += s * self.grad[i];
                       }
                     });
}

Tensor add_scalar(const Tensor &a, double s) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + s;
  }
  return make_result(a.shape(), std::move(out), "add_scalar", {a},
                     [](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t i = 0; i < gp.size(); ++i) {
                         gp[i] += self.grad[i];
                       }
                     });
}

Tensor clamp(const Tensor &a, double lo, double hi) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(x[i], lo, hi);
  }
  return make_result(a.shape(), std::move(out), "clamp", {a},
                     [lo, hi](TensorImpl &self) {
                       TensorImpl &p = *self.parents[0];
                       auto &gp = p.grad_ref();
                       for (std::size_t i = 0; i < gp.size(); ++i) {
                         if (p.data[i] > lo && p.data[i] < hi) {
                           gp[i] += self.grad[i];
                         }
                       }
                     });
}

Tensor sum(const Tensor &a) {
  double s = 0.0;
  for (double v : a.data()) {
    s += v;
  }
  return make_result(Shape{1}, {s}, "sum", {a}, [](TensorImpl &self) {
    auto &gp = self.parents[0]->grad_ref();
    const double g = self.grad[0];
    for (double &v : gp) {
      v += g;
    }
  });
}

Tensor mean(const Tensor &a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) {
    s += v;
  }
  return make_result(Shape{1}, {s / n}, "mean", {a}, [n](TensorImpl &self) {
    auto &gp = self.parents[0]->grad_ref();
    const double g = self.grad[0] / n;
    for (double &v : gp) {
      v += g;
    }
  });
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  expect_rank(a, 2, "matmul lhs");
  expect_rank(b, 2, "matmul rhs");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul inner dimensions differ: " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double *row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) {
        continue;
      }
      const double *brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] += av * brow[j];
      }
    }
  }
  return make_result(
      Shape{m, n}, std::move(out), "matmul", {a, b},
      [m, k, n](TensorImpl &self) {
        TensorImpl &pa = *self.parents[0];
        TensorImpl &pb = *self.parents[1];
        const auto &g = self.grad;
        if (pa.requires_grad) {
          auto &ga = pa.grad_ref();
          for (std::size_t i = 0; i < m; ++i) {
            const double *grow = g.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double *brow = pb.data.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                acc += grow[j] * brow[j];
              }
              ga[i * k + p] += acc;
            }
          }
        }
        if (pb.requires_grad) {
          auto &gb = pb.grad_ref();
          for (std::size_t i = 0; i < m; ++i) {
            const double *grow = g.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double av = pa.data[i * k + p];
              double *gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) {
                gbrow[j] += av * grow[j];
              }
            }
          }
        }
      });
}

Tensor transpose(const Tensor &a) {
  expect_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0);
  const std::size_t c = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[j * r + i] = x[i * c + j];
    }
  }
  return make_result(Shape{c, r}, std::move(out), "transpose", {a},
                     [r, c](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           gp[i * c + j] += self.grad[j * r + i];
                         }
                       }
                     });
}

Tensor reshape(const Tensor &a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("cannot reshape " + shape_str(a.shape()) +
                                " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {a},
                     [](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t i = 0; i < gp.size(); ++i) {
                         gp[i] += self.grad[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) {
    throw std::invalid_argument("concat of zero tensors");
  }
  const Shape &first = parts[0].shape();
  if (axis >= first.size()) {
    throw std::invalid_argument("concat axis out of range for " +
                                shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor &t : parts) {
    const Shape &s = t.shape();
    if (s.size() != first.size()) {
      throw std::invalid_argument("concat rank mismatch: " + shape_str(first) +
                                  " vs " + shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw std::invalid_argument("concat extent mismatch: " +
                                    shape_str(first) + " vs " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) {
    outer *= first[d];
  }
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) {
    inner *= first[d];
  }
  std::vector<std::size_t> blocks;
  for (const Tensor &t : parts) {
    blocks.push_back(t.dim(axis) * inner);
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * blocks[p], blocks[p],
                  out.data() + o * row + col);
    }
    col += blocks[p];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result(out_shape, std::move(out), "concat", std::move(parents),
                     [blocks, outer, row](TensorImpl &self) {
                       std::size_t col = 0;
                       for (std::size_t p = 0; p < blocks.size(); ++p) {
                         TensorImpl &src = *self.parents[p];
                         if (src.requires_grad) {
                           auto &gp = src.grad_ref();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double *g =
                                 self.grad.data() + o * row + col;
                             double *dst = gp.data() + o * blocks[p];
                             for (std::size_t i = 0; i < blocks[p]; ++i) {
                               dst[i] += g[i];
                             }
                           }
                         }
                         col += blocks[p];
                       }
                     });
}

Tensor slice(const Tensor &a, std::size_t axis, std::size_t start,
             std::size_t length) {
  const Shape &s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw std::invalid_argument("slice [" + std::to_string(start) + ", +" +
                                std::to_string(length) + ") on axis " +
                                std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) {
    outer *= s[d];
  }
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) {
    inner *= s[d];
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t src_row = s[axis] * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t offset = start * inner;
  const auto x = a.data();
  std::vector<double> out(outer * dst_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + o * src_row + offset, dst_row,
                out.data() + o * dst_row);
  }
  return make_result(out_shape, std::move(out), "slice", {a},
                     [outer, src_row, dst_row, offset](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < dst_row; ++i) {
                           gp[o * src_row + offset + i] +=
                               self.grad[o * dst_row + i];
                         }
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, stride, oh, ow;
  Padding2d pad;

  /// Output columns [lo, hi) whose input column for kernel tap kx is valid.
  std::pair<Index, Index> col_range(std::size_t kx) const {
    const Index off = static_cast<Index>(kx) - static_cast<Index>(pad.left);
    const Index s = static_cast<Index>(stride);
    Index lo = 0;
    if (off < 0) {
      lo = (-off + s - 1) / s;
    }
    Index hi = (static_cast<Index>(w) - 1 - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<Index>(hi, static_cast<Index>(ow));
    return {lo, std::max(lo, hi)};
  }
};

} // namespace

Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              std::size_t stride, Padding2d pad) {
  expect_rank(x, 3, "conv2d input");
  expect_rank(weight, 4, "conv2d weight");
  if (stride == 0) {
    throw std::invalid_argument("conv2d stride must be positive");
  }
  ConvGeometry g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.cin) {
    throw std::invalid_argument("conv2d: weight " + shape_str(weight.shape()) +
                                " does not match input " +
                                shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{g.cout}) {
    throw std::invalid_argument("conv2d: bias shape " +
                                shape_str(bias.shape()) + " != [" +
                                std::to_string(g.cout) + "]");
  }
  const std::size_t ph = g.h + pad.top + pad.bottom;
  const std::size_t pw = g.w + pad.left + pad.right;
  if (ph < g.kh || pw < g.kw) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(weight.shape()) +
                                " larger than padded input " +
                                std::to_string(ph) + "x" + std::to_string(pw));
  }
  if ((ph - g.kh) % stride != 0 || (pw - g.kw) % stride != 0) {
    throw std::invalid_argument(
        "conv2d: non-integral output extent for padded input " +
        std::to_string(ph) + "x" + std::to_string(pw) + ", kernel " +
        std::to_string(g.kh) + "x" + std::to_string(g.kw) + ", stride " +
        std::to_string(stride));
  }
  g.oh = (ph - g.kh) / stride + 1;
  g.ow = (pw - g.kw) / stride + 1;

  const auto xd = x.data();
  const auto wd = weight.data();
  const std::size_t oplane = g.oh * g.ow;
  std::vector<double> out(g.cout * oplane, 0.0);
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t co = 0; co < g.cout; ++co) {
      std::fill_n(out.data() + co * oplane, oplane, bd[co]);
    }
  }
  const Index s = static_cast<Index>(stride);
  for (std::size_t co = 0; co < g.cout; ++co) {
    double *oplane_ptr = out.data() + co * oplane;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double *iplane = xd.data() + ci * g.h * g.w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const double wv = wd[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
          if (wv == 0.0) {
            continue;
          }
          const auto [lo, hi] = g.col_range(kx);
          const Index xoff =
              static_cast<Index>(kx) - static_cast<Index>(pad.left);
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const Index iy = static_cast<Index>(oy * stride + ky) -
                             static_cast<Index>(pad.top);
            if (iy < 0 || iy >= static_cast<Index>(g.h)) {
              continue;
            }
            const double *irow = iplane + iy * static_cast<Index>(g.w);
            double *orow = oplane_ptr + oy * g.ow;
            for (Index ox = lo; ox < hi; ++ox) {
              orow[ox] += wv * irow[ox * s + xoff];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) {
    parents.push_back(bias);
  }
  return make_result(
      Shape{g.cout, g.oh, g.ow}, std::move(out), "conv2d", std::move(parents),
      [g](TensorImpl &self) {
        TensorImpl &px = *self.parents[0];
        TensorImpl &pw = *self.parents[1];
        const std::size_t oplane = g.oh * g.ow;
        const Index s = static_cast<Index>(g.stride);
        const auto &grad = self.grad;
        double *gx = px.requires_grad ? px.grad_ref().data() : nullptr;
        double *gw = pw.requires_grad ? pw.grad_ref().data() : nullptr;
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto &gb = self.parents[2]->grad_ref();
          for (std::size_t co = 0; co < g.cout; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < oplane; ++i) {
              acc += grad[co * oplane + i];
            }
            gb[co] += acc;
          }
        }
        if (gx == nullptr && gw == nullptr) {
          return;
        }
        for (std::size_t co = 0; co < g.cout; ++co) {
          const double *gplane = grad.data() + co * oplane;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double *iplane = px.data.data() + ci * g.h * g.w;
            double *giplane = gx ? gx + ci * g.h * g.w : nullptr;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const std::size_t widx =
                    ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
                const double wv = pw.data[widx];
                const auto [lo, hi] = g.col_range(kx);
                const Index xoff =
                    static_cast<Index>(kx) - static_cast<Index>(g.pad.left);
                double wacc = 0.0;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                  const Index iy = static_cast<Index>(oy * g.stride + ky) -
                                   static_cast<Index>(g.pad.top);
                  if (iy < 0 || iy >= static_cast<Index>(g.h)) {
                    continue;
                  }
                  const double *grow = gplane + oy * g.ow;
                  const Index rowoff = iy * static_cast<Index>(g.w) + xoff;
                  if (gw) {
                    const double *irow = iplane + rowoff;
                    for (Index ox = lo; ox < hi; ++ox) {
                      wacc += grow[ox] * irow[ox * s];
                    }
                  }
                  if (giplane && wv != 0.0) {
                    double *girow = giplane + rowoff;
                    for (Index ox = lo; ox < hi; ++ox) {
                      girow[ox * s] += wv * grow[ox];
                    }
                  }
                }
                if (gw) {
                  gw[widx] += wacc;
                }
              }
            }
          }
        }
      });
}

Tensor avg_pool2d(const Tensor &x, std::size_t factor) {
  expect_rank(x, 3, "avg_pool2d");
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if (factor == 0 || h % factor != 0 || w % factor != 0) {
    throw std::invalid_argument("avg_pool2d: factor " + std::to_string(factor) +
                                " does not divide " + shape_str(x.shape()));
  }
  const std::size_t oh = h / factor;
  const std::size_t ow = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  const auto xd = x.data();
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(ch * oh + y / factor) * ow + xx / factor] +=
            xd[(ch * h + y) * w + xx] * inv;
      }
    }
  }
  return make_result(Shape{c, oh, ow}, std::move(out), "avg_pool2d", {x},
                     [c, h, w, oh, ow, factor, inv](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t y = 0; y < h; ++y) {
                           for (std::size_t xx = 0; xx < w; ++xx) {
                             gp[(ch * h + y) * w + xx] +=
                                 self.grad[(ch * oh + y / factor) * ow +
                                           xx / factor] *
                                 inv;
                           }
                         }
                       }
                     });
}

Tensor upsample_nearest(const Tensor &x, std::size_t factor) {
  expect_rank(x, 3, "upsample_nearest");
  if (factor == 0) {
    throw std::invalid_argument("upsample_nearest: factor must be positive");
  }
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  const std::size_t oh = h * factor;
  const std::size_t ow = w * factor;
  const auto xd = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        out[(ch * oh + y) * ow + xx] = xd[(ch * h + y / factor) * w + xx / factor];
      }
    }
  }
  return make_result(Shape{c, oh, ow}, std::move(out), "upsample_nearest",
                     {x}, [c, h, w, oh, ow, factor](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t y = 0; y < oh; ++y) {
                           for (std::size_t xx = 0; xx < ow; ++xx) {
                             gp[(ch * h + y / factor) * w + xx / factor] +=
                                 self.grad[(ch * oh + y) * ow + xx];
                           }
                         }
                       }
                     });
}

namespace {

struct LinearTap {
  std::size_t i0, i1;
  double w1; // weight of i1; i0 gets 1 - w1
};

std::vector<LinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) {
      src = 0.0;
    }
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) {
      i0 = in - 1;
    }
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return taps;
}

} // namespace

Tensor resize_bilinear(const Tensor &x, std::size_t out_h, std::size_t out_w) {
  expect_rank(x, 3, "resize_bilinear");
  if (out_h == 0 || out_w == 0) {
    throw std::invalid_argument("resize_bilinear: empty target");
  }
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  const auto xd = x.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double *plane = xd.data() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const LinearTap &a = ty[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const LinearTap &b = tx[xx];
        const double top = plane[a.i0 * w + b.i0] * (1.0 - b.w1) +
                           plane[a.i0 * w + b.i1] * b.w1;
        const double bot = plane[a.i1 * w + b.i0] * (1.0 - b.w1) +
                           plane[a.i1 * w + b.i1] * b.w1;
        out[(ch * out_h + y) * out_w + xx] = top * (1.0 - a.w1) + bot * a.w1;
      }
    }
  }
  return make_result(
      Shape{c, out_h, out_w}, std::move(out), "resize_bilinear", {x},
      [c, h, w, out_h, out_w, ty = std::move(ty),
       tx = std::move(tx)](TensorImpl &self) {
        auto &gp = self.parents[0]->grad_ref();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double *plane = gp.data() + ch * h * w;
          for (std::size_t y = 0; y < out_h; ++y) {
            const LinearTap &a = ty[y];
            for (std::size_t xx = 0; xx < out_w; ++xx) {
              const LinearTap &b = tx[xx];
              const double g = self.grad[(ch * out_h + y) * out_w + xx];
              plane[a.i0 * w + b.i0] += g * (1.0 - a.w1) * (1.0 - b.w1);
              plane[a.i0 * w + b.i1] += g * (1.0 - a.w1) * b.w1;
              plane[a.i1 * w + b.i0] += g * a.w1 * (1.0 - b.w1);
              plane[a.i1 * w + b.i1] += g * a.w1 * b.w1;
            }
          }
        }
      });
}

Tensor channel_mean(const Tensor &x) {
  expect_rank(x, 3, "channel_mean");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto xd = x.data();
  std::vector<double> out(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] += xd[ch * plane + i];
    }
  }
  const double inv = 1.0 / static_cast<double>(c);
  for (double &v : out) {
    v *= inv;
  }
  return make_result(Shape{1, x.dim(1), x.dim(2)}, std::move(out),
                     "channel_mean", {x}, [c, plane, inv](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t i = 0; i < plane; ++i) {
                           gp[ch * plane + i] += self.grad[i] * inv;
                         }
                       }
                     });
}

Tensor spatial_mean(const Tensor &x) {
  expect_rank(x, 3, "spatial_mean");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  const double inv = 1.0 / static_cast<double>(plane);
  const auto xd = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      acc += xd[ch * plane + i];
    }
    out[ch] = acc * inv;
  }
  return make_result(Shape{c}, std::move(out), "spatial_mean", {x},
                     [c, plane, inv](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         const double g = self.grad[ch] * inv;
                         for (std::size_t i = 0; i < plane; ++i) {
                           gp[ch * plane + i] += g;
                         }
                       }
                     });
}

Tensor layer_norm_channels(const Tensor &x, const Tensor &gamma,
                           const Tensor &beta, double eps) {
  expect_rank(x, 3, "layer_norm_channels");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw std::invalid_argument("layer_norm_channels: gamma " +
                                shape_str(gamma.shape()) + " / beta " +
                                shape_str(beta.shape()) + " vs input " +
                                shape_str(x.shape()));
  }
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  const double inv_c = 1.0 / static_cast<double>(c);
  std::vector<double> mu(plane, 0.0);
  std::vector<double> var(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      mu[i] += xd[ch * plane + i];
    }
  }
  for (double &m : mu) {
    m *= inv_c;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = xd[ch * plane + i] - mu[i];
      var[i] += d * d;
    }
  }
  std::vector<double> inv_std(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    inv_std[i] = 1.0 / std::sqrt(var[i] * inv_c + eps);
  }
  std::vector<double> xhat(c * plane);
  std::vector<double> out(c * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = ch * plane + i;
      xhat[k] = (xd[k] - mu[i]) * inv_std[i];
      out[k] = xhat[k] * gd[ch] + bd[ch];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm_channels", {x, gamma, beta},
      [c, plane, inv_c, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorImpl &self) {
        TensorImpl &px = *self.parents[0];
        TensorImpl &pg = *self.parents[1];
        TensorImpl &pb = *self.parents[2];
        const auto &g = self.grad;
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            double dg = 0.0;
            double db = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
              dg += g[ch * plane + i] * xhat[ch * plane + i];
              db += g[ch * plane + i];
            }
            if (pg.requires_grad) {
              pg.grad_ref()[ch] += dg;
            }
            if (pb.requires_grad) {
              pb.grad_ref()[ch] += db;
            }
          }
        }
        if (!px.requires_grad) {
          return;
        }
        auto &gx = px.grad_ref();
        std::vector<double> m1(plane, 0.0);
        std::vector<double> m2(plane, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double gam = pg.data[ch];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = ch * plane + i;
            const double dxh = g[k] * gam;
            m1[i] += dxh;
            m2[i] += dxh * xhat[k];
          }
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double gam = pg.data[ch];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t k = ch * plane + i;
            const double dxh = g[k] * gam;
            gx[k] += inv_std[i] *
                     (dxh - m1[i] * inv_c - xhat[k] * m2[i] * inv_c);
          }
        }
      });
}

Tensor reflect_pad(const Tensor &x, std::size_t bottom, std::size_t right) {
  expect_rank(x, 3, "reflect_pad");
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if ((bottom > 0 && bottom >= h) || (right > 0 && right >= w)) {
    throw std::invalid_argument("reflect_pad: padding exceeds extent of " +
                                shape_str(x.shape()));
  }
  const std::size_t oh = h + bottom;
  const std::size_t ow = w + right;
  auto reflect = [](std::size_t i, std::size_t n) {
    return i < n ? i : 2 * (n - 1) - i;
  };
  std::vector<std::size_t> src(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t xx = 0; xx < ow; ++xx) {
      src[y * ow + xx] = reflect(y, h) * w + reflect(xx, w);
    }
  }
  const auto xd = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh * ow; ++i) {
      out[ch * oh * ow + i] = xd[ch * h * w + src[i]];
    }
  }
  return make_result(Shape{c, oh, ow}, std::move(out), "reflect_pad", {x},
                     [c, h, w, oh, ow, src = std::move(src)](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t i = 0; i < oh * ow; ++i) {
                           gp[ch * h * w + src[i]] +=
                               self.grad[ch * oh * ow + i];
                         }
                       }
                     });
}

Tensor crop(const Tensor &x, std::size_t out_h, std::size_t out_w) {
  expect_rank(x, 3, "crop");
  const std::size_t c = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    throw std::invalid_argument("crop to " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " from " +
                                shape_str(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < out_h; ++y) {
      std::copy_n(xd.data() + (ch * h + y) * w, out_w,
                  out.data() + (ch * out_h + y) * out_w);
    }
  }
  return make_result(Shape{c, out_h, out_w}, std::move(out), "crop", {x},
                     [c, h, w, out_h, out_w](TensorImpl &self) {
                       auto &gp = self.parents[0]->grad_ref();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (std::size_t y = 0; y < out_h; ++y) {
                           for (std::size_t xx = 0; xx < out_w; ++xx) {
                             gp[(ch * h + y) * w + xx] +=
                                 self.grad[(ch * out_h + y) * out_w + xx];
                           }
                         }
                       }
                     });
}

} // namespace urwkv
