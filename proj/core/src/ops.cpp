#include "metarecon/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "metarecon/errors.hpp"

namespace metarecon {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::vector<double> copy_values(const Tensor& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `from` viewed inside `to`, with 0 on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) {
    throw ShapeError("cannot broadcast " + shape_str(from) + " to " + shape_str(to));
  }
  const std::size_t offset = to.size() - from.size();
  std::vector<std::size_t> strides(to.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = from.size(); i-- > 0;) {
    if (from[i] == to[i + offset]) {
      strides[i + offset] = from[i] == 1 ? 0 : stride;
    } else if (from[i] != 1) {
      throw ShapeError("cannot broadcast " + shape_str(from) + " to " + shape_str(to));
    }
    stride *= from[i];
  }
  return strides;
}

// Calls fn(out_index, source_index) for every element of `to`.
template <typename Fn>
void for_each_broadcast(const Shape& from, const Shape& to, Fn&& fn) {
  const auto strides = broadcast_strides(from, to);
  const std::size_t n = shape_numel(to);
  const std::size_t rank = to.size();
  if (rank == 0) {
    if (n == 1) fn(0, 0);
    return;
  }
  // Innermost axis handled as a contiguous run.
  const std::size_t inner = to.back();
  const std::size_t inner_stride = strides.back();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t out = 0; out < n; out += inner) {
    for (std::size_t j = 0; j < inner; ++j) fn(out + j, src + j * inner_stride);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      src += strides[ax];
      if (idx[ax] < to[ax]) break;
      src -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <typename Fn>
Tensor unary(const Tensor& a, Fn&& fn, detail::BackwardFn backward, const char* op) {
  auto d = a.data();
  std::vector<double> out(d.size());
  std::transform(d.begin(), d.end(), out.begin(), fn);
  return Tensor::from_op(a.shape(), std::move(out), {a}, std::move(backward), op);
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary_same(const Tensor& a, const Tensor& b, BinaryKind kind) {
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  const char* op = "add";
  detail::BackwardFn backward;
  switch (kind) {
    case BinaryKind::kAdd:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      backward = [](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{g, g};
      };
      break;
    case BinaryKind::kSub:
      op = "sub";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      backward = [](const Tensor& g, const std::vector<bool>& needs) {
        return std::vector<Tensor>{g, needs[1] ? neg(g) : Tensor()};
      };
      break;
    case BinaryKind::kMul:
      op = "mul";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      backward = [a, b](const Tensor& g, const std::vector<bool>& needs) {
        return std::vector<Tensor>{needs[0] ? mul(g, b) : Tensor(),
                                   needs[1] ? mul(g, a) : Tensor()};
      };
      break;
    case BinaryKind::kDiv:
      op = "div";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
      backward = [a, b](const Tensor& g, const std::vector<bool>& needs) {
        return std::vector<Tensor>{needs[0] ? div(g, b) : Tensor(),
                                   needs[1] ? neg(div(mul(g, a), mul(b, b))) : Tensor()};
      };
      break;
  }
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, std::move(backward), op);
}

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  if (a.shape() == b.shape()) return binary_same(a, b, kind);
  const Shape out = broadcast_shape(a.shape(), b.shape());
  return binary_same(broadcast_to(a, out), broadcast_to(b, out), kind);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv); }

Tensor neg(const Tensor& a) {
  return unary(
      a, [](double v) { return -v; },
      [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{neg(g)}; },
      "neg");
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double v) { return v + s; },
      [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g}; },
      "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double v) { return v * s; },
      [s](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{mul_scalar(g, s)};
      },
      "mul_scalar");
}

Tensor relu(const Tensor& a) {
  auto d = a.data();
  std::vector<double> mask(d.size());
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    mask[i] = d[i] > 0.0 ? 1.0 : 0.0;
    out[i] = d[i] > 0.0 ? d[i] : 0.0;
  }
  // The derivative of the step is zero almost everywhere, so the mask is a
  // constant of the backward graph.
  Tensor step(a.shape(), std::move(mask));
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [step](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{mul(g, step)};
      },
      "relu");
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [a](const Tensor& g, const std::vector<bool>&) {
        const Tensor s = sigmoid(a);
        return std::vector<Tensor>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
      },
      "sigmoid");
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [a](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{mul(g, sigmoid(a))};
      },
      "softplus");
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double v) { return std::sqrt(v); },
      [a](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{div(g, mul_scalar(sqrt(a), 2.0))};
      },
      "sqrt");
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
  auto d = a.data();
  double total = 0.0;
  for (double v : d) total += v;
  Shape in_shape = a.shape();
  return Tensor::from_op(
      Shape{}, {total}, {a},
      [in_shape](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{broadcast_to(g, in_shape)};
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor l2_norm(const Tensor& a, double eps) { return sqrt(add_scalar(sum(square(a)), eps)); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  if (shape == a.shape()) return a;
  Shape in_shape = a.shape();
  return Tensor::from_op(
      std::move(shape), copy_values(a), {a},
      [in_shape](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{reshape(g, in_shape)};
      },
      "reshape");
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  std::vector<double> out(shape_numel(shape));
  auto d = a.data();
  for_each_broadcast(a.shape(), shape, [&](std::size_t o, std::size_t s) { out[o] = d[s]; });
  Shape in_shape = a.shape();
  return Tensor::from_op(
      shape, std::move(out), {a},
      [in_shape](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{sum_to(g, in_shape)};
      },
      "broadcast_to");
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  std::vector<double> out(shape_numel(shape), 0.0);
  auto d = a.data();
  for_each_broadcast(shape, a.shape(), [&](std::size_t o, std::size_t s) { out[s] += d[o]; });
  Shape in_shape = a.shape();
  return Tensor::from_op(
      shape, std::move(out), {a},
      [in_shape](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{broadcast_to(g, in_shape)};
      },
      "sum_to");
}

Tensor permute(const Tensor& a, std::span<const std::size_t> axes) {
  const std::size_t rank = a.rank();
  if (axes.size() != rank) throw ShapeError("permute: axis count mismatch");
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
  std::vector<std::size_t> strides(rank);
  std::vector<std::size_t> inverse(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.dim(axes[i]);
    strides[i] = in_strides[axes[i]];
    inverse[axes[i]] = i;
  }
  auto d = a.data();
  std::vector<double> out(d.size());
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < out.size(); ++o) {
    out[o] = d[src];
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      src += strides[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return Tensor::from_op(
      std::move(out_shape), std::move(out), {a},
      [inverse](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{permute(g, inverse)};
      },
      "permute");
}

Tensor concat0(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat0 of nothing");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    if (p.rank() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat0: mismatched part " + shape_str(p.shape()));
    }
    lengths.push_back(p.dim(0));
    lead += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(lead * shape_numel(tail));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = tail;
  shape.insert(shape.begin(), lead);
  return Tensor::from_op(
      std::move(shape), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
      [lengths](const Tensor& g, const std::vector<bool>& needs) {
        std::vector<Tensor> grads(lengths.size());
        std::size_t offset = 0;
        for (std::size_t k = 0; k < lengths.size(); ++k) {
          if (needs[k]) grads[k] = slice0(g, offset, lengths[k]);
          offset += lengths[k];
        }
        return grads;
      },
      "concat0");
}

Tensor slice0(const Tensor& a, std::size_t begin, std::size_t length) {
  if (a.rank() == 0 || begin + length > a.dim(0)) throw ShapeError("slice0 out of range");
  if (begin == 0 && length == a.dim(0)) return a;
  const std::size_t inner = a.numel() / a.dim(0);
  auto d = a.data();
  std::vector<double> out(d.begin() + begin * inner, d.begin() + (begin + length) * inner);
  Shape shape = a.shape();
  shape[0] = length;
  const std::size_t total = a.dim(0);
  return Tensor::from_op(
      std::move(shape), std::move(out), {a},
      [begin, total](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{pad0(g, begin, total)};
      },
      "slice0");
}

Tensor pad0(const Tensor& a, std::size_t begin, std::size_t total) {
  if (a.rank() == 0 || begin + a.dim(0) > total) throw ShapeError("pad0 out of range");
  const std::size_t inner = a.numel() / a.dim(0);
  std::vector<double> out(total * inner, 0.0);
  std::copy(a.data().begin(), a.data().end(), out.begin() + begin * inner);
  Shape shape = a.shape();
  const std::size_t length = shape[0];
  shape[0] = total;
  return Tensor::from_op(
      std::move(shape), std::move(out), {a},
      [begin, length](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{slice0(g, begin, length)};
      },
      "pad0");
}

Tensor complex_to_channels(const Tensor& x) {
  if (x.rank() != 4 || x.dim(3) != 2) {
    throw ShapeError("expected complex stack (c,H,W,2), got " + shape_str(x.shape()));
  }
  static constexpr std::size_t kAxes[] = {0, 3, 1, 2};
  return reshape(permute(x, kAxes), {2 * x.dim(0), x.dim(1), x.dim(2)});
}

Tensor channels_to_complex(const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) % 2 != 0) {
    throw ShapeError("expected an even channel count (2c,H,W), got " + shape_str(x.shape()));
  }
  static constexpr std::size_t kAxes[] = {0, 2, 3, 1};
  return permute(reshape(x, {x.dim(0) / 2, 2, x.dim(1), x.dim(2)}), kAxes);
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, k, pad, ho, wo;
  std::size_t cols() const { return ho * wo; }
  std::size_t rows() const { return cin * k * k; }
};

ConvGeometry geometry(std::size_t cin, std::size_t h, std::size_t w, std::size_t k,
                      std::size_t pad) {
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (h + 2 * pad < k || w + 2 * pad < k) throw ShapeError("conv2d: kernel larger than input");
  return {cin, h, w, k, pad, h + 2 * pad - k + 1, w + 2 * pad - k + 1};
}

// Uninitialized scratch, reused per thread.
std::span<double> scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (n > buf.size()) buf.resize(n);
  return {buf.data(), n};
}

// Valid range [lo, hi) of output columns for a horizontal tap shift.
std::pair<std::size_t, std::size_t> span_for(const ConvGeometry& g, std::ptrdiff_t shift) {
  const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.wo),
                                                     static_cast<std::ptrdiff_t>(g.w) - shift);
  return {lo, static_cast<std::size_t>(std::max<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(lo)))};
}

void im2col(std::span<const double> x, const ConvGeometry& g, std::span<double> cols) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols.data() + ((c * g.k + ky) * g.k + kx) * g.cols();
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        const auto [lo, hi] = span_for(g, shift);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          double* dst = row + oy * g.wo;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x.data() + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          std::fill(dst, dst + lo, 0.0);
          std::copy(src + static_cast<std::ptrdiff_t>(lo) + shift, src + static_cast<std::ptrdiff_t>(hi) + shift, dst + lo);
          std::fill(dst + hi, dst + g.wo, 0.0);
        }
      }
    }
  }
}

std::vector<double> col2im(std::span<const double> cols, const ConvGeometry& g) {
  std::vector<double> x(g.cin * g.h * g.w, 0.0);
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols.data() + ((c * g.k + ky) * g.k + kx) * g.cols();
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        const auto [lo, hi] = span_for(g, shift);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = x.data() + (c * g.h + static_cast<std::size_t>(iy)) * g.w + shift;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
  return x;
}

void check_kernel(const Tensor& kernel) {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: kernel must be (Cout,Cin,k,k), got " + shape_str(kernel.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t pad) {
  check_kernel(kernel);
  if (input.rank() != 3 || input.dim(0) != kernel.dim(1)) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " does not match kernel " +
                     shape_str(kernel.shape()));
  }
  const std::size_t cout = kernel.dim(0);
  const auto g = geometry(input.dim(0), input.dim(1), input.dim(2), kernel.dim(2), pad);
  const auto cols = scratch(g.rows() * g.cols());
  im2col(input.data(), g, cols);
  std::vector<double> out(cout * g.cols());
  MutMap(out.data(), cout, g.cols()).noalias() =
      ConstMap(kernel.data().data(), cout, g.rows()) * ConstMap(cols.data(), g.rows(), g.cols());
  const std::size_t k = g.k;
  Shape in_shape = input.shape();
  return Tensor::from_op(
      {cout, g.ho, g.wo}, std::move(out), {input, kernel},
      [input, kernel, pad, k, in_shape](const Tensor& grad_out, const std::vector<bool>& needs) {
        return std::vector<Tensor>{
            needs[0] ? conv2d_input_grad(grad_out, kernel, pad, in_shape) : Tensor(),
            needs[1] ? conv2d_weight_grad(input, grad_out, pad, k) : Tensor()};
      },
      "conv2d");
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t pad) {
  const Tensor out = conv2d(input, kernel, pad);
  if (bias.numel() != kernel.dim(0)) throw ShapeError("conv2d: bias length mismatch");
  return add(out, reshape(bias, {bias.numel(), 1, 1}));
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, std::size_t pad,
                         const Shape& input_shape) {
  check_kernel(kernel);
  const std::size_t cout = kernel.dim(0);
  const auto g = geometry(input_shape.at(0), input_shape.at(1), input_shape.at(2), kernel.dim(2), pad);
  if (grad_out.shape() != Shape{cout, g.ho, g.wo} || input_shape[0] != kernel.dim(1)) {
    throw ShapeError("conv2d_input_grad: shape mismatch");
  }
  const auto cols = scratch(g.rows() * g.cols());
  MutMap(cols.data(), g.rows(), g.cols()).noalias() =
      ConstMap(kernel.data().data(), cout, g.rows()).transpose() *
      ConstMap(grad_out.data().data(), cout, g.cols());
  auto out = col2im(cols, g);
  const std::size_t k = g.k;
  return Tensor::from_op(
      input_shape, std::move(out), {grad_out, kernel},
      [grad_out, kernel, pad, k](const Tensor& gz, const std::vector<bool>& needs) {
        return std::vector<Tensor>{needs[0] ? conv2d(gz, kernel, pad) : Tensor(),
                                   needs[1] ? conv2d_weight_grad(gz, grad_out, pad, k) : Tensor()};
      },
      "conv2d_input_grad");
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, std::size_t pad,
                          std::size_t k) {
  if (input.rank() != 3 || grad_out.rank() != 3) throw ShapeError("conv2d_weight_grad: rank");
  const auto g = geometry(input.dim(0), input.dim(1), input.dim(2), k, pad);
  const std::size_t cout = grad_out.dim(0);
  if (grad_out.dim(1) != g.ho || grad_out.dim(2) != g.wo) {
    throw ShapeError("conv2d_weight_grad: gradient extent mismatch");
  }
  const auto cols = scratch(g.rows() * g.cols());
  im2col(input.data(), g, cols);
  std::vector<double> out(cout * g.rows());
  MutMap(out.data(), cout, g.rows()).noalias() =
      ConstMap(grad_out.data().data(), cout, g.cols()) *
      ConstMap(cols.data(), g.rows(), g.cols()).transpose();
  Shape in_shape = input.shape();
  return Tensor::from_op(
      {cout, g.cin, k, k}, std::move(out), {input, grad_out},
      [input, grad_out, pad, in_shape](const Tensor& gv, const std::vector<bool>& needs) {
        return std::vector<Tensor>{
            needs[0] ? conv2d_input_grad(grad_out, gv, pad, in_shape) : Tensor(),
            needs[1] ? conv2d(input, gv, pad) : Tensor()};
      },
      "conv2d_weight_grad");
}

std::vector<double> flatten_values(std::span<const Tensor> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

}  // namespace metarecon
