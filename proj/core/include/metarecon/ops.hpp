#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "metarecon/tensor.hpp"

namespace metarecon {

// Elementwise arithmetic. Operands broadcast with numpy rules (extents are
// right-aligned; an extent of 1 stretches).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

/// Sum of all entries, as a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// sqrt(sum(a^2) + eps); eps keeps the gradient finite at zero.
Tensor l2_norm(const Tensor& a, double eps = 1e-24);

Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
/// Adjoint of broadcast_to: sums over the broadcast axes.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, std::span<const std::size_t> axes);

/// Concatenation and slicing along the leading axis.
Tensor concat0(std::span<const Tensor> parts);
Tensor slice0(const Tensor& a, std::size_t begin, std::size_t length);
/// Places `a` at leading offset `begin` inside zeros of leading extent `total`.
Tensor pad0(const Tensor& a, std::size_t begin, std::size_t total);

/// (c, H, W, 2) complex stack <-> (2c, H, W) real channels ordered
/// re_0, im_0, re_1, im_1, ...
Tensor complex_to_channels(const Tensor& x);
Tensor channels_to_complex(const Tensor& x);

/// 2-D cross-correlation of input (Cin, H, W) with kernel (Cout, Cin, k, k)
/// and symmetric zero padding. Output extents are H + 2 pad - k + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t pad);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t pad);
/// Adjoint of conv2d in its input: maps (Cout, Ho, Wo) back to (Cin, H, W).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, std::size_t pad,
                         const Shape& input_shape);
/// Adjoint of conv2d in its kernel: (Cin, H, W) x (Cout, Ho, Wo) -> (Cout, Cin, k, k).
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, std::size_t pad,
                          std::size_t k);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }

/// Stacks the raw values of `parts` (no gradient tracking).
std::vector<double> flatten_values(std::span<const Tensor> parts);

}  // namespace metarecon
