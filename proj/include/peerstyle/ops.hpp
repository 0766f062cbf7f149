#pragma once

// Differentiable tensor operations. Every function records a backward closure
// when grad mode is on and any input requires grad.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "peerstyle/tensor.hpp"

namespace peerstyle {

// Elementwise unary.
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor div_scalar(const Tensor& x, double c);
/// max(x, c) elementwise; the gradient goes to x where x > c.
Tensor max_with_scalar(const Tensor& x, double c);
/// min(x, c) elementwise; the gradient goes to x where x < c.
Tensor min_with_scalar(const Tensor& x, double c);

// Binary with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

Shape broadcast_shapes(const Shape& a, const Shape& b);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = true);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = true);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Elements [begin, end) along axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

// Network layers. Image tensors are (batch, channel, height, width).

/// weight: [Cout, Cin, kh, kw], bias: [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Adjoint of conv2d's spatial map. weight: [Cin, Cout, kh, kw], bias: [Cout].
/// Output extent (H - 1) * stride - 2 * padding + kh.
Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding);

/// Per (batch, channel) plane: (x - mean) / sqrt(var + eps) * scale + shift,
/// with the biased variance.
Tensor instance_norm(const Tensor& input, const Tensor& scale, const Tensor& shift, double eps);

/// x: [..., in], weight: [out, in], bias: [out] -> [..., out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Inverted dropout: survivors scaled by 1 / (1 - rate). Identity when not training.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

/// x: [B, C, H, W], index: B * P * K flat pixel indices into H * W.
/// Returns [B, P, K, C] where out[b, p, k, :] = x[b, :, index[b, p, k]].
Tensor gather_pixels(const Tensor& x, std::span<const std::int64_t> index, std::size_t points,
                     std::size_t neighbors);

/// Independent Gaussian noise added to every element (constant w.r.t. x).
Tensor add_gaussian_noise(const Tensor& x, double sigma, std::mt19937_64& rng);

}  // namespace peerstyle
