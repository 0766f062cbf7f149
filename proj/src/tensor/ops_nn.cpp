#include <cmath>
#include <memory>
#include <string>

#include "peerstyle/kernels.hpp"
#include "peerstyle/ops.hpp"

namespace peerstyle {

Tensor instance_norm(const Tensor& input, const Tensor& scale, const Tensor& shift, double eps) {
  if (input.dim() != 4) throw ShapeError("instance_norm: input must be 4-D, got " + to_string(input.shape()));
  const std::size_t batch = input.size(0);
  const std::size_t channels = input.size(1);
  const std::size_t plane = input.size(2) * input.size(3);
  if (plane == 0) throw ShapeError("instance_norm: empty spatial plane (H*W == 0)");
  if (scale.shape() != Shape{channels} || shift.shape() != Shape{channels}) {
    throw ShapeError("instance_norm: scale/shift must have shape [" + std::to_string(channels) + "] (dimension 1)");
  }
  if (eps < 0.0) throw std::invalid_argument("instance_norm: eps must be non-negative");

  const auto& k = kernels::active();
  const auto x = input.data();
  const auto sc = scale.data();
  const auto sh = shift.data();
  const double inv_n = 1.0 / static_cast<double>(plane);
  auto stats = std::make_shared<std::vector<double>>(2 * batch * channels);  // mean, inv_std pairs
  std::vector<double> out(x.size());
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t c = bc % channels;
    const double* src = x.data() + bc * plane;
    const double mu = k.sum(src, plane) * inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var *= inv_n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * bc] = mu;
    (*stats)[2 * bc + 1] = inv_std;
    double* dst = out.data() + bc * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * inv_std * sc[c] + sh[c];
  }

  return detail::make_result(
      input.shape(), std::move(out), {input, scale, shift},
      [stats, batch, channels, plane, inv_n](detail::Node& self) {
        const auto& xin = self.parents[0]->data;
        const auto& sc_v = self.parents[1]->data;
        double* gx = detail::input_grad(self, 0);
        double* gscale = detail::input_grad(self, 1);
        double* gshift = detail::input_grad(self, 2);
        for (std::size_t bc = 0; bc < batch * channels; ++bc) {
          const std::size_t c = bc % channels;
          const double mu = (*stats)[2 * bc];
          const double inv_std = (*stats)[2 * bc + 1];
          const double* src = xin.data() + bc * plane;
          const double* g = self.grad.data() + bc * plane;
          double sum_g = 0.0, sum_g_xhat = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (src[i] - mu) * inv_std;
            sum_g += g[i];
            sum_g_xhat += g[i] * xhat;
          }
          if (gscale != nullptr) gscale[c] += sum_g_xhat;
          if (gshift != nullptr) gshift[c] += sum_g;
          if (gx != nullptr) {
            // dxhat = g * scale; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            const double s = sc_v[c];
            const double mean_d = s * sum_g * inv_n;
            const double mean_dx = s * sum_g_xhat * inv_n;
            double* dst = gx + bc * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double xhat = (src[i] - mu) * inv_std;
              dst[i] += inv_std * (s * g[i] - mean_d - xhat * mean_dx);
            }
          }
        }
      },
      "instance_norm");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.dim() != 2) throw ShapeError("linear: weight must be 2-D, got " + to_string(weight.shape()));
  const std::size_t out_features = weight.size(0);
  const std::size_t in_features = weight.size(1);
  if (x.dim() == 0 || x.shape().back() != in_features) {
    throw ShapeError("linear: last input dimension of " + to_string(x.shape()) + " does not match weight input " +
                     std::to_string(in_features));
  }
  if (bias.shape() != Shape{out_features}) {
    throw ShapeError("linear: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(out_features) + " outputs");
  }
  const std::size_t rows = x.numel() / in_features;
  const auto& k = kernels::active();
  std::vector<double> w_t(weight.numel());
  kernels::transpose(out_features, in_features, weight.data().data(), w_t.data());
  std::vector<double> out(rows * out_features);
  k.gemm(rows, out_features, in_features, x.data().data(), w_t.data(), out.data(), false);
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_features; ++o) out[r * out_features + o] += bv[o];
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_features;
  return detail::make_result(
      std::move(out_shape), std::move(out), {x, weight, bias},
      [rows, in_features, out_features](detail::Node& self) {
        const auto& kt = kernels::active();
        const auto& xin = self.parents[0]->data;
        const auto& wv = self.parents[1]->data;
        const double* g = self.grad.data();
        if (double* gx = detail::input_grad(self, 0)) kt.gemm(rows, in_features, out_features, g, wv.data(), gx, true);
        if (double* gw = detail::input_grad(self, 1)) {
          std::vector<double> g_t(rows * out_features);
          kernels::transpose(rows, out_features, g, g_t.data());
          kt.gemm(out_features, in_features, rows, g_t.data(), xin.data(), gw, true);
        }
        if (double* gb = detail::input_grad(self, 2)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < out_features; ++o) gb[o] += g[r * out_features + o];
          }
        }
      },
      "linear");
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (auto& m : *mask) m = uniform(rng) < rate ? 0.0 : keep_scale;
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * (*mask)[i];
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [mask](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
      },
      "dropout");
}

Tensor gather_pixels(const Tensor& x, std::span<const std::int64_t> index, std::size_t points,
                     std::size_t neighbors) {
  if (x.dim() != 4) throw ShapeError("gather_pixels: input must be 4-D, got " + to_string(x.shape()));
  const std::size_t batch = x.size(0);
  const std::size_t channels = x.size(1);
  const std::size_t plane = x.size(2) * x.size(3);
  if (index.size() != batch * points * neighbors) {
    throw ShapeError("gather_pixels: index holds " + std::to_string(index.size()) + " entries, expected " +
                     std::to_string(batch * points * neighbors));
  }
  for (const auto i : index) {
    if (i < 0 || static_cast<std::size_t>(i) >= plane) {
      throw ShapeError("gather_pixels: pixel index " + std::to_string(i) + " outside [0, " + std::to_string(plane) + ")");
    }
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
  const auto in = x.data();
  std::vector<double> out(batch * points * neighbors * channels);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t pk = 0; pk < points * neighbors; ++pk) {
      const auto pixel = static_cast<std::size_t>((*idx)[b * points * neighbors + pk]);
      double* dst = out.data() + (b * points * neighbors + pk) * channels;
      for (std::size_t c = 0; c < channels; ++c) dst[c] = in[(b * channels + c) * plane + pixel];
    }
  }
  return detail::make_result(
      Shape{batch, points, neighbors, channels}, std::move(out), {x},
      [idx, batch, channels, plane, points, neighbors](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t pk = 0; pk < points * neighbors; ++pk) {
            const auto pixel = static_cast<std::size_t>((*idx)[b * points * neighbors + pk]);
            const double* g = self.grad.data() + (b * points * neighbors + pk) * channels;
            for (std::size_t c = 0; c < channels; ++c) gx[(b * channels + c) * plane + pixel] += g[c];
          }
        }
      },
      "gather_pixels");
}

}  // namespace peerstyle
