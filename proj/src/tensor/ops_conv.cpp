#include <algorithm>
#include <string>

#include "peerstyle/kernels.hpp"
#include "peerstyle/ops.hpp"

namespace peerstyle {

namespace {

struct ConvGeometry {
  std::size_t channels = 0;  // channels of the "image" side of im2col
  std::size_t height = 0, width = 0;
  std::size_t kh = 0, kw = 0;
  std::size_t stride = 1, padding = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// col[(c, ky, kx), (oy, ox)] = image[c, oy*stride + ky - pad, ox*stride + kx - pad]
void im2col(const ConvGeometry& g, const double* image, double* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col entries back onto the image.
void col2im(const ConvGeometry& g, const double* col, double* image) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.dim() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be 4-D (batch, channel, height, width), got " +
                     to_string(t.shape()));
  }
}

void check_kernel_args(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                       std::size_t in_channels_axis, std::size_t out_channels_axis, const char* op) {
  require_rank4(input, op, "input");
  require_rank4(weight, op, "weight");
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (weight.size(in_channels_axis) != input.size(1)) {
    throw ShapeError(std::string(op) + ": input channel dimension (" + std::to_string(input.size(1)) +
                     ") does not match weight dimension " + std::to_string(in_channels_axis) + " (" +
                     std::to_string(weight.size(in_channels_axis)) + ")");
  }
  if (bias.dim() != 1 || bias.size(0) != weight.size(out_channels_axis)) {
    throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(weight.size(out_channels_axis)) + " output channels");
  }
}

void add_bias(double* out, const double* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* p = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
  }
}

void accumulate_bias_grad(const double* grad, double* gbias, std::size_t channels, std::size_t plane) {
  const auto& k = kernels::active();
  for (std::size_t c = 0; c < channels; ++c) gbias[c] += k.sum(grad + c * plane, plane);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  check_kernel_args(input, weight, bias, stride, 1, 0, "conv2d");
  const std::size_t batch = input.size(0);
  const std::size_t cout = weight.size(0);
  ConvGeometry g;
  g.channels = input.size(1);
  g.height = input.size(2);
  g.width = input.size(3);
  g.kh = weight.size(2);
  g.kw = weight.size(3);
  g.stride = stride;
  g.padding = padding;
  if (g.height + 2 * padding < g.kh) {
    throw ShapeError("conv2d: kernel height " + std::to_string(g.kh) + " exceeds padded input height (dimension 2)");
  }
  if (g.width + 2 * padding < g.kw) {
    throw ShapeError("conv2d: kernel width " + std::to_string(g.kw) + " exceeds padded input width (dimension 3)");
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const auto& k = kernels::active();
  const std::size_t in_plane = g.channels * g.height * g.width;
  const std::size_t out_plane = cout * g.col_cols();
  std::vector<double> out(batch * out_plane);
  std::vector<double> col(g.col_rows() * g.col_cols());
  const auto x = input.data();
  const auto w = weight.data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, x.data() + b * in_plane, col.data());
    k.gemm(cout, g.col_cols(), g.col_rows(), w.data(), col.data(), out.data() + b * out_plane, false);
    add_bias(out.data() + b * out_plane, bias.data().data(), cout, g.col_cols());
  }

  return detail::make_result(
      Shape{batch, cout, g.out_h, g.out_w}, std::move(out), {input, weight, bias},
      [g, batch, cout, in_plane, out_plane](detail::Node& self) {
        const auto& kt = kernels::active();
        const auto& xin = self.parents[0]->data;
        const auto& wv = self.parents[1]->data;
        double* gx = detail::input_grad(self, 0);
        double* gw = detail::input_grad(self, 1);
        double* gb = detail::input_grad(self, 2);
        const std::size_t rows = g.col_rows();
        const std::size_t cols = g.col_cols();
        std::vector<double> col(rows * cols);
        std::vector<double> col_t;
        std::vector<double> w_t;
        if (gw != nullptr) col_t.resize(rows * cols);
        if (gx != nullptr) {
          w_t.resize(wv.size());
          kernels::transpose(cout, rows, wv.data(), w_t.data());
        }
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gout = self.grad.data() + b * out_plane;
          if (gb != nullptr) accumulate_bias_grad(gout, gb, cout, cols);
          if (gw != nullptr) {
            im2col(g, xin.data() + b * in_plane, col.data());
            kernels::transpose(rows, cols, col.data(), col_t.data());
            kt.gemm(cout, rows, cols, gout, col_t.data(), gw, true);
          }
          if (gx != nullptr) {
            kt.gemm(rows, cols, cout, w_t.data(), gout, col.data(), false);
            col2im(g, col.data(), gx + b * in_plane);
          }
        }
      },
      "conv2d");
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
  check_kernel_args(input, weight, bias, stride, 0, 1, "conv2d_transpose");
  const std::size_t batch = input.size(0);
  const std::size_t cin = input.size(1);
  const std::size_t in_h = input.size(2);
  const std::size_t in_w = input.size(3);
  const std::size_t cout = weight.size(1);
  const std::size_t kh = weight.size(2);
  const std::size_t kw = weight.size(3);
  if (in_h == 0 || in_w == 0) throw ShapeError("conv2d_transpose: empty spatial input (dimension 2 or 3)");
  if ((in_h - 1) * stride + kh < 2 * padding + 1) {
    throw ShapeError("conv2d_transpose: padding too large for input height (dimension 2)");
  }
  if ((in_w - 1) * stride + kw < 2 * padding + 1) {
    throw ShapeError("conv2d_transpose: padding too large for input width (dimension 3)");
  }
  // The output plays the image role of an ordinary convolution whose output grid is the input.
  ConvGeometry g;
  g.channels = cout;
  g.height = (in_h - 1) * stride + kh - 2 * padding;
  g.width = (in_w - 1) * stride + kw - 2 * padding;
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.padding = padding;
  g.out_h = in_h;
  g.out_w = in_w;

  const auto& k = kernels::active();
  const std::size_t rows = g.col_rows();  // cout * kh * kw
  const std::size_t cols = g.col_cols();  // in_h * in_w
  const std::size_t in_plane = cin * cols;
  const std::size_t out_plane = cout * g.height * g.width;
  std::vector<double> w_t(weight.numel());
  kernels::transpose(cin, rows, weight.data().data(), w_t.data());
  std::vector<double> out(batch * out_plane, 0.0);
  std::vector<double> col(rows * cols);
  const auto x = input.data();
  for (std::size_t b = 0; b < batch; ++b) {
    k.gemm(rows, cols, cin, w_t.data(), x.data() + b * in_plane, col.data(), false);
    col2im(g, col.data(), out.data() + b * out_plane);
    add_bias(out.data() + b * out_plane, bias.data().data(), cout, g.height * g.width);
  }

  return detail::make_result(
      Shape{batch, cout, g.height, g.width}, std::move(out), {input, weight, bias},
      [g, batch, cin, cout, in_plane, out_plane](detail::Node& self) {
        const auto& kt = kernels::active();
        const auto& xin = self.parents[0]->data;
        const auto& wv = self.parents[1]->data;
        double* gx = detail::input_grad(self, 0);
        double* gw = detail::input_grad(self, 1);
        double* gb = detail::input_grad(self, 2);
        const std::size_t rows = g.col_rows();
        const std::size_t cols = g.col_cols();
        std::vector<double> gcol(rows * cols);
        std::vector<double> gcol_t;
        if (gw != nullptr) gcol_t.resize(rows * cols);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gout = self.grad.data() + b * out_plane;
          if (gb != nullptr) accumulate_bias_grad(gout, gb, cout, g.height * g.width);
          if (gx == nullptr && gw == nullptr) continue;
          im2col(g, gout, gcol.data());
          if (gx != nullptr) kt.gemm(cin, cols, rows, wv.data(), gcol.data(), gx + b * in_plane, true);
          if (gw != nullptr) {
            kernels::transpose(rows, cols, gcol.data(), gcol_t.data());
            kt.gemm(cin, rows, cols, xin.data() + b * in_plane, gcol_t.data(), gw, true);
          }
        }
      },
      "conv2d_transpose");
}

}  // namespace peerstyle
