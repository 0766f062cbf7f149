#include <algorithm>
#include <cmath>
#include <memory>

#include "broadcast.hpp"
#include "peerstyle/kernels.hpp"
#include "peerstyle/ops.hpp"

namespace peerstyle {

namespace {

template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [df](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        const auto& xin = self.parents[0]->data;
        for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.data[i]);
      },
      name);
}

// out = f(a, b); dfa/dfb give the partials given (a, b, out).
template <class F, class DFA, class DFB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa, DFB dfb) {
  const auto ad = a.data();
  const auto bd = b.data();
  if (a.shape() == b.shape()) {
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i], bd[i]);
    return detail::make_result(
        a.shape(), std::move(out), {a, b},
        [dfa, dfb](detail::Node& self) {
          const auto& av = self.parents[0]->data;
          const auto& bv = self.parents[1]->data;
          if (double* ga = detail::input_grad(self, 0)) {
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] += self.grad[i] * dfa(av[i], bv[i], self.data[i]);
          }
          if (double* gb = detail::input_grad(self, 1)) {
            for (std::size_t i = 0; i < bv.size(); ++i) gb[i] += self.grad[i] * dfb(av[i], bv[i], self.data[i]);
          }
        },
        name);
  }
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto map = std::make_shared<detail::BroadcastMap>(detail::BroadcastMap::build(a.shape(), b.shape(), out_shape));
  std::vector<double> out(map->a_index.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[map->a_index[i]], bd[map->b_index[i]]);
  return detail::make_result(
      out_shape, std::move(out), {a, b},
      [map, dfa, dfb](detail::Node& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        double* ga = detail::input_grad(self, 0);
        double* gb = detail::input_grad(self, 1);
        for (std::size_t i = 0; i < self.data.size(); ++i) {
          const double x = av[map->a_index[i]];
          const double y = bv[map->b_index[i]];
          if (ga != nullptr) ga[map->a_index[i]] += self.grad[i] * dfa(x, y, self.data[i]);
          if (gb != nullptr) gb[map->b_index[i]] += self.grad[i] * dfb(x, y, self.data[i]);
        }
      },
      name);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); }, [](double v, double) { return sign(v); });
}

Tensor neg(const Tensor& x) {
  return unary(
      x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(
      x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(
      x, "mul_scalar", [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor div_scalar(const Tensor& x, double c) {
  return unary(
      x, "div_scalar", [c](double v) { return v / c; }, [c](double, double) { return 1.0 / c; });
}

Tensor max_with_scalar(const Tensor& x, double c) {
  return unary(
      x, "max_with_scalar", [c](double v) { return v > c ? v : c; },
      [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

Tensor min_with_scalar(const Tensor& x, double c) {
  return unary(
      x, "min_with_scalar", [c](double v) { return v < c ? v : c; },
      [c](double v, double) { return v < c ? 1.0 : 0.0; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor sum(const Tensor& x) {
  const auto in = x.data();
  const double total = kernels::active().sum(in.data(), in.size());
  return detail::make_result(
      Shape{}, {total}, {x},
      [](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        const double g = self.grad[0];
        const std::size_t n = self.parents[0]->data.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return div_scalar(sum(x), static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  if (axis >= x.dim()) {
    throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for shape " + to_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = in.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return detail::make_result(
      std::move(shape), std::move(out), {x},
      [s](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t e = 0; e < s.extent; ++e) {
            double* dst = gx + (o * s.extent + e) * s.inner;
            const double* g = self.grad.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i];
          }
        }
      },
      "sum_axis");
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const std::size_t extent = x.size(axis);
  if (extent == 0) throw ShapeError("mean_axis: empty axis " + std::to_string(axis));
  return div_scalar(sum_axis(x, axis, keepdim), static_cast<double>(extent));
}

Tensor add_gaussian_noise(const Tensor& x, double sigma, std::mt19937_64& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma must be non-negative");
  if (sigma == 0.0) return x;
  std::normal_distribution<double> noise(0.0, sigma);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + noise(rng);
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
      },
      "add_gaussian_noise");
}

}  // namespace peerstyle
