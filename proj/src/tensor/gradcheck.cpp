#include "peerstyle/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace peerstyle {

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                ParameterList inputs, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;

  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.clear_grad();
  }
  backward(loss_fn());

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    if (in.tensor.has_grad()) {
      analytic.emplace_back(in.tensor.grad().begin(), in.tensor.grad().end());
    } else {
      analytic.emplace_back(in.tensor.numel(), 0.0);
    }
    in.tensor.clear_grad();
  }

  std::mt19937_64 rng(options.seed);
  NoGradGuard no_grad;
  const double h = options.perturbation;
  const double base = loss_fn().item();
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& tensor = inputs[t].tensor;
    const std::size_t n = tensor.numel();
    std::vector<std::size_t> entries(n);
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_input != 0 && options.max_entries_per_input < n) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_input);
      std::sort(entries.begin(), entries.end());
    }

    // f(x + step) and f(x - step) for entry i.
    auto probe = [&](std::size_t i, double step) {
      auto values = tensor.mutable_data();
      const double original = values[i];
      values[i] = original + step;
      const double plus = loss_fn().item();
      values[i] = original - step;
      const double minus = loss_fn().item();
      values[i] = original;
      return std::pair{plus, minus};
    };
    std::vector<std::pair<double, double>> at_h(entries.size());
    std::vector<double> numeric(entries.size());
    for (std::size_t e = 0; e < entries.size(); ++e) {
      at_h[e] = probe(entries[e], h);
      numeric[e] = (at_h[e].first - at_h[e].second) / (2.0 * h);
    }
    // A kink inside the stencil shows up either as disagreement between the
    // central differences at h and h/2, or as a second difference that scales
    // like h instead of h^2.
    auto straddles_kink = [&](std::size_t e, double tolerance) {
      const auto [p2, m2] = probe(entries[e], 0.5 * h);
      const double half = (p2 - m2) / h;
      const double second_h = at_h[e].first - 2.0 * base + at_h[e].second;
      const double second_half = p2 - 2.0 * base + m2;
      return std::fabs(half - numeric[e]) > tolerance || std::fabs(second_h - 4.0 * second_half) / h > tolerance;
    };

    double scale = 0.0;
    for (std::size_t e = 0; e < entries.size(); ++e) {
      scale = std::max({scale, std::fabs(numeric[e]), std::fabs(analytic[t][entries[e]])});
    }
    const double floor = std::max(options.relative_floor * scale, options.absolute_floor);
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const double a = analytic[t][entries[e]];
      const double num = numeric[e];
      const double denom = std::max({std::fabs(a), std::fabs(num), floor});
      const double err = std::fabs(a - num) / denom;
      if (options.skip_nonsmooth && err > options.tolerance && straddles_kink(e, options.tolerance * denom)) {
        ++result.nonsmooth;
        continue;
      }
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        char buf[96];
        std::snprintf(buf, sizeof buf, "] analytic=%.6g numeric=%.6g", a, num);
        result.worst_entry = inputs[t].name + "[" + std::to_string(entries[e]) + buf;
      }
    }
    result.entries_checked += entries.size();
  }
  const bool few_nonsmooth = static_cast<double>(result.nonsmooth) <=
                             options.max_nonsmooth_fraction * static_cast<double>(result.entries_checked);
  result.passed =
      std::isfinite(result.max_rel_error) && result.max_rel_error <= options.tolerance && few_nonsmooth;
  return result;
}

}  // namespace peerstyle
