#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "peerstyle/adam.hpp"
#include "peerstyle/tensor.hpp"

namespace peerstyle {

struct GradCheckOptions {
  double perturbation = 1e-4;
  double tolerance = 1e-4;
  /// Entries probed per input tensor; 0 probes every entry. Sampled entries
  /// are drawn without replacement from a generator seeded with `seed`.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
  /// Entries whose gradient is below this fraction of the tensor's largest
  /// gradient are compared on that scale instead of their own.
  double relative_floor = 1e-3;
  /// Lower bound on every denominator. Gradients that vanish structurally
  /// leave only finite-difference roundoff (~1e-12), which has no relative error.
  double absolute_floor = 1e-6;
  /// A mismatching entry is probed again at half the step. When the two
  /// central differences disagree by more than `tolerance`, the stencil
  /// straddles a kink (ReLU, hinge) and the entry is counted as non-smooth
  /// instead of failed. The check fails if more than `max_nonsmooth_fraction`
  /// of the probed entries are non-smooth.
  bool skip_nonsmooth = false;
  double max_nonsmooth_fraction = 0.5;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t nonsmooth = 0;
  std::string worst_entry;
  bool passed = false;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences.
/// `loss_fn` must rebuild the scalar loss from the current input values and
/// be deterministic between calls.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                ParameterList inputs, const GradCheckOptions& options = {});

}  // namespace peerstyle
