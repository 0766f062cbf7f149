#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peerstyle/tensor.hpp"

namespace peerstyle {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

struct AdamConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// ADAM with bias correction over a fixed list of parameters.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig config);

  /// Applies one update from the populated gradients, then zeroes them.
  /// Throws std::logic_error naming the first parameter without a gradient.
  void step();

  void zero_grad();
  void set_learning_rate(double lr);
  double learning_rate() const { return config_.learning_rate; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }

  const ParameterList& parameters() const { return params_; }

  // Checkpoint access.
  std::vector<std::vector<double>>& first_moments() { return first_moment_; }
  std::vector<std::vector<double>>& second_moments() { return second_moment_; }
  const std::vector<std::vector<double>>& first_moments() const { return first_moment_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_moment_; }
  void set_step_count(std::uint64_t count) { step_count_ = count; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::uint64_t step_count_ = 0;
};

}  // namespace peerstyle
