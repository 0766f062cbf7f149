#include "peerstyle/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace peerstyle {

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw std::invalid_argument("Adam: learning rate must be non-negative");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf()) throw std::invalid_argument("Adam: parameter '" + p.name + "' is not a leaf");
    first_moment_.emplace_back(p.tensor.numel(), 0.0);
    second_moment_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw std::logic_error("Adam::step: parameter '" + p.name + "' has no gradient");
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& param = params_[i].tensor;
    auto value = param.mutable_data();
    auto grad = param.mutable_grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      grad[j] = 0.0;
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("Adam: learning rate must be non-negative");
  config_.learning_rate = lr;
}

}  // namespace peerstyle
