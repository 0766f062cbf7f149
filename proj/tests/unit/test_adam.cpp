#include <doctest.h>

#include <cmath>

#include "peerstyle/adam.hpp"
#include "peerstyle/ops.hpp"

using namespace peerstyle;

namespace {

// Scalar ADAM written out independently of the optimizer class.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double update(double param, double grad, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(b1, t));
    const double v_hat = v / (1.0 - std::pow(b2, t));
    return param - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace

TEST_CASE("zero gradient on fresh state leaves parameters unchanged") {
  Tensor p(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  p.mutable_grad();
  Adam opt({{"p", p}}, {.learning_rate = 0.1});
  opt.step();
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("first bias-corrected step moves by about the learning rate") {
  Tensor p(Shape{1}, std::vector<double>{1.0});
  p.mutable_grad()[0] = 1.0;
  Adam opt({{"p", p}}, {.learning_rate = 0.1, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8});
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("two steps match the scalar reference to 1e-12") {
  Tensor p(Shape{2}, std::vector<double>{0.7, -1.3});
  p.set_requires_grad(true);
  Adam opt({{"p", p}}, {.learning_rate = 0.05, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8});
  ScalarAdam ref0, ref1;
  double r0 = 0.7, r1 = -1.3;
  for (int step = 0; step < 2; ++step) {
    backward(sum(square(p) * 3.0));
    const double g0 = p.grad()[0], g1 = p.grad()[1];
    CHECK(g0 == doctest::Approx(6.0 * r0).epsilon(1e-14));
    r0 = ref0.update(r0, g0, 0.05, 0.9, 0.999, 1e-8);
    r1 = ref1.update(r1, g1, 0.05, 0.9, 0.999, 1e-8);
    opt.step();
    CHECK(std::fabs(p.data()[0] - r0) < 1e-12);
    CHECK(std::fabs(p.data()[1] - r1) < 1e-12);
  }
  CHECK(opt.step_count() == 2);
}

TEST_CASE("missing gradient is rejected by name") {
  Tensor a(Shape{1}, 1.0), b(Shape{1}, 1.0);
  a.mutable_grad();
  Adam opt({{"a", a}, {"b", b}}, {});
  CHECK_THROWS_WITH(opt.step(), doctest::Contains("'b'"));
  CHECK(opt.step_count() == 0);
}
