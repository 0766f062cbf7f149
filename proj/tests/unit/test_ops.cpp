#include <doctest.h>

#include <cmath>
#include <random>

#include "peerstyle/gradcheck.hpp"
#include "peerstyle/ops.hpp"
#include "test_util.hpp"

using namespace peerstyle;
using testing::random_tensor;

namespace {

Tensor weighted_sum(const Tensor& out, std::mt19937_64& rng) {
  // A random linear functional makes every output entry matter to the check.
  Tensor w = random_tensor(out.shape(), rng);
  return sum(out * w);
}

void require_gradcheck(const GradCheckResult& r) {
  INFO(r.name << " max rel error " << r.max_rel_error << " at " << r.worst_entry);
  CHECK(r.passed);
}

}  // namespace

TEST_CASE("conv2d: zero input with zero bias gives zeros") {
  std::mt19937_64 rng(1);
  Tensor x(Shape{1, 1, 3, 3}, 0.0);
  Tensor w = random_tensor({2, 1, 3, 3}, rng);
  Tensor b(Shape{2}, 0.0);
  Tensor y = conv2d(x, w, b, 1, 1);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d: 1x1 kernel example") {
  Tensor x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor w(Shape{1, 1, 1, 1}, std::vector<double>{2});
  Tensor b(Shape{1}, std::vector<double>{1});
  Tensor y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{3, 5, 7, 9});
}

TEST_CASE("conv2d matches the direct loop for strides and paddings") {
  std::mt19937_64 rng(2);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 3u}) {
      Tensor x = random_tensor({2, 3, 9, 7}, rng);
      Tensor w = random_tensor({4, 3, 3, 4}, rng);
      Tensor b = random_tensor({4}, rng);
      std::size_t oh = 0, ow = 0;
      const auto ref = testing::reference_conv2d(x, w, b, stride, pad, oh, ow);
      Tensor y = conv2d(x, w, b, stride, pad);
      REQUIRE(y.shape() == Shape{2, 4, oh, ow});
      CHECK(testing::max_abs_diff(y.data(), ref) < 1e-12);
    }
  }
}

TEST_CASE("conv2d rejects mismatched shapes with a named dimension") {
  Tensor x(Shape{1, 2, 4, 4}, 0.0);
  Tensor w(Shape{3, 5, 3, 3}, 0.0);
  Tensor b(Shape{3}, 0.0);
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1, 1), doctest::Contains("dimension"), ShapeError);
  Tensor big(Shape{3, 2, 9, 9}, 0.0);
  CHECK_THROWS_WITH_AS(conv2d(x, big, b, 1, 0), doctest::Contains("dimension 2"), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{3, 2, 3, 3}, 0.0), b, 0, 0), ShapeError);
}

TEST_CASE("conv2d gradients match central differences on a 1x2x5x5 input") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  // Gradient of sum(output) w.r.t. every weight entry.
  auto r = check_gradients("conv2d.weight", [&] { return sum(conv2d(x, w, b, 1, 1)); }, {{"w", w}},
                           {.tolerance = 1e-5});
  require_gradcheck(r);
  Tensor probe = random_tensor({1, 3, 3, 3}, rng);
  r = check_gradients("conv2d.all", [&] { return sum(conv2d(x, w, b, 2, 1) * probe); },
                      {{"x", x}, {"w", w}, {"b", b}}, {.tolerance = 1e-5});
  require_gradcheck(r);
}

TEST_CASE("conv2d_transpose examples") {
  Tensor zero(Shape{1, 2, 2, 2}, 0.0);
  std::mt19937_64 rng(4);
  Tensor w = random_tensor({2, 3, 3, 3}, rng);
  Tensor b(Shape{3}, std::vector<double>{0.5, -1.0, 2.0});
  Tensor y = conv2d_transpose(zero, w, b, 2, 1);
  CHECK(y.shape() == Shape{1, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.data()[c * 9 + i] == b.data()[c]);

  Tensor one(Shape{1, 1, 1, 1}, std::vector<double>{1});
  Tensor k(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor y2 = conv2d_transpose(one, k, Tensor(Shape{1}, 0.0), 2, 0);
  CHECK(y2.shape() == Shape{1, 1, 2, 2});
  CHECK(std::vector<double>(y2.data().begin(), y2.data().end()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("conv2d_transpose matches the scatter loop and its gradients") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  Tensor w = random_tensor({3, 2, 4, 4}, rng);
  Tensor b = random_tensor({2}, rng);
  std::size_t oh = 0, ow = 0;
  const auto ref = testing::reference_conv2d_transpose(x, w, b, 2, 1, oh, ow);
  Tensor y = conv2d_transpose(x, w, b, 2, 1);
  REQUIRE(y.shape() == Shape{2, 2, oh, ow});
  CHECK(oh == 8);
  CHECK(testing::max_abs_diff(y.data(), ref) < 1e-12);

  Tensor probe = random_tensor(y.shape(), rng);
  auto r = check_gradients("conv2d_transpose", [&] { return sum(conv2d_transpose(x, w, b, 2, 1) * probe); },
                           {{"x", x}, {"w", w}, {"b", b}}, {.tolerance = 1e-5});
  require_gradcheck(r);
}

TEST_CASE("instance_norm examples") {
  Tensor constant(Shape{1, 1, 2, 2}, 3.0);
  Tensor one(Shape{1}, 1.0), zero(Shape{1}, 0.0);
  Tensor normalized = instance_norm(constant, one, zero, 1e-5);
  for (double v : normalized.data()) CHECK(v == 0.0);

  Tensor pair(Shape{1, 1, 1, 2}, std::vector<double>{1, 3});
  Tensor y = instance_norm(pair, one, zero, 0.0);
  CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(6);
  Tensor x = random_tensor({2, 3, 5, 4}, rng, -3.0, 5.0);
  Tensor ones(Shape{3}, 1.0), zeros(Shape{3}, 0.0);
  Tensor n = instance_norm(x, ones, zeros, 0.0);
  for (std::size_t plane = 0; plane < 6; ++plane) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 20; ++i) m += n.data()[plane * 20 + i];
    m /= 20.0;
    for (std::size_t i = 0; i < 20; ++i) v += std::pow(n.data()[plane * 20 + i] - m, 2);
    v /= 20.0;
    CHECK(std::fabs(m) < 1e-6);
    CHECK(std::fabs(v - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(instance_norm(Tensor(Shape{1, 1, 0, 3}), one, zero, 1e-5), ShapeError);
}

TEST_CASE("instance_norm gradients") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({2, 3, 4, 3}, rng);
  Tensor s = random_tensor({3}, rng);
  Tensor t = random_tensor({3}, rng);
  Tensor probe = random_tensor(x.shape(), rng);
  auto r = check_gradients("instance_norm", [&] { return sum(instance_norm(x, s, t, 1e-5) * probe); },
                           {{"x", x}, {"scale", s}, {"shift", t}});
  require_gradcheck(r);
}

TEST_CASE("elementwise examples") {
  Tensor m2(Shape{1}, std::vector<double>{-2.0});
  CHECK(leaky_relu(m2, 0.2).item() == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(tanh(Tensor(Shape{1}, 0.0)).item() == 0.0);
  CHECK(max_with_scalar(m2, 0.0).item() == 0.0);
  CHECK(min_with_scalar(m2, 1.0).item() == -2.0);
  CHECK(abs(m2).item() == 2.0);

  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 5, 3}, rng);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const std::size_t n = x.size(axis);
    Tensor joined = concat({slice(x, axis, 0, 1), slice(x, axis, 1, n - 1), slice(x, axis, n - 1, n)}, axis);
    CHECK(std::vector<double>(joined.data().begin(), joined.data().end()) ==
          std::vector<double>(x.data().begin(), x.data().end()));
  }
  CHECK_THROWS_AS(concat({x, random_tensor({2, 4, 3}, rng)}, 0), ShapeError);
  CHECK_THROWS_AS(add(x, random_tensor({4}, rng)), ShapeError);
}

TEST_CASE("broadcasting and permutation semantics") {
  Tensor a(Shape{2, 1}, std::vector<double>{1, 2});
  Tensor b(Shape{3}, std::vector<double>{10, 20, 30});
  Tensor c = a + b;
  CHECK(c.shape() == Shape{2, 3});
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{11, 21, 31, 12, 22, 32});
  Tensor p = permute(Tensor(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}), {1, 0});
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 4, 2, 5, 3, 6});
}

TEST_CASE("every differentiable elementwise and shape op passes gradient checks on random shapes") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> extent(1, 4);
  for (int trial = 0; trial < 5; ++trial) {
    const Shape shape{extent(rng), extent(rng), extent(rng) + 1};
    Tensor x = random_tensor(shape, rng);
    // Keep x off the kinks at 0, -0.2 and 0.4 so each central difference stays on one branch.
    for (double& v : x.mutable_data()) {
      for (double kink : {0.0, -0.2, 0.4}) {
        if (std::fabs(v - kink) < 1e-2) v = kink + 2e-2;
      }
    }
    Tensor y = random_tensor(shape, rng);
    Tensor pos = random_tensor(shape, rng, 0.5, 2.0);
    Tensor row = random_tensor({shape[2]}, rng);
    const std::vector<std::pair<std::string, std::function<Tensor()>>> cases = {
        {"relu", [&] { return weighted_sum(relu(x), rng); }},
        {"leaky_relu", [&] { return weighted_sum(leaky_relu(x, 0.2), rng); }},
        {"tanh", [&] { return weighted_sum(tanh(x), rng); }},
        {"exp", [&] { return weighted_sum(exp(x), rng); }},
        {"sqrt", [&] { return weighted_sum(sqrt(pos), rng); }},
        {"square", [&] { return weighted_sum(square(x), rng); }},
        {"abs", [&] { return weighted_sum(abs(x), rng); }},
        {"neg", [&] { return weighted_sum(neg(x), rng); }},
        {"scalar ops", [&] { return weighted_sum(add_scalar(mul_scalar(x, 1.7), -0.3), rng); }},
        {"max/min scalar", [&] { return weighted_sum(min_with_scalar(max_with_scalar(x, -0.2), 0.4), rng); }},
        {"add/sub/mul/div", [&] { return weighted_sum((x + y) * (x - y) / pos, rng); }},
        {"broadcast binary", [&] { return weighted_sum(x * row + row / (row * row + 1.0), rng); }},
        {"mean/sum", [&] { return mean(square(x)) + sum(x * y); }},
        {"sum_axis/mean_axis", [&] { return weighted_sum(sum_axis(x, 1) * mean_axis(y, 2), rng); }},
        {"concat/slice", [&] { return weighted_sum(concat({slice(x, 2, 1, shape[2]), y}, 2), rng); }},
        {"broadcast_to/reshape",
         [&] { return weighted_sum(reshape(broadcast_to(row, shape), {numel_of(shape)}), rng); }},
        {"permute", [&] { return weighted_sum(permute(x, {2, 0, 1}), rng); }},
    };
    for (const auto& [name, fn] : cases) {
      // Re-seed the probe weights identically for every evaluation of one case.
      const auto state = rng;
      auto loss = [&, fn = fn] {
        rng = state;
        return fn();
      };
      require_gradcheck(check_gradients(name, loss, {{"x", x}, {"y", y}, {"pos", pos}, {"row", row}}));
    }
  }
}

TEST_CASE("linear and gather_pixels gradients") {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({5}, rng);
  Tensor probe = random_tensor({2, 3, 5}, rng);
  require_gradcheck(check_gradients("linear", [&] { return sum(linear(x, w, b) * probe); },
                                    {{"x", x}, {"w", w}, {"b", b}}));

  Tensor img = random_tensor({2, 3, 2, 2}, rng);
  const std::vector<std::int64_t> index{0, 3, 3, 1, 2, 2, 0, 0};  // B=2, P=2, K=2
  Tensor g = gather_pixels(img, index, 2, 2);
  CHECK(g.shape() == Shape{2, 2, 2, 3});
  CHECK(g.at({0, 0, 1, 2}) == img.at({0, 2, 1, 1}));
  CHECK(g.at({1, 1, 0, 1}) == img.at({1, 1, 0, 0}));
  Tensor gp = random_tensor(g.shape(), rng);
  require_gradcheck(check_gradients("gather_pixels", [&] { return sum(gather_pixels(img, index, 2, 2) * gp); },
                                    {{"img", img}}));
  const std::vector<std::int64_t> bad{0, 4, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(gather_pixels(img, bad, 2, 2), ShapeError);
}

TEST_CASE("composite conv -> instance_norm -> relu -> mean matches finite differences") {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor s = random_tensor({3}, rng, 0.5, 1.5);
  Tensor t = random_tensor({3}, rng);
  auto r = check_gradients(
      "pipeline", [&] { return mean(relu(instance_norm(conv2d(x, w, b, 2, 1), s, t, 1e-5))); },
      {{"x", x}, {"w", w}, {"b", b}, {"scale", s}, {"shift", t}});
  require_gradcheck(r);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({10}, rng);
  Tensor same = dropout(x, 0.0, true, rng);
  CHECK(std::vector<double>(same.data().begin(), same.data().end()) ==
        std::vector<double>(x.data().begin(), x.data().end()));
  Tensor eval = dropout(x, 0.7, false, rng);
  CHECK(std::vector<double>(eval.data().begin(), eval.data().end()) ==
        std::vector<double>(x.data().begin(), x.data().end()));
  CHECK_THROWS(dropout(x, 1.0, true, rng));

  const std::size_t n = 200000;
  Tensor ones(Shape{n}, 1.0);
  Tensor d = dropout(ones, 0.2, true, rng);
  std::size_t zeros = 0;
  double total = 0.0;
  for (double v : d.data()) {
    zeros += v == 0.0 ? 1 : 0;
    total += v;
  }
  CHECK(std::fabs(static_cast<double>(zeros) / n - 0.2) < 0.02);
  CHECK(std::fabs(total / n - 1.0) < 0.05);

  // With a fixed mask stream the op is differentiable like a masked scale.
  Tensor probe = random_tensor({10}, rng);
  const auto state = rng;
  auto loss = [&] {
    std::mt19937_64 local = state;
    return sum(dropout(x, 0.3, true, local) * probe);
  };
  require_gradcheck(check_gradients("dropout", loss, {{"x", x}}));
}
