#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "peerstyle/gradcheck.hpp"
#include "peerstyle/ops.hpp"
#include "peerstyle/tpfr.hpp"
#include "test_util.hpp"
#include "tpfr_reference.hpp"

using namespace peerstyle;
using testing::random_tensor;

namespace {

NetConfig small_config(std::size_t channels, std::size_t k) {
  NetConfig c;
  c.content_channels = c.style_local_channels = c.style_global_channels = channels;
  c.k_neighbors = k;
  return c;
}

LatentCode random_code(std::size_t b, std::size_t ch, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return {random_tensor({b, ch, h, w}, rng), random_tensor({b, ch, h, w}, rng), random_tensor({b, ch, 1, 1}, rng)};
}

void randomize_heads(Tpfr& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (Tensor* p : {&t.content_head.weight, &t.content_head.bias, &t.style_head.weight, &t.style_head.bias}) {
    for (double& v : p->mutable_data()) v = dist(rng);
  }
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Permutes the pixels of every map in a code by `perm` (new pixel i = old perm[i]).
LatentCode permute_pixels(const LatentCode& z, const std::vector<std::size_t>& perm) {
  auto apply = [&](const Tensor& t) {
    const std::size_t B = t.size(0), C = t.size(1), HW = t.size(2) * t.size(3);
    std::vector<double> out(t.numel());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < HW; ++i) out[(b * C + c) * HW + i] = t.data()[(b * C + c) * HW + perm[i]];
    return Tensor(t.shape(), std::move(out));
  };
  return {apply(z.content), apply(z.style_local), z.style_global};
}

}  // namespace

TEST_CASE("knn_graph examples") {
  SUBCASE("two query pixels against three targets") {
    Tensor q(Shape{1, 1, 1, 2}, std::vector<double>{0, 10});
    Tensor t(Shape{1, 1, 1, 3}, std::vector<double>{1, 9, 20});
    const PeerGraph g = knn_graph(q, t, 1);
    CHECK(g.neighbor_index == std::vector<std::int64_t>{0, 1});
    CHECK(g.distances == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("K = Q lists every target") {
    std::mt19937_64 rng(1);
    const PeerGraph g = knn_graph(random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 3, 1, 3}, rng), 3);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t p = 0; p < 4; ++p) {
        std::vector<std::int64_t> seen{g.index(b, p, 0), g.index(b, p, 1), g.index(b, p, 2)};
        std::sort(seen.begin(), seen.end());
        CHECK(seen == std::vector<std::int64_t>{0, 1, 2});
      }
  }
  SUBCASE("self match") {
    std::mt19937_64 rng(2);
    Tensor x = random_tensor({2, 4, 3, 3}, rng);
    const PeerGraph g = knn_graph(x, x, 1);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t p = 0; p < 9; ++p) {
        CHECK(g.index(b, p, 0) == static_cast<std::int64_t>(p));
        CHECK(g.distances[b * 9 + p] == 0.0);
      }
  }
  SUBCASE("ties go to the lower index") {
    Tensor q(Shape{1, 1, 1, 1}, std::vector<double>{0});
    Tensor t(Shape{1, 1, 1, 4}, std::vector<double>{2, -1, 1, -2});
    CHECK(knn_graph(q, t, 3).neighbor_index == std::vector<std::int64_t>{1, 2, 0});
  }
  SUBCASE("K larger than the target is rejected") {
    Tensor x(Shape{1, 1, 2, 2}, 0.0);
    CHECK_THROWS_WITH(knn_graph(x, x, 5), doctest::Contains("K = 5"));
    CHECK_THROWS_AS(knn_graph(x, Tensor(Shape{1, 2, 2, 2}, 0.0), 1), ShapeError);
  }
}

TEST_CASE("knn_graph matches an exhaustive scan") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng() % 6, h = 1 + rng() % 4, w = 1 + rng() % 4, th = 1 + rng() % 4, tw = 1 + rng() % 4;
    const std::size_t Q = th * tw, k = 1 + rng() % Q;
    Tensor q = random_tensor({2, d, h, w}, rng), t = random_tensor({2, d, th, tw}, rng);
    const PeerGraph g = knn_graph(q, t, k);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t p = 0; p < h * w; ++p) {
        const auto qv = testing::pixel(values(q), b, d, h * w, p);
        std::vector<std::vector<double>> tv;
        for (std::size_t j = 0; j < Q; ++j) tv.push_back(testing::pixel(values(t), b, d, Q, j));
        const auto expect = testing::nearest(qv, tv, k);
        for (std::size_t j = 0; j < k; ++j) {
          REQUIRE(g.index(b, p, j) == static_cast<std::int64_t>(expect[j]));
          if (j > 0) REQUIRE(g.distances[(b * h * w + p) * k + j] >= g.distances[(b * h * w + p) * k + j - 1]);
        }
      }
  }
}

TEST_CASE("attention weight examples") {
  std::mt19937_64 rng(4);
  AttentionHead head(1, 0.02, rng);
  SUBCASE("equal scores give uniform weights") {
    head.weight.mutable_data()[0] = 0.3;
    head.weight.mutable_data()[1] = 0.0;
    Tensor q(Shape{1, 1, 1}, std::vector<double>{2.0});
    Tensor n(Shape{1, 1, 4, 1}, std::vector<double>{1, -5, 3, 9});
    const Tensor a = attention_weights(q, n, head, 0.0, false, rng);
    for (double v : a.data()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("scores ln 1 and ln 3 give 0.25 and 0.75") {
    head.weight.mutable_data()[0] = 0.0;
    head.weight.mutable_data()[1] = 1.0;
    Tensor q(Shape{1, 1, 1}, std::vector<double>{0.0});
    Tensor n(Shape{1, 1, 2, 1}, std::vector<double>{0.0, std::log(3.0)});
    const Tensor a = attention_weights(q, n, head, 0.0, false, rng);
    CHECK(std::fabs(a.data()[0] - 0.25) < 1e-15);
    CHECK(std::fabs(a.data()[1] - 0.75) < 1e-15);
  }
}

TEST_CASE("eval attention weights are a distribution equal to a softmax of the scores") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng() % 5, K = 1 + rng() % 6;
    AttentionHead head(d, 1.0, rng);
    Tensor q = random_tensor({2, 3, d}, rng, -3, 3), n = random_tensor({2, 3, K, d}, rng, -3, 3);
    const Tensor a = attention_weights(q, n, head, 0.2, false, rng);
    const Tensor s = attention_scores(q, n, head);
    for (std::size_t i = 0; i < 6; ++i) {
      double total = 0.0, z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(s.data()[i * K + k]);
      for (std::size_t k = 0; k < K; ++k) {
        const double v = a.data()[i * K + k];
        REQUIRE(v >= 0.0);
        CHECK(std::fabs(v - std::exp(s.data()[i * K + k]) / z) < 1e-12);
        total += v;
      }
      CHECK(std::fabs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("training-mode dropout rescales survivors") {
  std::mt19937_64 rng(6);
  AttentionHead head(2, 1.0, rng);
  Tensor q = random_tensor({1, 50, 2}, rng), n = random_tensor({1, 50, 4, 2}, rng);
  const Tensor clean = attention_weights(q, n, head, 0.5, false, rng);
  const Tensor dropped = attention_weights(q, n, head, 0.5, true, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < clean.numel(); ++i) {
    if (dropped.data()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(dropped.data()[i] == doctest::Approx(2.0 * clean.data()[i]));
    }
  }
  CHECK(zeros > 50);
  CHECK(zeros < 150);
}

TEST_CASE("peer_recombine examples") {
  std::mt19937_64 rng(7);
  SUBCASE("K = 1 copies the nearest neighbor exactly") {
    AttentionHead head(2, 1.0, rng);
    Tensor gq = random_tensor({1, 2, 3, 3}, rng), gt = random_tensor({1, 2, 2, 3}, rng);
    Tensor vt = random_tensor({1, 4, 2, 3}, rng);
    const Recombination r = peer_recombine(gq, gt, vt, 1, head, 0.0, false, rng);
    for (std::size_t p = 0; p < 9; ++p) {
      const auto nb = static_cast<std::size_t>(r.graph.index(0, p, 0));
      for (std::size_t c = 0; c < 4; ++c) CHECK(r.values.data()[c * 9 + p] == vt.data()[c * 6 + nb]);
    }
  }
  SUBCASE("uniform weights average the neighbor values") {
    AttentionHead head(1, 1.0, rng);
    head.weight.mutable_data()[0] = head.weight.mutable_data()[1] = 0.0;
    Tensor gq(Shape{1, 1, 1, 1}, 0.0);
    Tensor gt(Shape{1, 1, 1, 2}, std::vector<double>{1.0, -1.0});
    Tensor vt(Shape{1, 1, 1, 2}, std::vector<double>{2.0, 4.0});
    CHECK(peer_recombine(gq, gt, vt, 2, head, 0.0, false, rng).values.item() == 3.0);
  }
  SUBCASE("outputs stay inside the neighbors' per-channel range") {
    AttentionHead head(3, 1.0, rng);
    Tensor gq = random_tensor({2, 3, 4, 4}, rng), gt = random_tensor({2, 3, 4, 4}, rng);
    Tensor vt = random_tensor({2, 5, 4, 4}, rng);
    const Recombination r = peer_recombine(gq, gt, vt, 3, head, 0.2, false, rng);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t p = 0; p < 16; ++p)
        for (std::size_t c = 0; c < 5; ++c) {
          double lo = 1e9, hi = -1e9;
          for (std::size_t k = 0; k < 3; ++k) {
            const double v = vt.data()[(b * 5 + c) * 16 + static_cast<std::size_t>(r.graph.index(b, p, k))];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
          const double out = r.values.data()[(b * 5 + c) * 16 + p];
          CHECK(out >= lo - 1e-15);
          CHECK(out <= hi + 1e-15);
        }
  }
  SUBCASE("mismatched values are rejected") {
    AttentionHead head(1, 1.0, rng);
    Tensor g(Shape{1, 1, 2, 2}, 0.0);
    CHECK_THROWS_AS(peer_recombine(g, g, Tensor(Shape{1, 1, 2, 3}, 0.0), 1, head, 0.0, false, rng), ShapeError);
  }
}

TEST_CASE("self-transfer with K = 1 is the identity, bit for bit") {
  std::mt19937_64 rng(8);
  Tpfr t(small_config(4, 1), rng);
  randomize_heads(t, rng);
  const LatentCode z = random_code(2, 4, 4, 4, rng);
  const LatentCode out = t.forward(z, z, rng, false);
  CHECK(values(out.content) == values(z.content));
  CHECK(values(out.style_local) == values(z.style_local));
  CHECK(values(out.style_global) == values(z.style_global));
}

TEST_CASE("output shapes follow z_i for any K") {
  std::mt19937_64 rng(9);
  for (std::size_t k : {1u, 2u, 5u, 12u}) {
    Tpfr t(small_config(3, k), rng);
    const LatentCode zi = random_code(2, 3, 2, 5, rng), zt = random_code(2, 3, 4, 3, rng);
    const LatentCode out = t.forward(zi, zt, rng, true);
    CHECK(out.content.shape() == zi.content.shape());
    CHECK(out.style_local.shape() == zi.style_local.shape());
    CHECK(out.style_global.shape() == zi.style_global.shape());
  }
}

TEST_CASE("config mismatch is rejected") {
  std::mt19937_64 rng(10);
  Tpfr t(small_config(3, 1), rng);
  const LatentCode good = random_code(1, 3, 2, 2, rng), bad = random_code(1, 4, 2, 2, rng);
  CHECK_THROWS_AS(t.forward(good, bad, rng, false), ShapeError);
  CHECK_THROWS_AS(t.forward(bad, good, rng, false), ShapeError);
}

TEST_CASE("tpfr matches the per-pixel reference") {
  std::mt19937_64 rng(11);
  for (std::size_t side : {2u, 4u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t k = side == 2 ? 2 : 1 + rng() % 5;
      Tpfr t(small_config(3, k), rng);
      randomize_heads(t, rng);
      const LatentCode zi = random_code(2, 3, side, side, rng), zt = random_code(2, 3, side, side, rng);
      const LatentCode out = t.forward(zi, zt, rng, false);
      const testing::PlainCode ref = testing::reference_tpfr(testing::to_plain(zi), testing::to_plain(zt), t, k);
      CHECK(testing::max_abs_diff(out.content.data(), ref.c) < 1e-10);
      CHECK(testing::max_abs_diff(out.style_local.data(), ref.s) < 1e-10);
      CHECK(testing::max_abs_diff(out.style_global.data(), ref.g) < 1e-10);
    }
  }
}

TEST_CASE("permuting the target pixels leaves the output unchanged") {
  std::mt19937_64 rng(12);
  Tpfr t(small_config(3, 3), rng);
  randomize_heads(t, rng);
  const LatentCode zi = random_code(1, 3, 3, 3, rng), zt = random_code(1, 3, 4, 4, rng);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const LatentCode a = t.forward(zi, zt, rng, false);
  const LatentCode b = t.forward(zi, permute_pixels(zt, perm), rng, false);
  CHECK(testing::max_abs_diff(a.content.data(), b.content.data()) < 1e-14);
  CHECK(testing::max_abs_diff(a.style_local.data(), b.style_local.data()) < 1e-14);
  CHECK(testing::max_abs_diff(a.style_global.data(), b.style_global.data()) < 1e-14);
}

TEST_CASE("without stage two the content passes through") {
  std::mt19937_64 rng(13);
  Tpfr t(small_config(3, 2), rng);
  randomize_heads(t, rng);
  const LatentCode zi = random_code(1, 3, 3, 3, rng), zt = random_code(1, 3, 3, 3, rng);
  const LatentCode swap = t.forward(zi, zt, rng, false, false);
  const LatentCode full = t.forward(zi, zt, rng, false, true);
  CHECK(values(swap.content) == values(zi.content));
  CHECK(values(swap.style_local) == values(full.style_local));
  CHECK(testing::max_abs_diff(swap.content.data(), full.content.data()) > 1e-3);
  const testing::PlainCode ref =
      testing::reference_tpfr(testing::to_plain(zi), testing::to_plain(zt), t, 2, false);
  CHECK(testing::max_abs_diff(swap.style_local.data(), ref.s) < 1e-10);
}

TEST_CASE("gradient flow through tpfr") {
  std::mt19937_64 rng(14);
  Tpfr t(small_config(3, 3), rng);
  randomize_heads(t, rng);
  LatentCode zi = random_code(2, 3, 3, 3, rng), zt = random_code(2, 3, 3, 3, rng);
  ParameterList params{{"z_i.content", zi.content},       {"z_t.content", zt.content},
                       {"z_t.style_local", zt.style_local}, {"z_t.style_global", zt.style_global}};
  t.collect("tpfr", params);
  for (auto& p : params) {
    Tensor x = p.tensor;
    x.set_requires_grad(true);
  }
  const LatentCode out = t.forward(zi, zt, rng, true);
  Tensor w1 = random_tensor(out.content.shape(), rng), w2 = random_tensor(out.style_local.shape(), rng),
         w3 = random_tensor(out.style_global.shape(), rng);
  backward(sum(out.content * w1) + sum(out.style_local * w2) + sum(out.style_global * w3));
  auto norm = [](std::span<const double> g, std::size_t begin, std::size_t end) {
    double n = 0.0;
    for (std::size_t i = begin; i < end; ++i) n += g[i] * g[i];
    return std::sqrt(n);
  };

  SUBCASE("targets and the neighbor half of each head receive gradient") {
    for (const char* name : {"z_t.content", "z_t.style_local", "z_t.style_global"}) {
      const auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.name == name; });
      INFO(name);
      CHECK(norm(it->tensor.grad(), 0, it->tensor.numel()) > 1e-3);
    }
    CHECK(norm(t.content_head.weight.grad(), 3, 6) > 1e-3);
    CHECK(norm(t.style_head.weight.grad(), 6, 12) > 1e-3);
  }

  SUBCASE("the query term of a(q, n) cancels in the normalization") {
    // a(q, n_k) = w_q . q + w_n . n_k + b; the first and last terms are shared
    // by all K neighbors, so the weights depend on the query only through the
    // graph. The query code, the query half of each head and the bias get no
    // gradient.
    CHECK(norm(zi.content.grad(), 0, zi.content.numel()) < 1e-12);
    CHECK(norm(t.content_head.weight.grad(), 0, 3) < 1e-12);
    CHECK(norm(t.style_head.weight.grad(), 0, 6) < 1e-12);
    CHECK(norm(t.content_head.bias.grad(), 0, 1) < 1e-12);
    CHECK(norm(t.style_head.bias.grad(), 0, 1) < 1e-12);
  }

  SUBCASE("finite differences in eval mode") {
    for (auto& p : params) {
      Tensor x = p.tensor;
      x.zero_grad();
    }
    const GradCheckResult r = check_gradients(
        "tpfr",
        [&] {
          const LatentCode o = t.forward(zi, zt, rng, false);
          return sum(o.content * w1) + sum(o.style_local * w2) + sum(o.style_global * w3);
        },
        params);
    INFO(r.name << " " << r.max_rel_error << " at " << r.worst_entry);
    CHECK(r.passed);
  }
}
