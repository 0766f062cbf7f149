#include "peerstyle/tpfr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "peerstyle/kernels.hpp"
#include "peerstyle/ops.hpp"

namespace peerstyle {

namespace {

void require_map(const Tensor& t, const char* what) {
  if (t.dim() != 4) throw ShapeError(std::string("tpfr: ") + what + " must be [B, C, H, W], got " + to_string(t.shape()));
}

// [B, d, h, w] -> [B, h*w, d]
Tensor pixels_last(const Tensor& map) {
  const Shape& s = map.shape();
  return permute(reshape(map, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

void check_code(const LatentCode& z, const NetConfig& c, const char* which) {
  const Shape& cs = z.content.shape();
  const bool ok = cs.size() == 4 && cs[1] == c.content_channels && z.style_local.dim() == 4 &&
                  z.style_local.size(1) == c.style_local_channels && z.style_local.size(0) == cs[0] &&
                  z.style_local.size(2) == cs[2] && z.style_local.size(3) == cs[3] &&
                  z.style_global.shape() == Shape{cs.size() == 4 ? cs[0] : 0, c.style_global_channels, 1, 1};
  if (!ok) {
    throw ShapeError(std::string("tpfr: ") + which + " does not match the configured latent split (content " +
                     to_string(cs) + ", style_local " + to_string(z.style_local.shape()) + ", style_global " +
                     to_string(z.style_global.shape()) + ")");
  }
}

}  // namespace

PeerGraph knn_graph(const Tensor& query, const Tensor& target, std::size_t k) {
  require_map(query, "query");
  require_map(target, "target");
  const std::size_t B = query.size(0), d = query.size(1);
  if (target.size(0) != B || target.size(1) != d) {
    throw ShapeError("knn_graph: query " + to_string(query.shape()) + " and target " + to_string(target.shape()) +
                     " disagree in batch or channels");
  }
  const std::size_t P = query.size(2) * query.size(3);
  const std::size_t Q = target.size(2) * target.size(3);
  if (k == 0 || k > Q) {
    throw std::invalid_argument("knn_graph: K = " + std::to_string(k) + " must lie in [1, " + std::to_string(Q) + "]");
  }
  const kernels::KernelTable& kt = kernels::active();
  PeerGraph g{B, P, k, std::vector<std::int64_t>(B * P * k), std::vector<double>(B * P * k)};
  std::vector<double> qrows(P * d), trows(Q * d), dist(Q);
  std::vector<std::int64_t> order(Q);
  for (std::size_t b = 0; b < B; ++b) {
    kernels::transpose(d, P, query.data().data() + b * d * P, qrows.data());
    kernels::transpose(d, Q, target.data().data() + b * d * Q, trows.data());
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t q = 0; q < Q; ++q) dist[q] = kt.squared_distance(qrows.data() + p * d, trows.data() + q * d, d);
      std::iota(order.begin(), order.end(), std::int64_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](std::int64_t x, std::int64_t y) { return dist[x] < dist[y] || (dist[x] == dist[y] && x < y); });
      for (std::size_t j = 0; j < k; ++j) {
        g.neighbor_index[(b * P + p) * k + j] = order[j];
        g.distances[(b * P + p) * k + j] = std::sqrt(dist[order[j]]);
      }
    }
  }
  return g;
}

AttentionHead::AttentionHead(std::size_t feature_dim, double init_std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, init_std);
  std::vector<double> w(2 * feature_dim);
  for (double& v : w) v = dist(rng);
  weight = Tensor(Shape{1, 2 * feature_dim}, std::move(w));
  weight.set_requires_grad(true);
  bias = Tensor(Shape{1}, 0.0);
  bias.set_requires_grad(true);
}

void AttentionHead::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor attention_scores(const Tensor& query_feats, const Tensor& neighbor_feats, const AttentionHead& head) {
  if (query_feats.dim() != 3 || neighbor_feats.dim() != 4 || neighbor_feats.size(0) != query_feats.size(0) ||
      neighbor_feats.size(1) != query_feats.size(1) || neighbor_feats.size(3) != query_feats.size(2)) {
    throw ShapeError("attention: query " + to_string(query_feats.shape()) + " and neighbors " +
                     to_string(neighbor_feats.shape()) + " are incompatible");
  }
  const std::size_t B = query_feats.size(0), P = query_feats.size(1), d = query_feats.size(2);
  const std::size_t K = neighbor_feats.size(2);
  if (head.feature_dim() != d) {
    throw ShapeError("attention: head expects " + std::to_string(2 * head.feature_dim()) + " inputs, pairs have " +
                     std::to_string(2 * d));
  }
  const Tensor q = broadcast_to(reshape(query_feats, {B, P, 1, d}), {B, P, K, d});
  const Tensor pairs = concat({q, neighbor_feats}, 3);
  return reshape(linear(pairs, head.weight, head.bias), {B, P, K});
}

Tensor attention_weights(const Tensor& query_feats, const Tensor& neighbor_feats, const AttentionHead& head,
                         double dropout_rate, bool training, std::mt19937_64& rng) {
  const Tensor scores = attention_scores(query_feats, neighbor_feats, head);
  const std::size_t B = scores.size(0), P = scores.size(1), K = scores.size(2);
  std::vector<double> peak(B * P);
  const auto s = scores.data();
  for (std::size_t i = 0; i < B * P; ++i) peak[i] = *std::max_element(s.begin() + i * K, s.begin() + (i + 1) * K);
  const Tensor shifted = scores - Tensor(Shape{B, P, 1}, std::move(peak));
  const Tensor e = leaky_relu(exp(shifted), 0.2);
  const Tensor alpha = e / sum_axis(e, 2);
  return dropout(alpha, dropout_rate, training, rng);
}

Recombination peer_recombine(const Tensor& guide_query, const Tensor& guide_target, const Tensor& values_target,
                             std::size_t k, const AttentionHead& head, double dropout_rate, bool training,
                             std::mt19937_64& rng) {
  require_map(values_target, "values");
  if (values_target.size(0) != guide_target.size(0) || values_target.size(2) != guide_target.size(2) ||
      values_target.size(3) != guide_target.size(3)) {
    throw ShapeError("peer_recombine: values " + to_string(values_target.shape()) + " and guide " +
                     to_string(guide_target.shape()) + " differ in batch or spatial extent");
  }
  Recombination r;
  r.graph = knn_graph(guide_query, guide_target, k);
  const std::size_t B = guide_query.size(0), P = r.graph.points, C = values_target.size(1);
  const Tensor neighbors = gather_pixels(guide_target, r.graph.neighbor_index, P, k);
  r.weights = attention_weights(pixels_last(guide_query), neighbors, head, dropout_rate, training, rng);
  const Tensor gathered = gather_pixels(values_target, r.graph.neighbor_index, P, k);  // [B, P, K, C]
  const Tensor mixed = sum_axis(gathered * reshape(r.weights, {B, P, k, 1}), 2, false);  // [B, P, C]
  r.values = reshape(permute(mixed, {0, 2, 1}), {B, C, guide_query.size(2), guide_query.size(3)});
  return r;
}

Tensor style_guide(const Tensor& style_local, const Tensor& style_global) {
  const Shape& s = style_local.shape();
  return concat({style_local, broadcast_to(style_global, {s[0], style_global.size(1), s[2], s[3]})}, 1);
}

Tpfr::Tpfr(const NetConfig& c, std::mt19937_64& rng)
    : config(c),
      content_head(c.content_channels, c.init_std, rng),
      style_head(c.style_local_channels + c.style_global_channels, c.init_std, rng) {
  c.validate();
}

LatentCode Tpfr::forward(const LatentCode& z_i, const LatentCode& z_t, std::mt19937_64& rng, bool training,
                         bool second_stage) const {
  check_code(z_i, config, "z_i");
  check_code(z_t, config, "z_t");
  if (z_i.batch() != z_t.batch()) throw ShapeError("tpfr: z_i and z_t batch sizes differ");
  const std::size_t K = config.k_neighbors;
  const double rate = config.attention_dropout;

  // Stage one: content-guided graph, style drawn from the target.
  const Recombination first =
      peer_recombine(z_i.content, z_t.content, z_t.style_local, K, content_head, rate, training, rng);
  // The 1x1 global code is mixed by the attention mass averaged over query pixels.
  const Tensor mass = mean_axis(sum_axis(first.weights, 2, false), 1);  // [B, 1]
  const Tensor global = reshape(mass, {z_i.batch(), 1, 1, 1}) * z_t.style_global;
  LatentCode out{z_i.content, first.values, global};
  if (!second_stage) return out;

  // Stage two: style-guided graph, content drawn from the target.
  const Recombination second = peer_recombine(style_guide(out.style_local, out.style_global),
                                              style_guide(z_t.style_local, z_t.style_global), z_t.content, K,
                                              style_head, rate, training, rng);
  out.content = second.values;
  return out;
}

void Tpfr::collect(const std::string& prefix, ParameterList& out) const {
  content_head.collect(prefix + ".content_head", out);
  style_head.collect(prefix + ".style_head", out);
}

}  // namespace peerstyle
