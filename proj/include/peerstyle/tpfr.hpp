#pragma once

// Peer-graph feature recombination between two latent codes. Stage one
// re-draws the style of each query pixel from target pixels with similar
// content; stage two re-draws content from target pixels with similar style.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "peerstyle/adam.hpp"
#include "peerstyle/nn.hpp"
#include "peerstyle/tensor.hpp"

namespace peerstyle {

struct PeerGraph {
  std::size_t batch = 0;
  std::size_t points = 0;     // P query pixels
  std::size_t neighbors = 0;  // K
  std::vector<std::int64_t> neighbor_index;  // [B, P, K] flat indices into the Q target pixels
  std::vector<double> distances;             // [B, P, K] Euclidean, non-decreasing along K

  std::int64_t index(std::size_t b, std::size_t p, std::size_t k) const {
    return neighbor_index[(b * points + p) * neighbors + k];
  }
};

/// K nearest target pixels for every query pixel; ties go to the lower index.
/// query [B, d, h, w], target [B, d, h', w']. Never recorded on the tape.
PeerGraph knn_graph(const Tensor& query, const Tensor& target, std::size_t k);

/// Scores a (query, neighbor) feature pair: a(q, n) = w . [q, n] + b.
class AttentionHead {
 public:
  AttentionHead() = default;
  AttentionHead(std::size_t feature_dim, double init_std, std::mt19937_64& rng);

  std::size_t feature_dim() const { return weight.size(1) / 2; }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor weight;  // [1, 2d]
  Tensor bias;    // [1]
};

/// Raw a(q, n_k). query_feats [B, P, d], neighbor_feats [B, P, K, d] -> [B, P, K].
Tensor attention_scores(const Tensor& query_feats, const Tensor& neighbor_feats, const AttentionHead& head);

/// LReLU(exp(a)) normalized over K, then inverted dropout when training.
/// The per-query maximum is subtracted before exp; LReLU is positively
/// homogeneous, so the normalized result is unchanged.
Tensor attention_weights(const Tensor& query_feats, const Tensor& neighbor_feats, const AttentionHead& head,
                         double dropout_rate, bool training, std::mt19937_64& rng);

struct Recombination {
  Tensor values;   // [B, C, h, w]
  Tensor weights;  // [B, P, K]
  PeerGraph graph;
};

/// For every query pixel: sum_k alpha_k * values_target[neighbor_k].
Recombination peer_recombine(const Tensor& guide_query, const Tensor& guide_target, const Tensor& values_target,
                             std::size_t k, const AttentionHead& head, double dropout_rate, bool training,
                             std::mt19937_64& rng);

/// Per-pixel style feature for the stage-two graph: local style with the
/// global style broadcast to every site, [B, Cs + Cg, h, w].
Tensor style_guide(const Tensor& style_local, const Tensor& style_global);

class Tpfr {
 public:
  Tpfr() = default;
  Tpfr(const NetConfig& config, std::mt19937_64& rng);

  /// Content of z_i restyled after z_t. With `second_stage` off the content
  /// code of z_i passes through unchanged (plain style swap).
  LatentCode forward(const LatentCode& z_i, const LatentCode& z_t, std::mt19937_64& rng, bool training,
                     bool second_stage = true) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  NetConfig config;
  AttentionHead content_head;  // 2 * Cc inputs
  AttentionHead style_head;    // 2 * (Cs + Cg) inputs
};

}  // namespace peerstyle
