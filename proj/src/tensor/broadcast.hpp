#pragma once

#include <cstddef>
#include <vector>

#include "peerstyle/tensor.hpp"

namespace peerstyle::detail {

// Flat source index of each output element for a broadcast binary op.
struct BroadcastMap {
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;

  static BroadcastMap build(const Shape& a, const Shape& b, const Shape& out);
};

/// Flat index into `from` for every element of `to` under broadcasting.
std::vector<std::size_t> broadcast_index(const Shape& from, const Shape& to);

}  // namespace peerstyle::detail
