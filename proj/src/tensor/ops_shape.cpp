#include <algorithm>
#include <memory>
#include <numeric>

#include "broadcast.hpp"
#include "peerstyle/ops.hpp"

namespace peerstyle {

namespace detail {

std::vector<std::size_t> broadcast_index(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) {
    throw ShapeError("broadcast: cannot broadcast " + to_string(from) + " to " + to_string(to));
  }
  const std::size_t rank = to.size();
  const std::size_t offset = rank - from.size();
  // Source stride per output axis; zero where the source is broadcast.
  std::vector<std::size_t> stride(rank, 0);
  std::size_t running = 1;
  for (std::size_t i = from.size(); i-- > 0;) {
    const std::size_t axis = i + offset;
    if (from[i] == to[axis]) {
      stride[axis] = running;
    } else if (from[i] != 1) {
      throw ShapeError("broadcast: dimension " + std::to_string(i) + " of " + to_string(from) +
                       " is incompatible with " + to_string(to));
    }
    running *= from[i];
  }
  const std::size_t total = numel_of(to);
  std::vector<std::size_t> index(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    index[flat] = src;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      src += stride[axis];
      if (counter[axis] < to[axis]) break;
      src -= stride[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return index;
}

BroadcastMap BroadcastMap::build(const Shape& a, const Shape& b, const Shape& out) {
  return BroadcastMap{broadcast_index(a, out), broadcast_index(b, out)};
}

}  // namespace detail

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: shapes " + to_string(a) + " and " + to_string(b) +
                       " disagree on dimension " + std::to_string(i) + " (" + std::to_string(da) +
                       " vs " + std::to_string(db) + ")");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

Tensor copy_through(const Tensor& x, Shape shape, const char* name) {
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(
      std::move(shape), std::move(out), {x},
      [](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
      },
      name);
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return copy_through(x, std::move(shape), "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(s) + " vs " + to_string(first));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: dimension " + std::to_string(d) + " differs (" + std::to_string(s[d]) +
                         " vs " + std::to_string(first[d]) + ")");
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_extent = out_shape[axis];

  std::vector<double> out(numel_of(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto src = parts[pi].data();
    const std::size_t block = extents[pi] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * block, block, out.data() + (o * out_extent + offset) * inner);
    }
    offset += extents[pi];
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), parts,
      [extents, outer, inner, out_extent](detail::Node& self) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < extents.size(); ++pi) {
          const std::size_t block = extents[pi] * inner;
          if (double* g = detail::input_grad(self, pi)) {
            for (std::size_t o = 0; o < outer; ++o) {
              const double* src = self.grad.data() + (o * out_extent + off) * inner;
              for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
            }
          }
          off += extents[pi];
        }
      },
      "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("slice: axis " + std::to_string(axis) + " out of range");
  if (begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for dimension " + std::to_string(axis) + " of extent " + std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t extent = s[axis];
  const std::size_t width = end - begin;
  Shape out_shape = s;
  out_shape[axis] = width;
  std::vector<double> out(outer * width * inner);
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.data() + (o * extent + begin) * inner, width * inner, out.data() + o * width * inner);
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {x},
      [outer, inner, extent, begin, width](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t o = 0; o < outer; ++o) {
          double* dst = gx + (o * extent + begin) * inner;
          const double* src = self.grad.data() + o * width * inner;
          for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  auto index = std::make_shared<std::vector<std::size_t>>(detail::broadcast_index(x.shape(), shape));
  const auto in = x.data();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[(*index)[i]];
  return detail::make_result(
      shape, std::move(out), {x},
      [index](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += self.grad[i];
      },
      "broadcast_to");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  if (order.size() != s.size()) throw ShapeError("permute: order rank does not match tensor rank");
  std::vector<bool> used(s.size(), false);
  for (std::size_t axis : order) {
    if (axis >= s.size() || used[axis]) throw ShapeError("permute: order is not a permutation");
    used[axis] = true;
  }
  const std::size_t rank = s.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * s[d];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = s[order[d]];
    stride[d] = in_stride[order[d]];
  }
  const std::size_t total = x.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    (*index)[flat] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += stride[d];
      if (counter[d] < out_shape[d]) break;
      src -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  const auto in = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = in[(*index)[i]];
  return detail::make_result(
      std::move(out_shape), std::move(out), {x},
      [index](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < index->size(); ++i) gx[(*index)[i]] += self.grad[i];
      },
      "permute");
}

}  // namespace peerstyle
