#include "hpsg/spatial_index.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <utility>

namespace hpsg {

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(1, leaf_size)), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Aabb box;
  box.min = box.max = points_[order_[begin]];
  for (auto i = begin; i < end; ++i) box.expand(points_[order_[i]]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  if (box.extent()[axis] <= 0.0) return id;

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  auto& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<std::uint32_t> KdTree::knn(const Vec3& query, std::size_t k) const {
  using Entry = std::pair<double, std::uint32_t>;  // max-heap on (dist, index)
  std::priority_queue<Entry> heap;
  if (root_ < 0 || k == 0) return {};

  auto visit = [&](auto&& self, std::int32_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        const Entry e{(points_[idx] - query).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  visit(visit, root_);

  std::vector<Entry> found;
  found.reserve(heap.size());
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::sort(found.begin(), found.end());
  std::vector<std::uint32_t> out;
  out.reserve(found.size());
  for (const auto& e : found) out.push_back(e.second);
  return out;
}

std::vector<std::uint32_t> KdTree::radius(const Vec3& query, double r) const {
  std::vector<std::uint32_t> out;
  if (root_ < 0 || r < 0.0) return out;
  const double r2 = r * r;
  auto visit = [&](auto&& self, std::int32_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        if ((points_[idx] - query).squaredNorm() <= r2) out.push_back(idx);
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    // Points equal to the split value can sit on either side.
    if (diff <= r) self(self, node.left);
    if (diff >= -r) self(self, node.right);
  };
  visit(visit, root_);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::uint32_t>> knn_lists(std::span<const Vec3> points, const KdTree& tree,
                                                  std::size_t k) {
  std::vector<std::vector<std::uint32_t>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = tree.knn(points[i], k);
  return out;
}

}  // namespace hpsg
