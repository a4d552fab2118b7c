#pragma once

#include "hpsg/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hpsg {

/// Static 3D kd-tree over a borrowed point array. Query results are
/// deterministic: k-NN sorted by (distance, index), radius results by index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8);

  std::vector<std::uint32_t> knn(const Vec3& query, std::size_t k) const;
  std::vector<std::uint32_t> radius(const Vec3& query, double r) const;

  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::span<const Vec3> points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

/// k nearest neighbours (self included) of every point.
std::vector<std::vector<std::uint32_t>> knn_lists(std::span<const Vec3> points, const KdTree& tree,
                                                  std::size_t k);

}  // namespace hpsg
