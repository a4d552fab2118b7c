#include "hpsg/dbscan.hpp"

#include <algorithm>
#include <deque>

namespace hpsg {

namespace {
constexpr int kUnvisited = -2;
}

std::vector<int> dbscan(std::size_t n, int min_pts,
                        const std::function<std::vector<std::uint32_t>(std::size_t)>& neighbors) {
  std::vector<int> labels(n, kUnvisited);
  int next_cluster = 0;
  const auto min_count = static_cast<std::size_t>(std::max(min_pts, 1));

  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != kUnvisited) continue;
    const auto seeds = neighbors(i);
    if (seeds.size() < min_count) {
      labels[i] = kNoise;
      continue;
    }
    const int cluster = next_cluster++;
    labels[i] = cluster;
    std::deque<std::uint32_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const auto q = queue.front();
      queue.pop_front();
      if (labels[q] == kNoise) {
        labels[q] = cluster;  // border point
        continue;
      }
      if (labels[q] != kUnvisited) continue;
      labels[q] = cluster;
      auto reach = neighbors(q);
      if (reach.size() >= min_count) queue.insert(queue.end(), reach.begin(), reach.end());
    }
  }
  return labels;
}

int cluster_count(const std::vector<int>& labels) {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return top + 1;
}

}  // namespace hpsg
