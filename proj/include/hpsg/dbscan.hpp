#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace hpsg {

inline constexpr int kNoise = -1;

/// Sequential DBSCAN over `n` items. `neighbors(i)` must return every item
/// within eps of i, i itself included. A point is core when it has at least
/// `min_pts` neighbours. Clusters are numbered in the order their first core
/// point appears; a border point joins the first cluster that reaches it.
std::vector<int> dbscan(std::size_t n, int min_pts,
                        const std::function<std::vector<std::uint32_t>(std::size_t)>& neighbors);

/// Number of clusters in a label vector (noise excluded).
int cluster_count(const std::vector<int>& labels);

}  // namespace hpsg
