#include "hpsg/object_fusion.hpp"

#include "hpsg/dbscan.hpp"
#include "hpsg/error.hpp"
#include "hpsg/spatial_index.hpp"

#include <algorithm>
#include <numeric>

namespace hpsg {

void FusionConfig::validate() const {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
  if (!(dbscan_eps_m > 0.0) || dbscan_min_pts < 1) throw ConfigError("fusion DBSCAN parameters must be positive");
}

std::optional<LocalObjectCandidate> densify_filter(const LocalObjectCandidate& candidate, const FusionConfig& cfg) {
  const auto& pts = candidate.geometry.points;
  if (pts.empty()) return std::nullopt;
  const KdTree tree(pts);
  const auto labels = dbscan(pts.size(), cfg.dbscan_min_pts,
                             [&](std::size_t i) { return tree.radius(pts[i], cfg.dbscan_eps_m); });
  const int clusters = cluster_count(labels);
  if (clusters == 0) return std::nullopt;

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());

  std::vector<std::size_t> sizes(clusters, 0);
  std::vector<Vec3> sums(clusters, Vec3::Zero());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    ++sizes[labels[i]];
    sums[labels[i]] += pts[i];
  }
  int best = 0;
  double best_dist = (sums[0] / static_cast<double>(sizes[0]) - centroid).norm();
  for (int c = 1; c < clusters; ++c) {
    const double dist = (sums[c] / static_cast<double>(sizes[c]) - centroid).norm();
    if (sizes[c] > sizes[best] || (sizes[c] == sizes[best] && dist < best_dist)) {
      best = c;
      best_dist = dist;
    }
  }

  LocalObjectCandidate out = candidate;
  out.geometry.points.clear();
  out.geometry.pixels.clear();
  const bool pixels = candidate.geometry.has_pixels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != best) continue;
    out.geometry.points.push_back(pts[i]);
    if (pixels) out.geometry.pixels.push_back(candidate.geometry.pixels[i]);
  }
  return out;
}

double iou_3d(const Aabb& a, const Aabb& b) {
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = std::max(a.min[k], b.min[k]);
    const double hi = std::min(a.max[k], b.max[k]);
    if (hi <= lo) {
      inter = 0.0;
      break;
    }
    inter *= hi - lo;
  }
  const double uni = a.volume() + b.volume() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<ObjectInstance> fuse(std::span<const LocalObjectCandidate> candidates, const FusionConfig& cfg) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].source_view < candidates[b].source_view;
  });

  std::vector<ObjectInstance> objects;
  for (const auto idx : order) {
    const auto& cand = candidates[idx];
    if (cand.geometry.empty()) continue;
    const Aabb box = Aabb::of(cand.geometry.points);

    int target = -1;
    for (std::size_t k = 0; k < objects.size(); ++k) {
      if (objects[k].instance_id == cand.instance_id) {
        target = static_cast<int>(k);
        break;
      }
    }
    if (target < 0) {
      double best_iou = cfg.kappa;
      for (std::size_t k = 0; k < objects.size(); ++k) {
        const double iou = iou_3d(objects[k].bbox, box);
        if (iou > best_iou) {
          best_iou = iou;
          target = static_cast<int>(k);
        }
      }
    }

    const Observation obs{cand.source_view, cand.instance_id, cand.seg_confidence, idx};
    if (target < 0) {
      ObjectInstance obj;
      obj.object_key = static_cast<int>(objects.size());
      obj.merged_points.points = cand.geometry.points;
      obj.instance_id = cand.instance_id;
      obj.bbox = box;
      obj.view_observations.push_back(obs);
      obj.category_hint = cand.category_hint;
      objects.push_back(std::move(obj));
      continue;
    }
    auto& obj = objects[target];
    obj.merged_points.points.insert(obj.merged_points.points.end(), cand.geometry.points.begin(),
                                    cand.geometry.points.end());
    obj.bbox.expand(box);
    obj.view_observations.push_back(obs);
    if (!obj.category_hint) obj.category_hint = cand.category_hint;
  }
  return objects;
}

}  // namespace hpsg
