#pragma once

#include "hpsg/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hpsg {

struct LocalObjectCandidate {
  PointCloud geometry;
  std::int64_t instance_id = 0;
  int source_view = 0;
  double seg_confidence = 0.0;
  std::optional<std::string> category_hint;
};

struct FusionConfig {
  double kappa = 0.25;
  double dbscan_eps_m = 0.05;
  int dbscan_min_pts = 5;

  void validate() const;
};

/// One detection folded into an object: which view, which upstream ID, and
/// the index of the candidate in the fused sequence.
struct Observation {
  int view_id = 0;
  std::int64_t instance_id = 0;
  double seg_confidence = 0.0;
  std::size_t candidate_index = 0;
};

struct ObjectInstance {
  int object_key = 0;
  PointCloud merged_points;
  std::int64_t instance_id = 0;
  Aabb bbox;
  std::vector<Observation> view_observations;
  std::optional<std::string> category_hint;
  std::vector<std::string> raw_captions;  // at most five
  std::string caption;
  std::string canonical_tag;
  std::vector<std::string> tag_set;
  std::optional<std::vector<float>> embedding;
  std::size_t stored_point_count = 0;  // set when loaded from disk without points

  std::size_t point_count() const { return merged_points.empty() ? stored_point_count : merged_points.size(); }
};

/// Keeps the largest Euclidean DBSCAN cluster. Empty result means every
/// point was noise and the candidate is dropped.
std::optional<LocalObjectCandidate> densify_filter(const LocalObjectCandidate& candidate, const FusionConfig& cfg);

/// Intersection volume over union volume; 0 when the union has no volume.
double iou_3d(const Aabb& a, const Aabb& b);

/// Order-dependent merge: candidates are visited by (view, input position).
/// A candidate joins the lowest-keyed object with its instance ID, else the
/// object with the highest IoU above kappa, else starts a new object.
std::vector<ObjectInstance> fuse(std::span<const LocalObjectCandidate> candidates, const FusionConfig& cfg);

}  // namespace hpsg
