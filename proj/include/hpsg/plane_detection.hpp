#pragma once

#include "hpsg/geometry.hpp"
#include "hpsg/scene_ingest.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hpsg {

struct PlaneDetectConfig {
  double tau_dist = 0.02;        // m, RANSAC inlier band
  double rho_min_inlier = 0.5;   // minimum inlier ratio for a candidate
  int ransac_iters = 500;
  double theta_ang = deg2rad(15.0);  // rad, region-growing normal tolerance
  double delta_dist = 0.03;      // m, region-growing distance tolerance
  double pps_eps_intra = 0.10;
  double pps_eps_global = 0.15;
  int dbscan_min_pts = 2;
  std::uint64_t rng_seed = 0;
  int normal_neighbors = 16;
  int min_mask_points = 10;

  void validate() const;
};

struct PlaneCandidate {
  PlaneParams params;
  PointCloud inliers;
  int source_view = -1;
  double inlier_ratio = 0.0;
};

enum class FitStatus { Ok, LowInlierRatio, Degenerate };

struct PlaneFit {
  FitStatus status = FitStatus::Degenerate;
  std::optional<PlaneCandidate> candidate;
  double best_ratio = 0.0;
};

/// Seeded 3-point RANSAC, least-squares refit on the consensus set, then the
/// inlier set recomputed exactly as {p : |<n,p> - d| <= tau_dist} for the
/// reported parameters.
PlaneFit fit_plane_ransac(const PointCloud& cloud, const PlaneDetectConfig& cfg);

/// Distance in plane parameter space: angle between normals (rad) plus
/// 1 rad/m times the offset gap, minimised over the sign of (n, d) so that
/// planes through the origin compare continuously.
double pps_distance(const PlaneParams& a, const PlaneParams& b);

inline constexpr double kPpsOffsetWeight = 1.0;

std::vector<int> cluster_pps(std::span<const PlaneParams> params, double eps, int min_pts);

/// Per-point unit normals from PCA over `knn` neighbourhoods, oriented toward
/// `viewpoint`.
std::vector<Vec3> estimate_normals(const PointCloud& cloud,
                                   std::span<const std::vector<std::uint32_t>> knn,
                                   const Vec3& viewpoint);

/// Grows `plane` over the k-NN graph of `view_points`. Returns a candidate
/// whose inliers include every input inlier; added points satisfy the angular
/// and distance constraints against the input plane.
PlaneCandidate region_grow(const PlaneCandidate& plane, const PointCloud& view_points,
                           std::span<const Vec3> normals,
                           std::span<const std::vector<std::uint32_t>> knn,
                           const PlaneDetectConfig& cfg);

std::vector<PlaneCandidate> detect_view_planes(const ViewBundle& view,
                                               std::span<const InstanceMask2D> masks,
                                               const PlaneDetectConfig& cfg, double tau_conf);

struct GlobalPlane {
  PlaneParams params;
  PointCloud points;
  std::vector<int> supporting_views;  // sorted, unique
  double area_m2 = 0.0;
  double boundary_length_m = 0.0;

  std::size_t inlier_count() const { return points.size(); }
};

std::vector<GlobalPlane> align_cross_view(std::span<const std::vector<PlaneCandidate>> per_view,
                                          const PlaneDetectConfig& cfg);

/// Seed for a sub-task derived from the global seed and integer keys.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace hpsg
