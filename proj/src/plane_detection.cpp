#include "hpsg/plane_detection.hpp"

#include "hpsg/dbscan.hpp"
#include "hpsg/error.hpp"
#include "hpsg/spatial_index.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <random>

namespace hpsg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<std::uint32_t> exact_inliers(const PointCloud& cloud, const PlaneParams& plane, double tau) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < cloud.points.size(); ++i) {
    if (std::abs(plane.signed_distance(cloud.points[i])) <= tau) idx.push_back(i);
  }
  return idx;
}

PointCloud subset(const PointCloud& cloud, std::span<const std::uint32_t> idx) {
  PointCloud out;
  out.source_view = cloud.source_view;
  out.points.reserve(idx.size());
  for (auto i : idx) out.points.push_back(cloud.points[i]);
  if (cloud.has_pixels()) {
    out.pixels.reserve(idx.size());
    for (auto i : idx) out.pixels.push_back(cloud.pixels[i]);
  }
  return out;
}

// Union of member inliers; points sharing a pixel index are kept once.
PlaneCandidate merge_candidates(std::span<const PlaneCandidate* const> members) {
  PlaneCandidate merged;
  merged.source_view = members.front()->source_view;
  merged.inliers.source_view = members.front()->inliers.source_view;
  const bool pixels = std::all_of(members.begin(), members.end(),
                                  [](const PlaneCandidate* c) { return c->inliers.has_pixels(); });
  double ratio_sum = 0.0;
  std::size_t weight = 0;
  if (pixels) {
    std::map<std::uint32_t, Vec3> by_pixel;
    for (const auto* c : members) {
      for (std::size_t i = 0; i < c->inliers.size(); ++i) by_pixel.emplace(c->inliers.pixels[i], c->inliers.points[i]);
    }
    for (const auto& [px, p] : by_pixel) merged.inliers.push_back(p, px);
  } else {
    for (const auto* c : members) {
      merged.inliers.points.insert(merged.inliers.points.end(), c->inliers.points.begin(), c->inliers.points.end());
    }
  }
  for (const auto* c : members) {
    ratio_sum += c->inlier_ratio * static_cast<double>(c->inliers.size());
    weight += c->inliers.size();
  }
  merged.inlier_ratio = weight > 0 ? ratio_sum / static_cast<double>(weight) : 0.0;
  if (auto fit = fit_plane_least_squares(merged.inliers.points)) {
    merged.params = *fit;
  } else {
    merged.params = members.front()->params;
  }
  return merged;
}

// Groups items by DBSCAN label; noise points become singleton groups. Groups
// are ordered by their first member.
std::vector<std::vector<std::size_t>> group_labels(const std::vector<int>& labels) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) {
      groups.push_back({i});
      continue;
    }
    auto [it, inserted] = slot.emplace(labels[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

std::vector<PlaneCandidate> merge_by_pps(const std::vector<PlaneCandidate>& planes, double eps, int min_pts,
                                         bool& changed) {
  std::vector<PlaneParams> params;
  params.reserve(planes.size());
  for (const auto& p : planes) params.push_back(p.params);
  const auto groups = group_labels(cluster_pps(params, eps, min_pts));
  changed = groups.size() != planes.size();
  std::vector<PlaneCandidate> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.size() == 1) {
      out.push_back(planes[g.front()]);
      continue;
    }
    std::vector<const PlaneCandidate*> members;
    for (auto i : g) members.push_back(&planes[i]);
    out.push_back(merge_candidates(members));
  }
  return out;
}

std::vector<PlaneCandidate> consolidate(std::vector<PlaneCandidate> planes, double eps, int min_pts) {
  constexpr int kMaxRounds = 16;
  for (int round = 0; round < kMaxRounds; ++round) {
    bool changed = false;
    planes = merge_by_pps(planes, eps, min_pts, changed);
    if (!changed) break;
  }
  return planes;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ull));
}

void PlaneDetectConfig::validate() const {
  if (!(tau_dist > 0 && rho_min_inlier > 0 && ransac_iters > 0 && theta_ang > 0 && delta_dist > 0 &&
        pps_eps_intra > 0 && pps_eps_global > 0 && dbscan_min_pts > 0 && normal_neighbors >= 3 &&
        min_mask_points >= 3)) {
    throw ConfigError("plane detection thresholds must be positive");
  }
  if (rho_min_inlier > 1.0) throw ConfigError("rho_min_inlier must be <= 1");
}

PlaneFit fit_plane_ransac(const PointCloud& cloud, const PlaneDetectConfig& cfg) {
  PlaneFit result;
  const std::size_t n = cloud.size();
  if (n < 3 || is_degenerate_for_plane(cloud.points)) {
    result.status = FitStatus::Degenerate;
    return result;
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  bool have_model = false;
  PlaneParams best;
  std::size_t best_count = 0;
  double best_sse = 0.0;
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    std::size_t k = pick(rng);
    while (k == i || k == j) k = pick(rng);
    const Vec3& a = cloud.points[i];
    const Vec3 ab = cloud.points[j] - a;
    const Vec3 ac = cloud.points[k] - a;
    Vec3 normal = ab.cross(ac);
    const double len = normal.norm();
    const double scale = std::max(ab.squaredNorm(), ac.squaredNorm());
    if (!(len > 1e-12 * scale) || scale == 0.0) continue;  // collinear sample
    normal /= len;
    const PlaneParams model{normal, normal.dot(a)};

    std::size_t count = 0;
    double sse = 0.0;
    for (const auto& p : cloud.points) {
      const double r = model.signed_distance(p);
      if (std::abs(r) <= cfg.tau_dist) {
        ++count;
        sse += r * r;
      }
    }
    // Ties on count go to the lower residual, then to the earlier iteration.
    if (!have_model || count > best_count || (count == best_count && sse < best_sse)) {
      have_model = true;
      best = model;
      best_count = count;
      best_sse = sse;
    }
  }
  if (!have_model) {
    result.status = FitStatus::Degenerate;
    return result;
  }

  PlaneParams params = canonicalize(best);
  auto inliers = exact_inliers(cloud, params, cfg.tau_dist);
  for (int round = 0; round < 3 && inliers.size() >= 3; ++round) {
    const auto consensus = subset(cloud, inliers);
    const auto refit = fit_plane_least_squares(consensus.points);
    if (!refit) break;
    auto refit_inliers = exact_inliers(cloud, *refit, cfg.tau_dist);
    if (refit_inliers.size() < inliers.size()) break;
    const bool stable = refit_inliers == inliers;
    params = *refit;
    inliers = std::move(refit_inliers);
    if (stable) break;
  }

  result.best_ratio = static_cast<double>(inliers.size()) / static_cast<double>(n);
  if (result.best_ratio < cfg.rho_min_inlier) {
    result.status = FitStatus::LowInlierRatio;
    return result;
  }
  PlaneCandidate cand;
  cand.params = params;
  cand.inliers = subset(cloud, inliers);
  cand.source_view = cloud.source_view.value_or(-1);
  cand.inlier_ratio = result.best_ratio;
  result.status = FitStatus::Ok;
  result.candidate = std::move(cand);
  return result;
}

double pps_distance(const PlaneParams& a, const PlaneParams& b) {
  const double c = std::clamp(a.normal.dot(b.normal), -1.0, 1.0);
  const double same = std::acos(c) + kPpsOffsetWeight * std::abs(a.offset - b.offset);
  const double flipped = std::acos(-c) + kPpsOffsetWeight * std::abs(a.offset + b.offset);
  return std::min(same, flipped);
}

std::vector<int> cluster_pps(std::span<const PlaneParams> params, double eps, int min_pts) {
  return dbscan(params.size(), min_pts, [&](std::size_t i) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t j = 0; j < params.size(); ++j) {
      if (pps_distance(params[i], params[j]) <= eps) out.push_back(j);
    }
    return out;
  });
}

std::vector<Vec3> estimate_normals(const PointCloud& cloud, std::span<const std::vector<std::uint32_t>> knn,
                                   const Vec3& viewpoint) {
  std::vector<Vec3> normals(cloud.size(), Vec3::Zero());
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& nb = knn[i];
    if (nb.size() < 3) continue;
    Vec3 mean = Vec3::Zero();
    for (auto j : nb) mean += cloud.points[j];
    mean /= static_cast<double>(nb.size());
    Mat3 cov = Mat3::Zero();
    for (auto j : nb) {
      const Vec3 d = cloud.points[j] - mean;
      cov.noalias() += d * d.transpose();
    }
    solver.computeDirect(cov);
    Vec3 n = solver.eigenvectors().col(0);
    const double len = n.norm();
    if (!(len > 0.0) || !n.allFinite()) continue;
    n /= len;
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    normals[i] = n;
  }
  return normals;
}

PlaneCandidate region_grow(const PlaneCandidate& plane, const PointCloud& view_points,
                           std::span<const Vec3> normals, std::span<const std::vector<std::uint32_t>> knn,
                           const PlaneDetectConfig& cfg) {
  const std::size_t n = view_points.size();
  std::vector<char> in_region(n, 0);
  std::deque<std::uint32_t> frontier;

  // Locate the input inliers inside the view cloud.
  if (plane.inliers.has_pixels() && view_points.has_pixels()) {
    std::map<std::uint32_t, std::uint32_t> index_of_pixel;
    for (std::uint32_t i = 0; i < n; ++i) index_of_pixel.emplace(view_points.pixels[i], i);
    for (auto px : plane.inliers.pixels) {
      if (auto it = index_of_pixel.find(px); it != index_of_pixel.end() && !in_region[it->second]) {
        in_region[it->second] = 1;
        frontier.push_back(it->second);
      }
    }
  } else {
    std::map<std::array<double, 3>, std::uint32_t> index_of_point;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto& p = view_points.points[i];
      index_of_point.emplace(std::array<double, 3>{p[0], p[1], p[2]}, i);
    }
    for (const auto& p : plane.inliers.points) {
      if (auto it = index_of_point.find({p[0], p[1], p[2]}); it != index_of_point.end() && !in_region[it->second]) {
        in_region[it->second] = 1;
        frontier.push_back(it->second);
      }
    }
  }
  std::sort(frontier.begin(), frontier.end());

  const double cos_limit = std::cos(cfg.theta_ang);
  std::vector<std::uint32_t> added;
  while (!frontier.empty()) {
    const auto i = frontier.front();
    frontier.pop_front();
    for (auto j : knn[i]) {
      if (in_region[j]) continue;
      // Point normals are unoriented relative to the plane normal.
      const double c = std::abs(plane.params.normal.dot(normals[j]));
      if (!(c > cos_limit)) continue;
      if (!(std::abs(plane.params.signed_distance(view_points.points[j])) < cfg.delta_dist)) continue;
      in_region[j] = 1;
      added.push_back(j);
      frontier.push_back(j);
    }
  }

  PlaneCandidate out = plane;
  if (added.empty()) return out;
  std::sort(added.begin(), added.end());
  const bool keep_pixels = plane.inliers.has_pixels() && view_points.has_pixels();
  if (!keep_pixels) out.inliers.pixels.clear();
  for (auto j : added) {
    out.inliers.points.push_back(view_points.points[j]);
    if (keep_pixels) out.inliers.pixels.push_back(view_points.pixels[j]);
  }
  if (auto refit = fit_plane_least_squares(out.inliers.points)) out.params = *refit;
  return out;
}

std::vector<PlaneCandidate> detect_view_planes(const ViewBundle& view, std::span<const InstanceMask2D> masks,
                                               const PlaneDetectConfig& cfg, double tau_conf) {
  const PointCloud cloud = filter_by_confidence(view, tau_conf);
  if (cloud.size() < 3) return {};

  std::vector<PlaneCandidate> candidates;
  for (std::size_t j = 0; j < masks.size(); ++j) {
    const PointCloud lifted = lift_masked_points(view, masks[j], tau_conf);
    if (lifted.size() < static_cast<std::size_t>(std::max(3, cfg.min_mask_points))) continue;
    PlaneDetectConfig local = cfg;
    local.rng_seed = derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(view.view_id), j);
    auto fit = fit_plane_ransac(lifted, local);
    if (fit.status == FitStatus::Ok) candidates.push_back(std::move(*fit.candidate));
  }
  if (candidates.empty()) return {};

  const KdTree tree(cloud.points);
  const auto knn = knn_lists(cloud.points, tree, static_cast<std::size_t>(cfg.normal_neighbors));
  Vec3 viewpoint = Vec3::Zero();
  for (const auto& p : cloud.points) viewpoint += p;
  viewpoint /= static_cast<double>(cloud.size());
  const auto normals = estimate_normals(cloud, knn, viewpoint);

  bool changed = false;
  auto groups = merge_by_pps(candidates, cfg.pps_eps_intra, cfg.dbscan_min_pts, changed);
  std::vector<PlaneCandidate> grown;
  grown.reserve(groups.size());
  for (const auto& g : groups) grown.push_back(region_grow(g, cloud, normals, knn, cfg));
  auto planes = consolidate(std::move(grown), cfg.pps_eps_intra, cfg.dbscan_min_pts);

  std::vector<PlaneCandidate> out;
  for (auto& p : planes) {
    const auto keep = exact_inliers(p.inliers, p.params, cfg.tau_dist);
    if (keep.size() < 3) continue;
    p.inliers = subset(p.inliers, keep);
    p.source_view = view.view_id;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GlobalPlane> align_cross_view(std::span<const std::vector<PlaneCandidate>> per_view,
                                          const PlaneDetectConfig& cfg) {
  std::vector<PlaneCandidate> flat;
  for (const auto& view : per_view) {
    for (const auto& p : view) flat.push_back(p);
  }
  if (flat.empty()) return {};

  // Views travel with each candidate through merging; track them alongside.
  std::vector<std::vector<int>> views(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) views[i] = {flat[i].source_view};

  constexpr int kMaxRounds = 16;
  for (int round = 0; round < kMaxRounds; ++round) {
    std::vector<PlaneParams> params;
    for (const auto& p : flat) params.push_back(p.params);
    const auto groups = group_labels(cluster_pps(params, cfg.pps_eps_global, cfg.dbscan_min_pts));
    if (groups.size() == flat.size()) break;
    std::vector<PlaneCandidate> next;
    std::vector<std::vector<int>> next_views;
    for (const auto& g : groups) {
      if (g.size() == 1) {
        next.push_back(std::move(flat[g.front()]));
        next_views.push_back(std::move(views[g.front()]));
        continue;
      }
      PlaneCandidate merged;
      std::vector<int> vs;
      std::size_t weight = 0;
      double ratio = 0.0;
      for (auto i : g) {
        const auto& m = flat[i];
        merged.inliers.points.insert(merged.inliers.points.end(), m.inliers.points.begin(), m.inliers.points.end());
        vs.insert(vs.end(), views[i].begin(), views[i].end());
        ratio += m.inlier_ratio * static_cast<double>(m.inliers.size());
        weight += m.inliers.size();
      }
      // Pooling every member's points weights each plane by its inlier count.
      merged.params = fit_plane_least_squares(merged.inliers.points).value_or(flat[g.front()].params);
      merged.inlier_ratio = weight ? ratio / static_cast<double>(weight) : 0.0;
      merged.source_view = flat[g.front()].source_view;
      std::sort(vs.begin(), vs.end());
      vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
      next.push_back(std::move(merged));
      next_views.push_back(std::move(vs));
    }
    flat = std::move(next);
    views = std::move(next_views);
  }

  std::vector<GlobalPlane> out;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    GlobalPlane gp;
    gp.params = flat[i].params;
    gp.points.points = std::move(flat[i].inliers.points);
    gp.supporting_views = views[i];
    const auto hull = projected_hull(gp.points.points, gp.params.normal);
    gp.area_m2 = hull.area;
    gp.boundary_length_m = hull.perimeter;
    if (gp.area_m2 <= 0.0) continue;
    out.push_back(std::move(gp));
  }
  return out;
}

}  // namespace hpsg
