#include "hpsg/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace hpsg {

Aabb Aabb::of(std::span<const Vec3> pts) {
  Aabb box;
  if (pts.empty()) return box;
  box.min = pts.front();
  box.max = pts.front();
  for (const auto& p : pts) box.expand(p);
  return box;
}

double Aabb::volume() const {
  const Vec3 e = (max - min).cwiseMax(0.0);
  return e[0] * e[1] * e[2];
}

bool Aabb::contains(const Vec3& p, double slack) const {
  for (int k = 0; k < 3; ++k) {
    if (p[k] < min[k] - slack || p[k] > max[k] + slack) return false;
  }
  return true;
}

void Aabb::expand(const Vec3& p) {
  min = min.cwiseMin(p);
  max = max.cwiseMax(p);
}

void Aabb::expand(const Aabb& other) {
  min = min.cwiseMin(other.min);
  max = max.cwiseMax(other.max);
}

PlaneParams canonicalize(PlaneParams p) {
  const double len = p.normal.norm();
  // already-unit normals are left alone so the function is idempotent
  if (len > 0.0 && std::abs(len - 1.0) > 1e-15) {
    p.normal /= len;
    p.offset /= len;
  }
  bool flip = p.offset < 0.0;
  if (p.offset == 0.0) {
    for (int k = 0; k < 3; ++k) {
      if (p.normal[k] != 0.0) {
        flip = p.normal[k] < 0.0;
        break;
      }
    }
  }
  if (flip) {
    p.normal = -p.normal;
    p.offset = -p.offset;
  }
  // -0.0 would break byte-identical serialization.
  if (p.offset == 0.0) p.offset = 0.0;
  return p;
}

CentroidCovariance centroid_covariance(std::span<const Vec3> pts) {
  CentroidCovariance out;
  out.count = pts.size();
  if (pts.empty()) return out;
  for (const auto& p : pts) out.centroid += p;
  out.centroid /= static_cast<double>(pts.size());
  for (const auto& p : pts) {
    const Vec3 d = p - out.centroid;
    out.covariance.noalias() += d * d.transpose();
  }
  out.covariance /= static_cast<double>(pts.size());
  return out;
}

namespace {

bool degenerate_spectrum(const Eigen::Vector3d& evals) {
  // Eigenvalues ascending. Collinear or coincident points leave at most one
  // significant direction.
  const double largest = evals[2];
  return largest <= 0.0 || evals[1] <= 1e-12 * largest;
}

}  // namespace

bool is_degenerate_for_plane(std::span<const Vec3> pts) {
  if (pts.size() < 3) return true;
  const auto cc = centroid_covariance(pts);
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cc.covariance, Eigen::EigenvaluesOnly);
  return degenerate_spectrum(solver.eigenvalues());
}

std::optional<PlaneParams> fit_plane_least_squares(std::span<const Vec3> pts) {
  if (pts.size() < 3) return std::nullopt;
  const auto cc = centroid_covariance(pts);
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cc.covariance);
  if (degenerate_spectrum(solver.eigenvalues())) return std::nullopt;
  PlaneParams plane;
  plane.normal = solver.eigenvectors().col(0).normalized();
  plane.offset = plane.normal.dot(cc.centroid);
  return canonicalize(plane);
}

std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  // Cross with the coordinate axis least aligned with n.
  int least = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(n[k]) < std::abs(n[least])) least = k;
  }
  const Vec3 u = n.cross(Vec3::Unit(least)).normalized();
  const Vec3 v = n.cross(u);
  return {u, v};
}

Hull2d projected_hull(std::span<const Vec3> pts, const Vec3& normal) {
  Hull2d out;
  if (pts.size() < 3) return out;
  const auto [u, v] = plane_basis(normal.normalized());
  std::vector<Eigen::Vector2d> p2;
  p2.reserve(pts.size());
  for (const auto& p : pts) p2.emplace_back(u.dot(p), v.dot(p));
  std::sort(p2.begin(), p2.end(), [](const auto& a, const auto& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  p2.erase(std::unique(p2.begin(), p2.end()), p2.end());
  if (p2.size() < 3) return out;

  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  // Andrew's monotone chain.
  std::vector<Eigen::Vector2d> hull(2 * p2.size());
  std::size_t k = 0;
  for (const auto& p : p2) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = p2.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], p2[i]) <= 0.0) --k;
    hull[k++] = p2[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) return out;

  double twice_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    twice_area += a[0] * b[1] - b[0] * a[1];
    out.perimeter += (b - a).norm();
  }
  out.area = 0.5 * std::abs(twice_area);
  return out;
}

double angle_between(const Vec3& a, const Vec3& b) {
  const double c = a.normalized().dot(b.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace hpsg
