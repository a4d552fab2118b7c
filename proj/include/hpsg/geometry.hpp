#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hpsg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Points in meters, optionally tagged with the view and row-major pixel
/// index each point was lifted from. `pixels` is either empty or parallel to
/// `points`.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<int> source_view;
  std::vector<std::uint32_t> pixels;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_pixels() const noexcept { return !pixels.empty() && pixels.size() == points.size(); }
  void push_back(const Vec3& p, std::uint32_t pixel) {
    points.push_back(p);
    pixels.push_back(pixel);
  }
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  static Aabb of(std::span<const Vec3> pts);

  double volume() const;
  Vec3 centroid() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool valid() const { return (min.array() <= max.array()).all(); }
  bool contains(const Vec3& p, double slack = 0.0) const;
  void expand(const Vec3& p);
  void expand(const Aabb& other);
};

/// Plane {p : <normal, p> = offset}. Stored canonically: offset >= 0, and for
/// offset == 0 the first nonzero normal component is positive.
struct PlaneParams {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const {
    return normal[0] * p[0] + normal[1] * p[1] + normal[2] * p[2] - offset;
  }
};

PlaneParams canonicalize(PlaneParams p);

struct CentroidCovariance {
  Vec3 centroid = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  std::size_t count = 0;
};

CentroidCovariance centroid_covariance(std::span<const Vec3> pts);

/// Least-squares plane through `pts` (smallest-eigenvalue direction of the
/// covariance). Empty when fewer than three points or all points collinear.
std::optional<PlaneParams> fit_plane_least_squares(std::span<const Vec3> pts);

/// True when the points span less than a plane (coincident or collinear).
bool is_degenerate_for_plane(std::span<const Vec3> pts);

struct Hull2d {
  double area = 0.0;
  double perimeter = 0.0;
};

/// Convex hull of the points projected onto the plane with the given normal.
Hull2d projected_hull(std::span<const Vec3> pts, const Vec3& normal);

/// Orthonormal (u, v) completing `n` to a right-handed basis.
std::pair<Vec3, Vec3> plane_basis(const Vec3& n);

double angle_between(const Vec3& a, const Vec3& b);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace hpsg
