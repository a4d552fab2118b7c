#include "hpsg/structure_labeling.hpp"

#include "hpsg/error.hpp"

#include <algorithm>
#include <cmath>

namespace hpsg {

std::string_view to_string(StructuralLabel label) {
  switch (label) {
    case StructuralLabel::Floor: return "floor";
    case StructuralLabel::Ceiling: return "ceiling";
    case StructuralLabel::Wall: return "wall";
    case StructuralLabel::NonStructural: return "non_structural";
  }
  return "non_structural";
}

StructuralLabel structural_label_from_string(std::string_view s) {
  if (s == "floor") return StructuralLabel::Floor;
  if (s == "ceiling") return StructuralLabel::Ceiling;
  if (s == "wall") return StructuralLabel::Wall;
  if (s == "non_structural") return StructuralLabel::NonStructural;
  throw Error("structure_labeling", "unknown label '" + std::string(s) + "'");
}

void LabelConfig::validate() const {
  if (!(ceiling_cone_deg > 0 && wall_ortho_tol_deg > 0 && min_wall_area_m2 > 0 && min_wall_boundary_m > 0 &&
        min_wall_views > 0 && floor_band_m > 0 && gravity_prior_deg > 0 && height_min_fraction > 0 &&
        height_slack_m >= 0)) {
    throw ConfigError("label thresholds must be positive");
  }
}

Mat3 GravityFrame::rotation() const {
  const Vec3 z = up.normalized();
  Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(z) * z;
  if (x.norm() < 1e-6) x = Vec3::UnitY() - Vec3::UnitY().dot(z) * z;
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return r;
}

Vec3 GravityFrame::to_local(const Vec3& p) const {
  Vec3 q = rotation() * p;
  q[2] -= floor_height;
  return q;
}

GravityFrame estimate_gravity(std::span<const GlobalPlane> planes, const std::optional<Vec3>& prior_up,
                              const LabelConfig& cfg) {
  if (planes.empty()) throw GravityIndeterminate("no planes");
  const Vec3 prior = prior_up.value_or(Vec3::UnitZ()).normalized();
  const double cone = deg2rad(cfg.gravity_prior_deg);

  std::size_t total = 0;
  for (const auto& p : planes) total += p.points.size();

  bool found = false;
  bool any_horizontal = false;
  GravityFrame best;
  std::size_t best_count = 0;
  for (const auto& plane : planes) {
    const Vec3& n = plane.params.normal;
    if (std::min(angle_between(n, prior), angle_between(-n, prior)) >= cone) continue;
    any_horizontal = true;

    // Orient the normal so most scene points lie above the plane.
    std::size_t above = 0, below = 0;
    for (const auto& other : planes) {
      for (const auto& p : other.points.points) {
        const double h = plane.params.signed_distance(p);
        if (h > 0.0) ++above;
        else if (h < 0.0) ++below;
      }
    }
    GravityFrame frame;
    frame.up = above >= below ? n : Vec3(-n);
    frame.floor_height = above >= below ? plane.params.offset : -plane.params.offset;
    if (angle_between(frame.up, prior) >= cone) continue;  // a ceiling seen from below

    std::size_t supported = 0;
    for (const auto& other : planes) {
      for (const auto& p : other.points.points) {
        if (frame.height(p) >= -cfg.height_slack_m) ++supported;
      }
    }
    if (static_cast<double>(supported) < cfg.height_min_fraction * static_cast<double>(total)) continue;
    if (!found || plane.points.size() > best_count) {
      found = true;
      best = frame;
      best_count = plane.points.size();
    }
  }
  if (!any_horizontal) throw GravityIndeterminate("no plane within the prior cone");
  if (!found) throw GravityIndeterminate("no horizontal plane lies below the scene");
  return best;
}

std::vector<LabeledPlane> label_planes(std::span<const GlobalPlane> planes, const GravityFrame& frame,
                                       const LabelConfig& cfg) {
  std::vector<LabeledPlane> out;
  out.reserve(planes.size());
  for (const auto& plane : planes) {
    LabeledPlane lp{plane, StructuralLabel::NonStructural};
    const double tilt = rad2deg(angle_between(plane.params.normal, frame.up));
    const double horizontal_dev = std::min(tilt, 180.0 - tilt);
    if (horizontal_dev < cfg.ceiling_cone_deg) {
      Vec3 centroid = Vec3::Zero();
      for (const auto& p : plane.points.points) centroid += p;
      if (!plane.points.empty()) centroid /= static_cast<double>(plane.points.size());
      const double h = frame.height(centroid);
      lp.label = h <= cfg.floor_band_m ? StructuralLabel::Floor : StructuralLabel::Ceiling;
    } else if (std::abs(tilt - 90.0) < cfg.wall_ortho_tol_deg && plane.area_m2 >= cfg.min_wall_area_m2 &&
               plane.boundary_length_m >= cfg.min_wall_boundary_m &&
               static_cast<int>(plane.supporting_views.size()) >= cfg.min_wall_views) {
      lp.label = StructuralLabel::Wall;
    }
    out.push_back(std::move(lp));
  }
  return out;
}

}  // namespace hpsg
