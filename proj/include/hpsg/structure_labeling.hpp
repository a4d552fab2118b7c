#pragma once

#include "hpsg/geometry.hpp"
#include "hpsg/plane_detection.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hpsg {

enum class StructuralLabel { Floor, Ceiling, Wall, NonStructural };

std::string_view to_string(StructuralLabel label);
StructuralLabel structural_label_from_string(std::string_view s);

inline bool is_structural(StructuralLabel l) { return l != StructuralLabel::NonStructural; }

/// Gravity-aligned frame bootstrapped from the floor. `to_local` maps scene
/// coordinates to (x, y, height above floor) with a right-handed basis whose
/// third axis is `up`.
struct GravityFrame {
  Vec3 up = Vec3::UnitZ();
  double floor_height = 0.0;

  Mat3 rotation() const;  // rows: x axis, y axis, up
  Vec3 to_local(const Vec3& p) const;
  double height(const Vec3& p) const { return up.dot(p) - floor_height; }
};

struct LabelConfig {
  double ceiling_cone_deg = 20.0;
  double wall_ortho_tol_deg = 10.0;
  double min_wall_area_m2 = 0.5;
  double min_wall_boundary_m = 2.0;
  int min_wall_views = 2;
  double floor_band_m = 0.2;      // horizontal planes this close to the floor are Floor
  double gravity_prior_deg = 25.0;
  double height_min_fraction = 0.9;
  double height_slack_m = 0.05;   // points this far below a floor hypothesis still count as above

  void validate() const;
};

GravityFrame estimate_gravity(std::span<const GlobalPlane> planes, const std::optional<Vec3>& prior_up,
                              const LabelConfig& cfg = {});

struct LabeledPlane {
  GlobalPlane plane;
  StructuralLabel label = StructuralLabel::NonStructural;
};

std::vector<LabeledPlane> label_planes(std::span<const GlobalPlane> planes, const GravityFrame& frame,
                                       const LabelConfig& cfg);

}  // namespace hpsg
