#pragma once

#include "hpsg/annotation.hpp"
#include "hpsg/geometry.hpp"
#include "hpsg/scene_ingest.hpp"
#include "hpsg/structure_labeling.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hpsg {

struct ObjectSpec {
  std::string tag;
  Aabb box;                    // room frame: x, y horizontal, z up from the floor
  std::optional<int> support;  // index of the object this one rests on
};

/// Axis-aligned room centred on the origin in x/y with its floor at z = 0.
/// Views are pinhole cameras on an ellipse inside the room. The whole scene
/// is finally rotated about the x axis by `rotation_deg`.
struct SceneSpec {
  std::string name = "room";
  double width = 6.0;
  double depth = 5.0;
  double height = 3.0;
  double sigma = 0.005;
  std::vector<ObjectSpec> objects;
  int n_views = 8;
  int image_width = 256;
  int image_height = 192;
  std::uint64_t rng_seed = 0;
  double rotation_deg = 0.0;
  double fov_deg = 70.0;
  double dropout = 0.02;
  double camera_height = 1.5;
  double camera_pitch_deg = 25.0;
  bool two_rooms = false;  // two open rooms side by side, walls only

  void validate() const;
};

struct GtPlane {
  PlaneParams params;  // scene frame
  StructuralLabel label = StructuralLabel::NonStructural;
};

struct GtObject {
  std::string tag;
  Aabb box;  // room frame
  std::int64_t instance_id = 0;
};

struct GtRelation {
  int a = 0;
  int b = 0;
  RelationLabel relation = RelationLabel::None;
};

inline constexpr std::int32_t kGtMiss = -1;
inline constexpr std::int32_t kGtObjectBase = 1000;

struct GroundTruth {
  std::string preset;
  double rotation_deg = 0.0;
  std::vector<GtPlane> planes;
  std::vector<GtObject> objects;
  std::vector<GtRelation> relations;
  /// Per view, per pixel: plane index, kGtObjectBase + object index, or kGtMiss.
  std::vector<std::vector<std::int32_t>> pixel_labels;
};

struct SynthScene {
  std::vector<ViewBundle> views;
  std::vector<CaptionRecord> captions;
  GroundTruth truth;
};

/// Presets: room, office, tilted-room, two-rooms.
SceneSpec preset_spec(const std::string& name, double rotation_deg = 15.0, std::uint64_t seed = 0);

SynthScene synthesize(const SceneSpec& spec);

/// Writes scene.json, views/, captions.json and ground_truth.json under
/// `out_dir`. Byte-identical for identical specs.
GroundTruth generate(const SceneSpec& spec, const std::filesystem::path& out_dir);

void save_ground_truth(const std::filesystem::path& dir, const GroundTruth& gt);
/// Throws Error when `dir`/ground_truth.json is missing or malformed.
GroundTruth load_ground_truth(const std::filesystem::path& dir);

}  // namespace hpsg
