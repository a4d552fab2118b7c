#pragma once

#include "hpsg/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hpsg {

/// Class-agnostic masks feed plane detection; instance masks carry persistent
/// object IDs and feed object fusion.
enum class MaskKind { Instance, Agnostic };

struct InstanceMask2D {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;  // row-major, 0/1
  std::int64_t instance_id = 0;
  std::optional<std::string> category_hint;
  double confidence = 1.0;
  MaskKind kind = MaskKind::Instance;

  bool at(std::size_t pixel) const { return mask[pixel] != 0; }
  std::size_t true_count() const;

  bool operator==(const InstanceMask2D&) const = default;
};

/// One view of the upstream reconstruction. Immutable after load.
struct ViewBundle {
  int view_id = 0;
  int width = 0;
  int height = 0;
  std::vector<float> point_map;       // W*H*3, row-major, meters
  std::vector<float> confidence_map;  // W*H
  std::vector<InstanceMask2D> masks;
  std::optional<std::string> image_path;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  Vec3 point(std::size_t pixel) const {
    const float* p = point_map.data() + 3 * pixel;
    return {p[0], p[1], p[2]};
  }

  bool operator==(const ViewBundle&) const = default;
};

/// Throws IngestError naming the view and field on any invariant violation.
void validate_view(const ViewBundle& view);

std::vector<ViewBundle> load_scene(const std::filesystem::path& manifest_path);

/// Writes `scene.json` plus binary grids under `dir`/views.
void save_scene(const std::filesystem::path& dir, std::span<const ViewBundle> views);

/// Points whose confidence is >= tau_conf, in row-major pixel order.
PointCloud filter_by_confidence(const ViewBundle& view, double tau_conf);

/// Points under the mask whose confidence is >= tau_conf, row-major order.
PointCloud lift_masked_points(const ViewBundle& view, const InstanceMask2D& mask, double tau_conf);

// Headerless little-endian grid I/O.
std::vector<float> read_f32(const std::filesystem::path& path);
std::vector<std::uint8_t> read_u8(const std::filesystem::path& path);
void write_f32(const std::filesystem::path& path, std::span<const float> data);
void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace hpsg
