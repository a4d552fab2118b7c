#pragma once

#include "hpsg/annotation.hpp"
#include "hpsg/geometry.hpp"
#include "hpsg/object_fusion.hpp"
#include "hpsg/structure_labeling.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hpsg {

enum NodeLevel : int { kSceneLevel = 0, kStructureLevel = 1, kObjectLevel = 2 };

struct SceneTypeInfo {
  std::string scene_type;

  bool operator==(const SceneTypeInfo&) const = default;
};

/// Structural plane as the graph sees it; geometry in the gravity frame.
struct StructureInfo {
  StructuralLabel label = StructuralLabel::NonStructural;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  double area_m2 = 0.0;
  double boundary_length_m = 0.0;
  std::vector<int> supporting_views;
  std::size_t inlier_count = 0;
  Aabb bbox;
  Vec3 centroid = Vec3::Zero();

  bool operator==(const StructureInfo&) const = default;
};

struct ObjectInfo {
  int object_key = 0;
  std::int64_t instance_id = 0;
  std::string canonical_tag;
  std::vector<std::string> tag_set;
  Aabb bbox;
  Vec3 centroid = Vec3::Zero();
  std::size_t point_count = 0;

  bool operator==(const ObjectInfo&) const = default;
};

inline bool operator==(const Aabb& a, const Aabb& b) { return a.min == b.min && a.max == b.max; }

struct Node {
  int node_id = 0;
  int level = kSceneLevel;
  std::string caption;
  std::variant<SceneTypeInfo, StructureInfo, ObjectInfo> payload;
  std::vector<float> embedding;

  bool operator==(const Node&) const = default;
};

struct Edge {
  int edge_id = 0;
  int a = 0;
  int b = 0;
  int level = 0;
  std::string relation;  // on | in | next_to | default | topological
  double weight = 0.0;

  bool operator==(const Edge&) const = default;
};

struct GraphMeta {
  std::string config_fingerprint;
  std::string build_timestamp;
  std::string annotator;
  std::size_t annotator_fallbacks = 0;
  std::size_t embedding_dim = 0;

  bool operator==(const GraphMeta&) const = default;
};

struct Hpsg {
  std::vector<Node> nodes;  // node_id == index
  std::vector<Edge> edges;  // edge_id == index
  std::vector<std::vector<int>> adjacency;  // sorted neighbour ids
  GraphMeta meta;

  void rebuild_adjacency();
  const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  bool operator==(const Hpsg&) const = default;
};

/// Minimal geometric description shared by planes and objects.
struct Component {
  Aabb bbox;
  Vec3 centroid = Vec3::Zero();
};

using Matrix = std::vector<std::vector<double>>;

Matrix similarity_matrix(std::span<const Component> components);

/// Dissimilarity minimised by the candidate-pool tree.
double mst_edge_weight(const Matrix& s, std::span<const Component> components, std::size_t i, std::size_t j);

/// Minimum spanning tree over all components; pairs returned as (lo, hi),
/// sorted. Equal weights are broken by (lo, hi).
std::vector<std::pair<int, int>> mst_candidate_pool(const Matrix& s, std::span<const Component> components);

struct GraphBuildOptions {
  std::string caption_template;
  std::string config_fingerprint;
  std::string build_timestamp = "1970-01-01T00:00:00Z";
};

/// Non-structural planes are ignored. Throws EmptySceneError when nothing
/// structural and no objects remain.
Hpsg build_hpsg(std::span<const StructureInfo> planes, std::span<const ObjectInstance> objects, Annotator& annotator,
                const GraphBuildOptions& options);

/// Level partition, edge-level endpoints, contiguous ids, unit embeddings,
/// adjacency and connectivity. Throws GraphFormatError.
void validate_graph(const Hpsg& g);

std::string serialize_graph(const Hpsg& g);
Hpsg parse_graph(const std::string& text);
void save_graph(const Hpsg& g, const std::filesystem::path& path);
Hpsg load_graph(const std::filesystem::path& path);

/// Rounds to six significant digits, the precision graph files carry.
double quantize(double v);

/// "This is a {label} in the {scene type}."
std::string structure_caption(StructuralLabel label, const std::string& scene_type);

}  // namespace hpsg
