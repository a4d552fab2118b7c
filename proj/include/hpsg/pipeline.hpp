#pragma once

#include "hpsg/annotation.hpp"
#include "hpsg/hpsg_graph.hpp"
#include "hpsg/object_fusion.hpp"
#include "hpsg/plane_detection.hpp"
#include "hpsg/scene_ingest.hpp"
#include "hpsg/structure_labeling.hpp"
#include "hpsg/subgraph_retrieval.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hpsg {

struct RetrievalDefaults {
  std::size_t k = 5;
  double tau = 0.07;
};

/// Everything that influences outputs. Thread count is deliberately absent:
/// results do not depend on it.
struct PipelineConfig {
  int version = 1;
  std::uint64_t rng_seed = 0;
  double tau_conf = 3.0;
  PlaneDetectConfig plane;
  LabelConfig labeling;
  Vec3 gravity_prior = Vec3::UnitZ();
  FusionConfig fusion;
  AnnotationConfig annotation;
  RetrievalDefaults retrieval;

  void validate() const;
};

/// Unknown keys anywhere are rejected with ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);
/// 16 hex digits, stable for equal configs.
std::string config_fingerprint(const PipelineConfig& cfg);

struct ParsedScene {
  GravityFrame frame;
  std::vector<LabeledPlane> planes;
  std::vector<ObjectInstance> objects;  // gravity frame
};

/// Resolves a scene directory or a manifest path to the manifest path.
std::filesystem::path manifest_path(const std::filesystem::path& scene);

/// ingest -> plane detection -> labeling -> fusion. Per-view stages run on up
/// to `threads` workers; the result does not depend on the count.
ParsedScene parse_views(std::span<const ViewBundle> views, std::span<const CaptionRecord> captions,
                        const PipelineConfig& cfg, unsigned threads = 1);

/// Plane summary in the gravity frame, as the graph stores it.
StructureInfo structure_info(const LabeledPlane& plane, const GravityFrame& frame);

std::string planes_json(const ParsedScene& parsed);
std::string objects_json(const ParsedScene& parsed);
void write_parsed(const std::filesystem::path& out_dir, const ParsedScene& parsed);

struct ParsedFiles {
  GravityFrame frame;
  std::vector<StructureInfo> structures;
  std::vector<ObjectInstance> objects;  // no points; stored_point_count set
};
ParsedFiles read_parsed(const std::filesystem::path& dir);

Hpsg build_graph(const ParsedFiles& parsed, Annotator& annotator, const PipelineConfig& cfg,
                 const std::string& build_timestamp = "1970-01-01T00:00:00Z");

/// Metrics against a synthetic scene's ground truth. Throws
/// GroundTruthMissing when the directory has none.
nlohmann::json evaluate_scene(const std::filesystem::path& scene_dir, const PipelineConfig& cfg, unsigned threads = 1);

}  // namespace hpsg
