#include "hpsg/pipeline.hpp"

#include "hpsg/error.hpp"
#include "hpsg/synth_bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace hpsg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads known keys out of one JSON object and complains about the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for '" + name_ + "." + key + "'");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + (name_.empty() ? k : name_ + "." + k) + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("pipeline", "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
json box_json(const Aabb& b) { return json{{"min", vec_json(b.min)}, {"max", vec_json(b.max)}}; }
Aabb box_from(const json& j) { return {vec_from(j.at("min")), vec_from(j.at("max"))}; }

json frame_json(const GravityFrame& f) { return json{{"up", vec_json(f.up)}, {"floor_height", f.floor_height}}; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("pipeline", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("pipeline", "cannot write " + path.string());
  out << text;
}

}  // namespace

void PipelineConfig::validate() const {
  if (version != 1) throw ConfigError("unsupported config version " + std::to_string(version));
  if (!(tau_conf >= 0.0)) throw ConfigError("tau_conf must be non-negative");
  plane.validate();
  labeling.validate();
  fusion.validate();
  if (!(gravity_prior.norm() > 0.0)) throw ConfigError("gravity_prior must be nonzero");
  if (annotation.embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  if (annotation.timeout_ms < 1) throw ConfigError("timeout_ms must be positive");
  if (retrieval.k < 1) throw ConfigError("retrieval.k must be at least 1");
  if (!(retrieval.tau > 0.0)) throw ConfigError("retrieval.tau must be positive");
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Section top(j, "");
  top.read("version", c.version);
  if (c.version != 1) throw ConfigError("unsupported config version " + std::to_string(c.version));
  top.read("rng_seed", c.rng_seed);
  top.read("tau_conf", c.tau_conf);
  if (const json* p = top.child("plane")) {
    Section s(*p, "plane");
    double theta_deg = rad2deg(c.plane.theta_ang);
    s.read("tau_dist", c.plane.tau_dist);
    s.read("rho_min_inlier", c.plane.rho_min_inlier);
    s.read("ransac_iters", c.plane.ransac_iters);
    s.read("theta_ang_deg", theta_deg);
    s.read("delta_dist", c.plane.delta_dist);
    s.read("pps_eps_intra", c.plane.pps_eps_intra);
    s.read("pps_eps_global", c.plane.pps_eps_global);
    s.read("dbscan_min_pts", c.plane.dbscan_min_pts);
    s.read("normal_neighbors", c.plane.normal_neighbors);
    s.read("min_mask_points", c.plane.min_mask_points);
    s.finish();
    c.plane.theta_ang = deg2rad(theta_deg);
  }
  if (const json* p = top.child("labeling")) {
    Section s(*p, "labeling");
    std::vector<double> prior{c.gravity_prior[0], c.gravity_prior[1], c.gravity_prior[2]};
    s.read("ceiling_cone_deg", c.labeling.ceiling_cone_deg);
    s.read("wall_ortho_tol_deg", c.labeling.wall_ortho_tol_deg);
    s.read("min_wall_area_m2", c.labeling.min_wall_area_m2);
    s.read("min_wall_boundary_m", c.labeling.min_wall_boundary_m);
    s.read("min_wall_views", c.labeling.min_wall_views);
    s.read("floor_band_m", c.labeling.floor_band_m);
    s.read("gravity_prior_deg", c.labeling.gravity_prior_deg);
    s.read("height_min_fraction", c.labeling.height_min_fraction);
    s.read("height_slack_m", c.labeling.height_slack_m);
    s.read("gravity_prior", prior);
    s.finish();
    if (prior.size() != 3) throw ConfigError("labeling.gravity_prior must have 3 components");
    c.gravity_prior = Vec3(prior[0], prior[1], prior[2]);
  }
  if (const json* p = top.child("fusion")) {
    Section s(*p, "fusion");
    s.read("kappa", c.fusion.kappa);
    s.read("dbscan_eps_m", c.fusion.dbscan_eps_m);
    s.read("dbscan_min_pts", c.fusion.dbscan_min_pts);
    s.finish();
  }
  if (const json* p = top.child("annotation")) {
    Section s(*p, "annotation");
    s.read("embedding_dim", c.annotation.embedding_dim);
    s.read("caption_template", c.annotation.caption_template);
    s.read("timeout_ms", c.annotation.timeout_ms);
    s.finish();
  }
  if (const json* p = top.child("retrieval")) {
    Section s(*p, "retrieval");
    s.read("k", c.retrieval.k);
    s.read("tau", c.retrieval.tau);
    s.finish();
  }
  top.finish();
  c.plane.rng_seed = c.rng_seed;
  c.annotation.seed = c.rng_seed;
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return json{
      {"version", c.version},
      {"rng_seed", c.rng_seed},
      {"tau_conf", c.tau_conf},
      {"plane",
       {{"tau_dist", c.plane.tau_dist},
        {"rho_min_inlier", c.plane.rho_min_inlier},
        {"ransac_iters", c.plane.ransac_iters},
        {"theta_ang_deg", rad2deg(c.plane.theta_ang)},
        {"delta_dist", c.plane.delta_dist},
        {"pps_eps_intra", c.plane.pps_eps_intra},
        {"pps_eps_global", c.plane.pps_eps_global},
        {"dbscan_min_pts", c.plane.dbscan_min_pts},
        {"normal_neighbors", c.plane.normal_neighbors},
        {"min_mask_points", c.plane.min_mask_points}}},
      {"labeling",
       {{"ceiling_cone_deg", c.labeling.ceiling_cone_deg},
        {"wall_ortho_tol_deg", c.labeling.wall_ortho_tol_deg},
        {"min_wall_area_m2", c.labeling.min_wall_area_m2},
        {"min_wall_boundary_m", c.labeling.min_wall_boundary_m},
        {"min_wall_views", c.labeling.min_wall_views},
        {"floor_band_m", c.labeling.floor_band_m},
        {"gravity_prior_deg", c.labeling.gravity_prior_deg},
        {"height_min_fraction", c.labeling.height_min_fraction},
        {"height_slack_m", c.labeling.height_slack_m},
        {"gravity_prior", vec_json(c.gravity_prior)}}},
      {"fusion",
       {{"kappa", c.fusion.kappa}, {"dbscan_eps_m", c.fusion.dbscan_eps_m}, {"dbscan_min_pts", c.fusion.dbscan_min_pts}}},
      {"annotation",
       {{"embedding_dim", c.annotation.embedding_dim},
        {"caption_template", c.annotation.caption_template},
        {"timeout_ms", c.annotation.timeout_ms}}},
      {"retrieval", {{"k", c.retrieval.k}, {"tau", c.retrieval.tau}}},
  };
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_fingerprint(const PipelineConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config_to_json(cfg).dump())));
  return buf;
}

fs::path manifest_path(const fs::path& scene) {
  if (fs::is_directory(scene)) return scene / "scene.json";
  return scene;
}

ParsedScene parse_views(std::span<const ViewBundle> views, std::span<const CaptionRecord> captions,
                        const PipelineConfig& cfg, unsigned threads) {
  cfg.validate();
  std::vector<std::vector<PlaneCandidate>> per_view(views.size());
  parallel_for(views.size(), threads, [&](std::size_t v) {
    std::vector<InstanceMask2D> agnostic;
    for (const auto& m : views[v].masks) {
      if (m.kind == MaskKind::Agnostic) agnostic.push_back(m);
    }
    per_view[v] = detect_view_planes(views[v], agnostic, cfg.plane, cfg.tau_conf);
  });
  const auto globals = align_cross_view(per_view, cfg.plane);

  ParsedScene out;
  out.frame = estimate_gravity(globals, cfg.gravity_prior, cfg.labeling);
  out.planes = label_planes(globals, out.frame, cfg.labeling);

  // Object candidates in the gravity frame, ordered by (view, mask index).
  std::vector<std::vector<LocalObjectCandidate>> local(views.size());
  parallel_for(views.size(), threads, [&](std::size_t v) {
    const auto& view = views[v];
    for (const auto& m : view.masks) {
      if (m.kind != MaskKind::Instance) continue;
      PointCloud cloud = lift_masked_points(view, m, cfg.tau_conf);
      if (cloud.empty()) continue;
      for (auto& p : cloud.points) p = out.frame.to_local(p);
      LocalObjectCandidate cand{std::move(cloud), m.instance_id, view.view_id, m.confidence, m.category_hint};
      if (auto kept = densify_filter(cand, cfg.fusion)) local[v].push_back(std::move(*kept));
    }
  });
  std::vector<LocalObjectCandidate> candidates;
  for (auto& l : local) {
    for (auto& c : l) candidates.push_back(std::move(c));
  }
  out.objects = fuse(candidates, cfg.fusion);

  for (auto& obj : out.objects) {
    std::vector<std::pair<int, std::int64_t>> detections;
    for (const auto& o : obj.view_observations) detections.emplace_back(o.view_id, o.instance_id);
    obj.raw_captions = select_captions(captions, detections, 5);
  }
  return out;
}

StructureInfo structure_info(const LabeledPlane& lp, const GravityFrame& frame) {
  StructureInfo s;
  s.label = lp.label;
  const Mat3 R = frame.rotation();
  const Vec3 n = R * lp.plane.params.normal;
  const PlaneParams local = canonicalize({n, lp.plane.params.offset - frame.floor_height * n.z()});
  s.normal = local.normal;
  s.offset = local.offset;
  s.area_m2 = lp.plane.area_m2;
  s.boundary_length_m = lp.plane.boundary_length_m;
  s.supporting_views = lp.plane.supporting_views;
  s.inlier_count = lp.plane.inlier_count();
  std::vector<Vec3> pts;
  pts.reserve(lp.plane.points.size());
  for (const auto& p : lp.plane.points.points) pts.push_back(frame.to_local(p));
  s.bbox = Aabb::of(pts);
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  if (!pts.empty()) c /= static_cast<double>(pts.size());
  s.centroid = c;
  return s;
}

std::string planes_json(const ParsedScene& parsed) {
  json planes = json::array();
  for (std::size_t i = 0; i < parsed.planes.size(); ++i) {
    const auto& lp = parsed.planes[i];
    const auto info = structure_info(lp, parsed.frame);
    planes.push_back(json{{"index", i},
                          {"label", std::string(to_string(lp.label))},
                          {"normal", vec_json(lp.plane.params.normal)},
                          {"offset", lp.plane.params.offset},
                          {"local",
                           {{"normal", vec_json(info.normal)},
                            {"offset", info.offset},
                            {"bbox", box_json(info.bbox)},
                            {"centroid", vec_json(info.centroid)}}},
                          {"area_m2", lp.plane.area_m2},
                          {"boundary_length_m", lp.plane.boundary_length_m},
                          {"supporting_views", lp.plane.supporting_views},
                          {"inlier_count", lp.plane.inlier_count()}});
  }
  return json{{"version", 1}, {"frame", frame_json(parsed.frame)}, {"planes", std::move(planes)}}.dump(1) + "\n";
}

std::string objects_json(const ParsedScene& parsed) {
  json objects = json::array();
  for (const auto& o : parsed.objects) {
    json obs = json::array();
    for (const auto& v : o.view_observations) {
      obs.push_back(json{{"view_id", v.view_id},
                         {"instance_id", v.instance_id},
                         {"seg_confidence", v.seg_confidence},
                         {"candidate_index", v.candidate_index}});
    }
    objects.push_back(json{{"object_key", o.object_key},
                           {"instance_id", o.instance_id},
                           {"category_hint", o.category_hint ? json(*o.category_hint) : json(nullptr)},
                           {"bbox", box_json(o.bbox)},
                           {"centroid", vec_json(o.bbox.centroid())},
                           {"point_count", o.point_count()},
                           {"observations", std::move(obs)},
                           {"raw_captions", o.raw_captions}});
  }
  return json{{"version", 1}, {"frame", frame_json(parsed.frame)}, {"objects", std::move(objects)}}.dump(1) + "\n";
}

void write_parsed(const fs::path& out_dir, const ParsedScene& parsed) {
  fs::create_directories(out_dir);
  write_text(out_dir / "planes.json", planes_json(parsed));
  write_text(out_dir / "objects.json", objects_json(parsed));
}

ParsedFiles read_parsed(const fs::path& dir) {
  ParsedFiles out;
  for (const char* name : {"planes.json", "objects.json"}) {
    if (!fs::exists(dir / name)) {
      throw IngestError(IngestError::Kind::MissingFile, -1, name, "missing " + (dir / name).string() + " (run parse first)");
    }
  }
  try {
    const json planes = json::parse(read_text(dir / "planes.json"));
    out.frame.up = vec_from(planes.at("frame").at("up"));
    out.frame.floor_height = planes.at("frame").at("floor_height").get<double>();
    for (const auto& p : planes.at("planes")) {
      StructureInfo s;
      s.label = structural_label_from_string(p.at("label").get<std::string>());
      const auto& local = p.at("local");
      s.normal = vec_from(local.at("normal"));
      s.offset = local.at("offset").get<double>();
      s.bbox = box_from(local.at("bbox"));
      s.centroid = vec_from(local.at("centroid"));
      s.area_m2 = p.at("area_m2").get<double>();
      s.boundary_length_m = p.at("boundary_length_m").get<double>();
      s.supporting_views = p.at("supporting_views").get<std::vector<int>>();
      s.inlier_count = p.at("inlier_count").get<std::size_t>();
      out.structures.push_back(std::move(s));
    }
    const json objects = json::parse(read_text(dir / "objects.json"));
    for (const auto& o : objects.at("objects")) {
      ObjectInstance obj;
      obj.object_key = o.at("object_key").get<int>();
      obj.instance_id = o.at("instance_id").get<std::int64_t>();
      if (!o.at("category_hint").is_null()) obj.category_hint = o.at("category_hint").get<std::string>();
      obj.bbox = box_from(o.at("bbox"));
      obj.stored_point_count = o.at("point_count").get<std::size_t>();
      for (const auto& v : o.at("observations")) {
        obj.view_observations.push_back({v.at("view_id").get<int>(), v.at("instance_id").get<std::int64_t>(),
                                         v.at("seg_confidence").get<double>(),
                                         v.at("candidate_index").get<std::size_t>()});
      }
      obj.raw_captions = o.at("raw_captions").get<std::vector<std::string>>();
      out.objects.push_back(std::move(obj));
    }
  } catch (const json::exception& e) {
    throw Error("pipeline", "malformed parse output in " + dir.string() + ": " + e.what());
  }
  return out;
}

Hpsg build_graph(const ParsedFiles& parsed, Annotator& annotator, const PipelineConfig& cfg,
                 const std::string& build_timestamp) {
  GraphBuildOptions opts;
  opts.caption_template = cfg.annotation.caption_template;
  opts.config_fingerprint = config_fingerprint(cfg);
  opts.build_timestamp = build_timestamp;
  return build_hpsg(parsed.structures, parsed.objects, annotator, opts);
}

// ---------------------------------------------------------------------------
// eval

namespace {

struct PlaneMatch {
  int detected = -1;
  double normal_err_deg = 0.0;
  double offset_err_m = 0.0;
};

PlaneMatch match_plane(const GtPlane& gt, const std::vector<LabeledPlane>& detected) {
  PlaneMatch best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < detected.size(); ++i) {
    const auto& p = detected[i].plane.params;
    const double dot = gt.params.normal.dot(p.normal);
    const double sign = dot < 0 ? -1.0 : 1.0;
    const double ang = rad2deg(std::acos(std::clamp(std::abs(dot), -1.0, 1.0)));
    const double off = std::abs(gt.params.offset - sign * p.offset);
    const double cost = deg2rad(ang) + off;
    if (cost < best_cost) {
      best_cost = cost;
      best = {static_cast<int>(i), ang, off};
    }
  }
  return best;
}

}  // namespace

json evaluate_scene(const fs::path& scene_dir, const PipelineConfig& cfg, unsigned threads) {
  const GroundTruth gt = load_ground_truth(scene_dir);
  json report;
  report["preset"] = gt.preset;
  json criteria = json::object();
  for (const char* c : {"plane_count", "plane_accuracy", "labels", "fusion", "relations", "retrieval_exact", "runtime"}) {
    criteria[c] = false;
  }
  report["error"] = nullptr;

  const auto t0 = std::chrono::steady_clock::now();
  ParsedScene parsed;
  std::vector<ViewBundle> views;
  try {
    views = load_scene(manifest_path(scene_dir));
    std::vector<CaptionRecord> captions;
    if (fs::exists(scene_dir / "captions.json")) captions = load_captions(scene_dir / "captions.json");
    parsed = parse_views(views, captions, cfg, threads);
  } catch (const Error& e) {
    report["error"] = e.what();
    report["runtime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report["criteria"] = criteria;
    report["pass"] = false;
    return report;
  }
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report["runtime_s"] = runtime;
  criteria["runtime"] = runtime < 30.0;

  // Planes and labels.
  std::size_t matched = 0, correct_labels = 0;
  double max_ang = 0.0, max_off = 0.0;
  std::set<int> used;
  for (const auto& g : gt.planes) {
    const auto m = match_plane(g, parsed.planes);
    if (m.detected < 0) continue;
    max_ang = std::max(max_ang, m.normal_err_deg);
    max_off = std::max(max_off, m.offset_err_m);
    if (m.normal_err_deg < 2.0 && m.offset_err_m < 0.01 && !used.count(m.detected)) {
      ++matched;
      used.insert(m.detected);
      if (parsed.planes[m.detected].label == g.label) ++correct_labels;
    }
  }
  std::map<std::string, int> label_counts;
  for (const auto& p : parsed.planes) ++label_counts[std::string(to_string(p.label))];
  const double n_gt = static_cast<double>(gt.planes.size());
  report["planes"] = json{{"gt", gt.planes.size()},
                          {"detected", parsed.planes.size()},
                          {"matched", matched},
                          {"recall", n_gt > 0 ? matched / n_gt : 0.0},
                          {"precision", parsed.planes.empty() ? 0.0 : double(matched) / parsed.planes.size()},
                          {"max_normal_error_deg", max_ang},
                          {"max_offset_error_m", max_off}};
  report["labels"] = json{{"accuracy", n_gt > 0 ? correct_labels / n_gt : 0.0}, {"counts", label_counts}};
  criteria["plane_count"] = parsed.planes.size() == gt.planes.size();
  criteria["plane_accuracy"] = matched == gt.planes.size();
  criteria["labels"] = correct_labels == gt.planes.size() && parsed.planes.size() == gt.planes.size();

  // Objects are scored against the part of each box the cameras actually saw:
  // the extent of its confident ground-truth pixels, in the gravity frame.
  std::map<std::int64_t, Aabb> seen_box;
  std::set<std::int64_t> visible;
  for (std::size_t v = 0; v < views.size() && v < gt.pixel_labels.size(); ++v) {
    const auto& labels = gt.pixel_labels[v];
    std::map<std::int64_t, int> counts;
    for (std::size_t px = 0; px < labels.size() && px < views[v].pixel_count(); ++px) {
      if (labels[px] < kGtObjectBase) continue;
      const std::int64_t id = static_cast<std::int64_t>(labels[px] - kGtObjectBase) + 1;
      ++counts[id];
      if (views[v].confidence_map[px] < cfg.tau_conf) continue;
      const Vec3 p = parsed.frame.to_local(views[v].point(px));
      auto it = seen_box.find(id);
      if (it == seen_box.end()) {
        seen_box.emplace(id, Aabb{p, p});
      } else {
        it->second.expand(p);
      }
    }
    for (const auto& [id, c] : counts) {
      if (c >= 10) visible.insert(id);
    }
  }
  std::size_t pure = 0;
  std::set<std::int64_t> recovered;
  for (const auto& o : parsed.objects) {
    bool same = true;
    for (const auto& v : o.view_observations) same = same && v.instance_id == o.instance_id;
    if (same) ++pure;
    const auto it = seen_box.find(o.instance_id);
    if (it != seen_box.end() && iou_3d(it->second, o.bbox) >= 0.5) recovered.insert(o.instance_id);
  }
  std::size_t recovered_visible = 0;
  for (auto id : visible) recovered_visible += recovered.count(id);
  const double purity = parsed.objects.empty() ? 0.0 : double(pure) / parsed.objects.size();
  const double obj_recall = visible.empty() ? 1.0 : double(recovered_visible) / visible.size();
  report["objects"] = json{{"gt", gt.objects.size()},
                           {"gt_visible", visible.size()},
                           {"fused", parsed.objects.size()},
                           {"purity", purity},
                           {"recall", obj_recall}};
  criteria["fusion"] = purity == 1.0 && obj_recall >= 0.9;

  // Graph, relations and retrieval.
  try {
    std::vector<StructureInfo> structures;
    for (const auto& lp : parsed.planes) structures.push_back(structure_info(lp, parsed.frame));
    StubAnnotator stub(cfg.annotation.embedding_dim, cfg.annotation.seed);
    GraphBuildOptions opts;
    opts.caption_template = cfg.annotation.caption_template;
    opts.config_fingerprint = config_fingerprint(cfg);
    const Hpsg g = build_hpsg(structures, parsed.objects, stub, opts);

    std::map<std::int64_t, int> node_of_instance;
    for (const auto& n : g.nodes) {
      if (const auto* o = std::get_if<ObjectInfo>(&n.payload)) node_of_instance.emplace(o->instance_id, n.node_id);
    }
    std::size_t found = 0;
    for (const auto& r : gt.relations) {
      const auto a = node_of_instance.find(gt.objects[r.a].instance_id);
      const auto b = node_of_instance.find(gt.objects[r.b].instance_id);
      if (a == node_of_instance.end() || b == node_of_instance.end()) continue;
      for (const auto& e : g.edges) {
        if (e.a == a->second && e.b == b->second && e.relation == to_string(r.relation)) {
          ++found;
          break;
        }
      }
    }
    report["relations"] = json{{"gt", gt.relations.size()}, {"found", found}};
    criteria["relations"] = found == gt.relations.size();

    const std::string query = "what is on the table";
    const auto qv = stub.embed_text(query);
    const auto scores = score_nodes(g, qv, cfg.retrieval.tau);
    const auto seeds = top_k_seeds(scores, cfg.retrieval.k);
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    order.resize(std::min(order.size(), cfg.retrieval.k));
    auto sub = expand_two_hop(g, seeds, scores);
    // Naive reachability check: every node within two hops of a seed.
    std::set<int> reach(seeds.begin(), seeds.end());
    for (int hop = 0; hop < 2; ++hop) {
      std::set<int> next = reach;
      for (const auto& e : g.edges) {
        if (reach.count(e.a)) next.insert(e.b);
        if (reach.count(e.b)) next.insert(e.a);
      }
      reach = std::move(next);
    }
    const bool exact = order == seeds && std::vector<int>(reach.begin(), reach.end()) == sub.node_ids;
    sub.context_text = render_context(sub, g);
    const auto sub_tokens = whitespace_tokens(sub.context_text);
    const auto full_tokens = whitespace_tokens(render_full_graph(g, scores));
    report["graph"] = json{{"nodes", g.nodes.size()}, {"edges", g.edges.size()}};
    report["retrieval"] = json{{"query", query},
                               {"exact", exact},
                               {"context_tokens", sub_tokens},
                               {"full_tokens", full_tokens},
                               {"ratio", full_tokens ? double(sub_tokens) / full_tokens : 0.0}};
    criteria["retrieval_exact"] = exact;
  } catch (const Error& e) {
    report["error"] = e.what();
  }

  bool all = true;
  for (const auto& [k, v] : criteria.items()) all = all && v.get<bool>();
  report["criteria"] = criteria;
  report["pass"] = all;
  return report;
}

}  // namespace hpsg
