#include "hpsg/hpsg_graph.hpp"

#include "hpsg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

namespace hpsg {

using json = nlohmann::json;

namespace {

constexpr int kGraphVersion = 1;

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

Vec3 quantize_vec(const Vec3& v) { return {quantize(v[0]), quantize(v[1]), quantize(v[2])}; }
Aabb quantize_box(const Aabb& b) { return {quantize_vec(b.min), quantize_vec(b.max)}; }

std::vector<float> quantize_embedding(const std::vector<float>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(quantize(static_cast<double>(v[i])));
  return out;
}

json vec_json(const Vec3& v) { return json::array({quantize(v[0]), quantize(v[1]), quantize(v[2])}); }
json box_json(const Aabb& b) { return json{{"min", vec_json(b.min)}, {"max", vec_json(b.max)}}; }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw GraphFormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
Aabb box_from(const json& j) { return {vec_from(j.at("min")), vec_from(j.at("max"))}; }

}  // namespace

double quantize(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

std::string structure_caption(StructuralLabel label, const std::string& scene_type) {
  return "This is a " + std::string(to_string(label)) + " in the " + scene_type + ".";
}

void Hpsg::rebuild_adjacency() {
  adjacency.assign(nodes.size(), {});
  for (const auto& e : edges) {
    adjacency.at(static_cast<std::size_t>(e.a)).push_back(e.b);
    adjacency.at(static_cast<std::size_t>(e.b)).push_back(e.a);
  }
  for (auto& nb : adjacency) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
}

Matrix similarity_matrix(std::span<const Component> components) {
  const std::size_t n = components.size();
  Matrix s(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    s[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) s[i][j] = s[j][i] = iou_3d(components[i].bbox, components[j].bbox);
  }
  return s;
}

double mst_edge_weight(const Matrix& s, std::span<const Component> components, std::size_t i, std::size_t j) {
  const double sim = s[i][j];
  double w = 1.0 - sim;
  if (sim == 0.0) w += std::min((components[i].centroid - components[j].centroid).norm(), 10.0) / 10.0;
  return w;
}

std::vector<std::pair<int, int>> mst_candidate_pool(const Matrix& s, std::span<const Component> components) {
  const std::size_t n = components.size();
  struct Candidate {
    double w;
    int lo, hi;
  };
  std::vector<Candidate> all;
  all.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      all.push_back({mst_edge_weight(s, components, i, j), static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.w != b.w) return a.w < b.w;
    if (a.lo != b.lo) return a.lo < b.lo;
    return a.hi < b.hi;
  });
  // Kruskal.
  DisjointSet sets(n);
  std::vector<std::pair<int, int>> tree;
  for (const auto& c : all) {
    if (sets.unite(c.lo, c.hi)) tree.emplace_back(c.lo, c.hi);
    if (tree.size() + 1 == n) break;
  }
  std::sort(tree.begin(), tree.end());
  return tree;
}

Hpsg build_hpsg(std::span<const StructureInfo> planes, std::span<const ObjectInstance> objects, Annotator& annotator,
                const GraphBuildOptions& options) {
  std::vector<StructureInfo> structural;
  for (const auto& p : planes) {
    if (is_structural(p.label)) structural.push_back(p);
  }
  if (structural.empty() && objects.empty()) throw EmptySceneError();

  // Captions for objects that arrive without one.
  std::vector<CaptionRefinement> refined;
  refined.reserve(objects.size());
  for (const auto& obj : objects) {
    if (!obj.caption.empty()) {
      refined.push_back({obj.caption, obj.canonical_tag.empty() ? obj.caption : obj.canonical_tag, obj.tag_set});
      continue;
    }
    std::vector<std::string> raw = obj.raw_captions;
    if (raw.size() > 5) raw.resize(5);
    if (raw.empty()) raw.push_back(obj.category_hint.value_or("object"));
    refined.push_back(annotator.refine_captions(raw, options.caption_template));
  }
  std::vector<std::string> object_captions;
  for (const auto& r : refined) object_captions.push_back(r.caption);
  const std::string scene_type = annotator.summarize_scene_type(object_captions);

  Hpsg g;
  auto add_node = [&](int level, std::string caption, auto payload) {
    Node n;
    n.node_id = static_cast<int>(g.nodes.size());
    n.level = level;
    n.caption = std::move(caption);
    n.payload = std::move(payload);
    g.nodes.push_back(std::move(n));
    return g.nodes.back().node_id;
  };
  add_node(kSceneLevel, scene_type, SceneTypeInfo{scene_type});

  std::vector<Component> components;
  for (auto info : structural) {
    info.normal = quantize_vec(info.normal);
    info.offset = quantize(info.offset);
    info.area_m2 = quantize(info.area_m2);
    info.boundary_length_m = quantize(info.boundary_length_m);
    info.bbox = quantize_box(info.bbox);
    info.centroid = quantize_vec(info.centroid);
    components.push_back({info.bbox, info.centroid});
    add_node(kStructureLevel, structure_caption(info.label, scene_type), info);
  }
  const int first_object = static_cast<int>(g.nodes.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& obj = objects[i];
    ObjectInfo info;
    info.object_key = obj.object_key;
    info.instance_id = obj.instance_id;
    info.canonical_tag = refined[i].canonical_tag;
    info.tag_set = refined[i].tag_set;
    info.bbox = quantize_box(obj.bbox);
    info.centroid = quantize_vec(obj.bbox.centroid());
    info.point_count = obj.point_count();
    components.push_back({info.bbox, info.centroid});
    add_node(kObjectLevel, refined[i].caption, info);
  }
  auto node_of = [](int component) { return component + 1; };
  auto is_plane = [&](int component) { return component < static_cast<int>(structural.size()); };

  auto add_edge = [&](int a, int b, int level, std::string relation, double weight) {
    g.edges.push_back(Edge{static_cast<int>(g.edges.size()), a, b, level, std::move(relation), quantize(weight)});
  };
  DisjointSet connected(g.nodes.size());
  for (std::size_t p = 0; p < structural.size(); ++p) {
    const int id = node_of(static_cast<int>(p));
    add_edge(0, id, kSceneLevel, "default", 0.0);
    connected.unite(0, id);
  }

  const auto sim = similarity_matrix(components);
  const auto pool = mst_candidate_pool(sim, components);
  std::vector<std::pair<std::pair<int, int>, double>> unrelated;
  for (const auto& [i, j] : pool) {
    const double w = mst_edge_weight(sim, components, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    const bool pi = is_plane(i), pj = is_plane(j);
    if (pi && pj) continue;  // planes already hang off the scene node
    if (pi || pj) {
      const int plane = pi ? i : j, object = pi ? j : i;
      add_edge(node_of(plane), node_of(object), kStructureLevel, "topological", w);
      connected.unite(node_of(plane), node_of(object));
      continue;
    }
    const int a = node_of(i), b = node_of(j);
    const ObjectSummary sa{g.nodes[a].caption, components[i].centroid, components[i].bbox};
    const ObjectSummary sb{g.nodes[b].caption, components[j].centroid, components[j].bbox};
    const RelationLabel forward = annotator.estimate_relation(sa, sb);
    RelationLabel rel = forward;
    int from = a, to = b;
    if (forward == RelationLabel::None || forward == RelationLabel::NextTo) {
      const RelationLabel backward = annotator.estimate_relation(sb, sa);
      if (backward == RelationLabel::On || backward == RelationLabel::In) {
        rel = backward;
        from = b;
        to = a;
      } else if (backward == RelationLabel::NextTo) {
        rel = RelationLabel::NextTo;
      }
    }
    if (rel == RelationLabel::None) {
      unrelated.push_back({{a, b}, w});
      continue;
    }
    add_edge(from, to, kObjectLevel, std::string(to_string(rel)), w);
    connected.unite(from, to);
  }
  // "none" pairs survive only where dropping them would split the graph.
  for (const auto& [ends, w] : unrelated) {
    if (connected.unite(ends.first, ends.second)) {
      add_edge(ends.first, ends.second, kObjectLevel, std::string(to_string(RelationLabel::NextTo)), w);
    }
  }
  // Whatever is still detached hangs off the nearest plane (or the scene
  // node when there are no planes).
  for (int id = first_object; id < static_cast<int>(g.nodes.size()); ++id) {
    if (connected.find(id) == connected.find(0)) continue;
    const auto& c = std::get<ObjectInfo>(g.nodes[id].payload).centroid;
    if (structural.empty()) {
      add_edge(0, id, kSceneLevel, "default", 0.0);
      connected.unite(0, id);
      continue;
    }
    std::size_t best = 0;
    double best_dist = std::abs(structural[0].normal.dot(c) - structural[0].offset);
    for (std::size_t p = 1; p < structural.size(); ++p) {
      const double d = std::abs(structural[p].normal.dot(c) - structural[p].offset);
      if (d < best_dist) {
        best = p;
        best_dist = d;
      }
    }
    add_edge(node_of(static_cast<int>(best)), id, kStructureLevel, "topological", best_dist);
    connected.unite(node_of(static_cast<int>(best)), id);
  }

  for (auto& n : g.nodes) n.embedding = quantize_embedding(annotator.embed_text(n.caption));
  g.meta.config_fingerprint = options.config_fingerprint;
  g.meta.build_timestamp = options.build_timestamp;
  g.meta.annotator = annotator.name();
  g.meta.annotator_fallbacks = annotator.fallback_count();
  g.meta.embedding_dim = annotator.embedding_dim();
  g.rebuild_adjacency();
  validate_graph(g);
  return g;
}

void validate_graph(const Hpsg& g) {
  if (g.nodes.empty()) throw GraphFormatError("graph has no nodes");
  int scene_nodes = 0;
  bool has_structure = false;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.node_id != static_cast<int>(i)) throw GraphFormatError("node ids must be contiguous from 0");
    if (n.level < kSceneLevel || n.level > kObjectLevel) throw GraphFormatError("node level out of range");
    if (static_cast<int>(n.payload.index()) != n.level) throw GraphFormatError("payload does not match node level");
    if (n.level == kSceneLevel) ++scene_nodes;
    if (n.level == kStructureLevel) has_structure = true;
    if (n.caption.empty()) throw GraphFormatError("node " + std::to_string(i) + " has an empty caption");
    if (n.embedding.size() != g.meta.embedding_dim) throw GraphFormatError("embedding dimension mismatch");
    double norm = 0.0;
    for (float v : n.embedding) norm += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-5) throw GraphFormatError("embedding of node " + std::to_string(i) + " is not unit norm");
  }
  if (scene_nodes != 1) throw GraphFormatError("graph needs exactly one scene-type node");

  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    if (e.edge_id != static_cast<int>(i)) throw GraphFormatError("edge ids must be contiguous from 0");
    if (e.a < 0 || e.b < 0 || e.a >= static_cast<int>(g.nodes.size()) || e.b >= static_cast<int>(g.nodes.size()) ||
        e.a == e.b) {
      throw GraphFormatError("edge " + std::to_string(i) + " has invalid endpoints");
    }
    const int la = std::min(g.nodes[e.a].level, g.nodes[e.b].level);
    const int lb = std::max(g.nodes[e.a].level, g.nodes[e.b].level);
    bool ok = false;
    switch (e.level) {
      case 0: ok = la == 0 && (lb == 1 || (lb == 2 && !has_structure)) && e.relation == "default"; break;
      case 1: ok = la == 1 && lb == 2 && e.relation == "topological"; break;
      case 2: ok = la == 2 && lb == 2 && (e.relation == "on" || e.relation == "in" || e.relation == "next_to"); break;
      default: ok = false;
    }
    if (!ok) throw GraphFormatError("edge " + std::to_string(i) + " violates the level partition");
  }

  Hpsg copy;
  copy.nodes.resize(g.nodes.size());
  copy.edges = g.edges;
  copy.rebuild_adjacency();
  if (copy.adjacency != g.adjacency) throw GraphFormatError("adjacency inconsistent with edges");

  std::vector<char> seen(g.nodes.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : g.adjacency[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != g.nodes.size()) throw GraphFormatError("graph is not connected");
}

std::string serialize_graph(const Hpsg& g) {
  json doc;
  doc["version"] = kGraphVersion;
  doc["meta"] = json{{"config_fingerprint", g.meta.config_fingerprint},
                     {"build_timestamp", g.meta.build_timestamp},
                     {"annotator", g.meta.annotator},
                     {"annotator_fallbacks", g.meta.annotator_fallbacks},
                     {"embedding_dim", g.meta.embedding_dim}};
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json payload;
    if (const auto* s = std::get_if<SceneTypeInfo>(&n.payload)) {
      payload = json{{"scene_type", s->scene_type}};
    } else if (const auto* p = std::get_if<StructureInfo>(&n.payload)) {
      payload = json{{"label", std::string(to_string(p->label))},
                     {"normal", vec_json(p->normal)},
                     {"offset", quantize(p->offset)},
                     {"area_m2", quantize(p->area_m2)},
                     {"boundary_length_m", quantize(p->boundary_length_m)},
                     {"supporting_views", p->supporting_views},
                     {"inlier_count", p->inlier_count},
                     {"bbox", box_json(p->bbox)},
                     {"centroid", vec_json(p->centroid)}};
    } else {
      const auto& o = std::get<ObjectInfo>(n.payload);
      payload = json{{"object_key", o.object_key},       {"instance_id", o.instance_id},
                     {"canonical_tag", o.canonical_tag}, {"tag_set", o.tag_set},
                     {"bbox", box_json(o.bbox)},         {"centroid", vec_json(o.centroid)},
                     {"point_count", o.point_count}};
    }
    json emb = json::array();
    for (float v : n.embedding) emb.push_back(quantize(static_cast<double>(v)));
    nodes.push_back(json{{"node_id", n.node_id},
                         {"level", n.level},
                         {"caption", n.caption},
                         {"payload", std::move(payload)},
                         {"embedding", std::move(emb)}});
  }
  doc["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& e : g.edges) {
    edges.push_back(json{{"edge_id", e.edge_id},
                         {"endpoints", json::array({e.a, e.b})},
                         {"level", e.level},
                         {"relation", e.relation},
                         {"weight", quantize(e.weight)}});
  }
  doc["edges"] = std::move(edges);
  return doc.dump() + "\n";
}

Hpsg parse_graph(const std::string& text) {
  Hpsg g;
  try {
    const json doc = json::parse(text);
    if (!doc.contains("version") || doc["version"].get<int>() != kGraphVersion) {
      throw GraphFormatError("unsupported graph schema version");
    }
    const auto& meta = doc.at("meta");
    g.meta.config_fingerprint = meta.at("config_fingerprint").get<std::string>();
    g.meta.build_timestamp = meta.at("build_timestamp").get<std::string>();
    g.meta.annotator = meta.at("annotator").get<std::string>();
    g.meta.annotator_fallbacks = meta.at("annotator_fallbacks").get<std::size_t>();
    g.meta.embedding_dim = meta.at("embedding_dim").get<std::size_t>();
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.node_id = jn.at("node_id").get<int>();
      n.level = jn.at("level").get<int>();
      n.caption = jn.at("caption").get<std::string>();
      const auto& p = jn.at("payload");
      switch (n.level) {
        case kSceneLevel: n.payload = SceneTypeInfo{p.at("scene_type").get<std::string>()}; break;
        case kStructureLevel: {
          StructureInfo s;
          s.label = structural_label_from_string(p.at("label").get<std::string>());
          s.normal = vec_from(p.at("normal"));
          s.offset = p.at("offset").get<double>();
          s.area_m2 = p.at("area_m2").get<double>();
          s.boundary_length_m = p.at("boundary_length_m").get<double>();
          s.supporting_views = p.at("supporting_views").get<std::vector<int>>();
          s.inlier_count = p.at("inlier_count").get<std::size_t>();
          s.bbox = box_from(p.at("bbox"));
          s.centroid = vec_from(p.at("centroid"));
          n.payload = std::move(s);
          break;
        }
        case kObjectLevel: {
          ObjectInfo o;
          o.object_key = p.at("object_key").get<int>();
          o.instance_id = p.at("instance_id").get<std::int64_t>();
          o.canonical_tag = p.at("canonical_tag").get<std::string>();
          o.tag_set = p.at("tag_set").get<std::vector<std::string>>();
          o.bbox = box_from(p.at("bbox"));
          o.centroid = vec_from(p.at("centroid"));
          o.point_count = p.at("point_count").get<std::size_t>();
          n.payload = std::move(o);
          break;
        }
        default: throw GraphFormatError("node level out of range");
      }
      for (const auto& v : jn.at("embedding")) n.embedding.push_back(static_cast<float>(v.get<double>()));
      g.nodes.push_back(std::move(n));
    }
    for (const auto& je : doc.at("edges")) {
      Edge e;
      e.edge_id = je.at("edge_id").get<int>();
      const auto& ends = je.at("endpoints");
      if (!ends.is_array() || ends.size() != 2) throw GraphFormatError("edge endpoints must be a pair");
      e.a = ends[0].get<int>();
      e.b = ends[1].get<int>();
      e.level = je.at("level").get<int>();
      e.relation = je.at("relation").get<std::string>();
      e.weight = je.at("weight").get<double>();
      g.edges.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw GraphFormatError(std::string("malformed graph: ") + e.what());
  } catch (const GraphFormatError&) {
    throw;
  } catch (const Error& e) {
    throw GraphFormatError(e.what());
  }
  for (const auto& e : g.edges) {
    if (e.a < 0 || e.b < 0 || e.a >= static_cast<int>(g.nodes.size()) || e.b >= static_cast<int>(g.nodes.size())) {
      throw GraphFormatError("edge endpoint out of range");
    }
  }
  g.rebuild_adjacency();
  validate_graph(g);
  return g;
}

void save_graph(const Hpsg& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("hpsg_graph", "cannot write " + path.string());
  out << serialize_graph(g);
}

Hpsg load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GraphFormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

}  // namespace hpsg
