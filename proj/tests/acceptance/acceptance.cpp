// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   hpsg_acceptance --cli path/to/hpsg --work scratch_dir [--only N]

#include "oracles.hpp"

#include "hpsg/annotation.hpp"
#include "hpsg/error.hpp"
#include "hpsg/hpsg_graph.hpp"
#include "hpsg/object_fusion.hpp"
#include "hpsg/plane_detection.hpp"
#include "hpsg/structure_labeling.hpp"
#include "hpsg/subgraph_retrieval.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace hpsg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string g_cli;
fs::path g_work;

struct Run {
  int code = -1;
  std::string out;
};

Run sh(const std::string& args) {
  const std::string cmd = "'" + g_cli + "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void must(const Run& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " exited " + std::to_string(r.code));
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh(const std::string& name) {
  const fs::path d = g_work / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

oracle::Box to_oracle(const Aabb& b) { return {{b.min[0], b.min[1], b.min[2]}, {b.max[0], b.max[1], b.max[2]}}; }

Aabb random_box(std::mt19937_64& rng, double span, double max_size) {
  std::uniform_real_distribution<double> c(-span, span), s(0.05, max_size);
  const Vec3 lo(c(rng), c(rng), c(rng));
  return {lo, lo + Vec3(s(rng), s(rng), s(rng))};
}

// ---- 1: planes on the room preset

Outcome plane_pipeline() {
  const auto dir = fresh("c1");
  must(sh("synth room --out " + q(dir / "room")), "synth");
  const auto r = sh("eval " + q(dir / "room") + " --json --threads 1");
  must(r, "eval");
  const auto j = json::parse(r.out);
  const auto& c = j.at("criteria");
  const bool ok = c.at("plane_count").get<bool>() && c.at("plane_accuracy").get<bool>() && c.at("runtime").get<bool>();
  const auto& p = j.at("planes");
  return {ok, std::to_string(p.at("detected").get<int>()) + " planes, max normal error " +
                  fmt("%.3f", p.at("max_normal_error_deg").get<double>()) + " deg, max offset error " +
                  fmt("%.4f", p.at("max_offset_error_m").get<double>()) + " m, " +
                  fmt("%.2f", j.at("runtime_s").get<double>()) + " s"};
}

// ---- 2: stored inliers equal the brute-force band

Outcome ransac_exactness() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1), unit(0, 1);
  std::normal_distribution<double> g;
  int fitted = 0, mismatches = 0;
  while (fitted < 1000) {
    const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
    const double d = 3.0 * u(rng);
    const auto [e1, e2] = plane_basis(n);
    std::normal_distribution<double> noise(0.0, 0.002 + 0.01 * unit(rng));
    const int n_in = 60 + static_cast<int>(140 * unit(rng));
    const int n_out = static_cast<int>(n_in * 0.4 * unit(rng));
    PointCloud cloud;
    std::vector<oracle::P3> p3;
    for (int i = 0; i < n_in + n_out; ++i) {
      const Vec3 p = i < n_in ? Vec3(d * n + 2.0 * u(rng) * e1 + 2.0 * u(rng) * e2 + noise(rng) * n)
                              : Vec3(3 * u(rng), 3 * u(rng), 3 * u(rng));
      cloud.push_back(p, static_cast<std::uint32_t>(i));
      p3.push_back({p[0], p[1], p[2]});
    }
    PlaneDetectConfig cfg;
    cfg.rng_seed = rng();
    cfg.ransac_iters = 50;
    cfg.tau_dist = 0.01 + 0.02 * unit(rng);
    const auto fit = fit_plane_ransac(cloud, cfg);
    if (fit.status != FitStatus::Ok) continue;
    ++fitted;
    const auto& c = *fit.candidate;
    const auto want =
        oracle::brute_inliers(p3, {c.params.normal[0], c.params.normal[1], c.params.normal[2]}, c.params.offset, cfg.tau_dist);
    if (std::vector<std::size_t>(c.inliers.pixels.begin(), c.inliers.pixels.end()) != want) ++mismatches;
  }
  return {mismatches == 0, std::to_string(fitted) + " candidates, " + std::to_string(mismatches) + " mismatches"};
}

// ---- 3: labels

GlobalPlane patch(const Vec3& n_in, const Vec3& centre, double size, std::vector<int> views) {
  const Vec3 n = n_in.normalized();
  GlobalPlane g;
  const auto [u, v] = plane_basis(n);
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) g.points.points.push_back(centre + size * (i / 20.0 - 0.5) * u + size * (j / 20.0 - 0.5) * v);
  }
  g.params = canonicalize({n, n.dot(centre)});
  g.supporting_views = std::move(views);
  const auto hull = projected_hull(g.points.points, n);
  g.area_m2 = hull.area;
  g.boundary_length_m = hull.perimeter;
  return g;
}

Outcome labeling() {
  const auto dir = fresh("c3");
  std::string detail;
  bool ok = true;
  for (const std::string preset : {"room", "tilted-room"}) {
    const auto r = sh("eval --preset " + preset + " --rot 15 --work " + q(dir / preset) + " --json");
    must(r, "eval " + preset);
    const auto j = json::parse(r.out);
    const auto counts = j.at("labels").at("counts");
    const bool set_ok = counts.value("floor", 0) == 1 && counts.value("ceiling", 0) == 1 && counts.value("wall", 0) == 4 &&
                        counts.size() == 3;
    const double acc = j.at("labels").at("accuracy").get<double>();
    ok = ok && set_ok && acc == 1.0 && j.at("criteria").at("labels").get<bool>();
    detail += preset + " accuracy " + fmt("%.2f", acc) + "; ";
  }
  // the two targeted negatives
  GravityFrame up;
  const LabelConfig cfg;
  const Vec3 tilted25 = Eigen::AngleAxisd(deg2rad(25.0), Vec3::UnitX()) * Vec3::UnitZ();
  const Vec3 tilted15 = Eigen::AngleAxisd(deg2rad(15.0), Vec3::UnitX()) * Vec3::UnitZ();
  std::vector<GlobalPlane> cone = {patch(tilted15, {0, 0, 2.6}, 2.0, {0, 1}), patch(tilted25, {0, 0, 2.6}, 2.0, {0, 1})};
  const auto lc = label_planes(cone, up, cfg);
  const bool cone_ok = lc[0].label == StructuralLabel::Ceiling && lc[1].label == StructuralLabel::NonStructural;
  std::vector<GlobalPlane> walls = {patch(Vec3::UnitX(), {2, 0, 1}, 2.0, {0}), patch(Vec3::UnitX(), {2, 0, 1}, 2.0, {0, 3})};
  const auto lw = label_planes(walls, up, cfg);
  const bool views_ok = lw[0].label == StructuralLabel::NonStructural && lw[1].label == StructuralLabel::Wall;
  detail += std::string("25 deg ceiling rejected: ") + (cone_ok ? "yes" : "no") +
            "; single-view wall rejected: " + (views_ok ? "yes" : "no");
  return {ok && cone_ok && views_ok, detail};
}

// ---- 4: fusion

LocalObjectCandidate candidate_for(const Aabb& b, int view, std::int64_t id, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0, 1);
  LocalObjectCandidate c;
  c.source_view = view;
  c.instance_id = id;
  c.geometry.points = {b.min, b.max, b.min + (b.max - b.min).cwiseProduct(Vec3(t(rng), t(rng), t(rng)))};
  return c;
}

Outcome fusion() {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> view(0, 4), id(0, 7), which(0, 5);
  std::uniform_real_distribution<double> jit(-0.15, 0.15);
  FusionConfig cfg;
  int seq_bad = 0;
  for (int seq = 0; seq < 100; ++seq) {
    std::vector<Aabb> bases;
    for (int k = 0; k < 6; ++k) bases.push_back(random_box(rng, 2.0, 1.0));
    std::vector<LocalObjectCandidate> cands;
    std::vector<oracle::Detection> dets;
    for (int i = 0; i < 20; ++i) {
      Aabb b = bases[which(rng)];
      for (int k = 0; k < 3; ++k) {
        b.min[k] += jit(rng);
        b.max[k] += jit(rng);
        if (b.max[k] <= b.min[k]) b.max[k] = b.min[k] + 0.05;
      }
      auto c = candidate_for(b, view(rng), id(rng), rng);
      dets.push_back({c.source_view, c.instance_id, to_oracle(Aabb::of(c.geometry.points))});
      cands.push_back(std::move(c));
    }
    std::vector<std::vector<std::size_t>> got;
    for (const auto& o : fuse(cands, cfg)) {
      std::vector<std::size_t> g;
      for (const auto& obs : o.view_observations) g.push_back(obs.candidate_index);
      got.push_back(std::move(g));
    }
    if (got != oracle::brute_unionfind_fusion(dets, cfg.kappa)) ++seq_bad;
  }
  int iou_bad = 0;
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const auto a = random_box(rng, 1.0, 1.5), b = random_box(rng, 1.0, 1.5);
    const double got = iou_3d(a, b), want = oracle::brute_iou(to_oracle(a), to_oracle(b));
    const double scale = std::max(std::fabs(got), std::fabs(want));
    const double rel = scale > 0 ? std::fabs(got - want) / scale : 0.0;
    worst = std::max(worst, rel);
    if (rel > 1e-12) ++iou_bad;
  }
  return {seq_bad == 0 && iou_bad == 0, std::to_string(seq_bad) + "/100 partition mismatches, " + std::to_string(iou_bad) +
                                            "/10000 IoU mismatches, worst relative error " + fmt("%.2e", worst)};
}

// ---- 5: MST

Outcome mst() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 7);
  int bad = 0, not_tree = 0;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = size(rng);
    std::vector<Component> cs;
    for (int i = 0; i < n; ++i) {
      const auto b = random_box(rng, t % 2 ? 0.6 : 4.0, 1.2);
      cs.push_back({b, b.centroid()});
    }
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double s = oracle::brute_iou(to_oracle(cs[i].bbox), to_oracle(cs[j].bbox));
        w[i][j] = 1.0 - s + (s == 0.0 ? std::min((cs[i].centroid - cs[j].centroid).norm(), 10.0) / 10.0 : 0.0);
      }
    }
    const auto want = oracle::brute_mst(w);
    const auto tree = mst_candidate_pool(similarity_matrix(cs), cs);
    double got = 0.0;
    for (auto [a, b] : tree) got += w[a][b];
    worst = std::max(worst, std::fabs(got - want.weight));
    if (std::fabs(got - want.weight) > 1e-9) ++bad;
    // spanning: n-1 edges, no cycle
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    bool tree_ok = tree.size() + 1 == static_cast<std::size_t>(n);
    for (auto [a, b] : tree) {
      const int ra = find(a), rb = find(b);
      tree_ok = tree_ok && ra != rb;
      parent[ra] = rb;
    }
    if (!tree_ok) ++not_tree;
  }
  return {bad == 0 && not_tree == 0, std::to_string(bad) + "/200 weight mismatches, " + std::to_string(not_tree) +
                                         " non-trees, worst gap " + fmt("%.1e", worst)};
}

// ---- 6: retrieval

Hpsg bare_graph(const std::vector<std::vector<float>>& emb, const std::vector<std::pair<int, int>>& edges) {
  Hpsg g;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    Node n;
    n.node_id = static_cast<int>(i);
    n.level = kObjectLevel;
    n.caption = "n";
    n.payload = ObjectInfo{};
    n.embedding = emb[i];
    g.nodes.push_back(std::move(n));
  }
  for (auto [a, b] : edges) g.edges.push_back({static_cast<int>(g.edges.size()), a, b, 2, "next_to", 0.0});
  g.rebuild_adjacency();
  return g;
}

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(dim);
  double s = 0.0;
  for (auto& x : v) {
    x = u(rng);
    s += static_cast<double>(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
  return v;
}

Outcome retrieval() {
  std::mt19937_64 rng(12);
  int topk_bad = 0, tau_bad = 0, bfs_bad = 0;
  for (std::size_t n : {10u, 1000u, 10000u}) {
    std::vector<std::vector<float>> emb;
    for (std::size_t i = 0; i < n; ++i) emb.push_back(i > 0 && i % 7 == 0 ? emb[i / 2] : random_unit(rng, 16));
    const auto g = bare_graph(emb, {});
    const auto qv = random_unit(rng, 16);
    const auto scores = score_nodes(g, qv, 0.07);
    for (std::size_t k : {1u, 5u, 50u}) {
      if (top_k_seeds(scores, k) != oracle::brute_topk(scores, k)) ++topk_bad;
    }
    const auto base = top_k_seeds(score_nodes(g, qv, 0.01), std::min<std::size_t>(50, n));
    for (double tau : {0.07, 1.0}) {
      if (top_k_seeds(score_nodes(g, qv, tau), std::min<std::size_t>(50, n)) != base) ++tau_bad;
    }
  }
  std::uniform_int_distribution<int> size(1, 100);
  for (int t = 0; t < 500; ++t) {
    const int n = size(rng);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<std::pair<int, int>> edges;
    const int m = std::uniform_int_distribution<int>(0, 2 * n)(rng);
    for (int i = 0; i < m; ++i) {
      const int a = pick(rng), b = pick(rng);
      if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    const auto g = bare_graph(std::vector<std::vector<float>>(n, {1.0f}), edges);
    std::vector<int> seeds;
    const int k = std::uniform_int_distribution<int>(1, std::min(n, 5))(rng);
    for (int i = 0; i < k; ++i) seeds.push_back(pick(rng));
    const auto sub = expand_two_hop(g, seeds, std::vector<double>(n, 1.0));
    if (sub.node_ids != oracle::brute_bfs2(n, edges, seeds)) ++bfs_bad;
  }
  return {topk_bad == 0 && tau_bad == 0 && bfs_bad == 0,
          std::to_string(topk_bad) + "/9 top-K mismatches, " + std::to_string(tau_bad) + "/6 tau rank changes, " +
              std::to_string(bfs_bad) + "/500 two-hop mismatches"};
}

// ---- 7: determinism

Outcome determinism() {
  const auto dir = fresh("c7");
  must(sh("synth room --out " + q(dir / "scene")), "synth");
  struct Variant {
    std::string name;
    int threads;
  };
  const std::vector<Variant> runs = {{"a", 1}, {"b", 1}, {"c", 4}};
  for (const auto& v : runs) {
    must(sh("parse " + q(dir / "scene") + " --threads " + std::to_string(v.threads) + " --out " + q(dir / v.name)),
         "parse");
    must(sh("build-graph " + q(dir / v.name) + " --out " + q(dir / v.name / "graph.json")), "build-graph");
  }
  int differing = 0;
  std::string which;
  for (const char* f : {"planes.json", "objects.json", "graph.json"}) {
    const auto ref = slurp(dir / "a" / f);
    for (const char* other : {"b", "c"}) {
      if (slurp(dir / other / f) != ref) {
        ++differing;
        which += std::string(" ") + other + "/" + f;
      }
    }
  }
  return {differing == 0, differing == 0 ? "3 files identical across 2 runs and threads {1, 4}"
                                         : std::to_string(differing) + " files differ:" + which};
}

// ---- 8 and 9 share the chain

struct Chain {
  Hpsg graph;
  std::string context;
  double seconds = 0.0;
};

Chain run_chain(const std::string& preset, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  must(sh("synth " + preset + " --out " + q(dir / "scene")), "synth");
  must(sh("parse " + q(dir / "scene") + " --out " + q(dir / "parsed")), "parse");
  must(sh("build-graph " + q(dir / "parsed") + " --out " + q(dir / "graph.json")), "build-graph");
  const auto r = sh("query " + q(dir / "graph.json") + " --q 'what is on the table' --context-only");
  must(r, "query");
  Chain c;
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.graph = load_graph(dir / "graph.json");
  c.context = r.out;
  return c;
}

int node_tagged(const Hpsg& g, const std::string& tag) {
  for (const auto& n : g.nodes) {
    if (const auto* o = std::get_if<ObjectInfo>(&n.payload); o && o->canonical_tag == tag) return n.node_id;
  }
  return -1;
}

bool has_line(const std::string& text, const std::string& line) {
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) {
    if (l == line) return true;
  }
  return false;
}

Outcome end_to_end() {
  const auto c = run_chain("room", fresh("c8"));
  const int cup = node_tagged(c.graph, "cup"), table = node_tagged(c.graph, "table");
  if (cup < 0 || table < 0) return {false, "cup or table missing from the graph"};
  const bool cup_in = c.context.find(render_node_line(c.graph.node(cup))) != std::string::npos;
  const bool table_in = c.context.find(render_node_line(c.graph.node(table))) != std::string::npos;
  const bool edge_in = has_line(c.context, render_edge_line({0, cup, table, 2, "on", 0.0}));
  const bool fast = c.seconds < 60.0;
  std::string detail = std::string("cup ") + (cup_in ? "yes" : "no") + ", table " + (table_in ? "yes" : "no") +
                       ", cup-on-table edge " + (edge_in ? "yes" : "no") + ", " + fmt("%.1f", c.seconds) + " s";
  return {cup_in && table_in && edge_in && fast, detail};
}

Outcome efficiency() {
  const auto c = run_chain("office", fresh("c9"));
  std::size_t objects = 0;
  for (const auto& n : c.graph.nodes) objects += n.level == kObjectLevel;
  StubAnnotator stub(c.graph.meta.embedding_dim, 0);
  const auto scores = score_nodes(c.graph, stub.embed_text("what is on the table"), 0.07);
  const auto full = whitespace_tokens(render_full_graph(c.graph, scores));
  const auto ctx = whitespace_tokens(c.context);
  const double ratio = full ? static_cast<double>(ctx) / full : 1.0;
  return {ratio <= 0.40 && objects >= 30, std::to_string(objects) + " objects, context " + std::to_string(ctx) +
                                              " tokens vs full " + std::to_string(full) + ", ratio " +
                                              fmt("%.3f", ratio) + " (limit 0.40)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hpsg acceptance"};
  std::string work = (fs::temp_directory_path() / "hpsg_acceptance").string();
  int only = 0;
  app.add_option("--cli", g_cli, "Path to the hpsg binary")->required();
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run a single criterion");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"plane pipeline on room", plane_pipeline},
      {"inlier sets equal brute force", ransac_exactness},
      {"structural labels", labeling},
      {"fusion replay and IoU", fusion},
      {"MST optimality", mst},
      {"retrieval top-K, tau, two-hop", retrieval},
      {"determinism", determinism},
      {"end to end query", end_to_end},
      {"context size on office", efficiency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
