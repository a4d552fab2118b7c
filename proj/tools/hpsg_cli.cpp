// hpsg: parse | build-graph | query | synth | eval
//
// stdout carries JSON (or the raw context with --context-only); diagnostics
// go to stderr. Exit codes: 0 ok, 1 usage, 2 bad input, 3 empty scene,
// 4 malformed graph, 5 ground truth missing, 6 processing failure.

#include "hpsg/error.hpp"
#include "hpsg/pipeline.hpp"
#include "hpsg/synth_bench.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kInput = 2, kEmpty = 3, kBadGraph = 4, kNoTruth = 5, kFailure = 6 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

hpsg::PipelineConfig resolve_config(const Common& c) {
  hpsg::PipelineConfig cfg;
  if (!c.config.empty()) cfg = hpsg::load_config(c.config);
  if (c.seed) {
    cfg.rng_seed = *c.seed;
    cfg.plane.rng_seed = *c.seed;
    cfg.annotation.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

void emit(const json& j) { std::cout << j.dump(1) << "\n"; }

int run_parse(const std::string& scene, const std::string& out, const Common& common, unsigned threads,
              std::optional<double> tau_conf, bool dry_run) {
  auto cfg = resolve_config(common);
  if (tau_conf) cfg.tau_conf = *tau_conf;
  cfg.validate();
  const fs::path manifest = hpsg::manifest_path(scene);
  if (!fs::exists(manifest)) {
    throw hpsg::IngestError(hpsg::IngestError::Kind::MissingFile, -1, "manifest", "missing manifest " + manifest.string());
  }
  const auto views = hpsg::load_scene(manifest);
  const fs::path scene_dir = manifest.parent_path();
  std::vector<hpsg::CaptionRecord> captions;
  if (fs::exists(scene_dir / "captions.json")) captions = hpsg::load_captions(scene_dir / "captions.json");
  if (dry_run) {
    std::size_t masks = 0;
    for (const auto& v : views) masks += v.masks.size();
    emit(json{{"dry_run", true}, {"views", views.size()}, {"masks", masks}, {"captions", captions.size()}});
    return kOk;
  }
  if (out.empty()) throw UsageError("parse needs --out");
  const auto t0 = std::chrono::steady_clock::now();
  const auto parsed = hpsg::parse_views(views, captions, cfg, threads);
  hpsg::write_parsed(out, parsed);
  std::map<std::string, int> labels;
  for (const auto& p : parsed.planes) ++labels[std::string(hpsg::to_string(p.label))];
  std::cerr << "parse: " << parsed.planes.size() << " planes, " << parsed.objects.size() << " objects in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  emit(json{{"planes", parsed.planes.size()}, {"labels", labels}, {"objects", parsed.objects.size()}});
  return kOk;
}

int run_build(const std::string& parsed_dir, const std::string& out, const Common& common,
              const std::string& timestamp) {
  const auto cfg = resolve_config(common);
  const auto parsed = hpsg::read_parsed(parsed_dir);
  auto annotator = hpsg::make_annotator(cfg.annotation);
  const auto g = hpsg::build_graph(parsed, *annotator, cfg, timestamp);
  hpsg::save_graph(g, out);
  if (g.meta.annotator_fallbacks > 0) {
    std::cerr << "build-graph: annotator fell back to stubs " << g.meta.annotator_fallbacks << " times\n";
  }
  emit(json{{"nodes", g.nodes.size()}, {"edges", g.edges.size()}, {"annotator", g.meta.annotator},
            {"annotator_fallbacks", g.meta.annotator_fallbacks}});
  return kOk;
}

int run_query(const std::string& graph_path, const std::string& q, std::optional<long long> k,
              std::optional<double> tau, bool context_only, const Common& common, unsigned threads) {
  if (k && *k < 1) throw UsageError("--k must be at least 1");
  if (tau && !(*tau > 0.0)) throw UsageError("--tau must be positive");
  const auto cfg = resolve_config(common);
  if (!fs::exists(graph_path)) throw hpsg::GraphFormatError("graph file not found: " + graph_path);
  const auto g = hpsg::load_graph(graph_path);
  hpsg::QueryRequest req;
  req.query_text = q;
  req.k = k ? static_cast<std::size_t>(*k) : cfg.retrieval.k;
  req.tau = tau ? *tau : cfg.retrieval.tau;
  auto acfg = cfg.annotation;
  acfg.embedding_dim = g.meta.embedding_dim;
  auto annotator = hpsg::make_annotator(acfg);
  const auto sub = hpsg::retrieve(g, *annotator, req, threads);
  if (context_only) {
    std::cout << sub.context_text;
  } else {
    emit(hpsg::to_json(sub));
  }
  return kOk;
}

int run_synth(const std::string& preset, const std::string& out, double rot, std::optional<std::uint64_t> seed,
              std::optional<double> sigma) {
  auto spec = hpsg::preset_spec(preset, rot, seed.value_or(0));
  if (sigma) spec.sigma = *sigma;
  const auto gt = hpsg::generate(spec, out);
  emit(json{{"preset", preset},
            {"views", spec.n_views},
            {"planes", gt.planes.size()},
            {"objects", gt.objects.size()},
            {"relations", gt.relations.size()}});
  return kOk;
}

int run_eval(const std::string& scene, const std::string& preset, double rot, std::optional<std::uint64_t> seed,
             std::optional<double> sigma, std::string work, const Common& common, unsigned threads, bool as_json) {
  const auto cfg = resolve_config(common);
  fs::path dir;
  if (!preset.empty()) {
    if (work.empty()) work = (fs::temp_directory_path() / ("hpsg_eval_" + preset)).string();
    auto spec = hpsg::preset_spec(preset, rot, seed.value_or(0));
    if (sigma) spec.sigma = *sigma;
    hpsg::generate(spec, work);
    dir = work;
  } else {
    if (scene.empty()) throw UsageError("eval needs a scene directory or --preset");
    dir = fs::is_directory(scene) ? fs::path(scene) : fs::path(scene).parent_path();
  }
  const auto report = hpsg::evaluate_scene(dir, cfg, threads);
  if (as_json) {
    emit(report);
  } else {
    std::cout << "preset " << report.value("preset", "") << "\n";
    for (const auto& [name, ok] : report.at("criteria").items()) {
      std::cout << (ok.get<bool>() ? "PASS " : "FAIL ") << name << "\n";
    }
    if (!report.at("error").is_null()) std::cout << "error: " << report.at("error").get<std::string>() << "\n";
  }
  return kOk;
}

int fail(int code, const std::string& module, const std::string& message) {
  std::cerr << "hpsg: error";
  if (!module.empty()) std::cerr << " [" << module << "]";
  std::cerr << ": " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical plane-enhanced scene graphs from sparse-view reconstructions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hpsg 0.1.0");

  Common common;
  unsigned threads = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Pipeline config (JSON)");
    sub->add_option("--seed", common.seed, "Override rng_seed");
  };

  std::string scene, out, graph, query_text, preset, work, timestamp = "1970-01-01T00:00:00Z";
  std::optional<double> tau_conf, tau, sigma;
  std::optional<long long> k;
  std::optional<std::uint64_t> synth_seed;
  double rot = 15.0;
  bool dry_run = false, context_only = false, as_json = false;

  auto* parse = app.add_subcommand("parse", "Detect planes, label structure and fuse objects");
  parse->add_option("scene", scene, "Scene directory or scene.json")->required();
  parse->add_option("--out", out, "Output directory for planes.json and objects.json");
  parse->add_option("--threads", threads, "Worker threads for per-view stages")->check(CLI::PositiveNumber);
  parse->add_option("--tau-conf", tau_conf, "Confidence threshold");
  parse->add_flag("--dry-run", dry_run, "Validate inputs only");
  add_common(parse);

  auto* build = app.add_subcommand("build-graph", "Assemble the scene graph from parse outputs");
  build->add_option("parsed", scene, "Directory holding planes.json and objects.json")->required();
  build->add_option("--out", out, "Output graph.json")->required();
  build->add_option("--timestamp", timestamp, "Value recorded as meta.build_timestamp");
  add_common(build);

  auto* query = app.add_subcommand("query", "Retrieve a query-focused subgraph");
  query->add_option("graph", graph, "graph.json")->required();
  query->add_option("--q", query_text, "Query text")->required();
  query->add_option("--k", k, "Number of seed nodes");
  query->add_option("--tau", tau, "Softmax temperature");
  query->add_flag("--context-only", context_only, "Print only the rendered context");
  query->add_option("--threads", threads, "Scoring threads")->check(CLI::PositiveNumber);
  add_common(query);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  synth->add_option("preset", preset, "room | office | tilted-room | two-rooms")->required();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--rot", rot, "Tilt in degrees for tilted-room");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--sigma", sigma, "Surface noise sigma in meters");

  auto* eval = app.add_subcommand("eval", "Score the pipeline against synthetic ground truth");
  eval->add_option("scene", scene, "Scene directory with ground_truth.json");
  eval->add_option("--preset", preset, "Synthesize this preset first");
  eval->add_option("--rot", rot, "Tilt for tilted-room");
  eval->add_option("--synth-seed", synth_seed, "Generator seed for --preset");
  eval->add_option("--sigma", sigma, "Noise sigma for --preset");
  eval->add_option("--work", work, "Where to write the synthesized scene");
  eval->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  eval->add_flag("--json", as_json, "Emit the metrics as JSON");
  add_common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*parse) return run_parse(scene, out, common, threads, tau_conf, dry_run);
    if (*build) return run_build(scene, out, common, timestamp);
    if (*query) return run_query(graph, query_text, k, tau, context_only, common, threads);
    if (*synth) return run_synth(preset, out, rot, synth_seed, sigma);
    if (*eval) return run_eval(scene, preset, rot, synth_seed, sigma, work, common, threads, as_json);
  } catch (const UsageError& e) {
    return fail(kUsage, "", e.what());
  } catch (const hpsg::EmptySceneError& e) {
    return fail(kEmpty, e.module(), e.what());
  } catch (const hpsg::GraphFormatError& e) {
    return fail(kBadGraph, e.module(), e.what());
  } catch (const hpsg::GroundTruthMissing& e) {
    return fail(kNoTruth, e.module(), e.what());
  } catch (const hpsg::IngestError& e) {
    return fail(kInput, e.module(), e.what());
  } catch (const hpsg::ConfigError& e) {
    return fail(kInput, e.module(), e.what());
  } catch (const hpsg::Error& e) {
    return fail(kFailure, e.module(), e.what());
  } catch (const std::exception& e) {
    return fail(kFailure, "", e.what());
  }
  return kUsage;
}
