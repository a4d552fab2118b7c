// Thin wrappers over the file-based pipeline. Results come back as dicts
// parsed from the same JSON the CLI prints.

#include "hpsg/error.hpp"
#include "hpsg/pipeline.hpp"
#include "hpsg/synth_bench.hpp"

#include "json.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

hpsg::PipelineConfig config_of(const std::optional<std::string>& path) {
  return path ? hpsg::load_config(*path) : hpsg::PipelineConfig{};
}

py::object synth(const std::string& preset, const std::string& out, double rot, std::uint64_t seed,
                 std::optional<double> sigma) {
  auto spec = hpsg::preset_spec(preset, rot, seed);
  if (sigma) spec.sigma = *sigma;
  const auto gt = hpsg::generate(spec, out);
  return to_py(json{{"preset", preset}, {"planes", gt.planes.size()}, {"objects", gt.objects.size()},
                    {"relations", gt.relations.size()}});
}

py::object parse(const std::string& scene, const std::string& out, unsigned threads,
                 const std::optional<std::string>& config) {
  const auto cfg = config_of(config);
  const auto manifest = hpsg::manifest_path(scene);
  const auto views = hpsg::load_scene(manifest);
  std::vector<hpsg::CaptionRecord> captions;
  const auto cap = manifest.parent_path() / "captions.json";
  if (std::filesystem::exists(cap)) captions = hpsg::load_captions(cap);
  hpsg::ParsedScene parsed;
  {
    py::gil_scoped_release release;
    parsed = hpsg::parse_views(views, captions, cfg, threads);
  }
  hpsg::write_parsed(out, parsed);
  return to_py(json{{"planes", parsed.planes.size()}, {"objects", parsed.objects.size()}});
}

py::object build_graph(const std::string& parsed_dir, const std::string& out, const std::optional<std::string>& config) {
  const auto cfg = config_of(config);
  auto annotator = hpsg::make_annotator(cfg.annotation);
  const auto g = hpsg::build_graph(hpsg::read_parsed(parsed_dir), *annotator, cfg);
  hpsg::save_graph(g, out);
  return to_py(json{{"nodes", g.nodes.size()}, {"edges", g.edges.size()}});
}

py::object query(const std::string& graph, const std::string& text, std::size_t k, double tau) {
  const auto g = hpsg::load_graph(graph);
  hpsg::AnnotationConfig acfg;
  acfg.embedding_dim = g.meta.embedding_dim;
  auto annotator = hpsg::make_annotator(acfg);
  return to_py(hpsg::to_json(hpsg::retrieve(g, *annotator, {text, k, tau})));
}

std::string full_graph(const std::string& graph) {
  const auto g = hpsg::load_graph(graph);
  return hpsg::render_full_graph(g, std::vector<double>(g.nodes.size(), 1.0));
}

py::object evaluate(const std::string& scene, unsigned threads, const std::optional<std::string>& config) {
  return to_py(hpsg::evaluate_scene(scene, config_of(config), threads));
}

}  // namespace

PYBIND11_MODULE(_hpsg, m) {
  m.doc() = "hpsg scene-graph pipeline";
  m.attr("__version__") = "0.1.0";

  py::register_exception<hpsg::Error>(m, "HpsgError");

  m.def("synth", &synth, py::arg("preset"), py::arg("out"), py::arg("rot") = 15.0, py::arg("seed") = 0,
        py::arg("sigma") = py::none());
  m.def("parse", &parse, py::arg("scene"), py::arg("out"), py::arg("threads") = 1, py::arg("config") = py::none());
  m.def("build_graph", &build_graph, py::arg("parsed"), py::arg("out"), py::arg("config") = py::none());
  m.def("query", &query, py::arg("graph"), py::arg("q"), py::arg("k") = 5, py::arg("tau") = 0.07);
  m.def("render_full_graph", &full_graph, py::arg("graph"));
  m.def("whitespace_tokens", &hpsg::whitespace_tokens, py::arg("text"));
  m.def("evaluate", &evaluate, py::arg("scene"), py::arg("threads") = 1, py::arg("config") = py::none());
}
