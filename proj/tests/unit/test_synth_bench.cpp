#include "doctest.h"
#include "fixtures.hpp"

#include "hpsg/error.hpp"
#include "hpsg/synth_bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

using namespace hpsg;
namespace fs = std::filesystem;

namespace {

// Same room, fewer and smaller views, so the tests stay quick.
SceneSpec small_room() {
  auto s = preset_spec("room");
  s.n_views = 3;
  s.image_width = 64;
  s.image_height = 48;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_label(const GroundTruth& gt, StructuralLabel l) {
  return static_cast<int>(std::count_if(gt.planes.begin(), gt.planes.end(), [&](const GtPlane& p) { return p.label == l; }));
}

}  // namespace

TEST_CASE("room preset ground truth") {
  const auto scene = synthesize(small_room());
  const auto& gt = scene.truth;
  REQUIRE(gt.planes.size() == 6);
  CHECK(count_label(gt, StructuralLabel::Floor) == 1);
  CHECK(count_label(gt, StructuralLabel::Ceiling) == 1);
  CHECK(count_label(gt, StructuralLabel::Wall) == 4);
  REQUIRE(gt.objects.size() == 5);
  CHECK(gt.objects[0].tag == "table");
  CHECK(gt.objects[1].tag == "cup");
  REQUIRE(gt.relations.size() == 1);
  CHECK(gt.relations[0].a == 1);
  CHECK(gt.relations[0].b == 0);
  CHECK(gt.relations[0].relation == RelationLabel::On);

  REQUIRE(scene.views.size() == 3);
  for (const auto& v : scene.views) {
    CHECK_NOTHROW(validate_view(v));
    CHECK(v.width == 64);
  }
  REQUIRE(gt.pixel_labels.size() == 3);
  CHECK(gt.pixel_labels[0].size() == 64u * 48u);
  CHECK_FALSE(scene.captions.empty());
}

TEST_CASE("tilted room rotates the plane normals") {
  auto s = preset_spec("tilted-room", 15.0);
  s.n_views = 2;
  s.image_width = 32;
  s.image_height = 24;
  const auto gt = synthesize(s).truth;
  CHECK(gt.rotation_deg == 15.0);
  for (const auto& p : gt.planes) {
    if (p.label != StructuralLabel::Floor) continue;
    CHECK(rad2deg(std::acos(std::abs(p.params.normal.z()))) == doctest::Approx(15.0).epsilon(1e-9));
  }
}

TEST_CASE("generate writes a loadable, reproducible scene") {
  fixture::TempDir a("synth_a"), b("synth_b");
  const auto gt = generate(small_room(), a.path());
  generate(small_room(), b.path());
  for (const auto* name : {"scene.json", "captions.json", "ground_truth.json", "views/v000_gt.i32"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const auto views = load_scene(a / "scene.json");
  CHECK(views == synthesize(small_room()).views);
  const auto loaded = load_ground_truth(a.path());
  CHECK(loaded.planes.size() == gt.planes.size());
  CHECK(loaded.pixel_labels == gt.pixel_labels);
  CHECK(load_captions(a / "captions.json").size() == synthesize(small_room()).captions.size());

  // a different seed changes the noise
  auto other = small_room();
  other.rng_seed = 9;
  CHECK(synthesize(other).views != views);
}

TEST_CASE("infeasible specs are refused") {
  auto s = small_room();
  SUBCASE("overlapping objects") {
    s.objects.push_back({"box", fixture::box(-0.5, 0.5, -0.3, 0.3, 0.2, 0.6), std::nullopt});
    CHECK_THROWS_WITH_AS(synthesize(s), doctest::Contains("infeasible placement"), Error);
  }
  SUBCASE("object outside the room") {
    s.objects.push_back({"box", fixture::box(2.8, 3.5, 0, 0.5, 0, 0.5), std::nullopt});
    CHECK_THROWS_AS(synthesize(s), Error);
  }
  SUBCASE("floating on its support") {
    s.objects[1].box.min.z() += 0.1;
    CHECK_THROWS_AS(synthesize(s), Error);
  }
  SUBCASE("bad parameters") {
    s.sigma = -1;
    CHECK_THROWS_AS(synthesize(s), ConfigError);
  }
  CHECK_THROWS_AS(preset_spec("garage"), ConfigError);
}

TEST_CASE("missing ground truth") {
  fixture::TempDir dir("nogt");
  CHECK_THROWS_AS(load_ground_truth(dir.path()), GroundTruthMissing);
}
