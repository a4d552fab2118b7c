#include "doctest.h"
#include "fixtures.hpp"

#include "hpsg/annotation.hpp"
#include "hpsg/error.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

using namespace hpsg;
using nlohmann::json;

namespace {

ObjectSummary summary(const Aabb& b, std::string caption = "x") {
  return {std::move(caption), b.centroid(), b};
}

double norm(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::string fake(const std::string& mode, std::size_t dim = 4) {
  return std::string(HPSG_FAKE_ANNOTATOR) + " " + mode + " " + std::to_string(dim);
}

struct EnvGuard {
  explicit EnvGuard(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~EnvGuard() { ::unsetenv(name_); }
  const char* name_;
};

}  // namespace

TEST_CASE("stub caption refinement") {
  const auto one = stub_refine_captions({"a red mug"});
  CHECK(one.caption == "a red mug");
  CHECK(one.canonical_tag == "mug");
  CHECK(one.tag_set == std::vector<std::string>{"mug", "red"});

  CHECK(stub_refine_captions({"chair", "a wooden chair near desk"}).caption == "a wooden chair near desk");
  CHECK(stub_refine_captions({"chair", "a wooden chair near desk"}).canonical_tag == "chair");
  CHECK(stub_refine_captions({}).caption == "object");

  const std::vector<std::string> raw = {"a white cup on the table", "cup", "a mug"};
  const auto first = stub_refine_captions(raw);
  for (int i = 0; i < 100; ++i) CHECK(stub_refine_captions(raw) == first);
}

TEST_CASE("stub relation rules") {
  const auto table = fixture::box(-0.6, 0.6, -0.4, 0.4, 0.0, 0.75);
  const auto cup = fixture::box(0.1, 0.2, -0.05, 0.05, 0.75, 0.87);
  CHECK(stub_estimate_relation(summary(cup), summary(table)) == RelationLabel::On);
  CHECK(stub_estimate_relation(summary(table), summary(cup)) != RelationLabel::On);

  const auto shelf = fixture::box(0, 1, 0, 0.4, 0, 2);
  const auto book = fixture::box(0.2, 0.3, 0.1, 0.3, 0.5, 0.8);
  CHECK(stub_estimate_relation(summary(book), summary(shelf)) == RelationLabel::In);

  const auto far = fixture::box(5.2, 5.3, -0.05, 0.05, 0, 0.1);
  CHECK(stub_estimate_relation(summary(far), summary(cup)) == RelationLabel::None);

  const auto beside = fixture::box(0.7, 1.0, -0.2, 0.2, 0.0, 0.5);
  CHECK(stub_estimate_relation(summary(beside), summary(table)) == RelationLabel::NextTo);
}

TEST_CASE("stub 'on' is antisymmetric for stacked boxes") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1), h(0.1, 0.8), gap(0.0, 0.04);
  int checked = 0;
  for (int t = 0; t < 2000; ++t) {
    auto b = fixture::random_box(rng, 1.0, 1.0);
    b.max[2] = b.min[2] + h(rng);
    Aabb a;
    a.min = {b.min[0] + 0.3 * u(rng), b.min[1] + 0.3 * u(rng), b.max[2] + gap(rng)};
    a.max = a.min + Vec3(0.4, 0.4, h(rng));
    const auto ab = stub_estimate_relation(summary(a), summary(b));
    const auto ba = stub_estimate_relation(summary(b), summary(a));
    if (ab == RelationLabel::On) {
      ++checked;
      CHECK(ba != RelationLabel::On);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("stub scene type") {
  CHECK(stub_summarize_scene_type({"a black monitor on the desk"}) == "office");
  CHECK(stub_summarize_scene_type({"a bed"}) == "room");
  CHECK(stub_summarize_scene_type({}) == "room");
}

TEST_CASE("stub embeddings") {
  const auto a = stub_embed_text("a white cup", 384, 0);
  CHECK(a == stub_embed_text("a white cup", 384, 0));
  CHECK(a.size() == 384);
  CHECK(std::abs(norm(a) - 1.0) < 1e-5);
  CHECK(a != stub_embed_text("a white cup", 384, 1));
  // stopwords do not change the vector
  CHECK(stub_embed_text("what is on the table", 384, 0) == stub_embed_text("table", 384, 0));

  std::set<std::vector<float>> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(stub_embed_text("token" + std::to_string(i), 384, 0));
  CHECK(seen.size() >= 990);

  for (std::size_t dim : {1u, 3u, 17u}) CHECK(std::abs(norm(stub_embed_text("odd", dim, 2)) - 1.0) < 1e-5);
}

TEST_CASE("tokenize and stopwords") {
  CHECK(tokenize("A Red-Mug, on  the desk!") == std::vector<std::string>{"a", "red", "mug", "on", "the", "desk"});
  CHECK(is_stopword("the"));
  CHECK_FALSE(is_stopword("table"));
}

TEST_CASE("relation strings") {
  for (auto r : {RelationLabel::On, RelationLabel::In, RelationLabel::NextTo, RelationLabel::None}) {
    CHECK(relation_from_string(to_string(r)) == r);
  }
  CHECK(to_string(RelationLabel::NextTo) == "next_to");
  CHECK_THROWS(relation_from_string("under"));
}

TEST_CASE("protocol envelope") {
  const auto req = make_request(7, "embed", json{{"text", "x"}});
  CHECK(req["request_id"] == 7);
  CHECK(req["role"] == "embed");
  CHECK(req["payload"]["text"] == "x");
  CHECK(unwrap_response(json{{"request_id", 7}, {"ok", true}, {"result", 3}}, 7) == 3);
  CHECK_THROWS_AS(unwrap_response(json{{"request_id", 8}, {"ok", true}, {"result", 3}}, 7), AnnotatorError);
  CHECK_THROWS_AS(unwrap_response(json{{"request_id", 7}, {"ok", false}}, 7), AnnotatorError);
  CHECK_THROWS_AS(unwrap_response(json::array(), 7), AnnotatorError);
  try {
    unwrap_response(json{{"request_id", 7}, {"ok", false}}, 7);
  } catch (const AnnotatorError& e) {
    CHECK(e.request_id() == 7);
  }
}

TEST_CASE("stdio backend") {
  SUBCASE("well-behaved backend answers every role") {
    RemoteAnnotator remote(std::make_unique<ProcessTransport>(fake("ok"), 5000), 4);
    const auto r = remote.refine_captions({"a"}, "t");
    CHECK(r.caption == "remote caption");
    CHECK(r.tag_set == std::vector<std::string>{"thing", "zeta"});
    CHECK(remote.estimate_relation(summary(fixture::box(0, 1, 0, 1, 0, 1)), summary(fixture::box(0, 1, 0, 1, 0, 1))) ==
          RelationLabel::In);
    CHECK(remote.summarize_scene_type({"x"}) == "kitchen");
    const auto e = remote.embed_text("hello");
    CHECK(e[0] == doctest::Approx(0.6));
    CHECK(e[1] == doctest::Approx(0.8));
  }
  SUBCASE("misbehaving backends raise AnnotatorError") {
    for (const char* mode : {"wrong-id", "not-json", "refuse", "exit"}) {
      CAPTURE(mode);
      RemoteAnnotator remote(std::make_unique<ProcessTransport>(fake(mode), 5000), 4);
      CHECK_THROWS_AS(remote.embed_text("x"), AnnotatorError);
    }
  }
  SUBCASE("wrong embedding dimension is rejected") {
    RemoteAnnotator remote(std::make_unique<ProcessTransport>(fake("ok", 3), 5000), 4);
    CHECK_THROWS_AS(remote.embed_text("x"), AnnotatorError);
  }
  SUBCASE("silent backend times out") {
    RemoteAnnotator remote(std::make_unique<ProcessTransport>(fake("silent"), 200), 4);
    CHECK_THROWS_AS(remote.summarize_scene_type({}), AnnotatorError);
  }
}

TEST_CASE("fallback answers with the stub and counts") {
  FallbackAnnotator fb(std::make_unique<RemoteAnnotator>(std::make_unique<ProcessTransport>(fake("refuse"), 5000), 8),
                       StubAnnotator(8, 0));
  CHECK(fb.summarize_scene_type({"a monitor"}) == "office");
  CHECK(fb.embed_text("cup") == stub_embed_text("cup", 8, 0));
  CHECK(fb.fallback_count() == 2);
}

TEST_CASE("make_annotator selects by environment") {
  AnnotationConfig cfg;
  cfg.embedding_dim = 4;
  {
    auto a = make_annotator(cfg);
    CHECK(a->name() == "stub");
  }
  {
    EnvGuard env("HPSG_ANNOTATOR_CMD", fake("ok"));
    auto a = make_annotator(cfg);
    CHECK(a->summarize_scene_type({}) == "kitchen");
    CHECK(a->fallback_count() == 0);
  }
  {
    EnvGuard env("HPSG_ANNOTATOR_CMD", "/nonexistent/backend");
    auto a = make_annotator(cfg);
    CHECK(a->summarize_scene_type({"desk"}) == "office");
    CHECK(a->fallback_count() == 1);
  }
}

TEST_CASE("captions file and selection") {
  fixture::TempDir dir("cap");
  const std::vector<CaptionRecord> recs = {
      {1, 0, "a cup", 0.7}, {1, 1, "a white cup", 0.9}, {2, 0, "a table", 0.95}, {1, 2, "cup", 0.9},
      {1, 3, "mug", 0.5},   {1, 4, "a small cup", 0.6}, {1, 5, "a cup again", 0.8}};
  save_captions(dir / "captions.json", recs);
  CHECK(load_captions(dir / "captions.json") == recs);

  const std::vector<std::pair<int, std::int64_t>> dets = {{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}};
  const auto sel = select_captions(recs, dets);
  CHECK(sel == std::vector<std::string>{"a white cup", "cup", "a cup again", "a cup", "a small cup"});
  CHECK(select_captions(recs, dets, 2).size() == 2);
  const std::vector<std::pair<int, std::int64_t>> none = {{9, 9}};
  CHECK(select_captions(recs, none).empty());
}
