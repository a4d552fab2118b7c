#pragma once

#include "hpsg/geometry.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hpsg {

enum class RelationLabel { On, In, NextTo, None };

std::string_view to_string(RelationLabel r);
RelationLabel relation_from_string(std::string_view s);

struct CaptionRefinement {
  std::string caption;
  std::string canonical_tag;
  std::vector<std::string> tag_set;  // sorted, unique

  bool operator==(const CaptionRefinement&) const = default;
};

struct ObjectSummary {
  std::string caption;
  Vec3 centroid = Vec3::Zero();
  Aabb bbox;
};

struct AnnotationConfig {
  std::size_t embedding_dim = 384;
  std::uint64_t seed = 0;
  std::string caption_template =
      "Merge these view captions of one object into a single concise caption, a canonical tag and a tag set:\n{captions}";
  int timeout_ms = 30000;
};

/// Contract shared by the offline stubs and remote model backends.
class Annotator {
 public:
  virtual ~Annotator() = default;

  virtual CaptionRefinement refine_captions(const std::vector<std::string>& raw, const std::string& tmpl) = 0;
  virtual RelationLabel estimate_relation(const ObjectSummary& a, const ObjectSummary& b) = 0;
  virtual std::string summarize_scene_type(const std::vector<std::string>& captions) = 0;
  virtual std::vector<float> embed_text(const std::string& text) = 0;

  virtual std::string name() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  /// Requests answered by the stub after a backend failure.
  virtual std::size_t fallback_count() const { return 0; }
};

// Stub rules. Deterministic and deliberately simple; they stand in for model
// calls in tests and offline runs.
std::vector<std::string> tokenize(std::string_view text);
bool is_stopword(std::string_view token);
CaptionRefinement stub_refine_captions(const std::vector<std::string>& raw);
RelationLabel stub_estimate_relation(const ObjectSummary& a, const ObjectSummary& b);
std::string stub_summarize_scene_type(const std::vector<std::string>& captions);
std::vector<float> stub_embed_text(std::string_view text, std::size_t dim, std::uint64_t seed);

class StubAnnotator final : public Annotator {
 public:
  explicit StubAnnotator(std::size_t dim = 384, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  CaptionRefinement refine_captions(const std::vector<std::string>& raw, const std::string&) override {
    return stub_refine_captions(raw);
  }
  RelationLabel estimate_relation(const ObjectSummary& a, const ObjectSummary& b) override {
    return stub_estimate_relation(a, b);
  }
  std::string summarize_scene_type(const std::vector<std::string>& captions) override {
    return stub_summarize_scene_type(captions);
  }
  std::vector<float> embed_text(const std::string& text) override { return stub_embed_text(text, dim_, seed_); }

  std::string name() const override { return "stub"; }
  std::size_t embedding_dim() const override { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Wire protocol: one JSON object per request/response.
//   request  {"request_id": n, "role": "caption_refine"|"relation"|"scene_type"|"embed", "payload": {...}}
//   response {"request_id": n, "ok": bool, "result": ...}
nlohmann::json make_request(std::uint64_t request_id, std::string_view role, nlohmann::json payload);
/// Returns `result`; throws AnnotatorError on id mismatch, ok=false or bad shape.
nlohmann::json unwrap_response(const nlohmann::json& response, std::uint64_t request_id);
nlohmann::json summary_to_json(const ObjectSummary& s);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual nlohmann::json roundtrip(const nlohmann::json& request, std::uint64_t request_id) = 0;
};

/// Spawns `/bin/sh -c command` once and exchanges line-delimited JSON over
/// its stdin/stdout.
class ProcessTransport final : public Transport {
 public:
  ProcessTransport(std::string command, int timeout_ms);
  ~ProcessTransport() override;
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  nlohmann::json roundtrip(const nlohmann::json& request, std::uint64_t request_id) override;

 private:
  void spawn(std::uint64_t request_id);
  void shutdown();

  std::string command_;
  int timeout_ms_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::mutex mutex_;
};

/// POSTs each request body to a single endpoint, e.g. http://127.0.0.1:8080/annotate.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string url, int timeout_ms);
  nlohmann::json roundtrip(const nlohmann::json& request, std::uint64_t request_id) override;

 private:
  std::string host_;
  std::string path_;
  int timeout_ms_;
};

class RemoteAnnotator final : public Annotator {
 public:
  RemoteAnnotator(std::unique_ptr<Transport> transport, std::size_t dim);

  CaptionRefinement refine_captions(const std::vector<std::string>& raw, const std::string& tmpl) override;
  RelationLabel estimate_relation(const ObjectSummary& a, const ObjectSummary& b) override;
  std::string summarize_scene_type(const std::vector<std::string>& captions) override;
  std::vector<float> embed_text(const std::string& text) override;

  std::string name() const override { return "remote"; }
  std::size_t embedding_dim() const override { return dim_; }

 private:
  nlohmann::json call(std::string_view role, nlohmann::json payload, std::uint64_t& id);

  std::unique_ptr<Transport> transport_;
  std::size_t dim_;
  std::uint64_t next_id_ = 1;
  std::mutex mutex_;
};

/// Routes every request to `primary`; on AnnotatorError answers with the
/// stub and counts the fallback.
class FallbackAnnotator final : public Annotator {
 public:
  FallbackAnnotator(std::unique_ptr<Annotator> primary, StubAnnotator stub);

  CaptionRefinement refine_captions(const std::vector<std::string>& raw, const std::string& tmpl) override;
  RelationLabel estimate_relation(const ObjectSummary& a, const ObjectSummary& b) override;
  std::string summarize_scene_type(const std::vector<std::string>& captions) override;
  std::vector<float> embed_text(const std::string& text) override;

  std::string name() const override { return primary_->name() + "+stub"; }
  std::size_t embedding_dim() const override { return stub_.embedding_dim(); }
  std::size_t fallback_count() const override { return fallbacks_; }

 private:
  template <class Primary, class Stub>
  auto guarded(Primary&& primary, Stub&& stub);

  std::unique_ptr<Annotator> primary_;
  StubAnnotator stub_;
  std::size_t fallbacks_ = 0;
};

/// HPSG_ANNOTATOR_CMD selects a stdio backend, HPSG_ANNOTATOR_URL an HTTP
/// one; with neither set the stubs answer everything.
std::unique_ptr<Annotator> make_annotator(const AnnotationConfig& cfg);

/// One row of captions.json: a per-view caption for one detection.
struct CaptionRecord {
  std::int64_t instance_id = 0;
  int view_id = 0;
  std::string caption;
  double seg_confidence = 0.0;

  bool operator==(const CaptionRecord&) const = default;
};

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);
void save_captions(const std::filesystem::path& path, std::span<const CaptionRecord> records);

/// Captions of the given (view, instance) detections, highest segmentation
/// confidence first, at most `limit`. Ties keep (view, instance) order.
std::vector<std::string> select_captions(std::span<const CaptionRecord> records,
                                         std::span<const std::pair<int, std::int64_t>> detections,
                                         std::size_t limit = 5);

}  // namespace hpsg
