#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace hpsg {

// Base for every failure raised by the library. `module()` names the pipeline
// stage that produced it so the CLI can attribute messages.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class IngestError : public Error {
 public:
  enum class Kind { MissingFile, DimensionMismatch, NonFinite, InvalidValue, Schema };

  IngestError(Kind kind, int view_id, std::string field, const std::string& detail)
      : Error("scene_ingest",
              detail + " (view " + std::to_string(view_id) + ", field '" + field + "')"),
        kind_(kind),
        view_id_(view_id),
        field_(std::move(field)) {}

  Kind kind() const noexcept { return kind_; }
  int view_id() const noexcept { return view_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Kind kind_;
  int view_id_;
  std::string field_;
};

class GravityIndeterminate : public Error {
 public:
  explicit GravityIndeterminate(const std::string& detail)
      : Error("structure_labeling", "gravity indeterminate: " + detail) {}
};

class AnnotatorError : public Error {
 public:
  AnnotatorError(std::uint64_t request_id, const std::string& detail)
      : Error("annotation", "request " + std::to_string(request_id) + ": " + detail),
        request_id_(request_id) {}

  std::uint64_t request_id() const noexcept { return request_id_; }

 private:
  std::uint64_t request_id_;
};

class GraphFormatError : public Error {
 public:
  explicit GraphFormatError(const std::string& detail) : Error("hpsg_graph", detail) {}
};

class EmptySceneError : public Error {
 public:
  EmptySceneError() : Error("hpsg_graph", "scene has no structural planes and no objects") {}
};

class GroundTruthMissing : public Error {
 public:
  explicit GroundTruthMissing(const std::string& detail) : Error("synth_bench", "ground truth missing: " + detail) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& detail) : Error("config", detail) {}
};

}  // namespace hpsg
