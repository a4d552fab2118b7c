#include "hpsg/scene_ingest.hpp"

#include "hpsg/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace hpsg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

std::string view_file(int view_id, const std::string& suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "views/v%03d_%s", view_id, suffix.c_str());
  return buf;
}

template <class T>
T required(const json& obj, const char* key, int view_id) {
  if (!obj.contains(key)) {
    throw IngestError(IngestError::Kind::Schema, view_id, key, "missing manifest field");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IngestError(IngestError::Kind::Schema, view_id, key, e.what());
  }
}

}  // namespace

std::size_t InstanceMask2D::true_count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
}

std::vector<float> read_f32(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0) throw std::runtime_error("truncated float32 grid " + path.string());
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_little(raw));
  }
  return out;
}

std::vector<std::uint8_t> read_u8(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_f32(const fs::path& path, std::span<const float> data) {
  std::vector<std::uint32_t> raw(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) raw[i] = to_little(std::bit_cast<std::uint32_t>(data[i]));
  write_bytes(path, raw.data(), raw.size() * 4);
}

void write_u8(const fs::path& path, std::span<const std::uint8_t> data) {
  write_bytes(path, data.data(), data.size());
}

void validate_view(const ViewBundle& view) {
  using K = IngestError::Kind;
  const int id = view.view_id;
  if (view.width <= 0 || view.height <= 0) {
    throw IngestError(K::InvalidValue, id, "width/height", "non-positive dimensions");
  }
  const std::size_t n = view.pixel_count();
  if (view.point_map.size() != 3 * n) {
    throw IngestError(K::DimensionMismatch, id, "point_map",
                      "expected " + std::to_string(3 * n) + " floats, got " +
                          std::to_string(view.point_map.size()));
  }
  if (view.confidence_map.size() != n) {
    throw IngestError(K::DimensionMismatch, id, "confidence_map",
                      "expected " + std::to_string(n) + " floats, got " +
                          std::to_string(view.confidence_map.size()));
  }
  for (float v : view.point_map) {
    if (!std::isfinite(v)) throw IngestError(K::NonFinite, id, "point_map", "non-finite coordinate");
  }
  for (float c : view.confidence_map) {
    if (!std::isfinite(c)) throw IngestError(K::NonFinite, id, "confidence_map", "non-finite confidence");
    if (c < 0.0f) throw IngestError(K::InvalidValue, id, "confidence_map", "negative confidence");
  }
  for (std::size_t j = 0; j < view.masks.size(); ++j) {
    const auto& m = view.masks[j];
    const std::string field = "masks[" + std::to_string(j) + "]";
    if (m.width != view.width || m.height != view.height || m.mask.size() != n) {
      throw IngestError(K::DimensionMismatch, id, field, "mask size differs from view");
    }
    if (std::any_of(m.mask.begin(), m.mask.end(), [](auto v) { return v > 1; })) {
      throw IngestError(K::InvalidValue, id, field, "mask values must be 0 or 1");
    }
    if (m.true_count() == 0) throw IngestError(K::InvalidValue, id, field, "mask has no true pixel");
    if (m.instance_id < 0) throw IngestError(K::InvalidValue, id, field, "negative instance_id");
    if (!(m.confidence >= 0.0 && m.confidence <= 1.0)) {
      throw IngestError(K::InvalidValue, id, field, "confidence outside [0,1]");
    }
  }
}

std::vector<ViewBundle> load_scene(const fs::path& manifest_path) {
  using K = IngestError::Kind;
  if (!fs::exists(manifest_path)) {
    throw IngestError(K::MissingFile, -1, "manifest", "missing file " + manifest_path.string());
  }
  json doc;
  try {
    std::ifstream in(manifest_path);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IngestError(K::Schema, -1, "manifest", e.what());
  }
  if (doc.value("version", 0) != kManifestVersion) {
    throw IngestError(K::Schema, -1, "version", "unsupported manifest version");
  }
  if (!doc.contains("views") || !doc["views"].is_array()) {
    throw IngestError(K::Schema, -1, "views", "manifest has no views array");
  }
  const fs::path base = manifest_path.parent_path();

  auto grid_path = [&](int id, const std::string& field, const std::string& rel) {
    const fs::path p = base / rel;
    if (!fs::exists(p)) throw IngestError(K::MissingFile, id, field, "missing file " + p.string());
    return p;
  };
  auto load_grid = [&](int id, const std::string& field, const fs::path& p, auto reader) {
    try {
      return reader(p);
    } catch (const std::exception& e) {
      throw IngestError(K::MissingFile, id, field, e.what());
    }
  };

  std::vector<ViewBundle> views;
  for (const auto& v : doc["views"]) {
    ViewBundle view;
    view.view_id = required<int>(v, "view_id", -1);
    const int id = view.view_id;
    view.width = required<int>(v, "width", id);
    view.height = required<int>(v, "height", id);
    if (v.contains("image_path")) view.image_path = v["image_path"].get<std::string>();
    view.point_map = load_grid(id, "point_map", grid_path(id, "point_map", required<std::string>(v, "point_map", id)),
                               read_f32);
    view.confidence_map = load_grid(
        id, "confidence_map", grid_path(id, "confidence_map", required<std::string>(v, "confidence_map", id)),
        read_f32);
    if (v.contains("masks")) {
      for (std::size_t j = 0; j < v["masks"].size(); ++j) {
        const auto& m = v["masks"][j];
        const std::string field = "masks[" + std::to_string(j) + "]";
        InstanceMask2D mask;
        mask.width = view.width;
        mask.height = view.height;
        mask.instance_id = required<std::int64_t>(m, "instance_id", id);
        mask.confidence = m.value("confidence", 1.0);
        if (m.contains("category_hint") && !m["category_hint"].is_null()) {
          mask.category_hint = m["category_hint"].get<std::string>();
        }
        const std::string kind = m.value("kind", std::string("instance"));
        if (kind == "agnostic") {
          mask.kind = MaskKind::Agnostic;
        } else if (kind != "instance") {
          throw IngestError(K::Schema, id, field + ".kind", "unknown mask kind '" + kind + "'");
        }
        mask.mask = load_grid(id, field, grid_path(id, field, required<std::string>(m, "mask", id)), read_u8);
        view.masks.push_back(std::move(mask));
      }
    }
    validate_view(view);
    views.push_back(std::move(view));
  }
  std::stable_sort(views.begin(), views.end(),
                   [](const ViewBundle& a, const ViewBundle& b) { return a.view_id < b.view_id; });
  for (std::size_t i = 1; i < views.size(); ++i) {
    if (views[i].view_id == views[i - 1].view_id) {
      throw IngestError(K::Schema, views[i].view_id, "view_id", "duplicate view id");
    }
  }
  return views;
}

void save_scene(const fs::path& dir, std::span<const ViewBundle> views) {
  fs::create_directories(dir / "views");
  json doc;
  doc["version"] = kManifestVersion;
  doc["views"] = json::array();
  for (const auto& view : views) {
    json v;
    v["view_id"] = view.view_id;
    v["width"] = view.width;
    v["height"] = view.height;
    if (view.image_path) v["image_path"] = *view.image_path;
    const auto pm = view_file(view.view_id, "points.f32");
    const auto cm = view_file(view.view_id, "conf.f32");
    write_f32(dir / pm, view.point_map);
    write_f32(dir / cm, view.confidence_map);
    v["point_map"] = pm;
    v["confidence_map"] = cm;
    v["masks"] = json::array();
    for (std::size_t j = 0; j < view.masks.size(); ++j) {
      const auto& m = view.masks[j];
      const auto mp = view_file(view.view_id, "mask" + std::to_string(j) + ".u8");
      write_u8(dir / mp, m.mask);
      json jm;
      jm["instance_id"] = m.instance_id;
      jm["mask"] = mp;
      jm["confidence"] = m.confidence;
      jm["kind"] = m.kind == MaskKind::Agnostic ? "agnostic" : "instance";
      if (m.category_hint) jm["category_hint"] = *m.category_hint;
      v["masks"].push_back(std::move(jm));
    }
    doc["views"].push_back(std::move(v));
  }
  std::ofstream out(dir / "scene.json", std::ios::trunc);
  out << doc.dump(1) << '\n';
}

PointCloud filter_by_confidence(const ViewBundle& view, double tau_conf) {
  PointCloud cloud;
  cloud.source_view = view.view_id;
  const std::size_t n = view.pixel_count();
  for (std::size_t px = 0; px < n; ++px) {
    if (view.confidence_map[px] >= tau_conf) cloud.push_back(view.point(px), static_cast<std::uint32_t>(px));
  }
  return cloud;
}

PointCloud lift_masked_points(const ViewBundle& view, const InstanceMask2D& mask, double tau_conf) {
  PointCloud cloud;
  cloud.source_view = view.view_id;
  const std::size_t n = std::min(view.pixel_count(), mask.mask.size());
  for (std::size_t px = 0; px < n; ++px) {
    if (mask.at(px) && view.confidence_map[px] >= tau_conf) {
      cloud.push_back(view.point(px), static_cast<std::uint32_t>(px));
    }
  }
  return cloud;
}

}  // namespace hpsg
