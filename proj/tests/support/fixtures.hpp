#pragma once

// Small builders shared by the unit tests.

#include "hpsg/geometry.hpp"
#include "hpsg/scene_ingest.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

namespace fixture {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("hpsg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// View whose pixel (x, y) maps to point(x, y) with confidence conf(x, y).
inline hpsg::ViewBundle make_view(int id, int w, int h, const std::function<hpsg::Vec3(int, int)>& point,
                                  const std::function<float(int, int)>& conf = [](int, int) { return 5.0f; }) {
  hpsg::ViewBundle v;
  v.view_id = id;
  v.width = w;
  v.height = h;
  v.point_map.resize(static_cast<std::size_t>(w) * h * 3);
  v.confidence_map.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t px = static_cast<std::size_t>(y) * w + x;
      const auto p = point(x, y);
      v.point_map[3 * px] = static_cast<float>(p[0]);
      v.point_map[3 * px + 1] = static_cast<float>(p[1]);
      v.point_map[3 * px + 2] = static_cast<float>(p[2]);
      v.confidence_map[px] = conf(x, y);
    }
  }
  return v;
}

inline hpsg::InstanceMask2D make_mask(int w, int h, const std::function<bool(int, int)>& on, std::int64_t id,
                                      hpsg::MaskKind kind = hpsg::MaskKind::Instance) {
  hpsg::InstanceMask2D m;
  m.width = w;
  m.height = h;
  m.instance_id = id;
  m.kind = kind;
  m.mask.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.mask[static_cast<std::size_t>(y) * w + x] = on(x, y) ? 1 : 0;
  }
  return m;
}

inline hpsg::Aabb random_box(std::mt19937_64& rng, double span = 4.0, double max_size = 1.5) {
  std::uniform_real_distribution<double> pos(-span, span), size(0.05, max_size);
  hpsg::Aabb b;
  for (int k = 0; k < 3; ++k) {
    b.min[k] = pos(rng);
    b.max[k] = b.min[k] + size(rng);
  }
  return b;
}

inline hpsg::Aabb box(double x0, double x1, double y0, double y1, double z0, double z1) {
  hpsg::Aabb b;
  b.min = {x0, y0, z0};
  b.max = {x1, y1, z1};
  return b;
}

}  // namespace fixture
