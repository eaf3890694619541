#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// library code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <iterator>
#include <vector>

#include <unistd.h>

#include "nucpan/reconstruct.hpp"
#include "nucpan/types.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("nucpan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

/// Direction class by brute force: long-double atan2 with exact handling of
/// the four axes. Valid for sector layouts whose boundaries include the axes
/// or avoid lattice directions.
inline int oracle_direction_class(int row, int col, long double centre_row, long double centre_col,
                                  int n_directions, long double start_deg = 0.0L) {
  const long double dx = static_cast<long double>(col) - centre_col;
  const long double dy = centre_row - static_cast<long double>(row);
  if (dx == 0.0L && dy == 0.0L) return 0;
  long double theta;
  if (dy == 0.0L) {
    theta = dx > 0 ? 0.0L : 180.0L;
  } else if (dx == 0.0L) {
    theta = dy > 0 ? 90.0L : 270.0L;
  } else {
    theta = std::atan2(dy, dx) * 180.0L / std::numbers::pi_v<long double>;
  }
  long double rel = std::fmod(theta - start_deg, 360.0L);
  if (rel < 0) rel += 360.0L;
  const long double width = 360.0L / n_directions;
  return static_cast<int>(std::floor(rel / width)) % n_directions;
}

/// Distance of the offset's angle to the nearest sector boundary, degrees.
inline long double boundary_distance(int row, int col, long double centre_row,
                                     long double centre_col, int n_directions) {
  const long double dx = static_cast<long double>(col) - centre_col;
  const long double dy = centre_row - static_cast<long double>(row);
  if (dx == 0.0L && dy == 0.0L) return 360.0L;
  long double theta = std::atan2(dy, dx) * 180.0L / std::numbers::pi_v<long double>;
  if (theta < 0) theta += 360.0L;
  const long double width = 360.0L / n_directions;
  const long double m = std::fmod(theta, width);
  return std::min(m, width - m);
}

/// Random label map on a small grid.
inline nucpan::InstanceMap random_instances(std::mt19937_64& rng, int height, int width,
                                            int max_instances) {
  std::uniform_int_distribution<int> label(0, max_instances);
  nucpan::InstanceMap m(height, width, 0);
  for (auto& v : m) v = static_cast<std::uint16_t>(label(rng));
  return m;
}

/// Builds a panoptic result with random per-instance classes in [1, max_class].
inline nucpan::reconstruct::PanopticResult make_panoptic(const nucpan::InstanceMap& instances,
                                                         std::mt19937_64& rng, int max_class) {
  std::uniform_int_distribution<int> cls(1, max_class);
  nucpan::reconstruct::PanopticResult r;
  r.instances = instances;
  r.classes = nucpan::ClassMap(instances.height(), instances.width(), 0);
  std::set<std::uint16_t> present(instances.begin(), instances.end());
  present.erase(0);
  for (auto idx : present) r.per_instance_class[idx] = static_cast<std::uint8_t>(cls(rng));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i] != 0) r.classes[i] = r.per_instance_class[instances[i]];
  }
  return r;
}

struct OracleMatch {
  std::vector<std::tuple<std::uint16_t, std::uint16_t, std::int64_t, std::int64_t>> tp;  // gt, pred, inter, union
  std::vector<std::uint16_t> fn;
  std::vector<std::uint16_t> fp;
};

/// Exhaustive pairwise enumeration with explicit pixel sets.
inline OracleMatch oracle_match(const nucpan::reconstruct::PanopticResult& gt,
                                const nucpan::reconstruct::PanopticResult& pred, int class_id) {
  auto sets = [&](const nucpan::reconstruct::PanopticResult& r) {
    std::map<std::uint16_t, std::set<std::size_t>> out;
    for (const auto& [idx, cls] : r.per_instance_class) {
      if (cls == class_id) out[idx];
    }
    for (std::size_t i = 0; i < r.instances.size(); ++i) {
      auto it = out.find(r.instances[i]);
      if (it != out.end()) it->second.insert(i);
    }
    return out;
  };
  const auto g = sets(gt);
  const auto p = sets(pred);
  OracleMatch m;
  std::set<std::uint16_t> g_hit, p_hit;
  for (const auto& [gi, gs] : g) {
    for (const auto& [pi, ps] : p) {
      std::vector<std::size_t> inter, uni;
      std::set_intersection(gs.begin(), gs.end(), ps.begin(), ps.end(), std::back_inserter(inter));
      std::set_union(gs.begin(), gs.end(), ps.begin(), ps.end(), std::back_inserter(uni));
      if (2 * inter.size() > uni.size()) {
        m.tp.emplace_back(gi, pi, static_cast<std::int64_t>(inter.size()),
                          static_cast<std::int64_t>(uni.size()));
        g_hit.insert(gi);
        p_hit.insert(pi);
      }
    }
  }
  for (const auto& [gi, gs] : g) {
    if (!g_hit.count(gi)) m.fn.push_back(gi);
  }
  for (const auto& [pi, ps] : p) {
    if (!p_hit.count(pi)) m.fp.push_back(pi);
  }
  return m;
}

/// True when `a` and `b` are equal up to a bijection of nonzero labels.
inline bool equal_up_to_relabel(const nucpan::InstanceMap& a, const nucpan::InstanceMap& b) {
  if (!a.same_shape(b)) return false;
  std::map<std::uint16_t, std::uint16_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

}  // namespace testing
