#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "nucpan/kernels.hpp"

namespace nucpan::kernels {

namespace {

// Angles within this many degrees of a sector boundary are treated as lying
// on it; absorbs the rounding of atan2 and the radian/degree conversion.
constexpr double kBoundarySnapDeg = 1e-11;

void check_shapes(const ProbTensor& pred, const Grid<std::uint8_t>& target) {
  if (pred.height() != target.height() || pred.width() != target.width()) {
    throw Error("shape mismatch between prediction tensor (" + std::to_string(pred.height()) + "x" +
                std::to_string(pred.width()) + ") and target map (" +
                std::to_string(target.height()) + "x" + std::to_string(target.width()) + ")");
  }
}

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    auto& p = parent[static_cast<std::size_t>(i)];
    p = parent[static_cast<std::size_t>(p)];
    i = p;
  }
  return i;
}

std::int32_t find_root_readonly(const std::vector<std::int32_t>& parent, std::int32_t i) {
  while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)];
  return i;
}

// Links the larger root under the smaller one, so each root is the raster-first
// pixel of its component.
void unite(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[static_cast<std::size_t>(a)] = b;
}

}  // namespace

int direction_class_of_offset(double dx, double dy, int n_directions, double sector_start_deg) {
  if (dx == 0.0 && dy == 0.0) return 0;
  const double width = 360.0 / n_directions;
  double theta = std::atan2(dy, dx) * (180.0 / std::numbers::pi);
  double rel = std::fmod(theta - sector_start_deg, 360.0);
  if (rel < 0.0) rel += 360.0;
  int k = static_cast<int>(std::floor(rel / width));
  if (static_cast<double>(k + 1) * width - rel < kBoundarySnapDeg) ++k;
  if (rel - static_cast<double>(k) * width < -kBoundarySnapDeg) --k;
  k %= n_directions;
  if (k < 0) k += n_directions;
  return k;
}

Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor) {
  if (tensor.channels() < 1 || tensor.channels() > 255) {
    throw Error("argmax needs between 1 and 255 channels");
  }
  Grid<std::uint8_t> out(tensor.height(), tensor.width());
  const auto n = static_cast<std::int64_t>(tensor.pixels());
  const int channels = tensor.channels();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double* p = tensor.pixel(static_cast<std::size_t>(i));
    int best = 0;
    for (int c = 1; c < channels; ++c) {
      if (p[c] > p[best]) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

CentroidSums centroid_sums(const InstanceMap& instances) {
  const auto n = static_cast<std::int64_t>(instances.size());
  int max_label = 0;
#pragma omp parallel for reduction(max : max_label) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    max_label = std::max(max_label, static_cast<int>(instances[static_cast<std::size_t>(i)]));
  }
  const auto labels = static_cast<std::size_t>(max_label) + 1;
  CentroidSums sums;
  sums.row_sum.assign(labels, 0);
  sums.col_sum.assign(labels, 0);
  sums.count.assign(labels, 0);
  std::int64_t* rs = sums.row_sum.data();
  std::int64_t* cs = sums.col_sum.data();
  std::int64_t* ct = sums.count.data();
  const int width = instances.width();
  const int height = instances.height();
#pragma omp parallel for reduction(+ : rs[:labels], cs[:labels], ct[:labels]) schedule(static)
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto label = instances(r, c);
      if (label == 0) continue;
      rs[label] += r;
      cs[label] += c;
      ct[label] += 1;
    }
  }
  return sums;
}

void classify_directions(const InstanceMap& instances, std::span<const Point2> centroids,
                         int n_directions, double sector_start_deg, DirectionMap& out) {
  out = DirectionMap(instances.height(), instances.width(), n_directions);
  const int height = instances.height();
  const int width = instances.width();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto label = instances(r, c);
      if (label == 0) continue;
      const Point2& centre = centroids[label];
      const double dx = static_cast<double>(c) - centre.col;
      const double dy = centre.row - static_cast<double>(r);
      out(r, c) = static_cast<std::uint8_t>(
          direction_class_of_offset(dx, dy, n_directions, sector_start_deg));
    }
  }
}

ComponentLabels label_components(const Grid<std::uint8_t>& mask, Connectivity connectivity) {
  const int height = mask.height();
  const int width = mask.width();
  const std::size_t n = mask.size();
  if (n > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw Error("mask too large for component labelling");
  }
  const bool eight = connectivity == Connectivity::Eight;
  std::vector<std::int32_t> parent(n, -1);

  const int strips = std::max(1, std::min(omp_get_max_threads(), height));
  std::vector<int> bounds(static_cast<std::size_t>(strips) + 1);
  for (int s = 0; s <= strips; ++s) {
    bounds[static_cast<std::size_t>(s)] =
        static_cast<int>(static_cast<std::int64_t>(height) * s / strips);
  }

  // Each strip is labelled independently; unions never leave the strip.
#pragma omp parallel for schedule(static, 1)
  for (int s = 0; s < strips; ++s) {
    const int r0 = bounds[static_cast<std::size_t>(s)];
    const int r1 = bounds[static_cast<std::size_t>(s) + 1];
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < width; ++c) {
        if (!mask(r, c)) continue;
        const auto i = static_cast<std::int32_t>(mask.index(r, c));
        parent[static_cast<std::size_t>(i)] = i;
        if (c > 0 && mask(r, c - 1)) unite(parent, i, i - 1);
        if (r > r0) {
          if (mask(r - 1, c)) unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c)));
          if (eight) {
            if (c > 0 && mask(r - 1, c - 1))
              unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c - 1)));
            if (c + 1 < width && mask(r - 1, c + 1))
              unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c + 1)));
          }
        }
      }
    }
  }

  // Stitch strip seams.
  for (int s = 1; s < strips; ++s) {
    const int r = bounds[static_cast<std::size_t>(s)];
    if (r <= 0 || r >= height) continue;
    for (int c = 0; c < width; ++c) {
      if (!mask(r, c)) continue;
      const auto i = static_cast<std::int32_t>(mask.index(r, c));
      if (mask(r - 1, c)) unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c)));
      if (eight) {
        if (c > 0 && mask(r - 1, c - 1))
          unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c - 1)));
        if (c + 1 < width && mask(r - 1, c + 1))
          unite(parent, i, static_cast<std::int32_t>(mask.index(r - 1, c + 1)));
      }
    }
  }

  std::vector<std::int32_t> root(n, -1);
  const auto total = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    if (parent[static_cast<std::size_t>(i)] >= 0) {
      root[static_cast<std::size_t>(i)] =
          find_root_readonly(parent, static_cast<std::int32_t>(i));
    }
  }

  ComponentLabels out{Grid<std::int32_t>(height, width, 0), 0};
  for (std::size_t i = 0; i < n; ++i) {
    if (root[i] == static_cast<std::int32_t>(i)) out.labels[i] = ++out.count;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int32_t rt = root[static_cast<std::size_t>(i)];
    if (rt >= 0) out.labels[static_cast<std::size_t>(i)] = out.labels[static_cast<std::size_t>(rt)];
  }
  return out;
}

OverlapTable overlap_table(const InstanceMap& a, const InstanceMap& b) {
  if (!a.same_shape(b)) throw Error("overlap_table: label maps differ in shape");
  OverlapTable table;
  table.area_a.assign(65536, 0);
  table.area_b.assign(65536, 0);
  std::unordered_map<std::uint32_t, std::int64_t> merged;
  const int height = a.height();
  const int width = a.width();

#pragma omp parallel
  {
    std::vector<std::int64_t> area_a(65536, 0);
    std::vector<std::int64_t> area_b(65536, 0);
    std::unordered_map<std::uint32_t, std::int64_t> local;
#pragma omp for schedule(static) nowait
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const std::uint16_t la = a(r, c);
        const std::uint16_t lb = b(r, c);
        ++area_a[la];
        ++area_b[lb];
        if (la != 0 && lb != 0) ++local[(static_cast<std::uint32_t>(la) << 16) | lb];
      }
    }
#pragma omp critical(nucpan_overlap_merge)
    {
      for (std::size_t i = 0; i < 65536; ++i) {
        table.area_a[i] += area_a[i];
        table.area_b[i] += area_b[i];
      }
      for (const auto& [key, count] : local) merged[key] += count;
    }
  }

  table.pairs.reserve(merged.size());
  for (const auto& [key, count] : merged) {
    table.pairs.push_back({static_cast<std::uint16_t>(key >> 16),
                           static_cast<std::uint16_t>(key & 0xFFFFu), count});
  }
  std::sort(table.pairs.begin(), table.pairs.end(), [](const auto& x, const auto& y) {
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });
  return table;
}

CrossEntropySum cross_entropy_sum(const ProbTensor& pred, const Grid<std::uint8_t>& target,
                                  std::uint8_t ignore) {
  check_shapes(pred, target);
  const int height = pred.height();
  const int width = pred.width();
  const int channels = pred.channels();
  std::vector<double> row_sum(static_cast<std::size_t>(height), 0.0);
  std::int64_t count = 0;
  bool bad_target = false;
#pragma omp parallel for reduction(+ : count) reduction(|| : bad_target) schedule(static)
  for (int r = 0; r < height; ++r) {
    double acc = 0.0;
    for (int c = 0; c < width; ++c) {
      const std::uint8_t t = target(r, c);
      if (t == ignore) continue;
      if (t >= channels) {
        bad_target = true;
        continue;
      }
      const double p = pred.at(r, c, t);
      acc += -std::log(std::max(p, kProbabilityClamp));
      ++count;
    }
    row_sum[static_cast<std::size_t>(r)] = acc;
  }
  if (bad_target) throw Error("target label exceeds prediction channel count");
  CrossEntropySum out;
  for (double s : row_sum) out.sum += s;
  out.count = count;
  return out;
}

DiceSums dice_sums(const ProbTensor& pred, const Grid<std::uint8_t>& target) {
  check_shapes(pred, target);
  const int height = pred.height();
  const int width = pred.width();
  const auto channels = static_cast<std::size_t>(pred.channels());
  // rows x {intersection, pred, truth} x channels
  std::vector<double> partial(static_cast<std::size_t>(height) * 3 * channels, 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < height; ++r) {
    double* inter = partial.data() + static_cast<std::size_t>(r) * 3 * channels;
    double* psum = inter + channels;
    double* gsum = psum + channels;
    for (int c = 0; c < width; ++c) {
      const double* p = pred.pixel(target.index(r, c));
      const std::size_t t = target(r, c);
      for (std::size_t ch = 0; ch < channels; ++ch) psum[ch] += p[ch];
      if (t < channels) {
        inter[t] += p[t];
        gsum[t] += 1.0;
      }
    }
  }
  DiceSums out;
  out.intersection.assign(channels, 0.0);
  out.pred.assign(channels, 0.0);
  out.truth.assign(channels, 0.0);
  for (int r = 0; r < height; ++r) {
    const double* inter = partial.data() + static_cast<std::size_t>(r) * 3 * channels;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      out.intersection[ch] += inter[ch];
      out.pred[ch] += inter[channels + ch];
      out.truth[ch] += inter[2 * channels + ch];
    }
  }
  return out;
}

}  // namespace nucpan::kernels
