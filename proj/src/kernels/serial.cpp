#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "nucpan/kernels.hpp"

namespace nucpan::kernels::serial {

Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor) {
  if (tensor.channels() < 1 || tensor.channels() > 255) {
    throw Error("argmax needs between 1 and 255 channels");
  }
  Grid<std::uint8_t> out(tensor.height(), tensor.width());
  for (int r = 0; r < tensor.height(); ++r) {
    for (int c = 0; c < tensor.width(); ++c) {
      int best = 0;
      for (int ch = 1; ch < tensor.channels(); ++ch) {
        if (tensor.at(r, c, ch) > tensor.at(r, c, best)) best = ch;
      }
      out(r, c) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

CentroidSums centroid_sums(const InstanceMap& instances) {
  int max_label = 0;
  for (auto v : instances) max_label = std::max(max_label, static_cast<int>(v));
  CentroidSums sums;
  const auto labels = static_cast<std::size_t>(max_label) + 1;
  sums.row_sum.assign(labels, 0);
  sums.col_sum.assign(labels, 0);
  sums.count.assign(labels, 0);
  for (int r = 0; r < instances.height(); ++r) {
    for (int c = 0; c < instances.width(); ++c) {
      const auto label = instances(r, c);
      if (label == 0) continue;
      sums.row_sum[label] += r;
      sums.col_sum[label] += c;
      sums.count[label] += 1;
    }
  }
  return sums;
}

void classify_directions(const InstanceMap& instances, std::span<const Point2> centroids,
                         int n_directions, double sector_start_deg, DirectionMap& out) {
  out = DirectionMap(instances.height(), instances.width(), n_directions);
  for (int r = 0; r < instances.height(); ++r) {
    for (int c = 0; c < instances.width(); ++c) {
      const auto label = instances(r, c);
      if (label == 0) continue;
      const double dx = static_cast<double>(c) - centroids[label].col;
      const double dy = centroids[label].row - static_cast<double>(r);
      out(r, c) = static_cast<std::uint8_t>(
          direction_class_of_offset(dx, dy, n_directions, sector_start_deg));
    }
  }
}

ComponentLabels label_components(const Grid<std::uint8_t>& mask, Connectivity connectivity) {
  static constexpr int k4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  static constexpr int k8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                   {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  const bool eight = connectivity == Connectivity::Eight;
  ComponentLabels out{Grid<std::int32_t>(mask.height(), mask.width(), 0), 0};
  std::deque<Pixel> queue;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c) || out.labels(r, c) != 0) continue;
      const int label = ++out.count;
      out.labels(r, c) = label;
      queue.push_back({r, c});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        const int n = eight ? 8 : 4;
        for (int k = 0; k < n; ++k) {
          const int nr = p.row + (eight ? k8[k][0] : k4[k][0]);
          const int nc = p.col + (eight ? k8[k][1] : k4[k][1]);
          if (!mask.contains(nr, nc) || !mask(nr, nc) || out.labels(nr, nc) != 0) continue;
          out.labels(nr, nc) = label;
          queue.push_back({nr, nc});
        }
      }
    }
  }
  return out;
}

OverlapTable overlap_table(const InstanceMap& a, const InstanceMap& b) {
  if (!a.same_shape(b)) throw Error("overlap_table: label maps differ in shape");
  OverlapTable table;
  table.area_a.assign(65536, 0);
  table.area_b.assign(65536, 0);
  std::map<std::pair<std::uint16_t, std::uint16_t>, std::int64_t> counts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++table.area_a[a[i]];
    ++table.area_b[b[i]];
    if (a[i] != 0 && b[i] != 0) ++counts[{a[i], b[i]}];
  }
  for (const auto& [key, count] : counts) table.pairs.push_back({key.first, key.second, count});
  return table;
}

CrossEntropySum cross_entropy_sum(const ProbTensor& pred, const Grid<std::uint8_t>& target,
                                  std::uint8_t ignore) {
  if (pred.height() != target.height() || pred.width() != target.width()) {
    throw Error("shape mismatch between prediction tensor and target map");
  }
  CrossEntropySum out;
  for (int r = 0; r < pred.height(); ++r) {
    for (int c = 0; c < pred.width(); ++c) {
      const std::uint8_t t = target(r, c);
      if (t == ignore) continue;
      if (t >= pred.channels()) throw Error("target label exceeds prediction channel count");
      out.sum += -std::log(std::max(static_cast<double>(pred.at(r, c, t)), kProbabilityClamp));
      ++out.count;
    }
  }
  return out;
}

DiceSums dice_sums(const ProbTensor& pred, const Grid<std::uint8_t>& target) {
  if (pred.height() != target.height() || pred.width() != target.width()) {
    throw Error("shape mismatch between prediction tensor and target map");
  }
  const auto channels = static_cast<std::size_t>(pred.channels());
  DiceSums out;
  out.intersection.assign(channels, 0.0);
  out.pred.assign(channels, 0.0);
  out.truth.assign(channels, 0.0);
  for (int r = 0; r < pred.height(); ++r) {
    for (int c = 0; c < pred.width(); ++c) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double p = pred.at(r, c, static_cast<int>(ch));
        const double g = target(r, c) == ch ? 1.0 : 0.0;
        out.intersection[ch] += p * g;
        out.pred[ch] += p;
        out.truth[ch] += g;
      }
    }
  }
  return out;
}

}  // namespace nucpan::kernels::serial
