#include "nucpan/reconstruct.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "nucpan/kernels.hpp"

namespace nucpan::reconstruct {

namespace {

constexpr int kOffsets4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
constexpr int kOffsets8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                 {0, 1},   {1, -1}, {1, 0},  {1, 1}};

std::string dims(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

void check_inputs(const ClassMap& classes, const DirectionMap& directions, int n_directions) {
  if (!classes.same_shape(directions)) {
    throw Error("dimension mismatch: class map " + dims(classes.height(), classes.width()) +
                ", direction map " + dims(directions.height(), directions.width()));
  }
  if (n_directions < 2 || n_directions > 254) {
    throw Error("direction count must be in [2, 254]");
  }
  for (int r = 0; r < classes.height(); ++r) {
    for (int c = 0; c < classes.width(); ++c) {
      const bool background = classes(r, c) == 0;
      const std::uint8_t d = directions(r, c);
      if (background != (d == kDirectionBackground)) {
        std::ostringstream msg;
        msg << "direction/background inconsistency at pixel (" << r << ", " << c << "): class "
            << static_cast<int>(classes(r, c)) << ", direction " << static_cast<int>(d);
        throw Error(msg.str());
      }
      if (!background && d >= n_directions) {
        std::ostringstream msg;
        msg << "direction class " << static_cast<int>(d) << " at pixel (" << r << ", " << c
            << ") exceeds direction count " << n_directions;
        throw Error(msg.str());
      }
    }
  }
}

struct AdjacencyPair {
  std::int32_t component;
  std::uint16_t instance;
  friend auto operator<=>(const AdjacencyPair&, const AdjacencyPair&) = default;
};

// For each pixel of a class-k component, every neighbouring class-(k-1) pixel
// contributes one (component, instance) pair.
template <bool kParallel>
std::vector<AdjacencyPair> collect_adjacency(const kernels::ComponentLabels& comps,
                                             const DirectionMap& directions,
                                             const InstanceMap& instances, int previous,
                                             Connectivity connectivity) {
  const int height = directions.height();
  const int width = directions.width();
  const bool eight = connectivity == Connectivity::Eight;
  const int n_offsets = eight ? 8 : 4;
  std::vector<std::vector<AdjacencyPair>> per_row(static_cast<std::size_t>(height));

  auto scan_row = [&](int r) {
    auto& out = per_row[static_cast<std::size_t>(r)];
    for (int c = 0; c < width; ++c) {
      const std::int32_t label = comps.labels(r, c);
      if (label == 0) continue;
      for (int k = 0; k < n_offsets; ++k) {
        const int nr = r + (eight ? kOffsets8[k][0] : kOffsets4[k][0]);
        const int nc = c + (eight ? kOffsets8[k][1] : kOffsets4[k][1]);
        if (!directions.contains(nr, nc) || directions(nr, nc) != previous) continue;
        out.push_back({label, instances(nr, nc)});
      }
    }
  };

  if constexpr (kParallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int r = 0; r < height; ++r) scan_row(r);
  } else {
    for (int r = 0; r < height; ++r) scan_row(r);
  }

  std::vector<AdjacencyPair> pairs;
  for (auto& row : per_row) pairs.insert(pairs.end(), row.begin(), row.end());
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

template <bool kParallel>
InstanceMap reconstruct_impl(const ClassMap& classes, const DirectionMap& directions,
                             const ReconstructionConfig& config) {
  check_inputs(classes, directions, config.n_directions);
  const int height = classes.height();
  const int width = classes.width();
  InstanceMap instances(height, width, 0);
  int next_index = 1;

  auto fresh_index = [&]() -> std::uint16_t {
    if (next_index > 65535) throw Error("more than 65535 instances; cannot index");
    return static_cast<std::uint16_t>(next_index++);
  };

  Grid<std::uint8_t> mask(height, width, 0);
  for (int k = 0; k < config.n_directions; ++k) {
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = directions[i] == k ? 1 : 0;
    const kernels::ComponentLabels comps =
        kParallel ? kernels::label_components(mask, config.connectivity)
                  : kernels::serial::label_components(mask, config.connectivity);
    if (comps.count == 0) continue;

    // target[label] = instance the component joins; 0 until decided.
    std::vector<std::uint16_t> target(static_cast<std::size_t>(comps.count) + 1, 0);
    if (k > 0) {
      const auto pairs =
          collect_adjacency<kParallel>(comps, directions, instances, k - 1, config.connectivity);
      std::vector<std::int64_t> best_count(target.size(), 0);
      for (std::size_t i = 0; i < pairs.size();) {
        std::size_t j = i;
        while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
        const auto count = static_cast<std::int64_t>(j - i);
        const auto label = static_cast<std::size_t>(pairs[i].component);
        // Pairs are sorted by instance within a component, so a strict
        // comparison keeps the smallest index on ties.
        if (count > best_count[label]) {
          best_count[label] = count;
          target[label] = pairs[i].instance;
        }
        i = j;
      }
    }
    for (std::size_t label = 1; label < target.size(); ++label) {
      if (target[label] == 0) target[label] = fresh_index();
    }
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const std::int32_t label = comps.labels[i];
      if (label != 0) instances[i] = target[static_cast<std::size_t>(label)];
    }
  }
  return instances;
}

}  // namespace

Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor) {
  return kernels::argmax_channels(tensor);
}

HardMaps maps_from_outputs(const ProbTensor& seg, const ProbTensor& dir) {
  if (seg.height() != dir.height() || seg.width() != dir.width()) {
    throw Error("dimension mismatch: segmentation tensor " + dims(seg.height(), seg.width()) +
                ", direction tensor " + dims(dir.height(), dir.width()));
  }
  if (seg.channels() != kNumClasses + 1) {
    throw Error("segmentation tensor must have 7 channels, got " + std::to_string(seg.channels()));
  }
  if (dir.channels() < 2 || dir.channels() > 254) {
    throw Error("direction tensor must have between 2 and 254 channels");
  }
  const Grid<std::uint8_t> seg_arg = kernels::argmax_channels(seg);
  const Grid<std::uint8_t> dir_arg = kernels::argmax_channels(dir);
  HardMaps maps{ClassMap(seg.height(), seg.width()),
                DirectionMap(seg.height(), seg.width(), dir.channels())};
  for (std::size_t i = 0; i < seg_arg.size(); ++i) {
    maps.classes[i] = seg_arg[i];
    maps.directions[i] = seg_arg[i] == 0 ? kDirectionBackground : dir_arg[i];
  }
  return maps;
}

std::vector<std::vector<Pixel>> connected_components(const Grid<std::uint8_t>& mask,
                                                     Connectivity connectivity) {
  const kernels::ComponentLabels comps = kernels::label_components(mask, connectivity);
  std::vector<std::vector<Pixel>> out(static_cast<std::size_t>(comps.count));
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      const std::int32_t label = comps.labels(r, c);
      if (label != 0) out[static_cast<std::size_t>(label - 1)].push_back({r, c});
    }
  }
  return out;
}

InstanceMap reconstruct_instances(const ClassMap& classes, const DirectionMap& directions,
                                  const ReconstructionConfig& config) {
  return reconstruct_impl<true>(classes, directions, config);
}

InstanceMap serial::reconstruct_instances(const ClassMap& classes, const DirectionMap& directions,
                                          const ReconstructionConfig& config) {
  return reconstruct_impl<false>(classes, directions, config);
}

PanopticResult assign_classes(const InstanceMap& instances, const ClassMap& classes) {
  if (!instances.same_shape(classes)) {
    throw Error("dimension mismatch: instance map " + dims(instances.height(), instances.width()) +
                ", class map " + dims(classes.height(), classes.width()));
  }
  int max_label = 0;
  for (auto v : instances) max_label = std::max(max_label, static_cast<int>(v));
  std::vector<std::array<std::int64_t, kNumClasses + 1>> votes(
      static_cast<std::size_t>(max_label) + 1, std::array<std::int64_t, kNumClasses + 1>{});
  for (int r = 0; r < instances.height(); ++r) {
    for (int c = 0; c < instances.width(); ++c) {
      const auto label = instances(r, c);
      if (label == 0) continue;
      const auto cls = classes(r, c);
      if (cls == 0) {
        std::ostringstream msg;
        msg << "instance " << label << " covers class-map background at pixel (" << r << ", " << c
            << ")";
        throw Error(msg.str());
      }
      if (cls > kMaxClassId) throw Error("class ID out of range in class map");
      ++votes[label][cls];
    }
  }

  PanopticResult result{instances, ClassMap(instances.height(), instances.width(), 0), {}};
  std::vector<std::uint8_t> chosen(votes.size(), 0);
  for (std::size_t label = 1; label < votes.size(); ++label) {
    std::uint8_t best = 0;
    for (std::uint8_t cls = 1; cls <= kMaxClassId; ++cls) {
      if (votes[label][cls] > (best == 0 ? 0 : votes[label][best])) best = cls;
    }
    if (best == 0) continue;  // label unused
    chosen[label] = best;
    result.per_instance_class.emplace(static_cast<std::uint16_t>(label), best);
  }
  for (std::size_t i = 0; i < instances.size(); ++i) result.classes[i] = chosen[instances[i]];
  return result;
}

PanopticResult decode(const ClassMap& classes, const DirectionMap& directions,
                      const ReconstructionConfig& config) {
  return assign_classes(reconstruct_instances(classes, directions, config), classes);
}

CountVector postprocess_counts(const CountVector& raw) {
  CountVector out{};
  for (std::size_t c = 0; c < raw.size(); ++c) {
    const double v = raw[c];
    if (!std::isfinite(v)) throw Error("non-finite count for class " + std::string(kClassNames[c]));
    out[c] = v < 0.0 ? 0.0 : std::round(v) + 0.0;  // std::round: halves away from zero
  }
  return out;
}

CountVector counts_from_instances(const PanopticResult& result) {
  CountVector counts{};
  for (const auto& [index, cls] : result.per_instance_class) {
    if (cls >= 1 && cls <= kMaxClassId) counts[cls - 1] += 1.0;
  }
  return counts;
}

}  // namespace nucpan::reconstruct
