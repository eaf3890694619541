#pragma once

// Inference postprocessing: network outputs -> hard maps -> instances ->
// per-instance classes -> counts.

#include <cstdint>
#include <map>
#include <vector>

#include "nucpan/types.hpp"

namespace nucpan::reconstruct {

struct ReconstructionConfig {
  /// Used both for component extraction and for the adjacency test between
  /// direction classes. 8-connectivity lets touching nuclei bridge diagonally.
  Connectivity connectivity = Connectivity::Four;
  int n_directions = 4;
};

struct PanopticResult {
  InstanceMap instances;
  ClassMap classes;  // every instance painted with its assigned class
  std::map<std::uint16_t, std::uint8_t> per_instance_class;

  friend bool operator==(const PanopticResult&, const PanopticResult&) = default;
};

struct HardMaps {
  ClassMap classes;
  DirectionMap directions;
};

/// Per pixel, the smallest channel index attaining the maximum.
Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor);

/// Class map from the 7 segmentation channels; direction classes from the N
/// direction channels, only where the class map is foreground.
HardMaps maps_from_outputs(const ProbTensor& seg, const ProbTensor& dir);

/// Maximal connected sets of true pixels, ordered by the raster position of
/// their first pixel. Pixels within a set are in raster order.
std::vector<std::vector<Pixel>> connected_components(const Grid<std::uint8_t>& mask,
                                                     Connectivity connectivity);

/// Direction-ordered sweep. Components of direction class 0 each open a new
/// instance (raster order, starting at 1). For k = 1..N-1, each component of
/// class k joins the instance it shares the most adjacent pixel pairs with
/// among class k-1 pixels (ties: smallest index), or opens a new instance if
/// it touches no class k-1 pixel. There is no wrap-around from N-1 to 0.
InstanceMap reconstruct_instances(const ClassMap& classes, const DirectionMap& directions,
                                  const ReconstructionConfig& config = {});

/// Majority vote of ClassMap values over each instance (ties: smallest class).
PanopticResult assign_classes(const InstanceMap& instances, const ClassMap& classes);

/// Hard maps to a full panoptic result.
PanopticResult decode(const ClassMap& classes, const DirectionMap& directions,
                      const ReconstructionConfig& config = {});

/// Negative -> 0, otherwise round half away from zero.
CountVector postprocess_counts(const CountVector& raw);

CountVector counts_from_instances(const PanopticResult& result);

namespace serial {
InstanceMap reconstruct_instances(const ClassMap& classes, const DirectionMap& directions,
                                  const ReconstructionConfig& config = {});
}

}  // namespace nucpan::reconstruct
