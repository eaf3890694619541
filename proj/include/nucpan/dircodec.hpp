#pragma once

// Direction-map encoding of instance maps.
//
// Every foreground pixel is labelled with the quantized angle of its offset
// from the centroid of its own instance. Angles are measured counter-clockwise
// from +x in a y-up frame (dx = col - centroid.col, dy = centroid.row - row),
// so with four directions class 0 is the right-upper quadrant [0, 90),
// class 1 the left-upper [90, 180), and so on. Sectors are half-open. A pixel
// that coincides with the centroid is class 0.

#include <span>

#include "nucpan/types.hpp"

namespace nucpan::dircodec {

struct DirectionConfig {
  int n_directions = 4;
  double class0_sector_start = 0.0;  // degrees

  /// Throws unless n_directions >= 2 and 360 splits into equal integer sectors.
  void validate() const;
};

/// Mean of pixel-centre coordinates.
Point2 centroid(std::span<const Pixel> pixels);

int direction_class(Pixel pixel, Point2 centre, const DirectionConfig& config = {});

DirectionMap encode_direction_map(const InstanceMap& instances, const DirectionConfig& config = {});

namespace serial {
DirectionMap encode_direction_map(const InstanceMap& instances, const DirectionConfig& config = {});
}

}  // namespace nucpan::dircodec
