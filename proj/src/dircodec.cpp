#include "nucpan/dircodec.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nucpan/kernels.hpp"

namespace nucpan::dircodec {

void DirectionConfig::validate() const {
  if (n_directions < 2 || n_directions > 254) {
    throw Error("direction count must be in [2, 254], got " + std::to_string(n_directions));
  }
  if (360 % n_directions != 0) {
    throw Error("360 degrees must divide evenly into " + std::to_string(n_directions) + " sectors");
  }
  if (!std::isfinite(class0_sector_start)) throw Error("sector start must be finite");
}

Point2 centroid(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw Error("centroid of an empty pixel set");
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  for (const Pixel& p : pixels) {
    rows += p.row;
    cols += p.col;
  }
  const auto n = static_cast<double>(pixels.size());
  return {static_cast<double>(rows) / n, static_cast<double>(cols) / n};
}

int direction_class(Pixel pixel, Point2 centre, const DirectionConfig& config) {
  config.validate();
  const double dx = static_cast<double>(pixel.col) - centre.col;
  const double dy = centre.row - static_cast<double>(pixel.row);
  return kernels::direction_class_of_offset(dx, dy, config.n_directions, config.class0_sector_start);
}

namespace {

std::vector<Point2> centroids_from(const kernels::CentroidSums& sums) {
  std::vector<Point2> out(sums.count.size());
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (sums.count[i] == 0) continue;
    const auto n = static_cast<double>(sums.count[i]);
    out[i] = {static_cast<double>(sums.row_sum[i]) / n, static_cast<double>(sums.col_sum[i]) / n};
  }
  return out;
}

}  // namespace

DirectionMap encode_direction_map(const InstanceMap& instances, const DirectionConfig& config) {
  config.validate();
  const auto centres = centroids_from(kernels::centroid_sums(instances));
  DirectionMap out;
  kernels::classify_directions(instances, centres, config.n_directions, config.class0_sector_start,
                               out);
  return out;
}

DirectionMap serial::encode_direction_map(const InstanceMap& instances,
                                          const DirectionConfig& config) {
  config.validate();
  const auto centres = centroids_from(kernels::serial::centroid_sums(instances));
  DirectionMap out;
  kernels::serial::classify_directions(instances, centres, config.n_directions,
                                       config.class0_sector_start, out);
  return out;
}

}  // namespace nucpan::dircodec
