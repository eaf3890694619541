#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version in
// `nucpan::kernels` and a straightforward serial version in
// `nucpan::kernels::serial` that the tests use as the reference. The OpenMP
// versions give identical results for every thread count: floating-point sums
// are accumulated per row and the row partials are reduced in row order.

#include <cstdint>
#include <span>
#include <vector>

#include "nucpan/types.hpp"

namespace nucpan::kernels {

/// Component labels in [1, count]; 0 marks pixels outside the mask. Labels
/// follow the raster order of each component's first pixel.
struct ComponentLabels {
  Grid<std::int32_t> labels;
  int count = 0;
};

/// Pixel-overlap tally between two label maps of equal shape.
struct OverlapTable {
  struct Entry {
    std::uint16_t a = 0;
    std::uint16_t b = 0;
    std::int64_t count = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::vector<Entry> pairs;          // nonzero a and b only, sorted by (a, b)
  std::vector<std::int64_t> area_a;  // indexed by label, size 65536
  std::vector<std::int64_t> area_b;
};

/// Sum of -log(max(p[target], clamp)) over pixels whose target != ignore.
struct CrossEntropySum {
  double sum = 0.0;
  std::int64_t count = 0;
};

/// Per-channel soft-Dice sums over all pixels.
struct DiceSums {
  std::vector<double> intersection;  // sum p_c * g_c
  std::vector<double> pred;          // sum p_c
  std::vector<double> truth;         // sum g_c
};

inline constexpr double kProbabilityClamp = 1e-12;

Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor);

/// Writes the direction class of every foreground pixel, measured against
/// `centroids[label]`. Background pixels get the sentinel.
void classify_directions(const InstanceMap& instances, std::span<const Point2> centroids,
                         int n_directions, double sector_start_deg, DirectionMap& out);

/// Per-label coordinate sums; index 0 is unused.
struct CentroidSums {
  std::vector<std::int64_t> row_sum;
  std::vector<std::int64_t> col_sum;
  std::vector<std::int64_t> count;
};
CentroidSums centroid_sums(const InstanceMap& instances);

ComponentLabels label_components(const Grid<std::uint8_t>& mask, Connectivity connectivity);

OverlapTable overlap_table(const InstanceMap& a, const InstanceMap& b);

CrossEntropySum cross_entropy_sum(const ProbTensor& pred, const Grid<std::uint8_t>& target,
                                  std::uint8_t ignore);

DiceSums dice_sums(const ProbTensor& pred, const Grid<std::uint8_t>& target);

namespace serial {

Grid<std::uint8_t> argmax_channels(const ProbTensor& tensor);
void classify_directions(const InstanceMap& instances, std::span<const Point2> centroids,
                         int n_directions, double sector_start_deg, DirectionMap& out);
CentroidSums centroid_sums(const InstanceMap& instances);
/// Breadth-first flood fill.
ComponentLabels label_components(const Grid<std::uint8_t>& mask, Connectivity connectivity);
OverlapTable overlap_table(const InstanceMap& a, const InstanceMap& b);
CrossEntropySum cross_entropy_sum(const ProbTensor& pred, const Grid<std::uint8_t>& target,
                                  std::uint8_t ignore);
DiceSums dice_sums(const ProbTensor& pred, const Grid<std::uint8_t>& target);

}  // namespace serial

/// Direction class of a single offset; shared by both kernel variants.
/// dx grows rightwards, dy grows upwards.
int direction_class_of_offset(double dx, double dy, int n_directions, double sector_start_deg);

}  // namespace nucpan::kernels
