#pragma once

// Seeded synthetic nuclei: filled ellipses rasterized on pixel centres.
//
// Randomness comes from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Raw 64-bit draws are converted locally (53-bit uniform
// doubles, rejection-sampled integers) and the geometry uses only IEEE
// correctly-rounded operations, so a seed reproduces bit-exactly everywhere.

#include <array>
#include <cstdint>
#include <random>

#include "json.hpp"
#include "nucpan/types.hpp"

namespace nucpan::synth {

struct SynthConfig {
  int height = 256;
  int width = 256;
  int n_nuclei = 20;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double eccentricity_min = 0.0;
  double eccentricity_max = 0.7;
  bool allow_touching = false;
  std::array<double, kNumClasses> class_weights{1, 1, 1, 1, 1, 1};
  std::uint64_t seed = 0;
  int n_directions = 4;
  int max_attempts = 1000;  // per nucleus

  void validate() const;
};

void from_json(const nlohmann::json& j, SynthConfig& config);
void to_json(nlohmann::json& j, const SynthConfig& config);

struct Bundle {
  InstanceMap instances;
  ClassMap classes;
  DirectionMap directions;
  CountVector counts{};

  friend bool operator==(const Bundle&, const Bundle&) = default;
};

Bundle generate(const SynthConfig& config);

struct TouchingPairConfig {
  int height = 0;  // 0: sized from radius_max
  int width = 0;
  double radius_min = 4.0;
  double radius_max = 9.0;
  double eccentricity_min = 0.0;
  double eccentricity_max = 0.6;
  std::array<double, kNumClasses> class_weights{1, 1, 1, 1, 1, 1};
  std::uint64_t seed = 0;
  int n_directions = 4;
  Connectivity connectivity = Connectivity::Four;
  int max_attempts = 1000;
};

struct TouchingPair {
  Bundle bundle;
  /// The direction-class-0 pixels form exactly two connected components, one
  /// inside each nucleus. Reconstruction is expected to separate the pair
  /// only when this holds.
  bool class0_regions_distinct = false;
};

TouchingPair generate_touching_pair(const TouchingPairConfig& config);

/// Portable draws from a mt19937_64 stream.
class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; derives independent per-image seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace nucpan::synth
