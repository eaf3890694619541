#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nucpan {

/// Raised for every recoverable failure: bad input files, violated
/// preconditions, infeasible configurations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct Point2 {
  double row = 0.0;
  double col = 0.0;
};

/// Dense row-major 2-D grid.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width) {
    if (height < 0 || width < 0) throw Error("grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c);
  }
  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < height_ && c < width_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(int h, int w) const { return height_ == h && width_ == w; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Instance indices; 0 is background, 1..65535 label nuclei.
struct InstanceMap : Grid<std::uint16_t> {
  using Grid::Grid;
  friend bool operator==(const InstanceMap&, const InstanceMap&) = default;
};

/// Nucleus class IDs. Integer order of the six nucleus categories:
///   0 background, 1 neutrophil, 2 epithelial, 3 lymphocyte,
///   4 plasma, 5 eosinophil, 6 connective.
/// Metrics, count vectors and CSV columns all depend on this order.
struct ClassMap : Grid<std::uint8_t> {
  using Grid::Grid;
  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

inline constexpr int kNumClasses = 6;
inline constexpr std::uint8_t kMaxClassId = 6;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "neutrophil", "epithelial", "lymphocyte", "plasma", "eosinophil", "connective"};

/// Direction classes 0..N-1 on foreground, kDirectionBackground elsewhere.
struct DirectionMap : Grid<std::uint8_t> {
  DirectionMap() = default;
  DirectionMap(int height, int width, int directions)
      : Grid(height, width, kBackground), n_directions(directions) {}

  static constexpr std::uint8_t kBackground = 255;
  int n_directions = 4;

  friend bool operator==(const DirectionMap&, const DirectionMap&) = default;
};

inline constexpr std::uint8_t kDirectionBackground = DirectionMap::kBackground;

/// H x W x C real-valued channel stack, channel-last row-major. Values are
/// held in double precision; tensor files store them as float32.
class ProbTensor {
 public:
  ProbTensor() = default;
  ProbTensor(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  std::size_t pixels() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  double& at(int r, int c, int ch) { return values_[offset(r, c) + static_cast<std::size_t>(ch)]; }
  double at(int r, int c, int ch) const {
    return values_[offset(r, c) + static_cast<std::size_t>(ch)];
  }
  /// Pointer to the `channels()` values of pixel i (raster index).
  const double* pixel(std::size_t i) const { return values_.data() + i * static_cast<std::size_t>(channels_); }
  double* pixel(std::size_t i) { return values_.data() + i * static_cast<std::size_t>(channels_); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Throws unless every value is finite.
  void check_finite() const;
  /// Throws unless every value is >= 0 and each pixel's channels sum to 1 within `tolerance`.
  void check_normalized(double tolerance = 1e-5) const;

  friend bool operator==(const ProbTensor&, const ProbTensor&) = default;

 private:
  std::size_t offset(int r, int c) const {
    return (static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(c)) *
           static_cast<std::size_t>(channels_);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Per-class nucleus counts in ClassMap order (classes 1..6).
using CountVector = std::array<double, kNumClasses>;

enum class Connectivity { Four = 4, Eight = 8 };

Connectivity connectivity_from_int(int n);

// Invariant checks. Each throws Error describing the first offending pixel.
void validate(const ClassMap& map);
void validate(const DirectionMap& map);

}  // namespace nucpan
