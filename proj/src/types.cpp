#include "nucpan/types.hpp"

#include <cmath>
#include <sstream>

namespace nucpan {

ProbTensor::ProbTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1) {
    throw Error("tensor dimensions must be non-negative with at least one channel");
  }
  values_.assign(pixels() * static_cast<std::size_t>(channels), fill);
}

void ProbTensor::check_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      const std::size_t px = i / static_cast<std::size_t>(channels_);
      std::ostringstream msg;
      msg << "non-finite tensor value at (" << px / static_cast<std::size_t>(width_) << ", "
          << px % static_cast<std::size_t>(width_) << ") channel "
          << i % static_cast<std::size_t>(channels_);
      throw Error(msg.str());
    }
  }
}

void ProbTensor::check_normalized(double tolerance) const {
  check_finite();
  const std::size_t n = pixels();
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = pixel(i);
    double sum = 0.0;
    for (int c = 0; c < channels_; ++c) {
      if (p[c] < 0.0) {
        std::ostringstream msg;
        msg << "negative probability " << p[c] << " at pixel (" << i / static_cast<std::size_t>(width_)
            << ", " << i % static_cast<std::size_t>(width_) << ")";
        throw Error(msg.str());
      }
      sum += p[c];
    }
    if (std::abs(sum - 1.0) > tolerance) {
      std::ostringstream msg;
      msg << "tensor is not normalized: channel sum " << sum << " at pixel ("
          << i / static_cast<std::size_t>(width_) << ", " << i % static_cast<std::size_t>(width_) << ")";
      throw Error(msg.str());
    }
  }
}

Connectivity connectivity_from_int(int n) {
  if (n == 4) return Connectivity::Four;
  if (n == 8) return Connectivity::Eight;
  throw Error("connectivity must be 4 or 8, got " + std::to_string(n));
}

void validate(const ClassMap& map) {
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      if (map(r, c) > kMaxClassId) {
        std::ostringstream msg;
        msg << "class ID out of range: value " << static_cast<int>(map(r, c)) << " at pixel (" << r
            << ", " << c << ")";
        throw Error(msg.str());
      }
    }
  }
}

void validate(const DirectionMap& map) {
  if (map.n_directions < 2 || map.n_directions > 255) {
    throw Error("direction count must be in [2, 255], got " + std::to_string(map.n_directions));
  }
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const int v = map(r, c);
      if (v != kDirectionBackground && v >= map.n_directions) {
        std::ostringstream msg;
        msg << "direction class out of range: value " << v << " at pixel (" << r << ", " << c
            << ") with " << map.n_directions << " directions";
        throw Error(msg.str());
      }
    }
  }
}

}  // namespace nucpan
