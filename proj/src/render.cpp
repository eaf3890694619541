#include "nucpan/render.hpp"

#include <algorithm>

namespace nucpan::render {

Rgb instance_color(std::uint16_t index) {
  const std::uint32_t v = (static_cast<std::uint32_t>(index) * 0x9E3779u) & 0xFFFFFFu;
  return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

Rgb class_color(std::uint8_t class_id) {
  static constexpr std::array<Rgb, kNumClasses + 1> palette = {{
      {0, 0, 0},        // background
      {255, 0, 0},      // neutrophil
      {0, 255, 0},      // epithelial
      {0, 0, 255},      // lymphocyte
      {255, 255, 0},    // plasma
      {255, 0, 255},    // eosinophil
      {0, 255, 255},    // connective
  }};
  if (class_id > kMaxClassId) throw Error("class ID out of range");
  return palette[class_id];
}

io::RgbImage render_overlay(const InstanceMap& instances, const ClassMap& classes) {
  if (!instances.same_shape(classes)) throw Error("render: instance and class maps differ in shape");
  validate(classes);
  io::RgbImage img;
  img.height = instances.height();
  img.width = instances.width() * 2;
  img.rgb.assign(static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width) * 3, 0);
  const int w = instances.width();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < w; ++c) {
      const Rgb left = instance_color(instances(r, c));
      const Rgb right = class_color(classes(r, c));
      std::uint8_t* row = img.rgb.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(img.width) * 3;
      std::copy(left.begin(), left.end(), row + static_cast<std::size_t>(c) * 3);
      std::copy(right.begin(), right.end(), row + static_cast<std::size_t>(c + w) * 3);
    }
  }
  return img;
}

}  // namespace nucpan::render
