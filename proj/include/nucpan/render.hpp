#pragma once

#include <array>
#include <cstdint>

#include "nucpan/tensorio.hpp"
#include "nucpan/types.hpp"

namespace nucpan::render {

using Rgb = std::array<std::uint8_t, 3>;

/// Distinct colour per instance index (an odd-multiplier bijection on 24 bits);
/// index 0 is black.
Rgb instance_color(std::uint16_t index);

/// Fixed palette for classes 1..6; class 0 is black.
Rgb class_color(std::uint8_t class_id);

/// Side-by-side overlay, 2W wide: instance colours on the left, class
/// colours on the right. Background is black in both panels.
io::RgbImage render_overlay(const InstanceMap& instances, const ClassMap& classes);

}  // namespace nucpan::render
