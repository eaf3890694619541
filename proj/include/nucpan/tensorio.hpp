#pragma once

// File formats for maps, tensors and count tables.
//
//   label maps  single-channel grayscale PNG; 16-bit for instance maps,
//               8-bit for class and direction maps (direction background = 255)
//   tensors     raw little-endian float32 payload, channel-last row-major,
//               plus a JSON sidecar `<path>.json` holding {height, width, channels};
//               in memory values widen to double, and writing rounds to nearest float32
//   counts      CSV, header `image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective`

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "nucpan/types.hpp"

namespace nucpan::io {

enum class LabelKind { Instance, Class, Direction };

using LabelMap = std::variant<InstanceMap, ClassMap, DirectionMap>;

LabelMap read_label_map(const std::filesystem::path& path, LabelKind kind, int n_directions = 4);
InstanceMap read_instance_map(const std::filesystem::path& path);
ClassMap read_class_map(const std::filesystem::path& path);
DirectionMap read_direction_map(const std::filesystem::path& path, int n_directions = 4);

void write_label_map(const InstanceMap& map, const std::filesystem::path& path);
void write_label_map(const ClassMap& map, const std::filesystem::path& path);
void write_label_map(const DirectionMap& map, const std::filesystem::path& path);

/// 8-bit RGB image, used by the renderer.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};
void write_rgb_png(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_rgb_png(const std::filesystem::path& path);

std::filesystem::path tensor_header_path(const std::filesystem::path& payload);
ProbTensor read_tensor(const std::filesystem::path& payload);
void write_tensor(const ProbTensor& tensor, const std::filesystem::path& payload);

struct CountRow {
  std::string image;
  CountVector counts{};
  friend bool operator==(const CountRow&, const CountRow&) = default;
};

std::vector<CountRow> read_counts(const std::filesystem::path& path);
std::vector<CountRow> parse_counts(const std::string& text);
void write_counts(const std::vector<CountRow>& rows, const std::filesystem::path& path);
std::string format_counts(const std::vector<CountRow>& rows);

}  // namespace nucpan::io
