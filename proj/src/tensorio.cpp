#include "nucpan/tensorio.hpp"

#include <png.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace nucpan::io {
namespace fs = std::filesystem;

namespace {

// libpng reports errors through longjmp. The setjmp frames below hold only
// trivially destructible locals; every owning object lives in the caller.
struct PngErrorBuffer {
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngErrorBuffer*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof(err->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw Error(std::string(mode[0] == 'r' ? "cannot open " : "cannot write ") + path.string() +
                ": " + std::strerror(errno));
  }
  return f;
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngErrorBuffer err;

  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
    if (!png) throw Error("libpng: cannot create read struct");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_read_struct(&png, nullptr, nullptr);
      throw Error("libpng: cannot create info struct");
    }
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngErrorBuffer err;

  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
    if (!png) throw Error("libpng: cannot create write struct");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw Error("libpng: cannot create info struct");
    }
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;
};

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

bool read_png_header(PngReader& r, std::FILE* f, PngHeader* out) {
  if (setjmp(png_jmpbuf(r.png))) return false;
  png_init_io(r.png, f);
  png_read_info(r.png, r.info);
  png_get_IHDR(r.png, r.info, &out->width, &out->height, &out->bit_depth, &out->color_type,
               nullptr, nullptr, nullptr);
  return true;
}

bool read_png_rows(PngReader& r, png_bytepp rows) {
  if (setjmp(png_jmpbuf(r.png))) return false;
  png_set_interlace_handling(r.png);
  if constexpr (std::endian::native == std::endian::little) {
    png_set_swap(r.png);
  }
  png_read_update_info(r.png, r.info);
  png_read_image(r.png, rows);
  png_read_end(r.png, nullptr);
  return true;
}

bool write_png_rows(PngWriter& w, std::FILE* f, png_uint_32 width, png_uint_32 height, int bit_depth,
                    int color_type, png_bytepp rows) {
  if (setjmp(png_jmpbuf(w.png))) return false;
  png_init_io(w.png, f);
  png_set_IHDR(w.png, w.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) {
    png_set_swap(w.png);
  }
  png_write_image(w.png, rows);
  png_write_end(w.png, nullptr);
  return true;
}

const char* kind_name(LabelKind kind) {
  switch (kind) {
    case LabelKind::Instance: return "instance";
    case LabelKind::Class: return "class";
    case LabelKind::Direction: return "direction";
  }
  return "?";
}

/// Decoded single-channel PNG; samples widened to 16 bits.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> samples;
};

GrayImage read_gray_png(const fs::path& path, int expected_depth, LabelKind kind) {
  if (!fs::exists(path)) throw Error("missing file: " + path.string());
  FilePtr f = open_file(path, "rb");
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(path.string() + ": not a PNG file");
  }
  PngReader reader;
  png_set_sig_bytes(reader.png, 8);
  PngHeader hdr;
  if (!read_png_header(reader, f.get(), &hdr)) {
    throw Error(path.string() + ": " + reader.err.message);
  }
  if (hdr.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(path.string() + ": expected a single-channel grayscale PNG for a " +
                kind_name(kind) + " map");
  }
  if (hdr.bit_depth != expected_depth) {
    throw Error(path.string() + ": wrong bit depth " + std::to_string(hdr.bit_depth) + " for a " +
                kind_name(kind) + " map (expected " + std::to_string(expected_depth) + "-bit)");
  }
  if (hdr.width > 1u << 20 || hdr.height > 1u << 20) {
    throw Error(path.string() + ": image too large");
  }

  GrayImage img;
  img.height = static_cast<int>(hdr.height);
  img.width = static_cast<int>(hdr.width);
  const std::size_t bytes_per_sample = expected_depth == 16 ? 2 : 1;
  const std::size_t stride = static_cast<std::size_t>(img.width) * bytes_per_sample;
  std::vector<png_byte> buffer(stride * static_cast<std::size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) rows[static_cast<std::size_t>(r)] = buffer.data() + stride * static_cast<std::size_t>(r);
  if (!read_png_rows(reader, rows.data())) {
    throw Error(path.string() + ": " + reader.err.message);
  }

  img.samples.resize(static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width));
  if (expected_depth == 16) {
    std::memcpy(img.samples.data(), buffer.data(), buffer.size());
  } else {
    std::copy(buffer.begin(), buffer.end(), img.samples.begin());
  }
  return img;
}

template <typename Sample>
void write_gray_png(const Grid<Sample>& grid, const fs::path& path) {
  constexpr int depth = sizeof(Sample) * 8;
  static_assert(depth == 8 || depth == 16);
  if (grid.height() == 0 || grid.width() == 0) {
    throw Error(path.string() + ": cannot write an empty (zero-sized) PNG");
  }
  // Copy so the row pointers can be non-const for libpng.
  std::vector<Sample> data(grid.begin(), grid.end());
  const std::size_t stride = static_cast<std::size_t>(grid.width()) * sizeof(Sample);
  std::vector<png_bytep> rows(static_cast<std::size_t>(grid.height()));
  auto* base = reinterpret_cast<png_bytep>(data.data());
  for (int r = 0; r < grid.height(); ++r) rows[static_cast<std::size_t>(r)] = base + stride * static_cast<std::size_t>(r);

  FilePtr f = open_file(path, "wb");
  PngWriter writer;
  if (!write_png_rows(writer, f.get(), static_cast<png_uint_32>(grid.width()),
                      static_cast<png_uint_32>(grid.height()), depth, PNG_COLOR_TYPE_GRAY,
                      rows.data())) {
    throw Error(path.string() + ": " + writer.err.message);
  }
  if (std::fflush(f.get()) != 0) throw Error("cannot write " + path.string());
}

void ensure_parent(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
}

}  // namespace

InstanceMap read_instance_map(const fs::path& path) {
  GrayImage img = read_gray_png(path, 16, LabelKind::Instance);
  InstanceMap map(img.height, img.width);
  std::copy(img.samples.begin(), img.samples.end(), map.begin());
  return map;
}

ClassMap read_class_map(const fs::path& path) {
  GrayImage img = read_gray_png(path, 8, LabelKind::Class);
  ClassMap map(img.height, img.width);
  for (std::size_t i = 0; i < img.samples.size(); ++i) map[i] = static_cast<std::uint8_t>(img.samples[i]);
  try {
    validate(map);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return map;
}

DirectionMap read_direction_map(const fs::path& path, int n_directions) {
  GrayImage img = read_gray_png(path, 8, LabelKind::Direction);
  DirectionMap map(img.height, img.width, n_directions);
  for (std::size_t i = 0; i < img.samples.size(); ++i) map[i] = static_cast<std::uint8_t>(img.samples[i]);
  try {
    validate(map);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return map;
}

LabelMap read_label_map(const fs::path& path, LabelKind kind, int n_directions) {
  switch (kind) {
    case LabelKind::Instance: return read_instance_map(path);
    case LabelKind::Class: return read_class_map(path);
    case LabelKind::Direction: return read_direction_map(path, n_directions);
  }
  throw Error("unknown label kind");
}

void write_label_map(const InstanceMap& map, const fs::path& path) {
  ensure_parent(path);
  write_gray_png<std::uint16_t>(map, path);
}

void write_label_map(const ClassMap& map, const fs::path& path) {
  validate(map);
  ensure_parent(path);
  write_gray_png<std::uint8_t>(map, path);
}

void write_label_map(const DirectionMap& map, const fs::path& path) {
  validate(map);
  ensure_parent(path);
  write_gray_png<std::uint8_t>(map, path);
}

void write_rgb_png(const RgbImage& image, const fs::path& path) {
  if (image.height <= 0 || image.width <= 0) throw Error(path.string() + ": cannot write an empty PNG");
  if (image.rgb.size() != static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width) * 3) {
    throw Error("RGB buffer size does not match image dimensions");
  }
  ensure_parent(path);
  std::vector<std::uint8_t> data = image.rgb;
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int r = 0; r < image.height; ++r) rows[static_cast<std::size_t>(r)] = data.data() + stride * static_cast<std::size_t>(r);
  FilePtr f = open_file(path, "wb");
  PngWriter writer;
  if (!write_png_rows(writer, f.get(), static_cast<png_uint_32>(image.width),
                      static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, rows.data())) {
    throw Error(path.string() + ": " + writer.err.message);
  }
}

RgbImage read_rgb_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  PngReader reader;
  PngHeader hdr;
  if (!read_png_header(reader, f.get(), &hdr)) throw Error(path.string() + ": " + reader.err.message);
  if (hdr.color_type != PNG_COLOR_TYPE_RGB || hdr.bit_depth != 8) {
    throw Error(path.string() + ": expected an 8-bit RGB PNG");
  }
  RgbImage img;
  img.height = static_cast<int>(hdr.height);
  img.width = static_cast<int>(hdr.width);
  img.rgb.resize(static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width) * 3);
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) rows[static_cast<std::size_t>(r)] = img.rgb.data() + stride * static_cast<std::size_t>(r);
  if (!read_png_rows(reader, rows.data())) throw Error(path.string() + ": " + reader.err.message);
  return img;
}

// ---------------------------------------------------------------------------
// Tensors

fs::path tensor_header_path(const fs::path& payload) {
  fs::path header = payload;
  header += ".json";
  return header;
}

ProbTensor read_tensor(const fs::path& payload) {
  const fs::path header_path = tensor_header_path(payload);
  std::ifstream hs(header_path);
  if (!hs) throw Error("missing tensor header: " + header_path.string());
  nlohmann::json header;
  try {
    hs >> header;
  } catch (const nlohmann::json::exception& e) {
    throw Error(header_path.string() + ": malformed JSON header: " + e.what());
  }
  int height = 0, width = 0, channels = 0;
  try {
    height = header.at("height").get<int>();
    width = header.at("width").get<int>();
    channels = header.at("channels").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(header_path.string() + ": header needs integer height, width, channels: " + e.what());
  }
  if (height < 0 || width < 0 || channels < 1) {
    throw Error(header_path.string() + ": invalid tensor dimensions");
  }

  std::ifstream ps(payload, std::ios::binary);
  if (!ps) throw Error("missing tensor payload: " + payload.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(ps)), std::istreambuf_iterator<char>());

  ProbTensor tensor(height, width, channels);
  const std::size_t expected = tensor.size() * sizeof(float);
  if (bytes.size() != expected) {
    throw Error(payload.string() + ": payload has " + std::to_string(bytes.size()) +
                " bytes, header implies " + std::to_string(expected));
  }
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    tensor.values()[i] = std::bit_cast<float>(u);
  }
  try {
    tensor.check_finite();
  } catch (const Error& e) {
    throw Error(payload.string() + ": " + e.what());
  }
  return tensor;
}

void write_tensor(const ProbTensor& tensor, const fs::path& payload) {
  tensor.check_finite();
  ensure_parent(payload);
  nlohmann::json header = {
      {"height", tensor.height()}, {"width", tensor.width()}, {"channels", tensor.channels()}};
  {
    std::ofstream hs(tensor_header_path(payload));
    if (!hs) throw Error("cannot write " + tensor_header_path(payload).string());
    hs << header.dump() << '\n';
  }
  std::vector<std::uint32_t> words(tensor.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const float f = static_cast<float>(tensor.values()[i]);
    if (!std::isfinite(f)) {
      throw Error(payload.string() + ": value " + std::to_string(tensor.values()[i]) +
                  " overflows float32");
    }
    words[i] = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) words[i] = __builtin_bswap32(words[i]);
  }
  std::ofstream ps(payload, std::ios::binary);
  if (!ps) throw Error("cannot write " + payload.string());
  ps.write(reinterpret_cast<const char*>(words.data()),
           static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!ps) throw Error("cannot write " + payload.string());
}

// ---------------------------------------------------------------------------
// Count tables

namespace {

constexpr const char* kCountsHeader =
    "image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective";

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace

std::vector<CountRow> parse_counts(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<CountRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (!saw_header) {
      if (view != kCountsHeader) {
        throw Error("counts CSV line 1: expected header '" + std::string(kCountsHeader) + "'");
      }
      saw_header = true;
      continue;
    }
    if (view.empty()) continue;
    const auto fields = split_csv(view);
    const std::string where = "counts CSV row " + std::to_string(line_no);
    if (fields.size() != 1 + kNumClasses) {
      throw Error(where + ": expected " + std::to_string(1 + kNumClasses) + " columns, got " +
                  std::to_string(fields.size()));
    }
    CountRow row;
    row.image = std::string(trim(fields[0]));
    if (row.image.empty()) throw Error(where + ": empty image id");
    for (int c = 0; c < kNumClasses; ++c) {
      const std::string_view f = trim(fields[static_cast<std::size_t>(c + 1)]);
      double v = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (!f.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (f.empty() || ec != std::errc() || ptr != last) {
        throw Error(where + ": cannot parse '" + std::string(f) + "' as a number (column " +
                    std::string(kClassNames[static_cast<std::size_t>(c)]) + ")");
      }
      if (!std::isfinite(v)) throw Error(where + ": non-finite count");
      row.counts[static_cast<std::size_t>(c)] = v;
    }
    rows.push_back(std::move(row));
  }
  if (!saw_header) throw Error("counts CSV is empty (missing header)");
  return rows;
}

std::vector<CountRow> read_counts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_counts(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_counts(const std::vector<CountRow>& rows) {
  std::string out = kCountsHeader;
  out += '\n';
  char buf[64];
  for (const CountRow& row : rows) {
    if (row.image.find_first_of(",\n\r") != std::string::npos) {
      throw Error("image id contains a separator: " + row.image);
    }
    out += row.image;
    for (double v : row.counts) {
      if (!std::isfinite(v)) throw Error("non-finite count for image " + row.image);
      if (v == 0.0) v = 0.0;  // drop negative zero
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

void write_counts(const std::vector<CountRow>& rows, const fs::path& path) {
  const std::string text = format_counts(rows);
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace nucpan::io
