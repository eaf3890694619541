#include "nucpan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nucpan/dircodec.hpp"
#include "nucpan/kernels.hpp"

namespace nucpan::synth {

std::uint64_t Random::below(std::uint64_t n) {
  if (n == 0) throw Error("Random::below(0)");
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t x = engine_();
  while (x < threshold) x = engine_();
  return x % n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

void check_shape_params(double rmin, double rmax, double emin, double emax,
                        const std::array<double, kNumClasses>& weights, int n_directions,
                        int max_attempts) {
  if (!(rmin >= 2.0)) throw Error("radius_min must be >= 2");
  if (!(rmax >= rmin)) throw Error("radius_max must be >= radius_min");
  if (!(emin >= 0.0 && emax < 1.0 && emin <= emax)) {
    throw Error("eccentricity range must satisfy 0 <= min <= max < 1");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error("class weights must be finite and non-negative");
    total += w;
  }
  if (total <= 0.0) throw Error("class weights must not all be zero");
  dircodec::DirectionConfig{n_directions, 0.0}.validate();
  if (max_attempts < 1) throw Error("max_attempts must be positive");
}

struct Ellipse {
  double cy = 0.0;
  double cx = 0.0;
  double major = 0.0;  // semi-axes
  double minor = 0.0;
  double ux = 1.0;  // unit vector of the major axis
  double uy = 0.0;
};

struct Shape {
  std::vector<Pixel> pixels;  // raster order
};

void random_axes(Random& rng, double rmin, double rmax, double emin, double emax, Ellipse& e) {
  e.major = rng.uniform(rmin, rmax);
  const double ecc = rng.uniform(emin, emax);
  e.minor = e.major * std::sqrt(1.0 - ecc * ecc);
  // Orientation from a rejection-sampled point in the unit disc; avoids trig.
  while (true) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    const double n2 = x * x + y * y;
    if (n2 > 0.01 && n2 <= 1.0) {
      const double n = std::sqrt(n2);
      e.ux = x / n;
      e.uy = y / n;
      return;
    }
  }
}

Shape rasterize(const Ellipse& e, int height, int width) {
  Shape s;
  const int r0 = std::max(0, static_cast<int>(std::floor(e.cy - e.major)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + e.major)));
  const int c0 = std::max(0, static_cast<int>(std::floor(e.cx - e.major)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + e.major)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dx = static_cast<double>(c) - e.cx;
      const double dy = static_cast<double>(r) - e.cy;
      const double along = (dx * e.ux + dy * e.uy) / e.major;
      const double across = (dy * e.ux - dx * e.uy) / e.minor;
      if (along * along + across * across <= 1.0) s.pixels.push_back({r, c});
    }
  }
  return s;
}

bool four_connected(const std::vector<Pixel>& pixels) {
  if (pixels.empty()) return false;
  int r0 = pixels.front().row, r1 = r0, c0 = pixels.front().col, c1 = c0;
  for (const Pixel& p : pixels) {
    r0 = std::min(r0, p.row);
    r1 = std::max(r1, p.row);
    c0 = std::min(c0, p.col);
    c1 = std::max(c1, p.col);
  }
  Grid<std::uint8_t> mask(r1 - r0 + 1, c1 - c0 + 1, 0);
  for (const Pixel& p : pixels) mask(p.row - r0, p.col - c0) = 1;
  return kernels::serial::label_components(mask, Connectivity::Four).count == 1;
}

std::uint8_t sample_class(Random& rng, const std::array<double, kNumClasses>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double x = rng.uniform() * total;
  double acc = 0.0;
  int last_positive = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (weights[static_cast<std::size_t>(c)] <= 0.0) continue;
    last_positive = c;
    acc += weights[static_cast<std::size_t>(c)];
    if (x < acc) return static_cast<std::uint8_t>(c + 1);
  }
  return static_cast<std::uint8_t>(last_positive + 1);
}

bool isolated(const std::vector<Pixel>& pixels, const InstanceMap& map) {
  for (const Pixel& p : pixels) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = p.row + dr;
        const int c = p.col + dc;
        if (map.contains(r, c) && map(r, c) != 0) return false;
      }
    }
  }
  return true;
}

// With touching allowed, the candidate may only lose pixels on its own rim to
// earlier nuclei, and must stay connected afterwards.
bool yield_rim(std::vector<Pixel>& pixels, const InstanceMap& map) {
  std::vector<Pixel> kept;
  kept.reserve(pixels.size());
  bool overlapped = false;
  for (const Pixel& p : pixels) {
    if (map(p.row, p.col) == 0) {
      kept.push_back(p);
      continue;
    }
    overlapped = true;
    bool rim = false;
    for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
      if (!std::binary_search(pixels.begin(), pixels.end(), Pixel{p.row + dr, p.col + dc})) {
        rim = true;
        break;
      }
    }
    if (!rim) return false;
  }
  if (overlapped && !four_connected(kept)) return false;
  pixels = std::move(kept);
  return !pixels.empty();
}

Bundle finish_bundle(InstanceMap instances, const std::vector<std::uint8_t>& classes_by_index,
                     int n_directions) {
  Bundle b;
  b.classes = ClassMap(instances.height(), instances.width(), 0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i] != 0) b.classes[i] = classes_by_index[instances[i]];
  }
  for (std::size_t idx = 1; idx < classes_by_index.size(); ++idx) {
    b.counts[classes_by_index[idx] - 1u] += 1.0;
  }
  b.directions = dircodec::encode_direction_map(instances, {n_directions, 0.0});
  b.instances = std::move(instances);
  return b;
}

}  // namespace

void SynthConfig::validate() const {
  if (height < 1 || width < 1) throw Error("image dimensions must be positive");
  if (n_nuclei < 0 || n_nuclei > 65535) throw Error("n_nuclei must be in [0, 65535]");
  check_shape_params(radius_min, radius_max, eccentricity_min, eccentricity_max, class_weights,
                     n_directions, max_attempts);
  if (2.0 * radius_max > static_cast<double>(std::min(height, width) - 1)) {
    throw Error("radius_max " + std::to_string(radius_max) + " does not fit in a " +
                std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.n_nuclei = j.value("n_nuclei", c.n_nuclei);
  c.radius_min = j.value("radius_min", c.radius_min);
  c.radius_max = j.value("radius_max", c.radius_max);
  c.eccentricity_min = j.value("eccentricity_min", c.eccentricity_min);
  c.eccentricity_max = j.value("eccentricity_max", c.eccentricity_max);
  c.allow_touching = j.value("allow_touching", c.allow_touching);
  if (j.contains("class_weights")) {
    const auto w = j.at("class_weights").get<std::vector<double>>();
    if (w.size() != kNumClasses) throw Error("class_weights needs 6 entries");
    std::copy(w.begin(), w.end(), c.class_weights.begin());
  }
  c.seed = j.value("seed", c.seed);
  c.n_directions = j.value("n_directions", c.n_directions);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"height", c.height},
                     {"width", c.width},
                     {"n_nuclei", c.n_nuclei},
                     {"radius_min", c.radius_min},
                     {"radius_max", c.radius_max},
                     {"eccentricity_min", c.eccentricity_min},
                     {"eccentricity_max", c.eccentricity_max},
                     {"allow_touching", c.allow_touching},
                     {"class_weights", c.class_weights},
                     {"seed", c.seed},
                     {"n_directions", c.n_directions},
                     {"max_attempts", c.max_attempts}};
}

Bundle generate(const SynthConfig& config) {
  config.validate();
  Random rng(config.seed);
  InstanceMap instances(config.height, config.width, 0);
  std::vector<std::uint8_t> classes_by_index(1, 0);

  for (int n = 0; n < config.n_nuclei; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
      Ellipse e;
      random_axes(rng, config.radius_min, config.radius_max, config.eccentricity_min,
                  config.eccentricity_max, e);
      e.cy = rng.uniform(e.major, static_cast<double>(config.height - 1) - e.major);
      e.cx = rng.uniform(e.major, static_cast<double>(config.width - 1) - e.major);
      Shape s = rasterize(e, config.height, config.width);
      if (!four_connected(s.pixels)) continue;
      if (config.allow_touching) {
        if (!yield_rim(s.pixels, instances)) continue;
      } else if (!isolated(s.pixels, instances)) {
        continue;
      }
      const auto index = static_cast<std::uint16_t>(n + 1);
      for (const Pixel& p : s.pixels) instances(p.row, p.col) = index;
      classes_by_index.push_back(sample_class(rng, config.class_weights));
      placed = true;
    }
    if (!placed) {
      throw Error("infeasible packing: placed " + std::to_string(n) + " of " +
                  std::to_string(config.n_nuclei) + " nuclei; nucleus " + std::to_string(n + 1) +
                  " failed " + std::to_string(config.max_attempts) + " attempts");
    }
  }
  return finish_bundle(std::move(instances), classes_by_index, config.n_directions);
}

TouchingPair generate_touching_pair(const TouchingPairConfig& config) {
  check_shape_params(config.radius_min, config.radius_max, config.eccentricity_min,
                     config.eccentricity_max, config.class_weights, config.n_directions,
                     config.max_attempts);
  const int auto_side = static_cast<int>(std::ceil(4.0 * config.radius_max)) + 9;
  const int height = config.height > 0 ? config.height : auto_side;
  const int width = config.width > 0 ? config.width : auto_side;
  if (2.0 * config.radius_max > static_cast<double>(std::min(height, width) - 1)) {
    throw Error("radius_max does not fit in the touching-pair image");
  }
  Random rng(config.seed);

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Ellipse a;
    random_axes(rng, config.radius_min, config.radius_max, config.eccentricity_min,
                config.eccentricity_max, a);
    a.cy = static_cast<double>(height - 1) / 2.0 + rng.uniform(-0.5, 0.5);
    a.cx = static_cast<double>(width - 1) / 2.0 + rng.uniform(-0.5, 0.5);
    const Shape sa = rasterize(a, height, width);
    if (!four_connected(sa.pixels)) continue;

    Ellipse b;
    random_axes(rng, config.radius_min, config.radius_max, config.eccentricity_min,
                config.eccentricity_max, b);
    double dir_x = 0.0, dir_y = 0.0;
    while (true) {
      dir_x = rng.uniform(-1.0, 1.0);
      dir_y = rng.uniform(-1.0, 1.0);
      const double n2 = dir_x * dir_x + dir_y * dir_y;
      if (n2 > 0.01 && n2 <= 1.0) {
        const double n = std::sqrt(n2);
        dir_x /= n;
        dir_y /= n;
        break;
      }
    }

    InstanceMap instances(height, width, 0);
    for (const Pixel& p : sa.pixels) instances(p.row, p.col) = 1;

    // Slide b towards a until the two first share a 4-adjacent pixel pair.
    bool accepted = false;
    for (double d = a.major + b.major + 2.0; d > 0.0 && !accepted; d -= 0.25) {
      b.cy = a.cy + d * dir_y;
      b.cx = a.cx + d * dir_x;
      if (b.cy - b.major < 0.0 || b.cx - b.major < 0.0 ||
          b.cy + b.major > static_cast<double>(height - 1) ||
          b.cx + b.major > static_cast<double>(width - 1)) {
        continue;
      }
      const Shape sb = rasterize(b, height, width);
      bool overlap = false;
      bool touching = false;
      for (const Pixel& p : sb.pixels) {
        if (instances(p.row, p.col) != 0) {
          overlap = true;
          break;
        }
        for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
          if (instances.contains(p.row + dr, p.col + dc) && instances(p.row + dr, p.col + dc) == 1) {
            touching = true;
          }
        }
      }
      if (overlap) break;
      if (!touching) continue;
      if (!four_connected(sb.pixels)) break;
      for (const Pixel& p : sb.pixels) instances(p.row, p.col) = 2;
      accepted = true;
    }
    if (!accepted) continue;

    std::vector<std::uint8_t> classes_by_index{0, sample_class(rng, config.class_weights),
                                               sample_class(rng, config.class_weights)};
    TouchingPair out;
    out.bundle = finish_bundle(std::move(instances), classes_by_index, config.n_directions);

    Grid<std::uint8_t> class0(height, width, 0);
    for (std::size_t i = 0; i < class0.size(); ++i) class0[i] = out.bundle.directions[i] == 0;
    const auto comps = kernels::serial::label_components(class0, config.connectivity);
    if (comps.count == 2) {
      std::array<int, 3> owner{0, 0, 0};  // component -> instance, -1 if mixed
      for (std::size_t i = 0; i < class0.size(); ++i) {
        const int label = comps.labels[i];
        if (label == 0) continue;
        const int inst = out.bundle.instances[i];
        int& o = owner[static_cast<std::size_t>(label)];
        if (o == 0) o = inst;
        else if (o != inst) o = -1;
      }
      out.class0_regions_distinct = owner[1] > 0 && owner[2] > 0 && owner[1] != owner[2];
    }
    return out;
  }
  throw Error("touching pair: packing failed after " + std::to_string(config.max_attempts) +
              " attempts");
}

}  // namespace nucpan::synth
