#include <omp.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "nucpan/dircodec.hpp"
#include "nucpan/reconstruct.hpp"
#include "nucpan/synth.hpp"
#include "support.hpp"

using namespace nucpan;
using namespace nucpan::reconstruct;

namespace {

constexpr std::uint8_t B = kDirectionBackground;

// Hard maps from a direction layout; every foreground pixel gets class 1.
HardMaps maps_from_rows(const std::vector<std::vector<int>>& rows, int n = 4) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows[0].size());
  HardMaps m{ClassMap(h, w, 0), DirectionMap(h, w, n)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int v = rows[r][c];
      m.directions(r, c) = static_cast<std::uint8_t>(v < 0 ? B : v);
      m.classes(r, c) = v < 0 ? 0 : 1;
    }
  }
  return m;
}

InstanceMap grid_from_rows(const std::vector<std::vector<int>>& rows) {
  InstanceMap m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()), 0);
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) m(r, c) = static_cast<std::uint16_t>(rows[r][c]);
  }
  return m;
}

ProbTensor tensor_from(int h, int w, const std::vector<std::vector<float>>& pixels) {
  const int ch = static_cast<int>(pixels[0].size());
  ProbTensor t(h, w, ch, 0.0f);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    for (int k = 0; k < ch; ++k) t.pixel(i)[k] = pixels[i][k];
  }
  return t;
}

HardMaps random_hard_maps(std::mt19937_64& rng, int h, int w, int n) {
  std::uniform_int_distribution<int> dir(-1, n - 1);
  std::uniform_int_distribution<int> cls(1, 6);
  HardMaps m{ClassMap(h, w, 0), DirectionMap(h, w, n)};
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    const int d = dir(rng);
    if (d < 0) continue;
    m.directions[i] = static_cast<std::uint8_t>(d);
    m.classes[i] = static_cast<std::uint8_t>(cls(rng));
  }
  return m;
}

std::size_t instance_count(const InstanceMap& m) {
  std::set<std::uint16_t> s(m.begin(), m.end());
  s.erase(0);
  return s.size();
}

}  // namespace

TEST_CASE("argmax picks the smallest index among ties") {
  const ProbTensor two = tensor_from(1, 2, {{0.1f, 0.9f}, {0.5f, 0.5f}});
  const auto idx = argmax_channels(two);
  CHECK(idx(0, 0) == 1);
  CHECK(idx(0, 1) == 0);
  const ProbTensor flat(3, 4, 7, 1.0f / 7.0f);
  const auto zeros = argmax_channels(flat);
  CHECK(std::all_of(zeros.begin(), zeros.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("maps_from_outputs masks directions by the class map") {
  SUBCASE("all background") {
    ProbTensor seg(2, 3, 7, 0.0f);
    for (std::size_t i = 0; i < 6; ++i) seg.pixel(i)[0] = 1.0f;
    ProbTensor dir(2, 3, 4, 0.25f);
    dir.pixel(4)[2] = 0.9f;
    const HardMaps m = maps_from_outputs(seg, dir);
    CHECK(std::all_of(m.classes.begin(), m.classes.end(), [](auto v) { return v == 0; }));
    CHECK(std::all_of(m.directions.begin(), m.directions.end(), [](auto v) { return v == B; }));
  }
  SUBCASE("one foreground pixel") {
    ProbTensor seg(1, 2, 7, 0.0f);
    seg.pixel(0)[0] = 1.0f;
    seg.pixel(1)[4] = 1.0f;
    ProbTensor dir = tensor_from(1, 2, {{0.0f, 0.0f, 0.0f, 1.0f}, {0.1f, 0.7f, 0.1f, 0.1f}});
    const HardMaps m = maps_from_outputs(seg, dir);
    CHECK(m.classes(0, 1) == 4);
    CHECK(m.directions(0, 1) == 1);
    CHECK(m.directions(0, 0) == B);
    CHECK(m.directions.n_directions == 4);
  }
  SUBCASE("shape and channel errors") {
    CHECK_THROWS_AS((void)maps_from_outputs(ProbTensor(2, 2, 6, 0.0f), ProbTensor(2, 2, 4, 0.0f)), Error);
    CHECK_THROWS_AS((void)maps_from_outputs(ProbTensor(2, 2, 7, 0.0f), ProbTensor(2, 3, 4, 0.0f)), Error);
  }
}

TEST_CASE("connected components") {
  Grid<std::uint8_t> empty(3, 3, 0);
  CHECK(connected_components(empty, Connectivity::Four).empty());

  Grid<std::uint8_t> diag(2, 2, 0);
  diag(0, 0) = diag(1, 1) = 1;
  CHECK(connected_components(diag, Connectivity::Four).size() == 2);
  CHECK(connected_components(diag, Connectivity::Eight).size() == 1);

  Grid<std::uint8_t> full(3, 3, 1);
  const auto one = connected_components(full, Connectivity::Four);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 9);

  // Ordered by the first pixel in raster order.
  Grid<std::uint8_t> u(3, 4, 0);
  u(0, 3) = 1;
  u(1, 0) = u(2, 0) = u(2, 1) = u(2, 2) = u(2, 3) = u(1, 3) = 1;
  u(0, 1) = 1;
  const auto comps = connected_components(u, Connectivity::Four);
  REQUIRE(comps.size() == 2);
  CHECK(comps[0].front() == Pixel{0, 1});
  CHECK(comps[1].front() == Pixel{0, 3});
  CHECK(comps[1].size() == 7);
}

TEST_CASE("single nucleus round trip") {
  InstanceMap inst(9, 9, 0);
  for (int r = 1; r < 8; ++r) {
    for (int c = 2; c < 7; ++c) inst(r, c) = 4;
  }
  ClassMap cls(9, 9, 0);
  for (std::size_t i = 0; i < inst.size(); ++i) cls[i] = inst[i] ? 3 : 0;
  const InstanceMap out = reconstruct_instances(cls, dircodec::encode_direction_map(inst));
  CHECK(instance_count(out) == 1);
  CHECK(testing::equal_up_to_relabel(out, inst));
}

TEST_CASE("synthetic non-touching bundles round trip") {
  synth::SynthConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.n_nuclei = 12;
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    cfg.seed = seed;
    const synth::Bundle b = synth::generate(cfg);
    const PanopticResult r = decode(b.classes, b.directions);
    CAPTURE(seed);
    REQUIRE(testing::equal_up_to_relabel(r.instances, b.instances));
    REQUIRE(r.classes == b.classes);
    REQUIRE(counts_from_instances(r) == b.counts);
    ++exact;
  }
  CHECK(exact == 120);
}

TEST_CASE("touching pairs with distinct class-0 regions separate") {
  int distinct = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    synth::TouchingPairConfig cfg;
    cfg.seed = seed;
    const synth::TouchingPair pair = synth::generate_touching_pair(cfg);
    REQUIRE(instance_count(pair.bundle.instances) == 2);
    if (!pair.class0_regions_distinct) continue;
    ++distinct;
    const InstanceMap out = reconstruct_instances(pair.bundle.classes, pair.bundle.directions);
    CAPTURE(seed);
    REQUIRE(instance_count(out) == 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
      REQUIRE((out[i] == 0) == (pair.bundle.instances[i] == 0));
    }
  }
  CHECK(distinct >= 100);
}

TEST_CASE("a lone class-2 component opens its own instance") {
  const HardMaps m = maps_from_rows({{0, 0, -1, -1}, {1, 1, -1, 2}, {-1, -1, -1, 2}});
  const InstanceMap out = reconstruct_instances(m.classes, m.directions);
  CHECK(out == grid_from_rows({{1, 1, 0, 0}, {1, 1, 0, 2}, {0, 0, 0, 2}}));
}

TEST_CASE("merge prefers most shared adjacency, then the smaller index") {
  SUBCASE("tie goes to the smaller index") {
    const HardMaps m = maps_from_rows({{0, -1, 0}, {1, 1, 1}});
    const InstanceMap out = reconstruct_instances(m.classes, m.directions);
    CHECK(out == grid_from_rows({{1, 0, 2}, {1, 1, 1}}));
  }
  SUBCASE("more pairs wins") {
    const HardMaps m = maps_from_rows({{0, -1, 0, 0}, {1, 1, 1, 1}});
    const InstanceMap out = reconstruct_instances(m.classes, m.directions);
    CHECK(out == grid_from_rows({{1, 0, 2, 2}, {2, 2, 2, 2}}));
  }
  SUBCASE("adjacency counts pixel pairs, not pixels") {
    // Instance 2 is one pixel with three class-1 neighbours; instance 1 has
    // two pixels with one each.
    const HardMaps m = maps_from_rows({{-1, -1, -1, 0, 0}, {1, 0, 1, 1, 1}, {1, 1, 1, -1, -1}});
    const InstanceMap out = reconstruct_instances(m.classes, m.directions);
    CHECK(out(0, 3) == 1);
    CHECK(out(1, 1) == 2);
    CHECK(out(1, 0) == 2);
    CHECK(out(1, 4) == 2);
  }
}

TEST_CASE("merging only looks at class k-1, with no wrap-around") {
  // Class 3 next to class 0 only: new instance.
  const HardMaps wrap = maps_from_rows({{0, 3}});
  CHECK(reconstruct_instances(wrap.classes, wrap.directions) == grid_from_rows({{1, 2}}));
  // Class 2 next to class 0 (skipping 1): new instance.
  const HardMaps skip = maps_from_rows({{0, 2}});
  CHECK(reconstruct_instances(skip.classes, skip.directions) == grid_from_rows({{1, 2}}));
  // Chain 0 -> 1 -> 2 -> 3 stays one instance.
  const HardMaps chain = maps_from_rows({{0, 1, 2, 3}});
  CHECK(reconstruct_instances(chain.classes, chain.directions) == grid_from_rows({{1, 1, 1, 1}}));
}

TEST_CASE("connectivity changes the adjacency test") {
  const HardMaps m = maps_from_rows({{0, -1}, {-1, 1}});
  CHECK(reconstruct_instances(m.classes, m.directions, {Connectivity::Four, 4}) ==
        grid_from_rows({{1, 0}, {0, 2}}));
  CHECK(reconstruct_instances(m.classes, m.directions, {Connectivity::Eight, 4}) ==
        grid_from_rows({{1, 0}, {0, 1}}));
}

TEST_CASE("reconstruction input errors") {
  const HardMaps ok = maps_from_rows({{0, 1}, {-1, 2}});
  CHECK_THROWS_WITH_AS((void)reconstruct_instances(ok.classes, DirectionMap(3, 2, 4)),
                       doctest::Contains("dimension mismatch"), Error);
  HardMaps bad = ok;
  bad.directions(1, 0) = 0;
  CHECK_THROWS_WITH_AS((void)reconstruct_instances(bad.classes, bad.directions),
                       doctest::Contains("inconsistency"), Error);
  bad = ok;
  bad.directions(0, 1) = 5;
  CHECK_THROWS_AS((void)reconstruct_instances(bad.classes, bad.directions), Error);
}

TEST_CASE("output foreground equals the class-map foreground") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const HardMaps m = random_hard_maps(rng, 10, 13, 4);
    for (Connectivity conn : {Connectivity::Four, Connectivity::Eight}) {
      const InstanceMap out = reconstruct_instances(m.classes, m.directions, {conn, 4});
      for (std::size_t i = 0; i < out.size(); ++i) {
        REQUIRE((out[i] == 0) == (m.classes[i] == 0));
      }
    }
  }
}

TEST_CASE("assign_classes majority vote") {
  InstanceMap inst = grid_from_rows({{1, 1, 1, 0}, {2, 2, 0, 3}});
  ClassMap cls(2, 4, 0);
  cls(0, 0) = 2;
  cls(0, 1) = 5;
  cls(0, 2) = 2;
  cls(1, 0) = 5;
  cls(1, 1) = 2;
  cls(1, 3) = 3;
  const PanopticResult r = assign_classes(inst, cls);
  CHECK(r.per_instance_class.at(1) == 2);
  CHECK(r.per_instance_class.at(2) == 2);
  CHECK(r.per_instance_class.at(3) == 3);
  CHECK(r.classes(0, 1) == 2);
  CHECK(r.classes(1, 0) == 2);
  CHECK(r.classes(0, 3) == 0);
  CHECK(assign_classes(r.instances, r.classes) == r);

  ClassMap holes = cls;
  holes(0, 2) = 0;
  CHECK_THROWS_AS((void)assign_classes(inst, holes), Error);
}

TEST_CASE("assign_classes is idempotent on random maps") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const HardMaps m = random_hard_maps(rng, 8, 8, 4);
    const PanopticResult r = decode(m.classes, m.directions);
    REQUIRE(assign_classes(r.instances, r.classes) == r);
  }
}

TEST_CASE("count postprocessing") {
  CHECK(postprocess_counts({-0.4, 2.6, 0.0, 1.2, 0.5, 3.0}) == CountVector{0, 3, 0, 1, 1, 3});
  CHECK(postprocess_counts({-1, -2, -0.5, -100, -1e-9, -3}) == CountVector{0, 0, 0, 0, 0, 0});
  CHECK(postprocess_counts({0, 7, 2, 1, 12, 3}) == CountVector{0, 7, 2, 1, 12, 3});
  CHECK(postprocess_counts({1.5, 2.5, 0.49999999999999994, 2.4999, 3.5000001, 0}) ==
        CountVector{2, 3, 0, 2, 4, 0});
  CHECK_THROWS_AS((void)postprocess_counts({std::numeric_limits<double>::quiet_NaN(), 0, 0, 0, 0, 0}),
                  Error);
  CHECK_THROWS_AS((void)postprocess_counts({0, 0, 0, 0, 0, std::numeric_limits<double>::infinity()}),
                  Error);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> v(-20.0, 40.0);
  for (int trial = 0; trial < 1000; ++trial) {
    CountVector a, b;
    for (int c = 0; c < 6; ++c) {
      a[c] = v(rng);
      b[c] = a[c] + std::abs(v(rng));
    }
    const CountVector pa = postprocess_counts(a);
    const CountVector pb = postprocess_counts(b);
    REQUIRE(postprocess_counts(pa) == pa);
    for (int c = 0; c < 6; ++c) {
      REQUIRE(pa[c] >= 0.0);
      REQUIRE(pa[c] == std::floor(pa[c]));
      REQUIRE(pa[c] <= pb[c]);
    }
  }
}

TEST_CASE("counts from instances") {
  PanopticResult empty;
  empty.instances = InstanceMap(2, 2, 0);
  empty.classes = ClassMap(2, 2, 0);
  CHECK(counts_from_instances(empty) == CountVector{});

  PanopticResult r;
  r.per_instance_class = {{1, 2}, {2, 2}, {5, 4}, {9, 2}};
  CHECK(counts_from_instances(r) == CountVector{0, 3, 0, 1, 0, 0});

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testing::make_panoptic(testing::random_instances(rng, 6, 6, 9), rng, 6);
    const CountVector c = counts_from_instances(p);
    double total = 0;
    for (double x : c) total += x;
    REQUIRE(total == static_cast<double>(p.per_instance_class.size()));
  }
}

TEST_CASE("parallel reconstruction matches the serial reference") {
  std::mt19937_64 rng(31);
  std::vector<HardMaps> inputs;
  for (int i = 0; i < 6; ++i) inputs.push_back(random_hard_maps(rng, 40 + i, 57, 4));
  synth::SynthConfig cfg;
  cfg.height = cfg.width = 160;
  cfg.n_nuclei = 40;
  cfg.allow_touching = true;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    cfg.seed = seed;
    const auto b = synth::generate(cfg);
    inputs.push_back({b.classes, b.directions});
  }
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    for (const HardMaps& m : inputs) {
      for (Connectivity conn : {Connectivity::Four, Connectivity::Eight}) {
        const ReconstructionConfig rc{conn, 4};
        REQUIRE(reconstruct_instances(m.classes, m.directions, rc) ==
                serial::reconstruct_instances(m.classes, m.directions, rc));
      }
    }
  }
  omp_set_num_threads(1);
}
