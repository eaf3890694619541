// Serial reference kernels against their OpenMP counterparts.
// Arg(0) runs the serial version; Arg(t > 0) runs the parallel one on t threads.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "nucpan/dircodec.hpp"
#include "nucpan/kernels.hpp"
#include "nucpan/synth.hpp"

using namespace nucpan;
namespace k = nucpan::kernels;

namespace {

const synth::Bundle& bundle() {
  static const synth::Bundle b = [] {
    synth::SynthConfig cfg;
    cfg.height = cfg.width = 1024;
    cfg.n_nuclei = 400;
    cfg.allow_touching = true;
    cfg.seed = 1;
    return synth::generate(cfg);
  }();
  return b;
}

const ProbTensor& seg_tensor() {
  static const ProbTensor t = [] {
    const auto& b = bundle();
    ProbTensor out(b.classes.height(), b.classes.width(), 7, 0.02);
    for (std::size_t i = 0; i < b.classes.size(); ++i) out.pixel(i)[b.classes[i]] = 0.88;
    return out;
  }();
  return t;
}

Grid<std::uint8_t> foreground() {
  const auto& b = bundle();
  Grid<std::uint8_t> m(b.classes.height(), b.classes.width(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = b.directions[i] == 1;
  return m;
}

void BM_LabelComponents(benchmark::State& state) {
  const auto mask = foreground();
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0 ? k::serial::label_components(mask, Connectivity::Four)
                          : k::label_components(mask, Connectivity::Four);
    benchmark::DoNotOptimize(r.count);
  }
}

void BM_ArgmaxChannels(benchmark::State& state) {
  const auto& t = seg_tensor();
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0 ? k::serial::argmax_channels(t) : k::argmax_channels(t);
    benchmark::DoNotOptimize(r.size());
  }
}

void BM_EncodeDirections(benchmark::State& state) {
  const auto& inst = bundle().instances;
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    const auto sums = threads == 0 ? k::serial::centroid_sums(inst) : k::centroid_sums(inst);
    std::vector<Point2> centres(sums.count.size());
    for (std::size_t i = 1; i < centres.size(); ++i) {
      if (sums.count[i] == 0) continue;
      centres[i] = {static_cast<double>(sums.row_sum[i]) / static_cast<double>(sums.count[i]),
                    static_cast<double>(sums.col_sum[i]) / static_cast<double>(sums.count[i])};
    }
    DirectionMap out(inst.height(), inst.width(), 4);
    if (threads == 0) {
      k::serial::classify_directions(inst, centres, 4, 0.0, out);
    } else {
      k::classify_directions(inst, centres, 4, 0.0, out);
    }
    benchmark::DoNotOptimize(out.size());
  }
}

void BM_OverlapTable(benchmark::State& state) {
  const auto& a = bundle().instances;
  InstanceMap b(a.height(), a.width(), 0);
  for (int r = 1; r < a.height(); ++r) {
    for (int c = 1; c < a.width(); ++c) b(r, c) = a(r - 1, c - 1);
  }
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0 ? k::serial::overlap_table(a, b) : k::overlap_table(a, b);
    benchmark::DoNotOptimize(r.pairs.size());
  }
}

void BM_CrossEntropy(benchmark::State& state) {
  const auto& t = seg_tensor();
  const auto& cls = bundle().classes;
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0 ? k::serial::cross_entropy_sum(t, cls, 255) : k::cross_entropy_sum(t, cls, 255);
    benchmark::DoNotOptimize(r.sum);
  }
}

void BM_DiceSums(benchmark::State& state) {
  const auto& t = seg_tensor();
  const auto& cls = bundle().classes;
  const int threads = static_cast<int>(state.range(0));
  if (threads > 0) omp_set_num_threads(threads);
  for (auto _ : state) {
    auto r = threads == 0 ? k::serial::dice_sums(t, cls) : k::dice_sums(t, cls);
    benchmark::DoNotOptimize(r.pred.data());
  }
}

}  // namespace

BENCHMARK(BM_LabelComponents)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ArgmaxChannels)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeDirections)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OverlapTable)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CrossEntropy)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DiceSums)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
