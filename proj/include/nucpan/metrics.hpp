#pragma once

// Panoptic quality (DQ x SQ per class, mPQ) for instance/class maps and the
// coefficient of determination for per-class counts.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "nucpan/reconstruct.hpp"
#include "nucpan/types.hpp"

namespace nucpan::metrics {

using reconstruct::PanopticResult;

struct MatchedPair {
  std::uint16_t gt = 0;
  std::uint16_t pred = 0;
  double iou = 0.0;
  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchResult {
  int class_id = 0;
  std::vector<MatchedPair> matched;      // sorted by gt index
  std::vector<std::uint16_t> unmatched_gt;    // FN, ascending
  std::vector<std::uint16_t> unmatched_pred;  // FP, ascending
};

/// Raw detection statistics; pooled across images by summation.
struct ClassTally {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;

  ClassTally& operator+=(const ClassTally& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    iou_sum += o.iou_sum;
    return *this;
  }
  bool empty() const { return tp == 0 && fp == 0 && fn == 0; }
};

struct PqScore {
  double dq = 0.0;
  double sq = 0.0;
  double pq = 0.0;
  bool defined = false;  // false when the class has no instances on either side
};

enum class PqAggregation { Pooled, PerImage };
enum class R2Mode { PerClassMean, Pooled };

struct ClassReport {
  ClassTally tally;
  PqScore pq;
  std::optional<double> r2;
};

struct MetricsReport {
  PqAggregation aggregation = PqAggregation::Pooled;
  std::size_t images = 0;
  std::array<ClassReport, kNumClasses> classes{};
  std::optional<double> mpq;
  std::vector<int> undefined_classes;  // class IDs excluded from mPQ
  R2Mode r2_mode = R2Mode::PerClassMean;
  std::optional<double> r2_t;
};

/// |a ∩ b| / |a ∪ b|; 0 when both are empty. Duplicates are ignored.
double iou(std::span<const Pixel> a, std::span<const Pixel> b);

/// True positives are pairs with IoU strictly above 0.5, which are unique.
MatchResult match_instances(const PanopticResult& gt, const PanopticResult& pred, int class_id);

ClassTally tally(const MatchResult& match);
PqScore pq_from_tally(const ClassTally& tally);
PqScore pq_class(const MatchResult& match);

struct ImagePair {
  const PanopticResult* gt = nullptr;
  const PanopticResult* pred = nullptr;
};

/// Per-class statistics of one image (index c-1 for class c).
std::array<ClassTally, kNumClasses> image_tallies(const PanopticResult& gt,
                                                  const PanopticResult& pred);

/// mPQ over a set of images. Pooled: TP/FP/FN and IoU sums are summed over
/// images per class before PQ is computed. PerImage: per-class PQ is averaged
/// over the images where that class is defined. Classes undefined everywhere
/// are excluded from the mean.
MetricsReport mpq(std::span<const ImagePair> images, PqAggregation aggregation = PqAggregation::Pooled);

/// 1 - SS_res / SS_tot. With zero variance in `truth`, 1 if the predictions
/// equal it exactly, otherwise undefined (nullopt).
std::optional<double> r2_class(std::span<const double> truth, std::span<const double> pred);

struct R2Result {
  std::array<std::optional<double>, kNumClasses> per_class{};
  std::optional<double> r2_t;
};

/// Per-class R² across images; R²_t is their mean (PerClassMean) or a single
/// R² over all (image, class) entries (Pooled).
R2Result multi_r2(std::span<const CountVector> truth, std::span<const CountVector> pred,
                  R2Mode mode = R2Mode::PerClassMean);

void attach_r2(MetricsReport& report, const R2Result& r2, R2Mode mode);

nlohmann::ordered_json to_json(const MetricsReport& report);

}  // namespace nucpan::metrics
