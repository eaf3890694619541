#include "nucpan/losses.hpp"

#include <cmath>

#include "nucpan/kernels.hpp"

namespace nucpan::losses {

static_assert(kLogClamp == kernels::kProbabilityClamp);

void LossWeights::validate() const {
  for (double w : {ce, dice, dir, l2}) {
    if (!std::isfinite(w) || w < 0.0) throw Error("loss weights must be finite and non-negative");
  }
}

namespace {

void check_seg(const ProbTensor& pred, const ClassMap& gt) {
  if (pred.channels() != kNumClasses + 1) {
    throw Error("segmentation prediction must have 7 channels, got " +
                std::to_string(pred.channels()));
  }
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error("shape mismatch between segmentation prediction and class map");
  }
  validate(gt);
  pred.check_normalized();
}

void check_dir(const ProbTensor& pred, const DirectionMap& gt) {
  if (pred.channels() != gt.n_directions) {
    throw Error("direction prediction has " + std::to_string(pred.channels()) +
                " channels, direction map expects " + std::to_string(gt.n_directions));
  }
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error("shape mismatch between direction prediction and direction map");
  }
  validate(gt);
  pred.check_normalized();
}

double mean_of(const kernels::CrossEntropySum& s) {
  return s.count == 0 ? 0.0 : s.sum / static_cast<double>(s.count);
}

double dice_from_sums(const kernels::DiceSums& sums) {
  double total = 0.0;
  int present = 0;
  for (std::size_t c = 1; c < sums.truth.size(); ++c) {
    if (sums.truth[c] == 0.0) continue;
    total += 1.0 - (2.0 * sums.intersection[c] + kDiceSmoothing) /
                       (sums.pred[c] + sums.truth[c] + kDiceSmoothing);
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

// The ClassMap value 0 is a real target here, so nothing is ignored.
constexpr std::uint8_t kNoIgnore = 255;

}  // namespace

double seg_cross_entropy(const ProbTensor& pred, const ClassMap& gt) {
  check_seg(pred, gt);
  return mean_of(kernels::cross_entropy_sum(pred, gt, kNoIgnore));
}

double dice_loss(const ProbTensor& pred, const ClassMap& gt) {
  check_seg(pred, gt);
  return dice_from_sums(kernels::dice_sums(pred, gt));
}

double dir_cross_entropy(const ProbTensor& pred, const DirectionMap& gt) {
  check_dir(pred, gt);
  return mean_of(kernels::cross_entropy_sum(pred, gt, kDirectionBackground));
}

double serial::seg_cross_entropy(const ProbTensor& pred, const ClassMap& gt) {
  check_seg(pred, gt);
  return mean_of(kernels::serial::cross_entropy_sum(pred, gt, kNoIgnore));
}

double serial::dice_loss(const ProbTensor& pred, const ClassMap& gt) {
  check_seg(pred, gt);
  return dice_from_sums(kernels::serial::dice_sums(pred, gt));
}

double serial::dir_cross_entropy(const ProbTensor& pred, const DirectionMap& gt) {
  check_dir(pred, gt);
  return mean_of(kernels::serial::cross_entropy_sum(pred, gt, kDirectionBackground));
}

double count_l2(const CountVector& pred, const CountVector& gt) {
  double sum = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (!std::isfinite(pred[c]) || !std::isfinite(gt[c])) throw Error("non-finite count in L2 loss");
    const double d = pred[c] - gt[c];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

LossBreakdown combine(double ce, double dice, double dir_ce, double l2, const LossWeights& weights) {
  weights.validate();
  LossBreakdown out{ce, dice, dir_ce, l2, 0.0};
  out.total = weights.ce * ce + weights.dice * dice + weights.dir * dir_ce + weights.l2 * l2;
  return out;
}

LossBreakdown total_loss(const LossInputs& in, const LossWeights& weights) {
  if (!in.seg_pred || !in.seg_gt || !in.dir_pred || !in.dir_gt) {
    throw Error("total_loss: missing input tensor or map");
  }
  return combine(seg_cross_entropy(*in.seg_pred, *in.seg_gt), dice_loss(*in.seg_pred, *in.seg_gt),
                 dir_cross_entropy(*in.dir_pred, *in.dir_gt), count_l2(in.counts_pred, in.counts_gt),
                 weights);
}

nlohmann::ordered_json to_json(const LossBreakdown& loss, const LossWeights& weights) {
  nlohmann::ordered_json j;
  j["terms"] = {{"ce", loss.ce}, {"dice", loss.dice}, {"dir_ce", loss.dir_ce}, {"l2", loss.l2}};
  j["weights"] = {{"ce", weights.ce}, {"dice", weights.dice}, {"dir", weights.dir}, {"l2", weights.l2}};
  j["total"] = loss.total;
  return j;
}

}  // namespace nucpan::losses
