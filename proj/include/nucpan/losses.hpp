#pragma once

// Forward-value references for the four training loss terms. No gradients.

#include "json.hpp"
#include "nucpan/types.hpp"

namespace nucpan::losses {

inline constexpr double kDiceSmoothing = 1e-6;
inline constexpr double kLogClamp = 1e-12;

struct LossWeights {
  double ce = 1.0;
  double dice = 4.0;
  double dir = 2.0;
  double l2 = 0.005;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double dice = 0.0;
  double dir_ce = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

/// Mean over all pixels of -log(max(p[true class], 1e-12)). `pred` must be a
/// normalized 7-channel tensor.
double seg_cross_entropy(const ProbTensor& pred, const ClassMap& gt);

/// Mean over foreground classes present in `gt` of
/// 1 - (2 Σ p_c g_c + ε) / (Σ p_c + Σ g_c + ε). Background channel excluded.
double dice_loss(const ProbTensor& pred, const ClassMap& gt);

/// Cross entropy over foreground (non-sentinel) pixels only; 0 if none.
double dir_cross_entropy(const ProbTensor& pred, const DirectionMap& gt);

/// Mean squared error over the six counts.
double count_l2(const CountVector& pred, const CountVector& gt);

/// Weighted sum of precomputed terms.
LossBreakdown combine(double ce, double dice, double dir_ce, double l2, const LossWeights& weights = {});

struct LossInputs {
  const ProbTensor* seg_pred = nullptr;
  const ClassMap* seg_gt = nullptr;
  const ProbTensor* dir_pred = nullptr;
  const DirectionMap* dir_gt = nullptr;
  CountVector counts_pred{};
  CountVector counts_gt{};
};

LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights = {});

nlohmann::ordered_json to_json(const LossBreakdown& loss, const LossWeights& weights);

namespace serial {
double seg_cross_entropy(const ProbTensor& pred, const ClassMap& gt);
double dice_loss(const ProbTensor& pred, const ClassMap& gt);
double dir_cross_entropy(const ProbTensor& pred, const DirectionMap& gt);
}  // namespace serial

}  // namespace nucpan::losses
