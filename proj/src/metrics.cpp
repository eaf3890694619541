#include "nucpan/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "nucpan/kernels.hpp"

namespace nucpan::metrics {

double iou(std::span<const Pixel> a, std::span<const Pixel> b) {
  std::set<Pixel> sa(a.begin(), a.end());
  std::set<Pixel> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const Pixel& p : sa) inter += sb.count(p);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void check_same_shape(const PanopticResult& gt, const PanopticResult& pred) {
  if (!gt.instances.same_shape(pred.instances)) {
    throw Error("dimension mismatch between ground truth (" + std::to_string(gt.instances.height()) +
                "x" + std::to_string(gt.instances.width()) + ") and prediction (" +
                std::to_string(pred.instances.height()) + "x" +
                std::to_string(pred.instances.width()) + ")");
  }
}

std::vector<std::uint16_t> members_of(const PanopticResult& r, int class_id) {
  std::vector<std::uint16_t> out;
  for (const auto& [index, cls] : r.per_instance_class) {
    if (cls == class_id) out.push_back(index);
  }
  return out;
}

MatchResult match_from_table(const PanopticResult& gt, const PanopticResult& pred, int class_id,
                             const kernels::OverlapTable& table) {
  MatchResult result;
  result.class_id = class_id;
  const auto gt_members = members_of(gt, class_id);
  const auto pred_members = members_of(pred, class_id);
  std::vector<std::uint8_t> gt_in(65536, 0), pred_in(65536, 0), gt_hit(65536, 0), pred_hit(65536, 0);
  for (auto g : gt_members) gt_in[g] = 1;
  for (auto p : pred_members) pred_in[p] = 1;

  for (const auto& e : table.pairs) {
    if (!gt_in[e.a] || !pred_in[e.b]) continue;
    const std::int64_t uni = table.area_a[e.a] + table.area_b[e.b] - e.count;
    if (2 * e.count <= uni) continue;  // IoU <= 0.5
    if (gt_hit[e.a] || pred_hit[e.b]) {
      throw std::logic_error("IoU > 0.5 matching produced a non-unique pair");
    }
    gt_hit[e.a] = 1;
    pred_hit[e.b] = 1;
    result.matched.push_back(
        {e.a, e.b, static_cast<double>(e.count) / static_cast<double>(uni)});
  }
  for (auto g : gt_members) {
    if (!gt_hit[g]) result.unmatched_gt.push_back(g);
  }
  for (auto p : pred_members) {
    if (!pred_hit[p]) result.unmatched_pred.push_back(p);
  }
  return result;
}

}  // namespace

MatchResult match_instances(const PanopticResult& gt, const PanopticResult& pred, int class_id) {
  check_same_shape(gt, pred);
  if (class_id < 1 || class_id > kMaxClassId) throw Error("class ID must be in 1..6");
  return match_from_table(gt, pred, class_id, kernels::overlap_table(gt.instances, pred.instances));
}

ClassTally tally(const MatchResult& match) {
  ClassTally t;
  t.tp = static_cast<std::int64_t>(match.matched.size());
  t.fp = static_cast<std::int64_t>(match.unmatched_pred.size());
  t.fn = static_cast<std::int64_t>(match.unmatched_gt.size());
  for (const auto& m : match.matched) t.iou_sum += m.iou;
  return t;
}

PqScore pq_from_tally(const ClassTally& t) {
  PqScore s;
  if (t.empty()) return s;
  s.defined = true;
  const double denom = static_cast<double>(t.tp) + 0.5 * static_cast<double>(t.fp) +
                       0.5 * static_cast<double>(t.fn);
  s.dq = static_cast<double>(t.tp) / denom;
  s.sq = t.tp > 0 ? t.iou_sum / static_cast<double>(t.tp) : 0.0;
  s.pq = s.dq * s.sq;
  return s;
}

PqScore pq_class(const MatchResult& match) { return pq_from_tally(tally(match)); }

std::array<ClassTally, kNumClasses> image_tallies(const PanopticResult& gt,
                                                  const PanopticResult& pred) {
  check_same_shape(gt, pred);
  const kernels::OverlapTable table = kernels::overlap_table(gt.instances, pred.instances);
  std::array<ClassTally, kNumClasses> out{};
  for (int c = 1; c <= kNumClasses; ++c) {
    out[static_cast<std::size_t>(c - 1)] = tally(match_from_table(gt, pred, c, table));
  }
  return out;
}

MetricsReport mpq(std::span<const ImagePair> images, PqAggregation aggregation) {
  if (images.empty()) throw Error("mPQ needs at least one image");
  std::vector<std::array<ClassTally, kNumClasses>> per_image(images.size());
  // Images are independent; the reduction below runs in image order.
  const auto n = static_cast<std::int64_t>(images.size());
  bool failed = false;
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const ImagePair& p = images[static_cast<std::size_t>(i)];
      per_image[static_cast<std::size_t>(i)] = image_tallies(*p.gt, *p.pred);
    } catch (const std::exception& e) {
#pragma omp critical(nucpan_mpq_error)
      {
        if (!failed) failure = "image " + std::to_string(i) + ": " + e.what();
        failed = true;
      }
    }
  }
  if (failed) throw Error(failure);

  MetricsReport report;
  report.aggregation = aggregation;
  report.images = images.size();
  for (const auto& tallies : per_image) {
    for (std::size_t c = 0; c < kNumClasses; ++c) report.classes[c].tally += tallies[c];
  }

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (aggregation == PqAggregation::Pooled) {
      report.classes[c].pq = pq_from_tally(report.classes[c].tally);
    } else {
      PqScore mean;
      std::size_t defined = 0;
      for (const auto& tallies : per_image) {
        const PqScore s = pq_from_tally(tallies[c]);
        if (!s.defined) continue;
        mean.dq += s.dq;
        mean.sq += s.sq;
        mean.pq += s.pq;
        ++defined;
      }
      if (defined > 0) {
        const auto d = static_cast<double>(defined);
        mean.dq /= d;
        mean.sq /= d;
        mean.pq /= d;
        mean.defined = true;
      }
      report.classes[c].pq = mean;
    }
  }

  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (report.classes[c].pq.defined) {
      sum += report.classes[c].pq.pq;
      ++defined;
    } else {
      report.undefined_classes.push_back(static_cast<int>(c) + 1);
    }
  }
  if (defined > 0) report.mpq = sum / static_cast<double>(defined);
  return report;
}

std::optional<double> r2_class(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw Error("R²: length mismatch (" + std::to_string(truth.size()) + " true vs " +
                std::to_string(pred.size()) + " predicted)");
  }
  if (truth.size() < 2) throw Error("R² needs at least two samples");
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) {
    if (ss_res == 0.0) return 1.0;
    return std::nullopt;
  }
  return 1.0 - ss_res / ss_tot;
}

R2Result multi_r2(std::span<const CountVector> truth, std::span<const CountVector> pred,
                  R2Mode mode) {
  if (truth.size() != pred.size()) throw Error("R²: different numbers of true and predicted rows");
  if (truth.size() < 2) throw Error("multi-class R² needs at least two images");
  R2Result out;
  std::vector<double> t(truth.size()), p(truth.size());
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      t[i] = truth[i][c];
      p[i] = pred[i][c];
    }
    out.per_class[c] = r2_class(t, p);
    if (out.per_class[c]) {
      sum += *out.per_class[c];
      ++defined;
    }
  }
  if (mode == R2Mode::PerClassMean) {
    if (defined > 0) out.r2_t = sum / static_cast<double>(defined);
  } else {
    std::vector<double> all_t, all_p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      all_t.insert(all_t.end(), truth[i].begin(), truth[i].end());
      all_p.insert(all_p.end(), pred[i].begin(), pred[i].end());
    }
    out.r2_t = r2_class(all_t, all_p);
  }
  return out;
}

void attach_r2(MetricsReport& report, const R2Result& r2, R2Mode mode) {
  report.r2_mode = mode;
  report.r2_t = r2.r2_t;
  for (std::size_t c = 0; c < kNumClasses; ++c) report.classes[c].r2 = r2.per_class[c];
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["aggregation"] = report.aggregation == PqAggregation::Pooled ? "pooled" : "per_image";
  j["mpq"] = optional_number(report.mpq);
  j["r2_mode"] = report.r2_mode == R2Mode::PerClassMean ? "per_class_mean" : "pooled";
  j["r2_t"] = optional_number(report.r2_t);
  j["undefined_classes"] = report.undefined_classes;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ClassReport& cr = report.classes[c];
    nlohmann::ordered_json e;
    e["id"] = c + 1;
    e["tp"] = cr.tally.tp;
    e["fp"] = cr.tally.fp;
    e["fn"] = cr.tally.fn;
    e["iou_sum"] = cr.tally.iou_sum;
    if (cr.pq.defined) {
      e["dq"] = cr.pq.dq;
      e["sq"] = cr.pq.sq;
      e["pq"] = cr.pq.pq;
    } else {
      e["dq"] = nullptr;
      e["sq"] = nullptr;
      e["pq"] = nullptr;
    }
    e["r2"] = optional_number(cr.r2);
    classes[std::string(kClassNames[c])] = e;
  }
  j["classes"] = classes;
  return j;
}

}  // namespace nucpan::metrics
