#pragma once

// Saliency-map scoring: mean absolute error, best-threshold F-measure,
// structure measure and best-threshold enhanced-alignment measure, plus
// plain-text report rendering. Every metric takes a prediction map with
// values in [0,1] and a binary ground truth of the same extents, works in
// f64 and reduces with a fixed left-to-right summation order, so scores
// are reproducible bit for bit.

#include <string>
#include <vector>

#include "hct/tensor.hpp"

namespace hct {

inline constexpr int kSweepBins = 256;
inline constexpr double kFBeta2 = 0.3;

// One threshold sweep. curve[k] holds the score with the map binarized at
// t = k/(bins-1) under the strict rule pred > t, and best is the maximum
// over the curve.
struct SweepResult {
  double best = 0.0;
  std::vector<double> curve;
};

struct MetricReport {
  double s_measure = 0.0;
  double max_f = 0.0;
  double e_max = 0.0;
  double mae = 0.0;
  std::vector<double> f_curve;
  std::vector<double> e_curve;
};

// Mean absolute difference between the maps. Throws ShapeError on rank or
// extent mismatch and Error when pred leaves [0,1] or gt is not binary;
// the other metrics validate the same way.
double mae(const Tensor& pred, const Tensor& gt);

// F_beta = (1+beta2)*P*R / (beta2*P + R) swept over `bins` thresholds.
// Thresholds whose binarization has no positive pixels score 0, as does a
// zero denominator. A ground truth without positive pixels leaves both
// precision targets undefined and throws Error.
SweepResult max_f(const Tensor& pred, const Tensor& gt, double beta2 = kFBeta2,
                  int bins = kSweepBins);

// Structure measure: the even mix of an object term (foreground and
// background mean/spread statistics of pred under the gt mask) and a
// region term (SSIM over the four rectangles split at the gt centroid,
// weighted by rectangle area), clamped below at 0. Constant ground truths
// take the degenerate branches: all-zero gt scores 1 - mean(pred) and
// all-one gt scores mean(pred).
double s_measure(const Tensor& pred, const Tensor& gt);

// Enhanced-alignment measure swept over `bins` thresholds. Per threshold
// the prediction is binarized, both maps are mean-centered, the pointwise
// alignment xi = 2*a*b/(a*a+b*b) is enhanced to (1+xi)^2/4 and averaged.
// Constant ground truths score the binarization directly: all-zero gt
// averages 1-bin, all-one gt averages bin.
SweepResult e_measure_max(const Tensor& pred, const Tensor& gt, int bins = kSweepBins);

// All four metrics plus both sweep curves for one map pair.
MetricReport evaluate_map(const Tensor& pred, const Tensor& gt, double beta2 = kFBeta2,
                          int bins = kSweepBins);

// Scores each pred/gt pair. Pairs are independent and may run in
// parallel; reports land in input order so results never depend on the
// thread count.
std::vector<MetricReport> evaluate_batch(const std::vector<Tensor>& preds,
                                         const std::vector<Tensor>& gts,
                                         double beta2 = kFBeta2, int bins = kSweepBins);

// Per-field arithmetic mean over the reports, curves included. Throws
// Error when the list is empty or the curve lengths disagree.
MetricReport mean_report(const std::vector<MetricReport>& reports);

// Aligned table with one row per image and a trailing mean row. ids and
// reports must pair up one to one.
std::string metrics_table(const std::vector<std::string>& ids,
                          const std::vector<MetricReport>& reports);

// Line-delimited records, one per image: id, MAE, maxF, S and Emax
// separated by tabs, numbers at 12 significant digits.
std::string metrics_records(const std::vector<std::string>& ids,
                            const std::vector<MetricReport>& reports);

}  // namespace hct
