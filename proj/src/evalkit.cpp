#include "hct/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>
#include <vector>

#include "hct/common.hpp"

namespace hct {

namespace {

constexpr double kTiny = std::numeric_limits<double>::epsilon();

void check_pair(const char* op, const Tensor& pred, const Tensor& gt) {
  if (pred.ndim() != 2 || gt.ndim() != 2) {
    throw ShapeError(std::string(op) + ": maps must be rank 2, got " + shape_str(pred.shape) +
                     " and " + shape_str(gt.shape));
  }
  if (!pred.same_shape(gt)) {
    throw ShapeError(std::string(op) + ": prediction is " + shape_str(pred.shape) +
                     " but the ground truth is " + shape_str(gt.shape));
  }
  for (double v : pred.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(std::string(op) + ": prediction values must lie in [0,1], got " +
                  std::to_string(v));
    }
  }
  for (double v : gt.data) {
    if (v != 0.0 && v != 1.0) {
      throw Error(std::string(op) + ": ground truth must be binary, got " + std::to_string(v));
    }
  }
}

void check_bins(const char* op, int bins) {
  if (bins < 2) {
    throw Error(std::string(op) + ": the sweep needs at least 2 thresholds, got " +
                std::to_string(bins));
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::int64_t positives_of(const Tensor& gt) {
  std::int64_t pos = 0;
  for (double v : gt.data) pos += v == 1.0 ? 1 : 0;
  return pos;
}

// 2x/(x^2+1+sigma) over one side of the mask, where x averages the
// prediction on the foreground and its complement on the background and
// sigma is the sample spread of the same values.
double object_side(const Tensor& pred, const Tensor& gt, bool foreground) {
  const double keep = foreground ? 1.0 : 0.0;
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    if (gt.data[static_cast<std::size_t>(i)] == keep) {
      const double v = pred.data[static_cast<std::size_t>(i)];
      sum += foreground ? v : 1.0 - v;
      ++count;
    }
  }
  if (count == 0) return 0.0;
  const double x = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    if (gt.data[static_cast<std::size_t>(i)] == keep) {
      const double v = pred.data[static_cast<std::size_t>(i)];
      const double d = (foreground ? v : 1.0 - v) - x;
      ss += d * d;
    }
  }
  const double sigma = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kTiny);
}

// SSIM between the two maps restricted to rows [y0,y1) and columns
// [x0,x1), with variances normalized by n-1.
double region_ssim(const Tensor& pred, const Tensor& gt, int y0, int y1, int x0, int x1) {
  const double n = static_cast<double>(y1 - y0) * static_cast<double>(x1 - x0);
  double sp = 0.0;
  double sg = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      sp += pred.at(y, x);
      sg += gt.at(y, x);
    }
  }
  const double mp = sp / n;
  const double mg = sg / n;
  double vp = 0.0;
  double vg = 0.0;
  double cov = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dp = pred.at(y, x) - mp;
      const double dg = gt.at(y, x) - mg;
      vp += dp * dp;
      vg += dg * dg;
      cov += dp * dg;
    }
  }
  const double norm = n - 1.0 + kTiny;
  vp /= norm;
  vg /= norm;
  cov /= norm;
  const double a = 4.0 * mp * mg * cov;
  const double b = (mp * mp + mg * mg) * (vp + vg);
  if (a != 0.0) return a / (b + kTiny);
  return b == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double mae(const Tensor& pred, const Tensor& gt) {
  check_pair("mae", pred, gt);
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    s += std::abs(pred.data[static_cast<std::size_t>(i)] - gt.data[static_cast<std::size_t>(i)]);
  }
  return s / static_cast<double>(pred.numel());
}

SweepResult max_f(const Tensor& pred, const Tensor& gt, double beta2, int bins) {
  check_pair("max_f", pred, gt);
  check_bins("max_f", bins);
  if (!(beta2 > 0.0)) {
    throw Error("max_f: beta2 must be positive, got " + std::to_string(beta2));
  }
  const std::int64_t pos = positives_of(gt);
  if (pos == 0) {
    throw Error("max_f: the ground truth has no positive pixels, recall is undefined");
  }
  SweepResult out;
  out.curve.assign(static_cast<std::size_t>(bins), 0.0);
  const std::int64_t n = pred.numel();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < bins; ++k) {
    const double thr = static_cast<double>(k) / static_cast<double>(bins - 1);
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (pred.data[static_cast<std::size_t>(i)] > thr) {
        if (gt.data[static_cast<std::size_t>(i)] == 1.0) {
          ++tp;
        } else {
          ++fp;
        }
      }
    }
    double f = 0.0;
    if (tp + fp > 0) {
      const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double r = static_cast<double>(tp) / static_cast<double>(pos);
      const double den = beta2 * p + r;
      f = den > 0.0 ? (1.0 + beta2) * p * r / den : 0.0;
    }
    out.curve[static_cast<std::size_t>(k)] = f;
  }
  for (double f : out.curve) out.best = std::max(out.best, f);
  return out;
}

double s_measure(const Tensor& pred, const Tensor& gt) {
  check_pair("s_measure", pred, gt);
  const int h = gt.shape[0];
  const int w = gt.shape[1];
  const std::int64_t n = gt.numel();
  double gt_sum = 0.0;
  for (double v : gt.data) gt_sum += v;
  // Constant masks carry no structure; the score reduces to how empty or
  // how full the prediction is.
  if (gt_sum == 0.0) return 1.0 - mean_of(pred.data);
  if (gt_sum == static_cast<double>(n)) return mean_of(pred.data);

  const double u = gt_sum / static_cast<double>(n);
  const double object =
      u * object_side(pred, gt, true) + (1.0 - u) * object_side(pred, gt, false);

  // The split point drops the mass centroid onto the pixel-boundary grid.
  // With pixel centers at index+0.5 this is round(centroid), which keeps
  // the four rectangles mirror images of themselves under map flips.
  double col_mass = 0.0;
  double row_mass = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (gt.at(y, x) == 1.0) {
        col_mass += static_cast<double>(x + 1);
        row_mass += static_cast<double>(y + 1);
      }
    }
  }
  const int cx = static_cast<int>(std::floor(col_mass / gt_sum));
  const int cy = static_cast<int>(std::floor(row_mass / gt_sum));

  const double area = static_cast<double>(n);
  const double w1 = static_cast<double>(cx) * static_cast<double>(cy) / area;
  const double w2 = static_cast<double>(w - cx) * static_cast<double>(cy) / area;
  const double w3 = static_cast<double>(cx) * static_cast<double>(h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  struct Rect {
    int y0, y1, x0, x1;
    double wt;
  };
  const Rect rects[4] = {{0, cy, 0, cx, w1},
                         {0, cy, cx, w, w2},
                         {cy, h, 0, cx, w3},
                         {cy, h, cx, w, w4}};
  double region = 0.0;
  for (const Rect& r : rects) {
    if (r.y1 > r.y0 && r.x1 > r.x0) {
      region += r.wt * region_ssim(pred, gt, r.y0, r.y1, r.x0, r.x1);
    }
  }

  const double s = 0.5 * object + 0.5 * region;
  return s < 0.0 ? 0.0 : s;
}

SweepResult e_measure_max(const Tensor& pred, const Tensor& gt, int bins) {
  check_pair("e_measure_max", pred, gt);
  check_bins("e_measure_max", bins);
  const std::int64_t n = gt.numel();
  const std::int64_t pos = positives_of(gt);
  double gt_sum = 0.0;
  for (double v : gt.data) gt_sum += v;
  const double gt_mean = gt_sum / static_cast<double>(n);
  SweepResult out;
  out.curve.assign(static_cast<std::size_t>(bins), 0.0);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < bins; ++k) {
    const double thr = static_cast<double>(k) / static_cast<double>(bins - 1);
    double score = 0.0;
    if (pos == 0 || pos == n) {
      // A constant mask leaves the alignment undefined; score agreement
      // with the constant directly.
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double bin = pred.data[static_cast<std::size_t>(i)] > thr ? 1.0 : 0.0;
        s += pos == 0 ? 1.0 - bin : bin;
      }
      score = s / static_cast<double>(n);
    } else {
      double bin_sum = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        bin_sum += pred.data[static_cast<std::size_t>(i)] > thr ? 1.0 : 0.0;
      }
      const double bin_mean = bin_sum / static_cast<double>(n);
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double bin = pred.data[static_cast<std::size_t>(i)] > thr ? 1.0 : 0.0;
        const double a = gt.data[static_cast<std::size_t>(i)] - gt_mean;
        const double b = bin - bin_mean;
        // a is never 0 here: the mask is non-constant, so its mean sits
        // strictly between the two binary values.
        const double xi = 2.0 * a * b / (a * a + b * b);
        s += (1.0 + xi) * (1.0 + xi) / 4.0;
      }
      score = s / static_cast<double>(n);
    }
    out.curve[static_cast<std::size_t>(k)] = score;
  }
  for (double e : out.curve) out.best = std::max(out.best, e);
  return out;
}

MetricReport evaluate_map(const Tensor& pred, const Tensor& gt, double beta2, int bins) {
  MetricReport r;
  r.mae = mae(pred, gt);
  SweepResult f = max_f(pred, gt, beta2, bins);
  r.max_f = f.best;
  r.f_curve = std::move(f.curve);
  r.s_measure = s_measure(pred, gt);
  SweepResult e = e_measure_max(pred, gt, bins);
  r.e_max = e.best;
  r.e_curve = std::move(e.curve);
  return r;
}

std::vector<MetricReport> evaluate_batch(const std::vector<Tensor>& preds,
                                         const std::vector<Tensor>& gts, double beta2, int bins) {
  if (preds.size() != gts.size()) {
    throw ShapeError("evaluate_batch: got " + std::to_string(preds.size()) +
                     " predictions for " + std::to_string(gts.size()) + " ground truths");
  }
  std::vector<MetricReport> out(preds.size());
  std::exception_ptr failure;
  const std::int64_t count = static_cast<std::int64_t>(preds.size());
  // Images are scored independently into their own slot; a validation
  // error is replayed once the loop has drained.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] =
          evaluate_map(preds[static_cast<std::size_t>(i)], gts[static_cast<std::size_t>(i)],
                       beta2, bins);
    } catch (...) {
#pragma omp critical(hct_eval_batch_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) {
    throw Error("mean_report: no reports to average");
  }
  const std::size_t fn = reports.front().f_curve.size();
  const std::size_t en = reports.front().e_curve.size();
  MetricReport m;
  m.f_curve.assign(fn, 0.0);
  m.e_curve.assign(en, 0.0);
  for (const MetricReport& r : reports) {
    if (r.f_curve.size() != fn || r.e_curve.size() != en) {
      throw Error("mean_report: reports use different sweep lengths");
    }
    m.s_measure += r.s_measure;
    m.max_f += r.max_f;
    m.e_max += r.e_max;
    m.mae += r.mae;
    for (std::size_t j = 0; j < fn; ++j) m.f_curve[j] += r.f_curve[j];
    for (std::size_t j = 0; j < en; ++j) m.e_curve[j] += r.e_curve[j];
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  m.s_measure *= inv;
  m.max_f *= inv;
  m.e_max *= inv;
  m.mae *= inv;
  for (double& v : m.f_curve) v *= inv;
  for (double& v : m.e_curve) v *= inv;
  return m;
}

namespace {

void check_paired(const char* op, std::size_t ids, std::size_t reports) {
  if (ids != reports) {
    throw Error(std::string(op) + ": got " + std::to_string(ids) + " ids for " +
                std::to_string(reports) + " reports");
  }
}

}  // namespace

std::string metrics_table(const std::vector<std::string>& ids,
                          const std::vector<MetricReport>& reports) {
  check_paired("metrics_table", ids.size(), reports.size());
  std::size_t idw = 4;
  for (const std::string& id : ids) idw = std::max(idw, id.size());
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s\n", static_cast<int>(idw), "id", "MAE",
                "maxF", "S", "Emax");
  out += buf;
  auto row = [&](const std::string& id, const MetricReport& r) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f  %8.4f\n", static_cast<int>(idw),
                  id.c_str(), r.mae, r.max_f, r.s_measure, r.e_max);
    out += buf;
  };
  for (std::size_t i = 0; i < ids.size(); ++i) row(ids[i], reports[i]);
  if (!reports.empty()) row("mean", mean_report(reports));
  return out;
}

std::string metrics_records(const std::vector<std::string>& ids,
                            const std::vector<MetricReport>& reports) {
  check_paired("metrics_records", ids.size(), reports.size());
  std::string out;
  char buf[160];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const MetricReport& r = reports[i];
    std::snprintf(buf, sizeof buf, "\t%.12g\t%.12g\t%.12g\t%.12g\n", r.mae, r.max_f, r.s_measure,
                  r.e_max);
    out += ids[i];
    out += buf;
  }
  return out;
}

}  // namespace hct
