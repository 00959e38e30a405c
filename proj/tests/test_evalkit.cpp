#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "hct/common.hpp"
#include "hct/evalkit.hpp"
#include "hct/sample.hpp"

using hct::MetricReport;
using hct::Rng;
using hct::SweepResult;
using hct::Tensor;

namespace {

constexpr double kTiny = std::numeric_limits<double>::epsilon();

Tensor rect_mask(int h, int w, int y0, int y1, int x0, int x1) {
  Tensor g = Tensor::zeros({h, w});
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) g.at(y, x) = 1.0;
  }
  return g;
}

Tensor random_map(Rng& rng, int h, int w) {
  Tensor p = Tensor::zeros({h, w});
  for (double& v : p.data) v = rng.uniform();
  return p;
}

Tensor random_mask(Rng& rng, int h, int w) {
  Tensor g = Tensor::zeros({h, w});
  for (double& v : g.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  g.data.front() = 1.0;
  g.data.back() = 0.0;
  return g;
}

Tensor invert(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) v = 1.0 - v;
  return out;
}

Tensor flip_vertical(const Tensor& t) {
  const int h = t.shape[0];
  const int w = t.shape[1];
  Tensor out = Tensor::zeros({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = t.at(h - 1 - y, x);
  }
  return out;
}

Tensor transpose_map(const Tensor& t) {
  const int h = t.shape[0];
  const int w = t.shape[1];
  Tensor out = Tensor::zeros({w, h});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = t.at(y, x);
  }
  return out;
}

// The fixture behind the frozen regression constants: a mildly textured
// prediction against a small off-center block whose column centroid lands
// exactly between two pixels.
Tensor fixed_pred() {
  Tensor p = Tensor::zeros({8, 8});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) p.at(y, x) = 0.05 + 0.9 * ((3 * y + 5 * x) % 11) / 10.0;
  }
  return p;
}

Tensor fixed_gt() { return rect_mask(8, 8, 2, 5, 1, 3); }

// Straight-from-definition F at a single threshold.
double oracle_f_at(const Tensor& pred, const Tensor& gt, double thr, double beta2) {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool b = pred.data[static_cast<std::size_t>(i)] > thr;
    const bool g = gt.data[static_cast<std::size_t>(i)] == 1.0;
    tp += b && g ? 1 : 0;
    fp += b && !g ? 1 : 0;
    fn += !b && g ? 1 : 0;
  }
  if (tp + fp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double den = beta2 * p + r;
  return den > 0.0 ? (1.0 + beta2) * p * r / den : 0.0;
}

double oracle_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double oracle_sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = oracle_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double oracle_object_half(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  const double x = oracle_mean(vals);
  return 2.0 * x / (x * x + 1.0 + oracle_sample_std(vals) + kTiny);
}

double oracle_ssim(const std::vector<double>& p, const std::vector<double>& g) {
  const double n = static_cast<double>(p.size());
  const double mp = oracle_mean(p);
  const double mg = oracle_mean(g);
  double vp = 0.0;
  double vg = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    vp += (p[i] - mp) * (p[i] - mp);
    vg += (g[i] - mg) * (g[i] - mg);
    cov += (p[i] - mp) * (g[i] - mg);
  }
  vp /= n - 1.0 + kTiny;
  vg /= n - 1.0 + kTiny;
  cov /= n - 1.0 + kTiny;
  const double alpha = 4.0 * mp * mg * cov;
  const double beta = (mp * mp + mg * mg) * (vp + vg);
  if (alpha != 0.0) return alpha / (beta + kTiny);
  return beta == 0.0 ? 1.0 : 0.0;
}

// Straight-from-definition structure measure for non-constant masks.
double oracle_s(const Tensor& pred, const Tensor& gt) {
  const int h = gt.shape[0];
  const int w = gt.shape[1];
  std::vector<double> fg;
  std::vector<double> bg;
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    const double p = pred.data[static_cast<std::size_t>(i)];
    if (gt.data[static_cast<std::size_t>(i)] == 1.0) {
      fg.push_back(p);
    } else {
      bg.push_back(1.0 - p);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(gt.numel());
  const double object = u * oracle_object_half(fg) + (1.0 - u) * oracle_object_half(bg);

  double total = 0.0;
  double col_mass = 0.0;
  double row_mass = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (gt.at(y, x) == 1.0) {
        total += 1.0;
        col_mass += static_cast<double>(x + 1);
        row_mass += static_cast<double>(y + 1);
      }
    }
  }
  const int cx = static_cast<int>(std::floor(col_mass / total));
  const int cy = static_cast<int>(std::floor(row_mass / total));
  const double area = static_cast<double>(h) * static_cast<double>(w);
  const double wts[4] = {cx * static_cast<double>(cy) / area,
                         (w - cx) * static_cast<double>(cy) / area,
                         cx * static_cast<double>(h - cy) / area, 0.0};
  const int ry0[4] = {0, 0, cy, cy};
  const int ry1[4] = {cy, cy, h, h};
  const int rx0[4] = {0, cx, 0, cx};
  const int rx1[4] = {cx, w, cx, w};
  double region = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double wt = i < 3 ? wts[i] : 1.0 - wts[0] - wts[1] - wts[2];
    if (ry1[i] <= ry0[i] || rx1[i] <= rx0[i]) continue;
    std::vector<double> p;
    std::vector<double> g;
    for (int y = ry0[i]; y < ry1[i]; ++y) {
      for (int x = rx0[i]; x < rx1[i]; ++x) {
        p.push_back(pred.at(y, x));
        g.push_back(gt.at(y, x));
      }
    }
    region += wt * oracle_ssim(p, g);
  }
  const double s = 0.5 * object + 0.5 * region;
  return s < 0.0 ? 0.0 : s;
}

// Straight-from-definition enhanced-alignment score at one threshold.
double oracle_e_at(const Tensor& pred, const Tensor& gt, double thr) {
  const std::size_t n = static_cast<std::size_t>(gt.numel());
  std::vector<double> bin(n);
  for (std::size_t i = 0; i < n; ++i) bin[i] = pred.data[i] > thr ? 1.0 : 0.0;
  const double gm = oracle_mean(std::vector<double>(gt.data.begin(), gt.data.end()));
  if (gm == 0.0) {
    double s = 0.0;
    for (double b : bin) s += 1.0 - b;
    return s / static_cast<double>(n);
  }
  if (gm == 1.0) return oracle_mean(bin);
  const double bm = oracle_mean(bin);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = gt.data[i] - gm;
    const double b = bin[i] - bm;
    const double xi = 2.0 * a * b / (a * a + b * b);
    s += (1.0 + xi) * (1.0 + xi) / 4.0;
  }
  return s / static_cast<double>(n);
}

double oracle_e_max(const Tensor& pred, const Tensor& gt, int bins) {
  double best = 0.0;
  for (int k = 0; k < bins; ++k) {
    best = std::max(best, oracle_e_at(pred, gt, static_cast<double>(k) / (bins - 1)));
  }
  return best;
}

// Frozen from the oracles above on (fixed_pred, fixed_gt); guards the
// centroid, spread and summation conventions against silent drift.
constexpr double kFixedS = 0.29253343223477402;
constexpr double kFixedEmax = 0.84316567554928645;
constexpr double kFixedMaxF = 0.11854103343465047;
constexpr double kFixedMae = 0.51968749999999997;

}  // namespace

TEST_CASE("metric inputs are validated") {
  const Tensor pred = Tensor::full({4, 4}, 0.5);
  const Tensor gt = rect_mask(4, 4, 0, 2, 0, 2);

  CHECK_THROWS_AS((void)hct::mae(pred, rect_mask(4, 5, 0, 2, 0, 2)), hct::ShapeError);
  CHECK_THROWS_AS((void)hct::mae(Tensor::full({4, 4, 1}, 0.5), gt), hct::ShapeError);
  CHECK_THROWS_AS((void)hct::max_f(pred, rect_mask(5, 4, 0, 2, 0, 2)), hct::ShapeError);
  CHECK_THROWS_AS((void)hct::s_measure(pred, rect_mask(4, 5, 0, 2, 0, 2)), hct::ShapeError);
  CHECK_THROWS_AS((void)hct::e_measure_max(pred, rect_mask(4, 5, 0, 2, 0, 2)), hct::ShapeError);

  Tensor bad = pred;
  bad.at(1, 1) = 1.5;
  CHECK_THROWS_AS((void)hct::mae(bad, gt), hct::Error);
  bad.at(1, 1) = -0.25;
  CHECK_THROWS_AS((void)hct::s_measure(bad, gt), hct::Error);
  bad.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)hct::e_measure_max(bad, gt), hct::Error);

  Tensor soft = gt;
  soft.at(0, 0) = 0.5;
  CHECK_THROWS_AS((void)hct::mae(pred, soft), hct::Error);

  CHECK_THROWS_WITH_AS((void)hct::max_f(pred, Tensor::zeros({4, 4})),
                       "max_f: the ground truth has no positive pixels, recall is undefined",
                       hct::Error);
  CHECK_THROWS_AS((void)hct::max_f(pred, gt, 0.0), hct::Error);
  CHECK_THROWS_AS((void)hct::max_f(pred, gt, 0.3, 1), hct::Error);
  CHECK_THROWS_AS((void)hct::e_measure_max(pred, gt, 1), hct::Error);
}

TEST_CASE("mean absolute error matches hand values") {
  Rng rng(41);
  const Tensor gt = random_mask(rng, 8, 8);
  CHECK(hct::mae(gt, gt) == 0.0);
  CHECK(hct::mae(invert(gt), gt) == 1.0);
  CHECK(hct::mae(Tensor::full({8, 8}, 0.5), gt) == 0.5);

  Tensor p = Tensor::from({2, 2}, {0.25, 0.5, 0.75, 1.0});
  Tensor g = Tensor::from({2, 2}, {0.0, 1.0, 1.0, 0.0});
  CHECK(hct::mae(p, g) == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor q = random_map(rng, 8, 8);
  const double v = hct::mae(q, gt);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("mae and the F sweep ignore pixel arrangement") {
  Rng rng(52);
  const int h = 6;
  const int w = 7;
  const Tensor pred = random_map(rng, h, w);
  const Tensor gt = random_mask(rng, h, w);

  std::vector<int> perm(static_cast<std::size_t>(h * w));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = h * w - 1; i > 0; --i) {
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  }
  Tensor pred2 = pred;
  Tensor gt2 = gt;
  for (int i = 0; i < h * w; ++i) {
    pred2.data[static_cast<std::size_t>(i)] = pred.data[static_cast<std::size_t>(perm[i])];
    gt2.data[static_cast<std::size_t>(i)] = gt.data[static_cast<std::size_t>(perm[i])];
  }

  CHECK(hct::mae(pred2, gt2) == doctest::Approx(hct::mae(pred, gt)).epsilon(1e-14));
  const SweepResult a = hct::max_f(pred, gt);
  const SweepResult b = hct::max_f(pred2, gt2);
  CHECK(a.best == b.best);
  CHECK(std::memcmp(a.curve.data(), b.curve.data(), a.curve.size() * sizeof(double)) == 0);
}

TEST_CASE("the F sweep scores precision and recall") {
  const Tensor gt = rect_mask(6, 6, 1, 4, 2, 5);

  SUBCASE("a perfect binary prediction achieves 1 wherever it survives") {
    const SweepResult r = hct::max_f(gt, gt);
    CHECK(r.best == 1.0);
    CHECK(r.curve.size() == 256);
    for (int k = 0; k < 255; ++k) CHECK(r.curve[static_cast<std::size_t>(k)] == 1.0);
    CHECK(r.curve[255] == 0.0);
  }

  SUBCASE("an empty prediction never scores") {
    const SweepResult r = hct::max_f(Tensor::zeros({6, 6}), gt);
    CHECK(r.best == 0.0);
    for (double f : r.curve) CHECK(f == 0.0);
  }

  SUBCASE("a full prediction has perfect recall and fixed precision") {
    const SweepResult r = hct::max_f(Tensor::full({6, 6}, 1.0), gt);
    const double p = 9.0 / 36.0;
    const double expected = (1.0 + 0.3) * p * 1.0 / (0.3 * p + 1.0);
    CHECK(r.best == expected);
    CHECK(r.curve[0] == expected);
    CHECK(r.curve[254] == expected);
    CHECK(r.curve[255] == 0.0);
  }
}

TEST_CASE("the four-by-four worked example matches the exhaustive sweep") {
  // Three of four positives hit at 0.8, the fourth missed at 0.3, one
  // false positive at 0.7; everything else sits at 0.05.
  Tensor gt = rect_mask(4, 4, 0, 2, 0, 2);
  Tensor pred = Tensor::full({4, 4}, 0.05);
  pred.at(0, 0) = 0.8;
  pred.at(0, 1) = 0.8;
  pred.at(1, 0) = 0.8;
  pred.at(1, 1) = 0.3;
  pred.at(2, 2) = 0.7;

  CHECK(oracle_f_at(pred, gt, 0.5, 0.3) == doctest::Approx(0.75).epsilon(1e-13));

  const SweepResult r = hct::max_f(pred, gt);
  for (int k = 77; k <= 178; ++k) {
    CHECK(r.curve[static_cast<std::size_t>(k)] == doctest::Approx(0.75).epsilon(1e-13));
  }

  double oracle_best = 0.0;
  for (int k = 0; k < 256; ++k) {
    const double f = oracle_f_at(pred, gt, k / 255.0, 0.3);
    CHECK(r.curve[static_cast<std::size_t>(k)] == f);
    oracle_best = std::max(oracle_best, f);
  }
  CHECK(r.best == oracle_best);
  // Best bin keeps the three strong hits only: P=1, R=3/4.
  CHECK(r.best == doctest::Approx(0.975 / 1.05).epsilon(1e-13));

  Rng rng(63);
  for (int rep = 0; rep < 3; ++rep) {
    const Tensor p2 = random_map(rng, 6, 6);
    const Tensor g2 = random_mask(rng, 6, 6);
    const SweepResult rr = hct::max_f(p2, g2);
    for (int k = 0; k < 256; ++k) {
      CHECK(rr.curve[static_cast<std::size_t>(k)] == oracle_f_at(p2, g2, k / 255.0, 0.3));
    }
  }
}

TEST_CASE("corrupting correct pixels never raises the midpoint F") {
  // Exhaustive over every 3x3 mask and every binary prediction: flipping
  // a pixel the prediction had right must not improve F at t = 0.5.
  std::vector<Tensor> pattern(512);
  for (int b = 0; b < 512; ++b) {
    pattern[static_cast<std::size_t>(b)] = Tensor::zeros({3, 3});
    for (int i = 0; i < 9; ++i) {
      pattern[static_cast<std::size_t>(b)].data[static_cast<std::size_t>(i)] =
          (b >> i) & 1 ? 1.0 : 0.0;
    }
  }
  int violations = 0;
  for (int g = 1; g < 512; ++g) {
    std::vector<double> f(512);
    for (int b = 0; b < 512; ++b) {
      f[static_cast<std::size_t>(b)] =
          hct::max_f(pattern[static_cast<std::size_t>(b)], pattern[static_cast<std::size_t>(g)],
                     0.3, 3)
              .curve[1];
    }
    for (int b = 0; b < 512; ++b) {
      for (int p = 0; p < 9; ++p) {
        if (((b >> p) & 1) != ((g >> p) & 1)) continue;
        if (f[static_cast<std::size_t>(b ^ (1 << p))] > f[static_cast<std::size_t>(b)] + 1e-15) {
          ++violations;
        }
      }
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("structure measure identities and degenerate masks") {
  Rng rng(74);
  const Tensor gt = rect_mask(8, 8, 2, 6, 3, 7);

  CHECK(hct::s_measure(gt, gt) >= 1.0 - 1e-9);
  CHECK(hct::s_measure(gt, gt) <= 1.0);
  CHECK(hct::s_measure(invert(gt), gt) == 0.0);

  const Tensor empty = Tensor::zeros({8, 8});
  CHECK(hct::s_measure(Tensor::zeros({8, 8}), empty) == 1.0);
  const Tensor p = random_map(rng, 8, 8);
  double m = 0.0;
  for (double v : p.data) m += v;
  m /= static_cast<double>(p.numel());
  CHECK(hct::s_measure(p, empty) == 1.0 - m);
  CHECK(hct::s_measure(p, Tensor::full({8, 8}, 1.0)) == m);

  for (int rep = 0; rep < 4; ++rep) {
    const double s = hct::s_measure(random_map(rng, 7, 9), random_mask(rng, 7, 9));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("structure measure matches its from-definition oracle") {
  const Tensor pred = fixed_pred();
  const Tensor gt = fixed_gt();
  const double s = hct::s_measure(pred, gt);
  CHECK(s == doctest::Approx(oracle_s(pred, gt)).epsilon(1e-13));
  CHECK(s == doctest::Approx(kFixedS).epsilon(1e-9));
  CHECK(hct::max_f(pred, gt).best == doctest::Approx(kFixedMaxF).epsilon(1e-9));
  CHECK(hct::mae(pred, gt) == doctest::Approx(kFixedMae).epsilon(1e-9));

  Rng rng(85);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor p2 = random_map(rng, 9, 8);
    Tensor g2 = rect_mask(9, 8, 1 + rep % 3, 5 + rep % 4, 2, 4 + rep % 5);
    g2.at(0, 7) = 1.0;
    CHECK(hct::s_measure(p2, g2) == doctest::Approx(oracle_s(p2, g2)).epsilon(1e-13));
  }
}

TEST_CASE("alignment sweep identities") {
  SUBCASE("a perfect prediction aligns fully below saturation") {
    const Tensor gt = rect_mask(6, 6, 1, 4, 1, 5);
    const SweepResult r = hct::e_measure_max(gt, gt);
    CHECK(r.best == 1.0);
    for (int k = 0; k < 255; ++k) CHECK(r.curve[static_cast<std::size_t>(k)] == 1.0);
    CHECK(r.curve[255] == 0.25);
  }

  SUBCASE("a balanced anti-prediction cancels exactly") {
    const Tensor gt = rect_mask(8, 8, 0, 8, 0, 4);
    const SweepResult r = hct::e_measure_max(invert(gt), gt);
    for (int k = 0; k < 255; ++k) CHECK(r.curve[static_cast<std::size_t>(k)] == 0.0);
    CHECK(r.curve[255] == 0.25);
    CHECK(r.best == 0.25);
  }

  SUBCASE("an empty mask rewards empty predictions") {
    const Tensor empty = Tensor::zeros({4, 4});
    const SweepResult quiet = hct::e_measure_max(Tensor::zeros({4, 4}), empty);
    CHECK(quiet.best == 1.0);
    for (double e : quiet.curve) CHECK(e == 1.0);

    Tensor p = Tensor::zeros({4, 4});
    p.at(0, 0) = 0.6;
    p.at(3, 3) = 0.6;
    const SweepResult r = hct::e_measure_max(p, empty);
    CHECK(r.curve[0] == 1.0 - 2.0 / 16.0);
    CHECK(r.curve[153] == 1.0);
    CHECK(r.best == 1.0);
  }

  SUBCASE("a full mask rewards full predictions") {
    const Tensor full = Tensor::full({4, 4}, 1.0);
    Tensor p = Tensor::full({4, 4}, 0.2);
    p.at(0, 0) = 1.0;
    p.at(0, 1) = 1.0;
    p.at(2, 2) = 1.0;
    p.at(3, 1) = 1.0;
    p.at(1, 3) = 1.0;
    const SweepResult r = hct::e_measure_max(p, full);
    CHECK(r.curve[0] == 1.0);
    CHECK(r.curve[51] == 5.0 / 16.0);
    CHECK(r.curve[200] == 5.0 / 16.0);
    CHECK(r.curve[255] == 0.0);
    CHECK(r.best == 1.0);
  }
}

TEST_CASE("alignment sweep matches its from-definition oracle") {
  const Tensor pred = fixed_pred();
  const Tensor gt = fixed_gt();
  const SweepResult r = hct::e_measure_max(pred, gt);
  CHECK(r.best == doctest::Approx(oracle_e_max(pred, gt, 256)).epsilon(1e-13));
  CHECK(r.best == doctest::Approx(kFixedEmax).epsilon(1e-9));
  for (int k = 0; k < 256; ++k) {
    CHECK(r.curve[static_cast<std::size_t>(k)] ==
          doctest::Approx(oracle_e_at(pred, gt, k / 255.0)).epsilon(1e-13));
  }

  Rng rng(96);
  for (int rep = 0; rep < 4; ++rep) {
    const Tensor p2 = random_map(rng, 6, 7);
    const Tensor g2 = random_mask(rng, 6, 7);
    CHECK(hct::e_measure_max(p2, g2).best ==
          doctest::Approx(oracle_e_max(p2, g2, 256)).epsilon(1e-13));
  }
}

TEST_CASE("scores follow simultaneous flips of both maps") {
  Rng rng(107);
  const Tensor pred = random_map(rng, 8, 9);
  Tensor gt = rect_mask(8, 9, 3, 6, 2, 5);
  gt.at(2, 7) = 1.0;  // fractional centroid on both axes

  const double s0 = hct::s_measure(pred, gt);
  const double e0 = hct::e_measure_max(pred, gt).best;
  const double f0 = hct::max_f(pred, gt).best;
  const double m0 = hct::mae(pred, gt);

  auto check_same = [&](const Tensor& p, const Tensor& g) {
    CHECK(hct::s_measure(p, g) == doctest::Approx(s0).epsilon(1e-12));
    CHECK(hct::e_measure_max(p, g).best == doctest::Approx(e0).epsilon(1e-12));
    CHECK(hct::max_f(p, g).best == f0);
    CHECK(hct::mae(p, g) == doctest::Approx(m0).epsilon(1e-13));
  };
  check_same(hct::flip_horizontal(pred), hct::flip_horizontal(gt));
  check_same(flip_vertical(pred), flip_vertical(gt));
  check_same(transpose_map(pred), transpose_map(gt));
  check_same(flip_vertical(transpose_map(pred)), flip_vertical(transpose_map(gt)));
}

TEST_CASE("report assembly and rendering") {
  Rng rng(118);
  std::vector<Tensor> preds;
  std::vector<Tensor> gts;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) {
    preds.push_back(random_map(rng, 8, 8));
    gts.push_back(random_mask(rng, 8, 8));
    ids.push_back("img_" + std::to_string(i));
  }

  const std::vector<MetricReport> batch = hct::evaluate_batch(preds, gts);
  REQUIRE(batch.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const MetricReport one =
        hct::evaluate_map(preds[static_cast<std::size_t>(i)], gts[static_cast<std::size_t>(i)]);
    CHECK(batch[static_cast<std::size_t>(i)].mae == one.mae);
    CHECK(batch[static_cast<std::size_t>(i)].max_f == one.max_f);
    CHECK(batch[static_cast<std::size_t>(i)].s_measure == one.s_measure);
    CHECK(batch[static_cast<std::size_t>(i)].e_max == one.e_max);
    CHECK(batch[static_cast<std::size_t>(i)].f_curve.size() == 256);
    CHECK(batch[static_cast<std::size_t>(i)].e_curve.size() == 256);
    CHECK(std::memcmp(batch[static_cast<std::size_t>(i)].f_curve.data(), one.f_curve.data(),
                      256 * sizeof(double)) == 0);
  }

  const std::vector<MetricReport> again = hct::evaluate_batch(preds, gts);
  for (int i = 0; i < 3; ++i) {
    CHECK(batch[static_cast<std::size_t>(i)].s_measure ==
          again[static_cast<std::size_t>(i)].s_measure);
  }

  const MetricReport mean = hct::mean_report(batch);
  CHECK(mean.mae ==
        doctest::Approx((batch[0].mae + batch[1].mae + batch[2].mae) / 3.0).epsilon(1e-15));
  CHECK(mean.f_curve.size() == 256);

  const std::string records = hct::metrics_records(ids, batch);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < records.size()) {
    const std::size_t end = records.find('\n', start);
    lines.push_back(records.substr(start, end - start));
    start = end + 1;
  }
  REQUIRE(lines.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const std::string& line = lines[static_cast<std::size_t>(i)];
    std::vector<std::string> fields;
    std::size_t f0 = 0;
    while (true) {
      const std::size_t tab = line.find('\t', f0);
      fields.push_back(line.substr(f0, tab - f0));
      if (tab == std::string::npos) break;
      f0 = tab + 1;
    }
    REQUIRE(fields.size() == 5);
    CHECK(fields[0] == ids[static_cast<std::size_t>(i)]);
    CHECK(std::stod(fields[1]) ==
          doctest::Approx(batch[static_cast<std::size_t>(i)].mae).epsilon(1e-11));
    CHECK(std::stod(fields[2]) ==
          doctest::Approx(batch[static_cast<std::size_t>(i)].max_f).epsilon(1e-11));
    CHECK(std::stod(fields[3]) ==
          doctest::Approx(batch[static_cast<std::size_t>(i)].s_measure).epsilon(1e-11));
    CHECK(std::stod(fields[4]) ==
          doctest::Approx(batch[static_cast<std::size_t>(i)].e_max).epsilon(1e-11));
  }

  const std::string table = hct::metrics_table(ids, batch);
  CHECK(table.find("MAE") != std::string::npos);
  CHECK(table.find("maxF") != std::string::npos);
  CHECK(table.find("Emax") != std::string::npos);
  for (const std::string& id : ids) CHECK(table.find(id) != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);

  CHECK_THROWS_AS((void)hct::evaluate_batch({preds[0]}, gts), hct::ShapeError);
  CHECK_THROWS_AS((void)hct::mean_report({}), hct::Error);
  CHECK_THROWS_AS((void)hct::metrics_records({"a"}, batch), hct::Error);
  std::vector<MetricReport> uneven = batch;
  uneven[1].f_curve.resize(17);
  CHECK_THROWS_AS((void)hct::mean_report(uneven), hct::Error);
}

TEST_CASE("perfect predictions satisfy every metric at once") {
  Rng rng(129);
  const Tensor gt = random_mask(rng, 12, 10);
  const MetricReport r = hct::evaluate_map(gt, gt);
  CHECK(std::abs(r.mae - 0.0) <= 1e-9);
  CHECK(std::abs(r.max_f - 1.0) <= 1e-9);
  CHECK(std::abs(r.s_measure - 1.0) <= 1e-9);
  CHECK(std::abs(r.e_max - 1.0) <= 1e-9);
}

TEST_CASE("sweep length and beta overrides") {
  Tensor gt = rect_mask(4, 4, 0, 2, 0, 2);
  Tensor pred = Tensor::full({4, 4}, 0.05);
  pred.at(0, 0) = 0.8;
  pred.at(0, 1) = 0.8;
  pred.at(1, 0) = 0.8;
  pred.at(1, 1) = 0.3;
  pred.at(2, 2) = 0.7;

  const SweepResult coarse = hct::max_f(pred, gt, 1.0, 3);
  CHECK(coarse.curve.size() == 3);
  const double p = 0.75;
  CHECK(coarse.curve[1] == doctest::Approx((1.0 + 1.0) * p * p / (1.0 * p + p)).epsilon(1e-13));

  const SweepResult fine = hct::e_measure_max(pred, gt, 5);
  CHECK(fine.curve.size() == 5);
  CHECK(fine.curve[2] == doctest::Approx(oracle_e_at(pred, gt, 0.5)).epsilon(1e-13));

  const MetricReport r = hct::evaluate_map(pred, gt);
  CHECK(r.f_curve.size() == 256);
  CHECK(r.e_curve.size() == 256);
}
