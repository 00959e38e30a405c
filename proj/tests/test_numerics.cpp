#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "hct/gradcheck.hpp"
#include "hct/kernels.hpp"
#include "hct/oracleref.hpp"
#include "hct/tape.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using hct::ParamStore;
using hct::Rng;
using hct::Tape;
using hct::Tensor;

namespace {

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a[i] - b[i]) /
                                std::max({std::fabs(a[i]), std::fabs(b[i]), 1.0}));
  }
  CHECK(worst <= tol);
}

void check_bitwise(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Builds a loss callback that records a fresh tape per evaluation.
hct::LossFn tape_loss(std::function<int(Tape&, ParamStore&)> build) {
  return [build](ParamStore& ps, bool need_grad) {
    Tape tape;
    const int loss = build(tape, ps);
    if (need_grad) {
      tape.backward(loss);
      tape.write_param_grads(ps);
    }
    return tape.val(loss).data[0];
  };
}

// Reduces node `x` to a scalar through fixed random weights so the incoming
// gradient of `x` is not uniform.
int weighted_sum(Tape& t, int x, const Tensor& w) {
  return t.sum_all(t.mul(x, t.leaf(w)));
}

void expect_grads_pass(const hct::LossFn& fn, ParamStore& ps) {
  hct::GradCheckOptions opt;
  opt.eps = 1e-5;
  opt.tol = 1e-6;
  const auto report = hct::grad_check(fn, ps, opt);
  CHECK_MESSAGE(report.ok, "worst " << report.worst.name << "[" << report.worst.index
                                    << "] analytic=" << report.worst.analytic
                                    << " numeric=" << report.worst.numeric
                                    << " rel=" << report.worst.rel_err);
}

}  // namespace

TEST_CASE("rng reproduces the same stream for a fixed seed") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng d(43);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += (c.next_u64() == d.next_u64());
  CHECK(same == 0);
}

TEST_CASE("rng draws stay in their documented ranges") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const int k = rng.uniform_int(17);
    CHECK(k >= 0);
    CHECK(k < 17);
  }
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-3.0, 5.0);
    CHECK(x >= -3.0);
    CHECK(x < 5.0);
  }
}

TEST_CASE("rng normal has roughly standard moments") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    CHECK(std::isfinite(x));
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.03);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng mixed streams are independent of each other") {
  const auto s0 = Rng::mix(123, 0);
  const auto s1 = Rng::mix(123, 1);
  CHECK(s0 != s1);
  CHECK(Rng::mix(123, 0) == s0);
  Rng a(s0);
  Rng b(s1);
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("tensor factories validate shapes") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.ndim() == 2);
  t.at(1, 2) = 5.0;
  CHECK(t.data[5] == 5.0);

  Tensor g = Tensor::zeros({2, 2, 3});
  g.at(1, 0, 2) = 7.0;
  CHECK(g.data[(1 * 2 + 0) * 3 + 2] == 7.0);

  CHECK(Tensor::full({3}, 2.5).data == std::vector<double>{2.5, 2.5, 2.5});
  CHECK_THROWS_AS(Tensor::zeros({0}), hct::ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, -1}), hct::ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0}), hct::ShapeError);
}

TEST_CASE("matmul kernels match the reference") {
  Rng rng(101);
  const int m = 7, k = 5, n = 9;
  const auto a = random_vec(rng, static_cast<std::size_t>(m) * k);
  const auto b = random_vec(rng, static_cast<std::size_t>(k) * n);
  const auto want = hct::oracle::matmul(a, b, m, k, n);

  std::vector<double> got(static_cast<std::size_t>(m) * n, 0.0);
  hct::kernels::serial::matmul_nn(a.data(), b.data(), got.data(), m, k, n, false);
  check_close(got, want, 1e-13);

  std::vector<double> par(got.size(), 0.0);
  hct::kernels::matmul_nn(a.data(), b.data(), par.data(), m, k, n, false);
  check_bitwise(par, got);

  // acc=true accumulates on top of the existing output.
  hct::kernels::serial::matmul_nn(a.data(), b.data(), got.data(), m, k, n, true);
  std::vector<double> twice(want.size());
  for (std::size_t i = 0; i < want.size(); ++i) twice[i] = 2.0 * want[i];
  check_close(got, twice, 1e-13);

  // nt: b supplied as [n,k].
  std::vector<double> bt(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * k + i] = b[static_cast<std::size_t>(i) * n + j];
  }
  std::vector<double> got_nt(static_cast<std::size_t>(m) * n, 0.0);
  hct::kernels::serial::matmul_nt(a.data(), bt.data(), got_nt.data(), m, k, n, false);
  check_close(got_nt, want, 1e-13);

  // tn: a supplied as [k,m].
  std::vector<double> at(static_cast<std::size_t>(k) * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) at[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * k + j];
  }
  std::vector<double> got_tn(static_cast<std::size_t>(m) * n, 0.0);
  hct::kernels::serial::matmul_tn(at.data(), b.data(), got_tn.data(), m, k, n, false);
  check_close(got_tn, want, 1e-13);
}

TEST_CASE("conv kernel matches the reference") {
  Rng rng(202);
  const int h = 6, w = 5, ci = 3, co = 4;
  const auto in = random_vec(rng, static_cast<std::size_t>(h) * w * ci);
  for (int kk : {1, 3, 5}) {
    const auto wt = random_vec(rng, static_cast<std::size_t>(kk) * kk * ci * co);
    const auto bias = random_vec(rng, static_cast<std::size_t>(co));
    const auto want = hct::oracle::conv2d(in, wt, bias, h, w, ci, co, kk);
    std::vector<double> got(want.size(), 0.0);
    hct::kernels::serial::conv2d_fwd(in.data(), wt.data(), bias.data(), got.data(), h, w, ci, co,
                                     kk);
    check_close(got, want, 1e-13);
    std::vector<double> par(want.size(), 0.0);
    hct::kernels::conv2d_fwd(in.data(), wt.data(), bias.data(), par.data(), h, w, ci, co, kk);
    check_bitwise(par, got);
  }
}

TEST_CASE("softmax kernel matches the reference and normalizes rows") {
  Rng rng(303);
  const int n = 6, c = 11;
  const auto x = random_vec(rng, static_cast<std::size_t>(n) * c, -4.0, 4.0);
  const auto want = hct::oracle::softmax_rows(x, n, c);
  std::vector<double> got(x.size(), 0.0);
  hct::kernels::serial::softmax_rows_fwd(x.data(), got.data(), n, c);
  check_close(got, want, 1e-15);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      s += got[static_cast<std::size_t>(i) * c + j];
      CHECK(got[static_cast<std::size_t>(i) * c + j] > 0.0);
    }
    CHECK(rel_err(s, 1.0) < 1e-14);
  }
}

TEST_CASE("softmax survives a 100-unit logit gap") {
  // Reference value for exp(-100)/(1 + exp(-100)), fixed ahead of time.
  const double tail = 3.7200759760208356e-44;
  const std::vector<double> x{5.0, -95.0};
  std::vector<double> got(2, 0.0);
  hct::kernels::serial::softmax_rows_fwd(x.data(), got.data(), 1, 2);
  CHECK(got[0] == 1.0);
  CHECK(rel_err(got[1], tail) < 1e-12);

  const auto ref = hct::oracle::softmax_rows(x, 1, 2);
  CHECK(rel_err(ref[1], tail) < 1e-12);
}

TEST_CASE("bilinear kernel matches the reference") {
  Rng rng(404);
  const struct {
    int h, w, c, nh, nw;
  } cases[] = {{5, 7, 3, 9, 4}, {4, 4, 2, 8, 8}, {6, 6, 1, 3, 3}, {2, 2, 1, 64, 64}};
  for (const auto& cs : cases) {
    const auto in = random_vec(rng, static_cast<std::size_t>(cs.h) * cs.w * cs.c);
    const auto want = hct::oracle::bilinear(in, cs.h, cs.w, cs.c, cs.nh, cs.nw);
    std::vector<double> got(want.size(), 0.0);
    hct::kernels::serial::bilinear_fwd(in.data(), got.data(), cs.h, cs.w, cs.c, cs.nh, cs.nw);
    check_close(got, want, 1e-13);
    std::vector<double> par(want.size(), 0.0);
    hct::kernels::bilinear_fwd(in.data(), par.data(), cs.h, cs.w, cs.c, cs.nh, cs.nw);
    check_bitwise(par, got);
  }
}

TEST_CASE("bilinear passes values through exactly at equal sizes") {
  Rng rng(405);
  const auto in = random_vec(rng, 5 * 7 * 3);
  std::vector<double> out(in.size(), 0.0);
  hct::kernels::serial::bilinear_fwd(in.data(), out.data(), 5, 7, 3, 5, 7);
  check_bitwise(out, in);
}

TEST_CASE("bilinear keeps constants exactly constant") {
  const std::vector<double> in(8 * 8, 0.37);
  std::vector<double> out(32 * 32, 0.0);
  hct::kernels::serial::bilinear_fwd(in.data(), out.data(), 8, 8, 1, 32, 32);
  for (double v : out) CHECK(v == 0.37);
}

TEST_CASE("bilinear half-pixel coordinates give the textbook 1-d answer") {
  const std::vector<double> in{0.0, 1.0};
  std::vector<double> out(4, 0.0);
  hct::kernels::serial::bilinear_fwd(in.data(), out.data(), 1, 2, 1, 1, 4);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.25);
  CHECK(out[2] == 0.75);
  CHECK(out[3] == 1.0);
}

TEST_CASE("layer_norm kernel matches the reference") {
  Rng rng(506);
  const int n = 5, c = 8;
  const auto x = random_vec(rng, static_cast<std::size_t>(n) * c, -2.0, 2.0);
  const auto g = random_vec(rng, c, 0.5, 1.5);
  const auto b = random_vec(rng, c, -0.3, 0.3);
  const double eps = 1e-5;
  const auto want = hct::oracle::layer_norm(x, g, b, eps, n, c);
  std::vector<double> got(x.size(), 0.0);
  hct::kernels::serial::layer_norm_fwd(x.data(), g.data(), b.data(), eps, got.data(), n, c);
  check_close(got, want, 1e-12);

  const std::vector<double> ones(c, 1.0);
  const std::vector<double> zeros(c, 0.0);
  hct::kernels::serial::layer_norm_fwd(x.data(), ones.data(), zeros.data(), eps, got.data(), n, c);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < c; ++j) mean += got[static_cast<std::size_t>(i) * c + j];
    mean /= c;
    for (int j = 0; j < c; ++j) {
      const double d = got[static_cast<std::size_t>(i) * c + j] - mean;
      var += d * d;
    }
    var /= c;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(std::fabs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("parallel kernels stay bitwise identical to serial on large shapes") {
#ifdef _OPENMP
  omp_set_num_threads(3);
#endif
  Rng rng(607);

  {
    const int m = 96, k = 64, n = 96;
    const auto a = random_vec(rng, static_cast<std::size_t>(m) * k);
    const auto b = random_vec(rng, static_cast<std::size_t>(k) * n);
    std::vector<double> s(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<double> p(s.size(), 0.0);
    hct::kernels::serial::matmul_nn(a.data(), b.data(), s.data(), m, k, n, false);
    hct::kernels::matmul_nn(a.data(), b.data(), p.data(), m, k, n, false);
    check_bitwise(p, s);

    std::fill(s.begin(), s.end(), 0.0);
    std::fill(p.begin(), p.end(), 0.0);
    hct::kernels::serial::matmul_nt(a.data(), b.data(), s.data(), m, k, n, false);
    hct::kernels::matmul_nt(a.data(), b.data(), p.data(), m, k, n, false);
    check_bitwise(p, s);

    std::fill(s.begin(), s.end(), 0.0);
    std::fill(p.begin(), p.end(), 0.0);
    hct::kernels::serial::matmul_tn(a.data(), b.data(), s.data(), n, k, m, false);
    hct::kernels::matmul_tn(a.data(), b.data(), p.data(), n, k, m, false);
    check_bitwise(p, s);
  }

  {
    const int h = 32, w = 32, ci = 8, co = 8, kk = 3;
    const auto in = random_vec(rng, static_cast<std::size_t>(h) * w * ci);
    const auto wt = random_vec(rng, static_cast<std::size_t>(kk) * kk * ci * co);
    const auto bias = random_vec(rng, co);
    std::vector<double> s(static_cast<std::size_t>(h) * w * co, 0.0);
    std::vector<double> p(s.size(), 0.0);
    hct::kernels::serial::conv2d_fwd(in.data(), wt.data(), bias.data(), s.data(), h, w, ci, co, kk);
    hct::kernels::conv2d_fwd(in.data(), wt.data(), bias.data(), p.data(), h, w, ci, co, kk);
    check_bitwise(p, s);

    std::vector<double> ds(in.size(), 0.0);
    std::vector<double> dp(in.size(), 0.0);
    hct::kernels::serial::conv2d_bwd_in(s.data(), wt.data(), ds.data(), h, w, ci, co, kk);
    hct::kernels::conv2d_bwd_in(s.data(), wt.data(), dp.data(), h, w, ci, co, kk);
    check_bitwise(dp, ds);

    std::vector<double> ws(wt.size(), 0.0);
    std::vector<double> wp(wt.size(), 0.0);
    hct::kernels::serial::conv2d_bwd_w(in.data(), s.data(), ws.data(), h, w, ci, co, kk);
    hct::kernels::conv2d_bwd_w(in.data(), s.data(), wp.data(), h, w, ci, co, kk);
    check_bitwise(wp, ws);

    std::vector<double> bs(co, 0.0);
    std::vector<double> bp(co, 0.0);
    hct::kernels::serial::conv2d_bwd_b(s.data(), bs.data(), h, w, co);
    hct::kernels::conv2d_bwd_b(s.data(), bp.data(), h, w, co);
    check_bitwise(bp, bs);
  }

  {
    const int n = 512, c = 64;
    const auto x = random_vec(rng, static_cast<std::size_t>(n) * c, -4.0, 4.0);
    std::vector<double> s(x.size(), 0.0);
    std::vector<double> p(x.size(), 0.0);
    hct::kernels::serial::softmax_rows_fwd(x.data(), s.data(), n, c);
    hct::kernels::softmax_rows_fwd(x.data(), p.data(), n, c);
    check_bitwise(p, s);

    const auto dy = random_vec(rng, x.size());
    std::vector<double> dxs(x.size(), 0.0);
    std::vector<double> dxp(x.size(), 0.0);
    hct::kernels::serial::softmax_rows_bwd(s.data(), dy.data(), dxs.data(), n, c);
    hct::kernels::softmax_rows_bwd(s.data(), dy.data(), dxp.data(), n, c);
    check_bitwise(dxp, dxs);
  }

  {
    const int h = 16, w = 16, c = 4, nh = 96, nw = 96;
    const auto in = random_vec(rng, static_cast<std::size_t>(h) * w * c);
    std::vector<double> s(static_cast<std::size_t>(nh) * nw * c, 0.0);
    std::vector<double> p(s.size(), 0.0);
    hct::kernels::serial::bilinear_fwd(in.data(), s.data(), h, w, c, nh, nw);
    hct::kernels::bilinear_fwd(in.data(), p.data(), h, w, c, nh, nw);
    check_bitwise(p, s);

    std::vector<double> ds(in.size(), 0.0);
    std::vector<double> dp(in.size(), 0.0);
    hct::kernels::serial::bilinear_bwd(s.data(), ds.data(), h, w, c, nh, nw);
    hct::kernels::bilinear_bwd(s.data(), dp.data(), h, w, c, nh, nw);
    check_bitwise(dp, ds);
  }

  {
    const int n = 512, c = 64;
    const auto x = random_vec(rng, static_cast<std::size_t>(n) * c, -2.0, 2.0);
    const auto g = random_vec(rng, c, 0.5, 1.5);
    const auto b = random_vec(rng, c, -0.2, 0.2);
    std::vector<double> s(x.size(), 0.0);
    std::vector<double> p(x.size(), 0.0);
    hct::kernels::serial::layer_norm_fwd(x.data(), g.data(), b.data(), 1e-5, s.data(), n, c);
    hct::kernels::layer_norm_fwd(x.data(), g.data(), b.data(), 1e-5, p.data(), n, c);
    check_bitwise(p, s);

    const auto dy = random_vec(rng, x.size());
    std::vector<double> dxs(x.size(), 0.0), dgs(static_cast<std::size_t>(c), 0.0),
        dbs(static_cast<std::size_t>(c), 0.0);
    std::vector<double> dxp(x.size(), 0.0), dgp(static_cast<std::size_t>(c), 0.0),
        dbp(static_cast<std::size_t>(c), 0.0);
    hct::kernels::serial::layer_norm_bwd(x.data(), g.data(), 1e-5, dy.data(), dxs.data(),
                                         dgs.data(), dbs.data(), n, c);
    hct::kernels::layer_norm_bwd(x.data(), g.data(), 1e-5, dy.data(), dxp.data(), dgp.data(),
                                 dbp.data(), n, c);
    check_bitwise(dxp, dxs);
    check_bitwise(dgp, dgs);
    check_bitwise(dbp, dbs);
  }
}

TEST_CASE("stable bce hits its closed-form anchor points") {
  Tape tape;
  const int x0 = tape.leaf(Tensor::from({1}, {0.0}));
  const int y1 = tape.leaf(Tensor::from({1}, {1.0}));
  CHECK(rel_err(tape.val(tape.stable_bce(x0, y1)).data[0], std::log(2.0)) < 1e-15);

  const int xbig = tape.leaf(Tensor::from({1}, {100.0}));
  CHECK(tape.val(tape.stable_bce(xbig, y1)).data[0] < 1e-30);

  const int xneg = tape.leaf(Tensor::from({1}, {-100.0}));
  const int y0 = tape.leaf(Tensor::from({1}, {0.0}));
  CHECK(tape.val(tape.stable_bce(xneg, y0)).data[0] < 1e-30);

  // Confident and wrong costs the full logit magnitude.
  CHECK(rel_err(tape.val(tape.stable_bce(xneg, y1)).data[0], 100.0) < 1e-12);
}

TEST_CASE("stable bce matches the naive reference on moderate logits") {
  Rng rng(708);
  const auto x = random_vec(rng, 24, -5.0, 5.0);
  const auto y = random_vec(rng, 24, 0.0, 1.0);
  Tape tape;
  const int got = tape.stable_bce(tape.leaf(Tensor::from({4, 6}, x)),
                                  tape.leaf(Tensor::from({4, 6}, y)));
  CHECK(rel_err(tape.val(got).data[0], hct::oracle::bce_mean(x, y)) < 1e-12);
}

TEST_CASE("stable bce rejects targets outside the unit interval") {
  Tape tape;
  const int x = tape.leaf(Tensor::from({1}, {0.0}));
  CHECK_THROWS_AS(tape.stable_bce(x, tape.leaf(Tensor::from({1}, {1.5}))), hct::Error);
  CHECK_THROWS_AS(tape.stable_bce(x, tape.leaf(Tensor::from({1}, {-0.1}))), hct::Error);
}

TEST_CASE("tape elementwise forwards") {
  Tape tape;
  const int a = tape.leaf(Tensor::from({2, 2}, {1.0, -2.0, 3.0, -4.0}));
  const int b = tape.leaf(Tensor::from({2, 2}, {0.5, 0.5, -1.0, 2.0}));
  CHECK(tape.val(tape.add(a, b)).data == std::vector<double>{1.5, -1.5, 2.0, -2.0});
  CHECK(tape.val(tape.sub(a, b)).data == std::vector<double>{0.5, -2.5, 4.0, -6.0});
  CHECK(tape.val(tape.mul(a, b)).data == std::vector<double>{0.5, -1.0, -3.0, -8.0});
  CHECK(tape.val(tape.abs(a)).data == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(tape.val(tape.scale(a, -2.0)).data == std::vector<double>{-2.0, 4.0, -6.0, 8.0});

  const int z = tape.leaf(Tensor::from({1}, {0.0}));
  CHECK(tape.val(tape.sigmoid(z)).data[0] == 0.5);
  CHECK(tape.val(tape.gelu(z)).data[0] == 0.0);
  const int big = tape.leaf(Tensor::from({1}, {20.0}));
  CHECK(rel_err(tape.val(tape.gelu(big)).data[0], 20.0) < 1e-15);
  const int neg = tape.leaf(Tensor::from({1}, {-20.0}));
  CHECK(std::fabs(tape.val(tape.gelu(neg)).data[0]) < 1e-15);

  // The dispatcher routes to the same operations.
  const int viaEw = tape.elementwise(hct::Ew::kMul, a, b);
  CHECK(tape.val(viaEw).data == std::vector<double>{0.5, -1.0, -3.0, -8.0});
}

TEST_CASE("tape elementwise gradients") {
  Rng rng(809);
  ParamStore ps;
  ps.add("a", random_tensor(rng, {3, 4}));
  ps.add("b", random_tensor(rng, {3, 4}));
  const Tensor w = random_tensor(rng, {3, 4});

  SUBCASE("add") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.add(t.param(p, "a"), t.param(p, "b")), w);
                      }),
                      ps);
  }
  SUBCASE("sub") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.sub(t.param(p, "a"), t.param(p, "b")), w);
                      }),
                      ps);
  }
  SUBCASE("mul") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.mul(t.param(p, "a"), t.param(p, "b")), w);
                      }),
                      ps);
  }
  SUBCASE("sigmoid") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.sigmoid(t.param(p, "a")), w);
                      }),
                      ps);
  }
  SUBCASE("gelu") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.gelu(t.param(p, "a")), w);
                      }),
                      ps);
  }
  SUBCASE("scale") {
    expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                        return weighted_sum(t, t.scale(t.param(p, "a"), 1.7), w);
                      }),
                      ps);
  }
}

TEST_CASE("tape abs gradient away from the kink") {
  Rng rng(810);
  ParamStore ps;
  Tensor a = Tensor::zeros({3, 4});
  for (auto& v : a.data) {
    const double mag = rng.uniform(0.5, 1.5);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  ps.add("a", a);
  const Tensor w = random_tensor(rng, {3, 4});
  expect_grads_pass(
      tape_loss([w](Tape& t, ParamStore& p) { return weighted_sum(t, t.abs(t.param(p, "a")), w); }),
      ps);
}

TEST_CASE("tape matmul and softmax gradients") {
  Rng rng(911);
  ParamStore ps;
  ps.add("a", random_tensor(rng, {3, 4}));
  ps.add("b", random_tensor(rng, {4, 5}));
  const Tensor w = random_tensor(rng, {3, 5});
  expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.matmul(t.param(p, "a"), t.param(p, "b")), w);
                    }),
                    ps);

  ParamStore ps2;
  ps2.add("x", random_tensor(rng, {3, 6}, -2.0, 2.0));
  const Tensor w2 = random_tensor(rng, {3, 6});
  expect_grads_pass(tape_loss([w2](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.softmax_rows(t.param(p, "x")), w2);
                    }),
                    ps2);
}

TEST_CASE("tape bce gradients for logits and targets") {
  Rng rng(912);
  ParamStore ps;
  ps.add("x", random_tensor(rng, {2, 3}, -2.0, 2.0));
  ps.add("y", random_tensor(rng, {2, 3}, 0.1, 0.9));
  expect_grads_pass(tape_loss([](Tape& t, ParamStore& p) {
                      return t.stable_bce(t.param(p, "x"), t.param(p, "y"));
                    }),
                    ps);

  // dL/dx has the closed form (sigmoid(x) - y) / N.
  Tape tape;
  const int x = tape.param(ps, "x");
  const int y = tape.param(ps, "y");
  tape.backward(tape.stable_bce(x, y));
  const auto gx = tape.grad(x);
  const auto& xv = ps.at("x").data;
  const auto& yv = ps.at("y").data;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double want = (1.0 / (1.0 + std::exp(-xv[i])) - yv[i]) / 6.0;
    CHECK(rel_err(gx[i], want) < 1e-12);
  }
}

TEST_CASE("tape conv and bilinear gradients") {
  Rng rng(913);
  ParamStore ps;
  ps.add("in", random_tensor(rng, {5, 4, 2}));
  ps.add("w", random_tensor(rng, {3, 3, 2, 3}, -0.5, 0.5));
  ps.add("b", random_tensor(rng, {3}, -0.1, 0.1));
  const Tensor w = random_tensor(rng, {5, 4, 3});
  expect_grads_pass(
      tape_loss([w](Tape& t, ParamStore& p) {
        return weighted_sum(t, t.conv2d(t.param(p, "in"), t.param(p, "w"), t.param(p, "b")), w);
      }),
      ps);

  ParamStore up;
  up.add("in", random_tensor(rng, {3, 4, 2}));
  const Tensor wu = random_tensor(rng, {5, 7, 2});
  expect_grads_pass(tape_loss([wu](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.bilinear_resize(t.param(p, "in"), 5, 7), wu);
                    }),
                    up);

  ParamStore down;
  down.add("in", random_tensor(rng, {6, 6, 1}));
  const Tensor wd = random_tensor(rng, {3, 3, 1});
  expect_grads_pass(tape_loss([wd](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.bilinear_resize(t.param(p, "in"), 3, 3), wd);
                    }),
                    down);
}

TEST_CASE("tape layer_norm gradients") {
  Rng rng(914);
  ParamStore ps;
  ps.add("x", random_tensor(rng, {4, 6}, -2.0, 2.0));
  ps.add("g", random_tensor(rng, {6}, 0.5, 1.5));
  ps.add("b", random_tensor(rng, {6}, -0.3, 0.3));
  const Tensor w = random_tensor(rng, {4, 6});
  expect_grads_pass(
      tape_loss([w](Tape& t, ParamStore& p) {
        return weighted_sum(t, t.layer_norm(t.param(p, "x"), t.param(p, "g"), t.param(p, "b"), 1e-5),
                            w);
      }),
      ps);
}

TEST_CASE("tape structural ops round-trip") {
  Rng rng(915);
  Tape tape;
  const Tensor src = random_tensor(rng, {3, 4});
  const int a = tape.leaf(src);

  const int tr = tape.transpose(a);
  CHECK(tape.val(tr).shape == std::vector<int>{4, 3});
  CHECK(tape.val(tr).at(2, 1) == src.at(1, 2));
  const int back = tape.transpose(tr);
  check_bitwise(tape.val(back).data, src.data);

  const int rs = tape.reshape(a, {2, 6});
  CHECK(tape.val(rs).shape == std::vector<int>{2, 6});
  check_bitwise(tape.val(rs).data, src.data);

  const Tensor p1 = random_tensor(rng, {3, 2});
  const Tensor p2 = random_tensor(rng, {3, 3});
  const int cat = tape.concat_cols({tape.leaf(p1), a, tape.leaf(p2)});
  CHECK(tape.val(cat).shape == std::vector<int>{3, 9});
  check_bitwise(tape.val(tape.slice_cols(cat, 2, 6)).data, src.data);
  check_bitwise(tape.val(tape.slice_cols(cat, 0, 2)).data, p1.data);
  check_bitwise(tape.val(tape.slice_cols(cat, 6, 9)).data, p2.data);
}

TEST_CASE("tape extract_patches lays tokens out row-major") {
  Tensor img = Tensor::zeros({4, 4, 2});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      img.at(y, x, 0) = 10.0 * y + x;
      img.at(y, x, 1) = 100.0 + 10.0 * y + x;
    }
  }
  Tape tape;
  const int tok = tape.extract_patches(tape.leaf(img), 2);
  const Tensor& t = tape.val(tok);
  REQUIRE(t.shape == std::vector<int>{4, 8});
  // Token (1,0) covers pixels (2..3, 0..1); flattened (py, px, ch).
  const std::vector<double> want{20.0, 120.0, 21.0, 121.0, 30.0, 130.0, 31.0, 131.0};
  for (int j = 0; j < 8; ++j) CHECK(t.at(2, j) == want[static_cast<std::size_t>(j)]);

  // p=1 keeps the raster order.
  const int tok1 = tape.extract_patches(tape.leaf(img), 1);
  check_bitwise(tape.val(tok1).data, img.data);
}

TEST_CASE("tape structural op gradients") {
  Rng rng(916);

  ParamStore ps;
  ps.add("a", random_tensor(rng, {3, 4}));
  const Tensor w = random_tensor(rng, {2, 6});
  expect_grads_pass(tape_loss([w](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.reshape(t.transpose(t.param(p, "a")), {2, 6}), w);
                    }),
                    ps);

  ParamStore cat;
  cat.add("a", random_tensor(rng, {3, 2}));
  cat.add("b", random_tensor(rng, {3, 3}));
  const Tensor wc = random_tensor(rng, {3, 3});
  expect_grads_pass(
      tape_loss([wc](Tape& t, ParamStore& p) {
        const int joined = t.concat_cols({t.param(p, "a"), t.param(p, "b")});
        return weighted_sum(t, t.slice_cols(joined, 1, 4), wc);
      }),
      cat);

  ParamStore ab;
  ab.add("a", random_tensor(rng, {4, 3}));
  ab.add("bias", random_tensor(rng, {3}));
  const Tensor wb = random_tensor(rng, {4, 3});
  expect_grads_pass(tape_loss([wb](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.add_bias(t.param(p, "a"), t.param(p, "bias")), wb);
                    }),
                    ab);

  ParamStore rs;
  rs.add("a", random_tensor(rng, {4, 3}));
  rs.add("s", random_tensor(rng, {4}, 0.2, 1.5));
  const Tensor wr = random_tensor(rng, {4, 3});
  expect_grads_pass(tape_loss([wr](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.row_scale(t.param(p, "a"), t.param(p, "s")), wr);
                    }),
                    rs);

  ParamStore su;
  su.add("a", random_tensor(rng, {3, 5}));
  expect_grads_pass(
      tape_loss([](Tape& t, ParamStore& p) { return t.sum_all(t.param(p, "a")); }), su);

  ParamStore ep;
  ep.add("img", random_tensor(rng, {4, 4, 2}));
  const Tensor we = random_tensor(rng, {4, 8});
  expect_grads_pass(tape_loss([we](Tape& t, ParamStore& p) {
                      return weighted_sum(t, t.extract_patches(t.param(p, "img"), 2), we);
                    }),
                    ep);
}

TEST_CASE("tape rejects shape and domain violations") {
  Tape tape;
  const int a = tape.leaf(Tensor::zeros({2, 3}));
  const int b = tape.leaf(Tensor::zeros({3, 2}));

  CHECK_THROWS_AS(tape.add(a, b), hct::ShapeError);
  CHECK_THROWS_AS(tape.matmul(a, a), hct::ShapeError);
  CHECK_THROWS_AS(tape.reshape(a, {4, 2}), hct::ShapeError);
  CHECK_THROWS_AS(tape.slice_cols(a, 2, 2), hct::ShapeError);
  CHECK_THROWS_AS(tape.slice_cols(a, 0, 4), hct::ShapeError);
  CHECK_THROWS_AS(tape.concat_cols({}), hct::ShapeError);
  CHECK_THROWS_AS(tape.concat_cols({a, b}), hct::ShapeError);
  CHECK_THROWS_AS(tape.add_bias(a, b), hct::ShapeError);
  CHECK_THROWS_AS(tape.row_scale(a, b), hct::ShapeError);
  CHECK_THROWS_AS(tape.softmax_rows(tape.leaf(Tensor::zeros({2, 2, 2}))), hct::ShapeError);
  CHECK_THROWS_AS(tape.transpose(tape.leaf(Tensor::zeros({4}))), hct::ShapeError);

  const int img = tape.leaf(Tensor::zeros({4, 6, 2}));
  CHECK_THROWS_AS(tape.extract_patches(img, 3), hct::ShapeError);
  CHECK_THROWS_AS(tape.bilinear_resize(a, 3, 3), hct::ShapeError);
  CHECK_THROWS_AS(tape.bilinear_resize(img, 0, 4), hct::ShapeError);

  const int w4 = tape.leaf(Tensor::zeros({4, 4, 2, 3}));
  const int bias3 = tape.leaf(Tensor::zeros({3}));
  CHECK_THROWS_AS(tape.conv2d(img, w4, bias3), hct::ShapeError);
  const int w3 = tape.leaf(Tensor::zeros({3, 3, 5, 3}));
  CHECK_THROWS_AS(tape.conv2d(img, w3, bias3), hct::ShapeError);

  const int g = tape.leaf(Tensor::zeros({4}));
  CHECK_THROWS_AS(tape.layer_norm(a, g, g, 1e-5), hct::ShapeError);

  Tensor bad = Tensor::zeros({2});
  bad.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tape.leaf(std::move(bad)), hct::NumericError);

  const int huge = tape.leaf(Tensor::from({1}, {1e308}));
  CHECK_THROWS_AS(tape.scale(huge, 10.0), hct::NumericError);
}

TEST_CASE("tape backward contract") {
  Tape tape;
  const int a = tape.leaf(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(tape.backward(a), hct::ShapeError);
  CHECK_THROWS_AS(tape.grad(a), hct::Error);

  Tensor t = Tensor::full({2, 2}, 1.0);
  t.requires_grad = true;
  Tape tape2;
  const int x = tape2.leaf(std::move(t));
  const int loss = tape2.sum_all(x);
  tape2.backward(loss);
  CHECK(tape2.grad(x) == std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(tape2.backward(loss), hct::Error);
}

TEST_CASE("tape parameter binding dedupes and exports gradients") {
  Rng rng(917);
  ParamStore ps;
  ps.add("w", random_tensor(rng, {2, 2}));
  ps.add("unused", random_tensor(rng, {3}));

  Tape tape;
  const int w1 = tape.param(ps, "w");
  const int before = tape.size();
  const int w2 = tape.param(ps, "w");
  CHECK(w1 == w2);
  CHECK(tape.size() == before);

  // x appears twice in the graph, so its gradient is the sum of both paths.
  const int loss = tape.sum_all(tape.add(w1, w2));
  tape.backward(loss);
  tape.write_param_grads(ps);
  CHECK(ps.at("w").grad == std::vector<double>(4, 2.0));
  CHECK(ps.at("unused").grad == std::vector<double>(3, 0.0));
}

TEST_CASE("grad_check catches wrong gradients") {
  ParamStore ps;
  ps.add("x", Tensor::from({3}, {0.3, -0.7, 1.1}));

  const hct::LossFn honest = [](ParamStore& p, bool need_grad) {
    const auto& x = p.at("x").data;
    double s = 0.0;
    for (double v : x) s += v * v;
    if (need_grad) {
      auto& g = p.at("x").grad;
      g.assign(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
    }
    return s;
  };
  CHECK(hct::grad_check(honest, ps).ok);

  const hct::LossFn lying = [](ParamStore& p, bool need_grad) {
    const auto& x = p.at("x").data;
    double s = 0.0;
    for (double v : x) s += v * v;
    if (need_grad) p.at("x").grad.assign(x.size(), 3.14);
    return s;
  };
  CHECK_FALSE(hct::grad_check(lying, ps).ok);
}

TEST_CASE("grad_check rejects non-deterministic losses") {
  ParamStore ps;
  ps.add("x", Tensor::from({1}, {1.0}));
  int calls = 0;
  const hct::LossFn noisy = [&calls](ParamStore& p, bool need_grad) {
    if (need_grad) p.at("x").grad.assign(1, 1.0);
    return p.at("x").data[0] + 1e-13 * (calls++);
  };
  CHECK_THROWS_AS(hct::grad_check(noisy, ps), hct::NumericError);
}

TEST_CASE("grad_check budget probes the largest gradients") {
  ParamStore ps;
  ps.add("x", Tensor::from({5}, {0.1, 2.0, 0.2, -3.0, 0.3}));
  const hct::LossFn quad = [](ParamStore& p, bool need_grad) {
    const auto& x = p.at("x").data;
    double s = 0.0;
    for (double v : x) s += v * v;
    if (need_grad) {
      auto& g = p.at("x").grad;
      g.assign(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
    }
    return s;
  };
  hct::GradCheckOptions opt;
  opt.budget_per_tensor = 2;
  const auto report = hct::grad_check(quad, ps, opt);
  CHECK(report.ok);
  CHECK(report.checked == 2);
}
