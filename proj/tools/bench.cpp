// Times the OpenMP kernels against their serial reference twins on
// desk-scale shapes and confirms the outputs stay bitwise identical. On a
// single-core build the parallel column mostly shows the scheduling
// overhead; with more threads it shows the speedup.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hct/common.hpp"
#include "hct/kernels.hpp"

namespace {

using hct::Rng;

std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double time_best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

struct Case {
  std::string name;
  std::string shape;
  std::function<void(std::vector<double>&)> serial;
  std::function<void(std::vector<double>&)> parallel;
  std::size_t out_size = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int reps = 5;
  app.add_option("--reps", reps, "repetitions per measurement (best is kept)");
  CLI11_PARSE(app, argc, argv);

  Rng rng(2024);

  const int mm = 192;
  const auto a = rand_vec(rng, static_cast<std::size_t>(mm) * mm, -1.0, 1.0);
  const auto b = rand_vec(rng, static_cast<std::size_t>(mm) * mm, -1.0, 1.0);

  const int ch = 96, cw = 96, ci = 16, co = 16, kk = 3;
  const auto cin = rand_vec(rng, static_cast<std::size_t>(ch) * cw * ci, -1.0, 1.0);
  const auto cwt = rand_vec(rng, static_cast<std::size_t>(kk) * kk * ci * co, -0.5, 0.5);
  const auto cbi = rand_vec(rng, co, -0.1, 0.1);
  const auto cdout = rand_vec(rng, static_cast<std::size_t>(ch) * cw * co, -1.0, 1.0);

  const int sn = 4096, sc = 192;
  const auto sx = rand_vec(rng, static_cast<std::size_t>(sn) * sc, -8.0, 8.0);
  auto sy = std::vector<double>(sx.size());
  hct::kernels::serial::softmax_rows_fwd(sx.data(), sy.data(), sn, sc);
  const auto sdy = rand_vec(rng, sx.size(), -1.0, 1.0);

  const int bh = 96, bw = 96, bc = 8, bnh = 160, bnw = 160;
  const auto bin = rand_vec(rng, static_cast<std::size_t>(bh) * bw * bc, 0.0, 1.0);
  const auto bdout = rand_vec(rng, static_cast<std::size_t>(bnh) * bnw * bc, -1.0, 1.0);

  const int ln = 4096, lc = 192;
  const auto lx = rand_vec(rng, static_cast<std::size_t>(ln) * lc, -2.0, 2.0);
  const auto lg = rand_vec(rng, lc, 0.5, 1.5);
  const auto lb = rand_vec(rng, lc, -0.5, 0.5);
  const auto ldout = rand_vec(rng, lx.size(), -1.0, 1.0);

  std::vector<Case> cases;
  cases.push_back({"matmul_nn", "192x192 * 192x192",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::matmul_nn(a.data(), b.data(), o.data(), mm, mm, mm,
                                                     false);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::matmul_nn(a.data(), b.data(), o.data(), mm, mm, mm, false);
                   },
                   static_cast<std::size_t>(mm) * mm});
  cases.push_back({"matmul_nt", "192x192 * (192x192)^T",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::matmul_nt(a.data(), b.data(), o.data(), mm, mm, mm,
                                                     false);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::matmul_nt(a.data(), b.data(), o.data(), mm, mm, mm, false);
                   },
                   static_cast<std::size_t>(mm) * mm});
  cases.push_back({"matmul_tn", "(192x192)^T * 192x192",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::matmul_tn(a.data(), b.data(), o.data(), mm, mm, mm,
                                                     false);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::matmul_tn(a.data(), b.data(), o.data(), mm, mm, mm, false);
                   },
                   static_cast<std::size_t>(mm) * mm});
  cases.push_back({"conv2d_fwd", "96x96x16 -> 16, k3",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::conv2d_fwd(cin.data(), cwt.data(), cbi.data(), o.data(),
                                                      ch, cw, ci, co, kk);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::conv2d_fwd(cin.data(), cwt.data(), cbi.data(), o.data(), ch, cw,
                                              ci, co, kk);
                   },
                   static_cast<std::size_t>(ch) * cw * co});
  cases.push_back({"conv2d_bwd_in", "96x96x16 -> 16, k3",
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::serial::conv2d_bwd_in(cdout.data(), cwt.data(), o.data(), ch,
                                                         cw, ci, co, kk);
                   },
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::conv2d_bwd_in(cdout.data(), cwt.data(), o.data(), ch, cw, ci,
                                                 co, kk);
                   },
                   static_cast<std::size_t>(ch) * cw * ci});
  cases.push_back({"conv2d_bwd_w", "96x96x16 -> 16, k3",
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::serial::conv2d_bwd_w(cin.data(), cdout.data(), o.data(), ch, cw,
                                                        ci, co, kk);
                   },
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::conv2d_bwd_w(cin.data(), cdout.data(), o.data(), ch, cw, ci, co,
                                                kk);
                   },
                   static_cast<std::size_t>(kk) * kk * ci * co});
  cases.push_back({"softmax_fwd", "4096x192",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::softmax_rows_fwd(sx.data(), o.data(), sn, sc);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::softmax_rows_fwd(sx.data(), o.data(), sn, sc);
                   },
                   sx.size()});
  cases.push_back({"softmax_bwd", "4096x192",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::softmax_rows_bwd(sy.data(), sdy.data(), o.data(), sn,
                                                            sc);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::softmax_rows_bwd(sy.data(), sdy.data(), o.data(), sn, sc);
                   },
                   sx.size()});
  cases.push_back({"bilinear_fwd", "96x96x8 -> 160x160",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::bilinear_fwd(bin.data(), o.data(), bh, bw, bc, bnh,
                                                        bnw);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::bilinear_fwd(bin.data(), o.data(), bh, bw, bc, bnh, bnw);
                   },
                   static_cast<std::size_t>(bnh) * bnw * bc});
  cases.push_back({"bilinear_bwd", "160x160x8 -> 96x96",
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::serial::bilinear_bwd(bdout.data(), o.data(), bh, bw, bc, bnh,
                                                        bnw);
                   },
                   [&](std::vector<double>& o) {
                     std::memset(o.data(), 0, o.size() * sizeof(double));
                     hct::kernels::bilinear_bwd(bdout.data(), o.data(), bh, bw, bc, bnh, bnw);
                   },
                   static_cast<std::size_t>(bh) * bw * bc});
  cases.push_back({"layer_norm_fwd", "4096x192",
                   [&](std::vector<double>& o) {
                     hct::kernels::serial::layer_norm_fwd(lx.data(), lg.data(), lb.data(), 1e-5,
                                                          o.data(), ln, lc);
                   },
                   [&](std::vector<double>& o) {
                     hct::kernels::layer_norm_fwd(lx.data(), lg.data(), lb.data(), 1e-5, o.data(),
                                                  ln, lc);
                   },
                   lx.size()});

  std::printf("%-15s %-24s %12s %12s %9s  %s\n", "kernel", "shape", "serial ms", "parallel ms",
              "speedup", "bitwise");
  int mismatches = 0;
  for (const Case& c : cases) {
    std::vector<double> out_s(c.out_size);
    std::vector<double> out_p(c.out_size);
    c.serial(out_s);
    c.parallel(out_p);
    const bool same =
        std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(double)) == 0;
    if (!same) ++mismatches;
    const double ms_s = time_best_ms(reps, [&] { c.serial(out_s); });
    const double ms_p = time_best_ms(reps, [&] { c.parallel(out_p); });
    std::printf("%-15s %-24s %12.3f %12.3f %8.2fx  %s\n", c.name.c_str(), c.shape.c_str(), ms_s,
                ms_p, ms_s / ms_p, same ? "equal" : "MISMATCH");
  }
  if (mismatches != 0) {
    std::printf("%d kernel(s) disagree between serial and parallel builds\n", mismatches);
    return 1;
  }
  return 0;
}
