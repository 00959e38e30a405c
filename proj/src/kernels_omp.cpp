// OpenMP kernels used by the tape. Parallel loops run over independent
// output elements only, and each element accumulates in the same fixed
// order as the serial reference, so results match it bit-for-bit at any
// thread count. Falls back to plain loops when OpenMP is disabled.

#include "hct/kernels.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace hct::kernels {

namespace {

// Work sizes below this run serially; the pragma `if` clauses keep tiny
// launches from paying the fork/join overhead.
constexpr long long kMinWork = 1 << 15;

struct Taps {
  int lo;
  int hi;
  double frac;
};

inline Taps source_taps(int out_idx, int in_extent, int out_extent) {
  const double scale = static_cast<double>(in_extent) / static_cast<double>(out_extent);
  double src = (out_idx + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  const double last = static_cast<double>(in_extent - 1);
  if (src > last) src = last;
  Taps t;
  t.lo = static_cast<int>(src);
  t.frac = src - t.lo;
  t.hi = (t.lo + 1 < in_extent) ? t.lo + 1 : in_extent - 1;
  return t;
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  const long long work = static_cast<long long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0;
    }
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  const long long work = static_cast<long long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = acc ? crow[j] : 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  const long long work = static_cast<long long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0;
    }
    for (int p = 0; p < k; ++p) {
      const double api = a[static_cast<std::size_t>(p) * m + i];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void conv2d_fwd(const double* in, const double* w, const double* b, double* out,
                int h, int wd, int ci, int co, int kk) {
  const int pad = kk / 2;
  const long long work = static_cast<long long>(h) * wd * ci * co * kk * kk;
#pragma omp parallel for collapse(2) schedule(static) if (work >= kMinWork)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      double* opix = out + (static_cast<std::size_t>(y) * wd + x) * co;
      for (int oc = 0; oc < co; ++oc) opix[oc] = b[oc];
      for (int dy = 0; dy < kk; ++dy) {
        const int iy = y + dy - pad;
        if (iy < 0 || iy >= h) continue;
        for (int dx = 0; dx < kk; ++dx) {
          const int ix = x + dx - pad;
          if (ix < 0 || ix >= wd) continue;
          const double* ipix = in + (static_cast<std::size_t>(iy) * wd + ix) * ci;
          const double* wtap = w + (static_cast<std::size_t>(dy) * kk + dx) * ci * co;
          for (int ic = 0; ic < ci; ++ic) {
            const double v = ipix[ic];
            const double* wrow = wtap + static_cast<std::size_t>(ic) * co;
            for (int oc = 0; oc < co; ++oc) opix[oc] += v * wrow[oc];
          }
        }
      }
    }
  }
}

void conv2d_bwd_in(const double* dout, const double* w, double* din, int h, int wd,
                   int ci, int co, int kk) {
  const int pad = kk / 2;
  const long long work = static_cast<long long>(h) * wd * ci * co * kk * kk;
#pragma omp parallel for collapse(2) schedule(static) if (work >= kMinWork)
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < wd; ++ix) {
      double* dpix = din + (static_cast<std::size_t>(iy) * wd + ix) * ci;
      for (int ic = 0; ic < ci; ++ic) {
        double s = 0.0;
        for (int dy = 0; dy < kk; ++dy) {
          const int oy = iy - dy + pad;
          if (oy < 0 || oy >= h) continue;
          for (int dx = 0; dx < kk; ++dx) {
            const int ox = ix - dx + pad;
            if (ox < 0 || ox >= wd) continue;
            const double* gpix = dout + (static_cast<std::size_t>(oy) * wd + ox) * co;
            const double* wrow = w + ((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co;
            for (int oc = 0; oc < co; ++oc) s += gpix[oc] * wrow[oc];
          }
        }
        dpix[ic] += s;
      }
    }
  }
}

void conv2d_bwd_w(const double* in, const double* dout, double* dw, int h, int wd,
                  int ci, int co, int kk) {
  const int pad = kk / 2;
  const long long work = static_cast<long long>(h) * wd * ci * co * kk * kk;
#pragma omp parallel for collapse(3) schedule(static) if (work >= kMinWork)
  for (int dy = 0; dy < kk; ++dy) {
    for (int dx = 0; dx < kk; ++dx) {
      for (int ic = 0; ic < ci; ++ic) {
        double* wrow = dw + ((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co;
        for (int oy = 0; oy < h; ++oy) {
          const int iy = oy + dy - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wd; ++ox) {
            const int ix = ox + dx - pad;
            if (ix < 0 || ix >= wd) continue;
            const double v = in[(static_cast<std::size_t>(iy) * wd + ix) * ci + ic];
            const double* gpix = dout + (static_cast<std::size_t>(oy) * wd + ox) * co;
            for (int oc = 0; oc < co; ++oc) wrow[oc] += v * gpix[oc];
          }
        }
      }
    }
  }
}

void conv2d_bwd_b(const double* dout, double* db, int h, int wd, int co) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(h) * wd * co >= kMinWork)
  for (int oc = 0; oc < co; ++oc) {
    double s = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        s += dout[(static_cast<std::size_t>(y) * wd + x) * co + oc];
      }
    }
    db[oc] += s;
  }
}

void softmax_rows_fwd(const double* in, double* out, int n, int c) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(n) * c >= kMinWork)
  for (int i = 0; i < n; ++i) {
    const double* row = in + static_cast<std::size_t>(i) * c;
    double* orow = out + static_cast<std::size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) {
      if (row[j] > mx) mx = row[j];
    }
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= sum;
  }
}

void softmax_rows_bwd(const double* y, const double* dy, double* dx, int n, int c) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(n) * c >= kMinWork)
  for (int i = 0; i < n; ++i) {
    const double* yr = y + static_cast<std::size_t>(i) * c;
    const double* dr = dy + static_cast<std::size_t>(i) * c;
    double* xr = dx + static_cast<std::size_t>(i) * c;
    double dot = 0.0;
    for (int j = 0; j < c; ++j) dot += dr[j] * yr[j];
    for (int j = 0; j < c; ++j) xr[j] += yr[j] * (dr[j] - dot);
  }
}

void bilinear_fwd(const double* in, double* out, int h, int w, int c, int nh, int nw) {
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<long long>(nh) * nw * c >= kMinWork)
  for (int oy = 0; oy < nh; ++oy) {
    for (int ox = 0; ox < nw; ++ox) {
      const Taps ty = source_taps(oy, h, nh);
      const Taps tx = source_taps(ox, w, nw);
      const double* p00 = in + (static_cast<std::size_t>(ty.lo) * w + tx.lo) * c;
      const double* p01 = in + (static_cast<std::size_t>(ty.lo) * w + tx.hi) * c;
      const double* p10 = in + (static_cast<std::size_t>(ty.hi) * w + tx.lo) * c;
      const double* p11 = in + (static_cast<std::size_t>(ty.hi) * w + tx.hi) * c;
      double* o = out + (static_cast<std::size_t>(oy) * nw + ox) * c;
      for (int ch = 0; ch < c; ++ch) {
        o[ch] = lerp(lerp(p00[ch], p01[ch], tx.frac), lerp(p10[ch], p11[ch], tx.frac), ty.frac);
      }
    }
  }
}

void bilinear_bwd(const double* dout, double* din, int h, int w, int c, int nh, int nw) {
  // The scatter is parallel over channels: distinct channels never touch
  // the same gradient slot, and within one channel the source order stays
  // (oy, ox) ascending as in the serial reference.
#pragma omp parallel for schedule(static) if (static_cast<long long>(nh) * nw * c >= kMinWork)
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < nh; ++oy) {
      const Taps ty = source_taps(oy, h, nh);
      for (int ox = 0; ox < nw; ++ox) {
        const Taps tx = source_taps(ox, w, nw);
        const double g = dout[(static_cast<std::size_t>(oy) * nw + ox) * c + ch];
        din[(static_cast<std::size_t>(ty.lo) * w + tx.lo) * c + ch] +=
            g * (1.0 - ty.frac) * (1.0 - tx.frac);
        din[(static_cast<std::size_t>(ty.lo) * w + tx.hi) * c + ch] += g * (1.0 - ty.frac) * tx.frac;
        din[(static_cast<std::size_t>(ty.hi) * w + tx.lo) * c + ch] += g * ty.frac * (1.0 - tx.frac);
        din[(static_cast<std::size_t>(ty.hi) * w + tx.hi) * c + ch] += g * ty.frac * tx.frac;
      }
    }
  }
}

void layer_norm_fwd(const double* x, const double* g, const double* b, double eps,
                    double* out, int n, int c) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(n) * c >= kMinWork)
  for (int i = 0; i < n; ++i) {
    const double* row = x + static_cast<std::size_t>(i) * c;
    double* orow = out + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= c;
    const double istd = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      orow[j] = (row[j] - mean) * istd * g[j] + b[j];
    }
  }
}

void layer_norm_bwd(const double* x, const double* g, double eps, const double* dout,
                    double* dx, double* dg, double* db, int n, int c) {
  std::vector<double> mean(static_cast<std::size_t>(n));
  std::vector<double> istd(static_cast<std::size_t>(n));
  const long long work = static_cast<long long>(n) * c;
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int i = 0; i < n; ++i) {
    const double* row = x + static_cast<std::size_t>(i) * c;
    double m = 0.0;
    for (int j = 0; j < c; ++j) m += row[j];
    m /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = row[j] - m;
      var += d * d;
    }
    var /= c;
    mean[static_cast<std::size_t>(i)] = m;
    istd[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(var + eps);
  }
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int i = 0; i < n; ++i) {
    const double* row = x + static_cast<std::size_t>(i) * c;
    const double* dr = dout + static_cast<std::size_t>(i) * c;
    double* dxr = dx + static_cast<std::size_t>(i) * c;
    const double m = mean[static_cast<std::size_t>(i)];
    const double is = istd[static_cast<std::size_t>(i)];
    double sum1 = 0.0;
    double sum2 = 0.0;
    for (int j = 0; j < c; ++j) {
      const double xh = (row[j] - m) * is;
      const double dyh = dr[j] * g[j];
      sum1 += dyh;
      sum2 += dyh * xh;
    }
    for (int j = 0; j < c; ++j) {
      const double xh = (row[j] - m) * is;
      const double dyh = dr[j] * g[j];
      dxr[j] += is * (dyh - sum1 / c - xh * (sum2 / c));
    }
  }
#pragma omp parallel for schedule(static) if (work >= kMinWork)
  for (int j = 0; j < c; ++j) {
    double sg = 0.0;
    double sb = 0.0;
    for (int i = 0; i < n; ++i) {
      const double xh =
          (x[static_cast<std::size_t>(i) * c + j] - mean[static_cast<std::size_t>(i)]) *
          istd[static_cast<std::size_t>(i)];
      const double d = dout[static_cast<std::size_t>(i) * c + j];
      sg += d * xh;
      sb += d;
    }
    dg[j] += sg;
    db[j] += sb;
  }
}

}  // namespace hct::kernels
