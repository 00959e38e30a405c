// Reference kernels: the simplest loops that state the definitions
// directly. The OpenMP kernels in kernels_omp.cpp must match these
// bit-for-bit, which pins the accumulation order per output element.

#include "hct/kernels.hpp"

#include <cmath>
#include <vector>

namespace hct::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[static_cast<std::size_t>(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        s += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[static_cast<std::size_t>(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        s += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(j) * k + p];
      }
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[static_cast<std::size_t>(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        s += a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
}

void conv2d_fwd(const double* in, const double* w, const double* b, double* out,
                int h, int wd, int ci, int co, int kk) {
  const int pad = kk / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      for (int oc = 0; oc < co; ++oc) {
        double s = b[oc];
        for (int dy = 0; dy < kk; ++dy) {
          const int iy = y + dy - pad;
          if (iy < 0 || iy >= h) continue;
          for (int dx = 0; dx < kk; ++dx) {
            const int ix = x + dx - pad;
            if (ix < 0 || ix >= wd) continue;
            for (int ic = 0; ic < ci; ++ic) {
              s += in[(static_cast<std::size_t>(iy) * wd + ix) * ci + ic] *
                   w[((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co + oc];
            }
          }
        }
        out[(static_cast<std::size_t>(y) * wd + x) * co + oc] = s;
      }
    }
  }
}

void conv2d_bwd_in(const double* dout, const double* w, double* din, int h, int wd,
                   int ci, int co, int kk) {
  const int pad = kk / 2;
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < wd; ++ix) {
      for (int ic = 0; ic < ci; ++ic) {
        double s = 0.0;
        for (int dy = 0; dy < kk; ++dy) {
          const int oy = iy - dy + pad;
          if (oy < 0 || oy >= h) continue;
          for (int dx = 0; dx < kk; ++dx) {
            const int ox = ix - dx + pad;
            if (ox < 0 || ox >= wd) continue;
            for (int oc = 0; oc < co; ++oc) {
              s += dout[(static_cast<std::size_t>(oy) * wd + ox) * co + oc] *
                   w[((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co + oc];
            }
          }
        }
        din[(static_cast<std::size_t>(iy) * wd + ix) * ci + ic] += s;
      }
    }
  }
}

void conv2d_bwd_w(const double* in, const double* dout, double* dw, int h, int wd,
                  int ci, int co, int kk) {
  const int pad = kk / 2;
  for (int dy = 0; dy < kk; ++dy) {
    for (int dx = 0; dx < kk; ++dx) {
      for (int ic = 0; ic < ci; ++ic) {
        for (int oc = 0; oc < co; ++oc) {
          double s = 0.0;
          for (int oy = 0; oy < h; ++oy) {
            const int iy = oy + dy - pad;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wd; ++ox) {
              const int ix = ox + dx - pad;
              if (ix < 0 || ix >= wd) continue;
              s += in[(static_cast<std::size_t>(iy) * wd + ix) * ci + ic] *
                   dout[(static_cast<std::size_t>(oy) * wd + ox) * co + oc];
            }
          }
          dw[((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co + oc] += s;
        }
      }
    }
  }
}

void conv2d_bwd_b(const double* dout, double* db, int h, int wd, int co) {
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
  for (int i = 0; i < n; ++i) {
    const double* yr = y + static_cast<std::size_t>(i) * c;
    const double* dr = dy + static_cast<std::size_t>(i) * c;
    double* xr = dx + static_cast<std::size_t>(i) * c;
    double dot = 0.0;
    for (int j = 0; j < c; ++j) dot += dr[j] * yr[j];
    for (int j = 0; j < c; ++j) xr[j] += yr[j] * (dr[j] - dot);
  }
}

namespace {

struct Taps {
  int lo;      // index of the lower source sample
  int hi;      // index of the upper source sample (clamped)
  double frac; // interpolation weight toward `hi`
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

void bilinear_fwd(const double* in, double* out, int h, int w, int c, int nh, int nw) {
  for (int oy = 0; oy < nh; ++oy) {
    const Taps ty = source_taps(oy, h, nh);
    for (int ox = 0; ox < nw; ++ox) {
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
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < nh; ++oy) {
      const Taps ty = source_taps(oy, h, nh);
      for (int ox = 0; ox < nw; ++ox) {
        const Taps tx = source_taps(ox, w, nw);
        const double g = dout[(static_cast<std::size_t>(oy) * nw + ox) * c + ch];
        // d lerp(lerp(a,b,fx), lerp(c,d,fx), fy) expands to the four tap weights.
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

}  // namespace hct::kernels::serial
