#include "hct/oracleref.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace hct::oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) {
        s += a[static_cast<std::size_t>(i) * k + t] * b[static_cast<std::size_t>(t) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  return c;
}

std::vector<double> conv2d(const std::vector<double>& in, const std::vector<double>& w,
                           const std::vector<double>& b, int h, int wd, int ci, int co, int kk) {
  std::vector<double> out(static_cast<std::size_t>(h) * wd * co, 0.0);
  const int r = kk / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      for (int oc = 0; oc < co; ++oc) {
        double s = b[static_cast<std::size_t>(oc)];
        for (int dy = 0; dy < kk; ++dy) {
          for (int dx = 0; dx < kk; ++dx) {
            const int sy = y + dy - r;
            const int sx = x + dx - r;
            if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
            for (int ic = 0; ic < ci; ++ic) {
              s += in[(static_cast<std::size_t>(sy) * wd + sx) * ci + ic] *
                   w[((static_cast<std::size_t>(dy) * kk + dx) * ci + ic) * co + oc];
            }
          }
        }
        out[(static_cast<std::size_t>(y) * wd + x) * co + oc] = s;
      }
    }
  }
  return out;
}

std::vector<double> softmax_rows(const std::vector<double>& x, int n, int c) {
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i) * c + j] = std::exp(row[j] - mx) / sum;
    }
  }
  return out;
}

double bce_mean(const std::vector<double>& x, const std::vector<double>& y) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double s = 1.0L / (1.0L + std::exp(-static_cast<long double>(x[i])));
    const long double t = static_cast<long double>(y[i]);
    long double term = 0.0L;
    if (t > 0.0L) term -= t * std::log(s);
    if (t < 1.0L) term -= (1.0L - t) * std::log(1.0L - s);
    sum += term;
  }
  return static_cast<double>(sum / static_cast<long double>(x.size()));
}

std::vector<double> bilinear(const std::vector<double>& in, int h, int w, int c,
                             int nh, int nw) {
  std::vector<double> out(static_cast<std::size_t>(nh) * nw * c, 0.0);
  for (int i = 0; i < nh; ++i) {
    double sy = (i + 0.5) * static_cast<double>(h) / nh - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (int j = 0; j < nw; ++j) {
      double sx = (j + 0.5) * static_cast<double>(w) / nw - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double v00 = in[(static_cast<std::size_t>(y0) * w + x0) * c + ch];
        const double v01 = in[(static_cast<std::size_t>(y0) * w + x1) * c + ch];
        const double v10 = in[(static_cast<std::size_t>(y1) * w + x0) * c + ch];
        const double v11 = in[(static_cast<std::size_t>(y1) * w + x1) * c + ch];
        const double top = v00 * (1.0 - fx) + v01 * fx;
        const double bot = v10 * (1.0 - fx) + v11 * fx;
        out[(static_cast<std::size_t>(i) * nw + j) * c + ch] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const std::vector<double>& b, double eps, int n, int c) {
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i) * c + j] =
          g[static_cast<std::size_t>(j)] * (row[j] - mean) * inv + b[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

std::vector<double> attention_row(const std::vector<double>& q, const std::vector<double>& keys,
                                  const std::vector<double>& values,
                                  const std::vector<double>& mask, int nk, int d) {
  std::vector<double> scores(static_cast<std::size_t>(nk), 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int k = 0; k < nk; ++k) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += q[static_cast<std::size_t>(j)] * keys[static_cast<std::size_t>(k) * d + j];
    s *= scale;
    if (!mask.empty()) s += mask[static_cast<std::size_t>(k)];
    scores[static_cast<std::size_t>(k)] = s;
  }
  const std::vector<double> p = softmax_rows(scores, 1, nk);
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int k = 0; k < nk; ++k) s += p[static_cast<std::size_t>(k)] * values[static_cast<std::size_t>(k) * d + j];
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

double AdamScalar::step(double theta, double grad, double lr, double beta1, double beta2,
                        double eps) {
  t += 1;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(beta1, t));
  const double vhat = v / (1.0 - std::pow(beta2, t));
  return theta - lr * mhat / (std::sqrt(vhat) + eps);
}

double lr_at(double lr_start, double lr_end, int epochs, int epoch) {
  if (epochs == 1) return lr_start;
  const double u = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return lr_start * std::exp(u * std::log(lr_end / lr_start));
}

}  // namespace hct::oracle
