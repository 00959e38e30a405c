#pragma once

// Plain from-the-definition reference computations used only by tests to
// cross-check the production kernels and tape operations. Everything here is
// written directly from the mathematical statement of each operation, with
// textbook loop structure and no shared code with hct_core; the library is
// linked by test binaries only.

#include <vector>

namespace hct::oracle {

// c[m,n] = sum_k a[m,k] * b[k,n], inner sum accumulated in a local scalar.
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           int m, int k, int n);

// Same-padded stride-1 convolution, six explicit loops, zero padding.
std::vector<double> conv2d(const std::vector<double>& in, const std::vector<double>& w,
                           const std::vector<double>& b, int h, int wd, int ci, int co, int kk);

// Row softmax: subtract the row max, exponentiate, divide by the row sum.
std::vector<double> softmax_rows(const std::vector<double>& x, int n, int c);

// Mean over all elements of -(y*log(s) + (1-y)*log(1-s)) with s = 1/(1+e^-x),
// evaluated in long double straight from the definition. Accurate wherever
// the naive form is well conditioned (|x| moderate, or y matching the
// saturated side); the production code's stable rearrangement is compared
// against this on such points.
double bce_mean(const std::vector<double>& x, const std::vector<double>& y);

// Half-pixel-centre bilinear resize written from the coordinate formula
// src = (i + 0.5) * in/out - 0.5, clamped, weights (1-f) and f applied as
// two explicit products per axis.
std::vector<double> bilinear(const std::vector<double>& in, int h, int w, int c,
                             int nh, int nw);

// Per-row normalization: mean, biased variance, (x - mean)/sqrt(var + eps),
// then gamma * xhat + beta.
std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const std::vector<double>& b, double eps, int n, int c);

// Single-query attention row computed from the definition: scores to every
// key, scaled by 1/sqrt(d), optional additive mask, softmax, weighted value
// sum. q is [d], keys/values are [nk,d], mask is [nk] or empty.
std::vector<double> attention_row(const std::vector<double>& q, const std::vector<double>& keys,
                                  const std::vector<double>& values,
                                  const std::vector<double>& mask, int nk, int d);

// One bias-corrected Adam update on a single scalar, straight from the
// update equations.
struct AdamScalar {
  double m = 0.0;
  double v = 0.0;
  int t = 0;
  double step(double theta, double grad, double lr, double beta1, double beta2, double eps);
};

// lr(e) = lr_start * exp((e / (epochs - 1)) * log(lr_end / lr_start)).
double lr_at(double lr_start, double lr_end, int epochs, int epoch);

}  // namespace hct::oracle
