#pragma once

// Numeric inner loops behind the tape operations.
//
// Two implementations share every signature: hct::kernels::serial holds the
// plain reference loops, and the hct::kernels functions are the OpenMP
// versions the tape actually calls. Both accumulate each output element in
// the same fixed order, so their results are bitwise identical for any
// thread count; tests assert that equivalence and tools/bench.cpp times it.
//
// Forward kernels overwrite their output. Backward kernels accumulate
// (+=) into their gradient outputs, which callers zero-initialize. The
// matmul variants take an explicit `acc` switch because they serve both
// roles.

namespace hct::kernels {

namespace serial {

// c[m,n] = sum_k a[m,k] * b[k,n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
// c[m,n] = sum_k a[m,k] * b[n,k]
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
// c[m,n] = sum_k a[k,m] * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);

// Same-padded stride-1 convolution on an [h,w,ci] grid with [kk,kk,ci,co]
// weights and a [co] bias. Taps accumulate in (dy, dx, ci) order per
// output element.
void conv2d_fwd(const double* in, const double* w, const double* b, double* out,
                int h, int wd, int ci, int co, int kk);
void conv2d_bwd_in(const double* dout, const double* w, double* din, int h, int wd,
                   int ci, int co, int kk);
void conv2d_bwd_w(const double* in, const double* dout, double* dw, int h, int wd,
                  int ci, int co, int kk);
void conv2d_bwd_b(const double* dout, double* db, int h, int wd, int co);

// Row-wise softmax with max subtraction on an [n,c] matrix.
void softmax_rows_fwd(const double* in, double* out, int n, int c);
void softmax_rows_bwd(const double* y, const double* dy, double* dx, int n, int c);

// Half-pixel-centre (align_corners=false) bilinear resize of an [h,w,c]
// grid; source coordinates clamp to the valid range and equal sizes pass
// values through exactly.
void bilinear_fwd(const double* in, double* out, int h, int w, int c, int nh, int nw);
void bilinear_bwd(const double* dout, double* din, int h, int w, int c, int nh, int nw);

// Per-row normalization over the last axis of an [n,c] matrix.
void layer_norm_fwd(const double* x, const double* g, const double* b, double eps,
                    double* out, int n, int c);
void layer_norm_bwd(const double* x, const double* g, double eps, const double* dout,
                    double* dx, double* dg, double* db, int n, int c);

}  // namespace serial

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);

void conv2d_fwd(const double* in, const double* w, const double* b, double* out,
                int h, int wd, int ci, int co, int kk);
void conv2d_bwd_in(const double* dout, const double* w, double* din, int h, int wd,
                   int ci, int co, int kk);
void conv2d_bwd_w(const double* in, const double* dout, double* dw, int h, int wd,
                  int ci, int co, int kk);
void conv2d_bwd_b(const double* dout, double* db, int h, int wd, int co);

void softmax_rows_fwd(const double* in, double* out, int n, int c);
void softmax_rows_bwd(const double* y, const double* dy, double* dx, int n, int c);

void bilinear_fwd(const double* in, double* out, int h, int w, int c, int nh, int nw);
void bilinear_bwd(const double* dout, double* din, int h, int w, int c, int nh, int nw);

void layer_norm_fwd(const double* x, const double* g, const double* b, double eps,
                    double* out, int n, int c);
void layer_norm_bwd(const double* x, const double* g, double eps, const double* dout,
                    double* dx, double* dg, double* db, int n, int c);

}  // namespace hct::kernels
