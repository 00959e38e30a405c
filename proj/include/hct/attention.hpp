#pragma once

// Multi-head attention primitives and the two-stream exchange block.
//
// One core routine, attn_delta, computes W_O * concat_h(softmax(Q K^T /
// sqrt(d) [+ M]) V) with no residual. Every public attention form routes
// through it with different query/key/value bindings, so the global exchange
// collapses to plain self-attention bitwise when both streams carry the same
// tokens and weights.
//
// Token matrices are [n, c] with n = h*w lattice sites in row-major order;
// projection weights are [c, c] and are split into `heads` equal column
// slices.

#include <string>
#include <vector>

#include "hct/params.hpp"
#include "hct/tape.hpp"
#include "hct/tensor.hpp"

namespace hct {

// Node ids of one attention projection set, bound on a tape.
struct AttnProj {
  int wq = -1;
  int wk = -1;
  int wv = -1;
  int wo = -1;
};

struct LnParams {
  int g = -1;
  int b = -1;
};

// Binds prefix + ".wq" / ".wk" / ".wv" / ".wo".
AttnProj bind_attn(Tape& t, const ParamStore& ps, const std::string& prefix);
// Binds prefix + ".g" / ".b".
LnParams bind_ln(Tape& t, const ParamStore& ps, const std::string& prefix);

// Materialized per-head attention matrices ([nq, nk] each), captured when a
// caller passes a non-null pointer.
struct AttnMaps {
  std::vector<Tensor> heads;
};

// Attention output with no residual: projects xq/xk/xv through the given
// weights, runs scaled dot-product attention per head (adding the optional
// [nq, nk] mask node after the 1/sqrt(d) scaling), concatenates the heads
// and applies the output projection.
int attn_delta(Tape& t, int xq, int wq, int xk, int wk, int xv, int wv, int wo,
               int heads, int mask_id = -1, AttnMaps* maps = nullptr);

// attn_delta with all three roles played by x and one projection set.
int self_attention(Tape& t, int x, const AttnProj& p, int heads, AttnMaps* maps = nullptr);

struct StreamPair {
  int rgb = -1;
  int dep = -1;
};

// Global exchange: each stream attends over itself (own queries and keys)
// but reads the other stream's value projection, keeps its own output
// projection, and adds its own residual. With x_rgb == x_dep and p_rgb ==
// p_dep this is exactly x + self_attention(x).
StreamPair gsa_exchange(Tape& t, int x_rgb, int x_dep, const AttnProj& p_rgb,
                        const AttnProj& p_dep, int heads, AttnMaps* maps_rgb = nullptr,
                        AttnMaps* maps_dep = nullptr);

// Local exchange: each stream queries the other stream's keys and values
// under an additive window mask shared by both directions.
StreamPair lca_exchange(Tape& t, int x_rgb, int x_dep, const AttnProj& p_rgb,
                        const AttnProj& p_dep, int heads, int mask_id,
                        AttnMaps* maps_rgb = nullptr, AttnMaps* maps_dep = nullptr);

// [h*w, h*w] additive mask: 0 where the query and key lattice sites are
// within Chebyshev distance `radius`, -100 everywhere else.
Tensor chebyshev_mask(int h, int w, int radius);

struct HcaTrace {
  AttnMaps gsa_rgb, gsa_dep, lca_rgb, lca_dep;
};

struct HcaOut {
  TokenGridRef rgb, dep;
  MapRef pred_rgb, pred_dep;
};

// Two-stage exchange block on a pair of same-shape token grids: a global
// exchange followed by a window-masked local exchange, each pre-normed with
// per-stream LayerNorm parameters and wrapped in residuals on the raw
// streams. Each updated stream is then projected to a one-channel logit
// map resized to [out_h, out_w] (which must cover the grid extents).
//
// Parameters under `prefix`:
//   .ln_gsa_rgb/.ln_gsa_dep/.ln_lca_rgb/.ln_lca_dep : {g, b}
//   .gsa_rgb/.gsa_dep/.lca_rgb/.lca_dep             : {wq, wk, wv, wo}
//   .head_rgb/.head_dep                             : {w, b}
HcaOut hca_block(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef x_rgb,
                 TokenGridRef x_dep, int heads, int radius, double ln_eps, int out_h, int out_w,
                 HcaTrace* trace = nullptr);

// Creates every parameter of one exchange block for token width c:
// projections draw uniform +/- 1/sqrt(c), LayerNorm starts at identity,
// head biases start at zero.
void init_hca_params(ParamStore& ps, const std::string& prefix, int c, Rng& rng);

// Projects tokens to one channel (prefix + ".w"/".b"), reassembles the
// lattice and resizes to [out_h, out_w]. Returns a logit map.
MapRef predict_head(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef x,
                    int out_h, int out_w);

}  // namespace hct
