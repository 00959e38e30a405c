#include "hct/fpt.hpp"

#include <cmath>
#include <string>

#include "hct/attention.hpp"

namespace hct {

namespace {

Tensor uniform_fan_in(Rng& rng, int rows, int cols) {
  Tensor t = Tensor::zeros({rows, cols});
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

void add_stage(ParamStore& ps, const std::string& prefix, int in_c, int out_c, Rng& rng) {
  ps.add(prefix + ".conv.w", uniform_fan_in(rng, in_c, out_c));
  ps.add(prefix + ".conv.b", Tensor::zeros({out_c}));
  ps.add(prefix + ".ln.g", Tensor::full({out_c}, 1.0));
  ps.add(prefix + ".ln.b", Tensor::zeros({out_c}));
}

// Per-token projection, then layer_norm and GELU.
int stage(Tape& t, const ParamStore& ps, const std::string& prefix, int x, double ln_eps) {
  const int y = t.add_bias(t.matmul(x, t.param(ps, prefix + ".conv.w")),
                           t.param(ps, prefix + ".conv.b"));
  const LnParams ln = bind_ln(t, ps, prefix + ".ln");
  return t.gelu(t.layer_norm(y, ln.g, ln.b, ln_eps));
}

}  // namespace

TokenGridRef upsample_tokens(Tape& t, TokenGridRef g, int nh, int nw) {
  const int grid = t.reshape(g.id, {g.h, g.w, g.c});
  const int up = t.bilinear_resize(grid, nh, nw);
  TokenGridRef out;
  out.h = nh;
  out.w = nw;
  out.c = g.c;
  out.id = t.reshape(up, {nh * nw, g.c});
  return out;
}

void init_fpt_params(ParamStore& ps, const std::string& prefix, int c_s, int c_d, Rng& rng) {
  if (c_s < 1 || c_d < 1) throw ShapeError("fpt: channel widths must be positive");
  add_stage(ps, prefix + ".a", c_d + c_s, 2 * c_s, rng);
  add_stage(ps, prefix + ".b", 2 * c_s + c_s, c_s, rng);
  add_stage(ps, prefix + ".side", c_s, c_s, rng);
  add_stage(ps, prefix + ".c", c_s + c_s, c_s, rng);
}

FusedPyramid fpt_fuse(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef l1,
                      TokenGridRef l2, TokenGridRef l3, double ln_eps) {
  if (l1.c != l2.c) {
    throw ShapeError("fpt: level1 width " + std::to_string(l1.c) + " != level2 width " +
                     std::to_string(l2.c));
  }
  if (l2.h != 2 * l3.h || l2.w != 2 * l3.w) {
    throw ShapeError("fpt: level2 lattice [" + std::to_string(l2.h) + "," + std::to_string(l2.w) +
                     "] is not twice level3 [" + std::to_string(l3.h) + "," +
                     std::to_string(l3.w) + "]");
  }
  if (l1.h != 2 * l2.h || l1.w != 2 * l2.w) {
    throw ShapeError("fpt: level1 lattice [" + std::to_string(l1.h) + "," + std::to_string(l1.w) +
                     "] is not twice level2 [" + std::to_string(l2.h) + "," +
                     std::to_string(l2.w) + "]");
  }

  const int c_s = l1.c;
  const int c_d = l3.c;

  const TokenGridRef up3 = upsample_tokens(t, l3, l2.h, l2.w);
  const int cat_a = t.concat_cols({up3.id, l2.id});
  const int f2_id = stage(t, ps, prefix + ".a", cat_a, ln_eps);

  TokenGridRef f2;
  f2.h = l2.h;
  f2.w = l2.w;
  f2.c = 2 * c_s;
  f2.id = f2_id;

  const TokenGridRef up2 = upsample_tokens(t, f2, l1.h, l1.w);
  const int cat_b = t.concat_cols({up2.id, l1.id});
  const int stream = stage(t, ps, prefix + ".b", cat_b, ln_eps);

  const int side = stage(t, ps, prefix + ".side", l1.id, ln_eps);
  const int cat_c = t.concat_cols({stream, side});
  const int f1_id = stage(t, ps, prefix + ".c", cat_c, ln_eps);

  FusedPyramid out;
  out.f3 = l3;
  out.f2 = f2;
  out.f1 = TokenGridRef{l1.h, l1.w, c_s, f1_id};
  out.parts2 = ChannelParts{c_d, c_s};
  out.parts1 = ChannelParts{2 * c_s, c_s};
  out.parts1b = ChannelParts{c_s, c_s};
  return out;
}

}  // namespace hct
