#include "hct/dcm.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace hct {

namespace {

std::string grid_str(const TokenGridRef& g) {
  return "[" + std::to_string(g.h) + "," + std::to_string(g.w) + "," + std::to_string(g.c) + "]";
}

Tensor uniform_linear(Rng& rng, int rows, int cols) {
  Tensor t = Tensor::zeros({rows, cols});
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

Tensor uniform_conv(Rng& rng, int k, int ci, int co) {
  Tensor t = Tensor::zeros({k, k, ci, co});
  const double a = 1.0 / std::sqrt(static_cast<double>(k * k * ci));
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

void add_linear(ParamStore& ps, const std::string& prefix, int in_c, int out_c, Rng& rng) {
  ps.add(prefix + ".w", uniform_linear(rng, in_c, out_c));
  ps.add(prefix + ".b", Tensor::zeros({out_c}));
}

void add_conv(ParamStore& ps, const std::string& prefix, int k, int c, Rng& rng) {
  ps.add(prefix + ".w", uniform_conv(rng, k, c, c));
  ps.add(prefix + ".b", Tensor::zeros({c}));
}

// Per-token linear map.
int linear(Tape& t, const ParamStore& ps, const std::string& prefix, int x) {
  return t.add_bias(t.matmul(x, t.param(ps, prefix + ".w")), t.param(ps, prefix + ".b"));
}

// k x k convolution over the stage lattice, tokens in and tokens out.
int lattice_conv(Tape& t, const ParamStore& ps, const std::string& prefix, int x, int h, int w,
                 int c) {
  const int grid = t.reshape(x, {h, w, c});
  const int out = t.conv2d(grid, t.param(ps, prefix + ".w"), t.param(ps, prefix + ".b"));
  return t.reshape(out, {h * w, c});
}

}  // namespace

DcmStepOut dcm_step(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef fa,
                    TokenGridRef fb, MapRef p_prev, DcmStepTrace* trace) {
  if (fa.h != fb.h || fa.w != fb.w || fa.c != fb.c) {
    throw ShapeError("dcm_step: modality grids disagree, " + grid_str(fa) + " vs " + grid_str(fb));
  }
  if (p_prev.kind != MapKind::kProbability) {
    throw Error("dcm_step: the gate map must carry probabilities, got logits");
  }
  const int h = fa.h;
  const int w = fa.w;
  const int c = fa.c;
  const int n = h * w;

  const int ma = linear(t, ps, prefix + ".map_a", fa.id);
  const int mb = linear(t, ps, prefix + ".map_b", fb.id);
  const int cons_pre = t.add(t.mul(ma, mb), ma);
  const int comp_pre = t.abs(t.sub(ma, mb));
  const int cons = lattice_conv(t, ps, prefix + ".consistent", cons_pre, h, w, c);
  const int comp = lattice_conv(t, ps, prefix + ".complement", comp_pre, h, w, c);

  int gate;
  if (p_prev.h == h && p_prev.w == w) {
    gate = t.reshape(p_prev.id, {n});
  } else {
    const int fine = t.bilinear_resize(t.reshape(p_prev.id, {p_prev.h, p_prev.w, 1}), h, w);
    gate = t.reshape(fine, {n});
  }
  const int cons_gated = t.row_scale(cons, gate);
  const int comp_gated = t.row_scale(comp, gate);
  const int cons_out = lattice_conv(t, ps, prefix + ".gate_consistent", cons_gated, h, w, c);
  const int comp_out = lattice_conv(t, ps, prefix + ".gate_complement", comp_gated, h, w, c);
  const int fused = lattice_conv(t, ps, prefix + ".fuse", t.add(cons_out, comp_out), h, w, c);

  const int logits = linear(t, ps, prefix + ".head", fused);
  const int pred = t.reshape(logits, {h, w});

  if (trace) {
    trace->map_a = t.val(ma);
    trace->map_b = t.val(mb);
    trace->consistent_pre = t.val(cons_pre);
    trace->complement_pre = t.val(comp_pre);
    trace->consistent = t.val(cons);
    trace->complement = t.val(comp);
    trace->gate = t.val(gate);
    trace->consistent_gated = t.val(cons_gated);
    trace->complement_gated = t.val(comp_gated);
    trace->fused = t.val(fused);
    trace->pred = t.val(pred);
  }

  DcmStepOut out;
  out.fused = TokenGridRef{h, w, c, fused};
  out.pred = MapRef{h, w, pred, MapKind::kLogit};
  return out;
}

DecoderOut decoder_forward(Tape& t, const ParamStore& ps, const std::string& prefix,
                           const FusedPyramid& rgb, const FusedPyramid& dep, int out_h, int out_w,
                           std::array<DcmStepTrace, 4>* trace) {
  auto agree = [](const TokenGridRef& a, const TokenGridRef& b, const char* level) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) {
      throw ShapeError(std::string("decoder_forward: modality pyramids disagree at the ") + level +
                       " level, " + grid_str(a) + " vs " + grid_str(b));
    }
  };
  agree(rgb.f3, dep.f3, "deepest");
  agree(rgb.f2, dep.f2, "middle");
  agree(rgb.f1, dep.f1, "finest");
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("decoder_forward: output extents must be positive, got [" +
                     std::to_string(out_h) + "," + std::to_string(out_w) + "]");
  }

  // Folds the previous stage's fusion into both modality features through
  // per-modality 1x1 projections, upsampling first when lattices differ.
  auto fold = [&](const std::string& p, TokenGridRef prev, TokenGridRef nat_a, TokenGridRef nat_b,
                  bool up) {
    TokenGridRef src = up ? upsample_tokens(t, prev, nat_a.h, nat_a.w) : prev;
    TokenGridRef a{nat_a.h, nat_a.w, nat_a.c, t.add(nat_a.id, linear(t, ps, p + ".in_a", src.id))};
    TokenGridRef b{nat_b.h, nat_b.w, nat_b.c, t.add(nat_b.id, linear(t, ps, p + ".in_b", src.id))};
    return std::make_pair(a, b);
  };
  auto gate_of = [&](const DcmStepOut& s) {
    return MapRef{s.pred.h, s.pred.w, t.sigmoid(s.pred.id), MapKind::kProbability};
  };
  auto step_trace = [&](int i) { return trace ? &(*trace)[static_cast<std::size_t>(i)] : nullptr; };

  const int ones = t.leaf(Tensor::full({rgb.f3.h, rgb.f3.w}, 1.0));
  const MapRef gate0{rgb.f3.h, rgb.f3.w, ones, MapKind::kProbability};
  const DcmStepOut s1 = dcm_step(t, ps, prefix + ".d1", rgb.f3, dep.f3, gate0, step_trace(0));

  auto [a2, b2] = fold(prefix + ".d2", s1.fused, rgb.f2, dep.f2, true);
  const DcmStepOut s2 = dcm_step(t, ps, prefix + ".d2", a2, b2, gate_of(s1), step_trace(1));

  auto [a3, b3] = fold(prefix + ".d3", s2.fused, rgb.f1, dep.f1, true);
  const DcmStepOut s3 = dcm_step(t, ps, prefix + ".d3", a3, b3, gate_of(s2), step_trace(2));

  auto [a4, b4] = fold(prefix + ".d4", s3.fused, rgb.f1, dep.f1, false);
  const DcmStepOut s4 = dcm_step(t, ps, prefix + ".d4", a4, b4, gate_of(s3), step_trace(3));

  auto resized = [&](int id, int h0, int w0, MapKind kind) {
    int out = id;
    if (h0 != out_h || w0 != out_w) {
      out = t.reshape(t.bilinear_resize(t.reshape(id, {h0, w0, 1}), out_h, out_w), {out_h, out_w});
    }
    return MapRef{out_h, out_w, out, kind};
  };

  DecoderOut out;
  const DcmStepOut* stages[4] = {&s1, &s2, &s3, &s4};
  for (int i = 0; i < 4; ++i) {
    const MapRef& p = stages[i]->pred;
    out.preds[static_cast<std::size_t>(i)] = resized(p.id, p.h, p.w, MapKind::kLogit);
  }
  out.final = resized(t.sigmoid(s4.pred.id), s4.pred.h, s4.pred.w, MapKind::kProbability);
  return out;
}

void init_dcm_params(ParamStore& ps, const std::string& prefix, int c_s, int c_d, int kernel,
                     Rng& rng) {
  if (c_s < 1 || c_d < 1) {
    throw ConfigError("init_dcm_params: channel widths must be positive, got c_s=" +
                      std::to_string(c_s) + " c_d=" + std::to_string(c_d));
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("init_dcm_params: stage kernel must be odd and positive, got " +
                      std::to_string(kernel));
  }

  const int widths[4] = {c_d, 2 * c_s, c_s, c_s};
  const int prev_widths[4] = {0, c_d, 2 * c_s, c_s};
  for (int i = 0; i < 4; ++i) {
    const std::string p = prefix + ".d" + std::to_string(i + 1);
    const int c = widths[i];
    if (i > 0) {
      add_linear(ps, p + ".in_a", prev_widths[i], c, rng);
      add_linear(ps, p + ".in_b", prev_widths[i], c, rng);
    }
    add_linear(ps, p + ".map_a", c, c, rng);
    add_linear(ps, p + ".map_b", c, c, rng);
    add_conv(ps, p + ".consistent", kernel, c, rng);
    add_conv(ps, p + ".complement", kernel, c, rng);
    add_conv(ps, p + ".gate_consistent", kernel, c, rng);
    add_conv(ps, p + ".gate_complement", kernel, c, rng);
    add_conv(ps, p + ".fuse", kernel, c, rng);
    add_linear(ps, p + ".head", c, 1, rng);
  }
}

}  // namespace hct
