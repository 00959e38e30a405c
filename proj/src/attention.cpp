#include "hct/attention.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace hct {

AttnProj bind_attn(Tape& t, const ParamStore& ps, const std::string& prefix) {
  AttnProj p;
  p.wq = t.param(ps, prefix + ".wq");
  p.wk = t.param(ps, prefix + ".wk");
  p.wv = t.param(ps, prefix + ".wv");
  p.wo = t.param(ps, prefix + ".wo");
  return p;
}

LnParams bind_ln(Tape& t, const ParamStore& ps, const std::string& prefix) {
  LnParams p;
  p.g = t.param(ps, prefix + ".g");
  p.b = t.param(ps, prefix + ".b");
  return p;
}

int attn_delta(Tape& t, int xq, int wq, int xk, int wk, int xv, int wv, int wo,
               int heads, int mask_id, AttnMaps* maps) {
  if (heads < 1) throw ShapeError("attention: heads must be positive");
  const int q = t.matmul(xq, wq);
  const int k = t.matmul(xk, wk);
  const int v = t.matmul(xv, wv);
  const int nq = t.val(q).shape[0];
  const int nk = t.val(k).shape[0];
  const int cq = t.val(q).shape[1];
  const int cv = t.val(v).shape[1];
  if (t.val(k).shape[1] != cq) {
    throw ShapeError("attention: query width " + std::to_string(cq) + " != key width " +
                     std::to_string(t.val(k).shape[1]));
  }
  if (t.val(v).shape[0] != nk) {
    throw ShapeError("attention: key rows " + std::to_string(nk) + " != value rows " +
                     std::to_string(t.val(v).shape[0]));
  }
  if (cq % heads != 0 || cv % heads != 0) {
    throw ShapeError("attention: widths " + std::to_string(cq) + "/" + std::to_string(cv) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  if (mask_id >= 0) {
    const Tensor& m = t.val(mask_id);
    if (m.ndim() != 2 || m.shape[0] != nq || m.shape[1] != nk) {
      throw ShapeError("attention: mask " + shape_str(m.shape) + " does not match scores [" +
                       std::to_string(nq) + "," + std::to_string(nk) + "]");
    }
  }

  const int dk = cq / heads;
  const int dv = cv / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<int> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int qh = t.slice_cols(q, h * dk, (h + 1) * dk);
    const int kh = t.slice_cols(k, h * dk, (h + 1) * dk);
    const int vh = t.slice_cols(v, h * dv, (h + 1) * dv);
    int scores = t.scale(t.matmul(qh, t.transpose(kh)), sc);
    if (mask_id >= 0) scores = t.add(scores, mask_id);
    const int attn = t.softmax_rows(scores);
    if (maps) maps->heads.push_back(t.val(attn));
    outs.push_back(t.matmul(attn, vh));
  }
  return t.matmul(t.concat_cols(outs), wo);
}

int self_attention(Tape& t, int x, const AttnProj& p, int heads, AttnMaps* maps) {
  return attn_delta(t, x, p.wq, x, p.wk, x, p.wv, p.wo, heads, -1, maps);
}

StreamPair gsa_exchange(Tape& t, int x_rgb, int x_dep, const AttnProj& p_rgb,
                        const AttnProj& p_dep, int heads, AttnMaps* maps_rgb,
                        AttnMaps* maps_dep) {
  StreamPair out;
  out.rgb = t.add(
      x_rgb, attn_delta(t, x_rgb, p_rgb.wq, x_rgb, p_rgb.wk, x_dep, p_dep.wv, p_rgb.wo, heads,
                        -1, maps_rgb));
  out.dep = t.add(
      x_dep, attn_delta(t, x_dep, p_dep.wq, x_dep, p_dep.wk, x_rgb, p_rgb.wv, p_dep.wo, heads,
                        -1, maps_dep));
  return out;
}

StreamPair lca_exchange(Tape& t, int x_rgb, int x_dep, const AttnProj& p_rgb,
                        const AttnProj& p_dep, int heads, int mask_id, AttnMaps* maps_rgb,
                        AttnMaps* maps_dep) {
  StreamPair out;
  out.rgb = t.add(
      x_rgb, attn_delta(t, x_rgb, p_rgb.wq, x_dep, p_dep.wk, x_dep, p_dep.wv, p_rgb.wo, heads,
                        mask_id, maps_rgb));
  out.dep = t.add(
      x_dep, attn_delta(t, x_dep, p_dep.wq, x_rgb, p_rgb.wk, x_rgb, p_rgb.wv, p_dep.wo, heads,
                        mask_id, maps_dep));
  return out;
}

Tensor chebyshev_mask(int h, int w, int radius) {
  if (h < 1 || w < 1) {
    throw ShapeError("chebyshev_mask: lattice [" + std::to_string(h) + "," + std::to_string(w) +
                     "] must be positive");
  }
  if (radius < 0) throw ShapeError("chebyshev_mask: radius must be non-negative");
  Tensor m = Tensor::zeros({h * w, h * w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int row = i * w + j;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int d = std::max(std::abs(i - y), std::abs(j - x));
          if (d > radius) m.at(row, y * w + x) = -100.0;
        }
      }
    }
  }
  return m;
}

HcaOut hca_block(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef x_rgb,
                 TokenGridRef x_dep, int heads, int radius, double ln_eps, int out_h, int out_w,
                 HcaTrace* trace) {
  if (x_rgb.h != x_dep.h || x_rgb.w != x_dep.w || x_rgb.c != x_dep.c) {
    throw ShapeError("hca_block: stream grids differ: [" + std::to_string(x_rgb.h) + "," +
                     std::to_string(x_rgb.w) + "," + std::to_string(x_rgb.c) + "] vs [" +
                     std::to_string(x_dep.h) + "," + std::to_string(x_dep.w) + "," +
                     std::to_string(x_dep.c) + "]");
  }
  if (out_h < x_rgb.h || out_w < x_rgb.w) {
    throw ShapeError("hca_block: prediction extents [" + std::to_string(out_h) + "," +
                     std::to_string(out_w) + "] must cover the grid [" + std::to_string(x_rgb.h) +
                     "," + std::to_string(x_rgb.w) + "]");
  }
  const AttnProj g_rgb = bind_attn(t, ps, prefix + ".gsa_rgb");
  const AttnProj g_dep = bind_attn(t, ps, prefix + ".gsa_dep");
  const AttnProj l_rgb = bind_attn(t, ps, prefix + ".lca_rgb");
  const AttnProj l_dep = bind_attn(t, ps, prefix + ".lca_dep");
  const LnParams n1_rgb = bind_ln(t, ps, prefix + ".ln_gsa_rgb");
  const LnParams n1_dep = bind_ln(t, ps, prefix + ".ln_gsa_dep");
  const LnParams n2_rgb = bind_ln(t, ps, prefix + ".ln_lca_rgb");
  const LnParams n2_dep = bind_ln(t, ps, prefix + ".ln_lca_dep");

  const int nr = t.layer_norm(x_rgb.id, n1_rgb.g, n1_rgb.b, ln_eps);
  const int nd = t.layer_norm(x_dep.id, n1_dep.g, n1_dep.b, ln_eps);
  const int x1_rgb = t.add(
      x_rgb.id, attn_delta(t, nr, g_rgb.wq, nr, g_rgb.wk, nd, g_dep.wv, g_rgb.wo, heads, -1,
                           trace ? &trace->gsa_rgb : nullptr));
  const int x1_dep = t.add(
      x_dep.id, attn_delta(t, nd, g_dep.wq, nd, g_dep.wk, nr, g_rgb.wv, g_dep.wo, heads, -1,
                           trace ? &trace->gsa_dep : nullptr));

  const int m_rgb = t.layer_norm(x1_rgb, n2_rgb.g, n2_rgb.b, ln_eps);
  const int m_dep = t.layer_norm(x1_dep, n2_dep.g, n2_dep.b, ln_eps);
  const int mask = t.leaf(chebyshev_mask(x_rgb.h, x_rgb.w, radius));
  const int y_rgb = t.add(
      x1_rgb, attn_delta(t, m_rgb, l_rgb.wq, m_dep, l_dep.wk, m_dep, l_dep.wv, l_rgb.wo, heads,
                         mask, trace ? &trace->lca_rgb : nullptr));
  const int y_dep = t.add(
      x1_dep, attn_delta(t, m_dep, l_dep.wq, m_rgb, l_rgb.wk, m_rgb, l_rgb.wv, l_dep.wo, heads,
                         mask, trace ? &trace->lca_dep : nullptr));

  HcaOut out;
  out.rgb = TokenGridRef{x_rgb.h, x_rgb.w, x_rgb.c, y_rgb};
  out.dep = TokenGridRef{x_dep.h, x_dep.w, x_dep.c, y_dep};
  out.pred_rgb = predict_head(t, ps, prefix + ".head_rgb", out.rgb, out_h, out_w);
  out.pred_dep = predict_head(t, ps, prefix + ".head_dep", out.dep, out_h, out_w);
  return out;
}

void init_hca_params(ParamStore& ps, const std::string& prefix, int c, Rng& rng) {
  auto lin = [&](int rows, int cols) {
    Tensor t = Tensor::zeros({rows, cols});
    const double a = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& v : t.data) v = rng.uniform(-a, a);
    return t;
  };
  for (const char* p : {".gsa_rgb", ".gsa_dep", ".lca_rgb", ".lca_dep"}) {
    for (const char* m : {".wq", ".wk", ".wv", ".wo"}) {
      ps.add(prefix + p + m, lin(c, c));
    }
  }
  for (const char* p : {".ln_gsa_rgb", ".ln_gsa_dep", ".ln_lca_rgb", ".ln_lca_dep"}) {
    ps.add(prefix + p + ".g", Tensor::full({c}, 1.0));
    ps.add(prefix + p + ".b", Tensor::zeros({c}));
  }
  for (const char* p : {".head_rgb", ".head_dep"}) {
    ps.add(prefix + p + ".w", lin(c, 1));
    ps.add(prefix + p + ".b", Tensor::zeros({1}));
  }
}

MapRef predict_head(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef x,
                    int out_h, int out_w) {
  const int w = t.param(ps, prefix + ".w");
  const int b = t.param(ps, prefix + ".b");
  const int logits = t.add_bias(t.matmul(x.id, w), b);
  const int grid = t.reshape(logits, {x.h, x.w, 1});
  const int up = t.bilinear_resize(grid, out_h, out_w);
  MapRef map;
  map.h = out_h;
  map.w = out_w;
  map.id = t.reshape(up, {out_h, out_w});
  map.kind = MapKind::kLogit;
  return map;
}

}  // namespace hct
