#include "hct/encoder.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hct {

namespace {

struct LevelLayout {
  int stride;
  int channels;
};

std::vector<LevelLayout> level_layouts(const EncoderSpec& spec) {
  return {{4, spec.c_s}, {8, spec.c_s}, {16, spec.c_d}};
}

void check_spec(const EncoderSpec& spec) {
  if (spec.input < 16 || spec.input % 16 != 0) {
    throw ShapeError("encoder: input extent " + std::to_string(spec.input) +
                     " must be a positive multiple of 16");
  }
  if (spec.in_channels < 1) throw ShapeError("encoder: in_channels must be positive");
  if (spec.blocks < 0) throw ShapeError("encoder: blocks must be non-negative");
  if (spec.heads < 1) throw ShapeError("encoder: heads must be positive");
  if (spec.mlp_ratio < 1) throw ShapeError("encoder: mlp_ratio must be positive");
  if (spec.c_s % spec.heads != 0 || spec.c_d % spec.heads != 0) {
    throw ShapeError("encoder: widths " + std::to_string(spec.c_s) + "/" +
                     std::to_string(spec.c_d) + " not divisible by " +
                     std::to_string(spec.heads) + " heads");
  }
}

Tensor uniform_fan_in(Rng& rng, int rows, int cols) {
  Tensor t = Tensor::zeros({rows, cols});
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : t.data) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

void init_encoder_params(ParamStore& ps, const std::string& prefix, const EncoderSpec& spec,
                         Rng& rng) {
  check_spec(spec);
  const auto levels = level_layouts(spec);
  for (int li = 0; li < 3; ++li) {
    const std::string lp = prefix + ".l" + std::to_string(li + 1);
    const int p = levels[static_cast<std::size_t>(li)].stride;
    const int c = levels[static_cast<std::size_t>(li)].channels;
    const int side = spec.input / p;
    const int n = side * side;
    const int fan = p * p * spec.in_channels;

    ps.add(lp + ".patch.w", uniform_fan_in(rng, fan, c));
    ps.add(lp + ".patch.b", Tensor::zeros({c}));
    Tensor pos = Tensor::zeros({n, c});
    for (auto& v : pos.data) v = 0.02 * rng.normal();
    ps.add(lp + ".pos", pos);

    for (int k = 0; k < spec.blocks; ++k) {
      const std::string bp = lp + ".blk" + std::to_string(k);
      ps.add(bp + ".ln1.g", Tensor::full({c}, 1.0));
      ps.add(bp + ".ln1.b", Tensor::zeros({c}));
      ps.add(bp + ".attn.wq", uniform_fan_in(rng, c, c));
      ps.add(bp + ".attn.wk", uniform_fan_in(rng, c, c));
      ps.add(bp + ".attn.wv", uniform_fan_in(rng, c, c));
      ps.add(bp + ".attn.wo", uniform_fan_in(rng, c, c));
      ps.add(bp + ".ln2.g", Tensor::full({c}, 1.0));
      ps.add(bp + ".ln2.b", Tensor::zeros({c}));
      const int mc = c * spec.mlp_ratio;
      ps.add(bp + ".mlp.w1", uniform_fan_in(rng, c, mc));
      ps.add(bp + ".mlp.b1", Tensor::zeros({mc}));
      ps.add(bp + ".mlp.w2", uniform_fan_in(rng, mc, c));
      ps.add(bp + ".mlp.b2", Tensor::zeros({c}));
    }
  }
}

EncoderOut encode_stream(Tape& t, const ParamStore& ps, const std::string& prefix, int img_node,
                         const EncoderSpec& spec) {
  check_spec(spec);
  const Tensor& img = t.val(img_node);
  if (img.ndim() != 3 || img.shape[0] != spec.input || img.shape[1] != spec.input ||
      img.shape[2] != spec.in_channels) {
    throw ShapeError("encoder: image " + shape_str(img.shape) + " does not match [" +
                     std::to_string(spec.input) + "," + std::to_string(spec.input) + "," +
                     std::to_string(spec.in_channels) + "]");
  }

  const auto levels = level_layouts(spec);
  EncoderOut out;
  TokenGridRef* slots[3] = {&out.l1, &out.l2, &out.l3};
  for (int li = 0; li < 3; ++li) {
    const std::string lp = prefix + ".l" + std::to_string(li + 1);
    const int p = levels[static_cast<std::size_t>(li)].stride;
    const int c = levels[static_cast<std::size_t>(li)].channels;
    const int side = spec.input / p;

    int x = t.extract_patches(img_node, p);
    x = t.add_bias(t.matmul(x, t.param(ps, lp + ".patch.w")), t.param(ps, lp + ".patch.b"));
    x = t.add(x, t.param(ps, lp + ".pos"));

    for (int k = 0; k < spec.blocks; ++k) {
      const std::string bp = lp + ".blk" + std::to_string(k);
      const LnParams ln1 = bind_ln(t, ps, bp + ".ln1");
      const AttnProj proj = bind_attn(t, ps, bp + ".attn");
      const int nx = t.layer_norm(x, ln1.g, ln1.b, spec.ln_eps);
      x = t.add(x, attn_delta(t, nx, proj.wq, nx, proj.wk, nx, proj.wv, proj.wo, spec.heads));
      const LnParams ln2 = bind_ln(t, ps, bp + ".ln2");
      int m = t.layer_norm(x, ln2.g, ln2.b, spec.ln_eps);
      m = t.add_bias(t.matmul(m, t.param(ps, bp + ".mlp.w1")), t.param(ps, bp + ".mlp.b1"));
      m = t.gelu(m);
      m = t.add_bias(t.matmul(m, t.param(ps, bp + ".mlp.w2")), t.param(ps, bp + ".mlp.b2"));
      x = t.add(x, m);
    }

    *slots[li] = TokenGridRef{side, side, c, x};
  }
  return out;
}

}  // namespace hct
