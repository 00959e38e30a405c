#include "hct/model.hpp"

#include <string>

namespace hct {

void check_config(const ModelConfig& cfg) {
  if (cfg.input < 16 || cfg.input % 16 != 0) {
    throw ConfigError("model: input extent must be a positive multiple of 16, got " +
                      std::to_string(cfg.input));
  }
  if (cfg.rgb_channels < 1 || cfg.depth_channels < 1) {
    throw ConfigError("model: channel counts must be positive, got rgb=" +
                      std::to_string(cfg.rgb_channels) + " depth=" +
                      std::to_string(cfg.depth_channels));
  }
  if (cfg.c_s < 1 || cfg.c_d < 1) {
    throw ConfigError("model: widths must be positive, got c_s=" + std::to_string(cfg.c_s) +
                      " c_d=" + std::to_string(cfg.c_d));
  }
  if (cfg.heads < 1 || cfg.c_s % cfg.heads != 0 || cfg.c_d % cfg.heads != 0) {
    throw ConfigError("model: head count " + std::to_string(cfg.heads) +
                      " must divide both widths c_s=" + std::to_string(cfg.c_s) + " and c_d=" +
                      std::to_string(cfg.c_d));
  }
  if (cfg.enc_blocks < 0) {
    throw ConfigError("model: encoder block count must be nonnegative, got " +
                      std::to_string(cfg.enc_blocks));
  }
  if (cfg.mlp_ratio < 1) {
    throw ConfigError("model: mlp ratio must be positive, got " + std::to_string(cfg.mlp_ratio));
  }
  if (cfg.lca_radius < 0) {
    throw ConfigError("model: local window radius must be nonnegative, got " +
                      std::to_string(cfg.lca_radius));
  }
  if (cfg.dcm_kernel < 1 || cfg.dcm_kernel % 2 == 0) {
    throw ConfigError("model: decoder kernel must be odd and positive, got " +
                      std::to_string(cfg.dcm_kernel));
  }
  if (!(cfg.ln_eps > 0.0)) {
    throw ConfigError("model: normalization epsilon must be positive");
  }
}

EncoderSpec encoder_spec(const ModelConfig& cfg, bool depth) {
  EncoderSpec s;
  s.input = cfg.input;
  s.in_channels = depth ? cfg.depth_channels : cfg.rgb_channels;
  s.c_s = cfg.c_s;
  s.c_d = cfg.c_d;
  s.blocks = cfg.enc_blocks;
  s.heads = cfg.heads;
  s.mlp_ratio = cfg.mlp_ratio;
  s.ln_eps = cfg.ln_eps;
  return s;
}

void init_model(ParamStore& ps, const ModelConfig& cfg) {
  check_config(cfg);
  Rng rng(cfg.seed);
  init_encoder_params(ps, "enc_rgb", encoder_spec(cfg, false), rng);
  init_encoder_params(ps, "enc_dep", encoder_spec(cfg, true), rng);
  init_hca_params(ps, "hca", cfg.c_d, rng);
  init_fpt_params(ps, "fpt_rgb", cfg.c_s, cfg.c_d, rng);
  init_fpt_params(ps, "fpt_dep", cfg.c_s, cfg.c_d, rng);
  init_dcm_params(ps, "dec", cfg.c_s, cfg.c_d, cfg.dcm_kernel, rng);
}

ModelOut model_forward(Tape& t, const ParamStore& ps, const ModelConfig& cfg, const Tensor& rgb,
                       const Tensor& depth, ModelTrace* trace) {
  check_config(cfg);
  const std::vector<int> want_rgb{cfg.input, cfg.input, cfg.rgb_channels};
  const std::vector<int> want_dep{cfg.input, cfg.input, cfg.depth_channels};
  if (rgb.shape != want_rgb) {
    throw ShapeError("model_forward: color image is " + shape_str(rgb.shape) + ", expected " +
                     shape_str(want_rgb));
  }
  if (depth.shape != want_dep) {
    throw ShapeError("model_forward: depth image is " + shape_str(depth.shape) + ", expected " +
                     shape_str(want_dep));
  }

  const EncoderOut er = encode_stream(t, ps, "enc_rgb", t.leaf(rgb), encoder_spec(cfg, false));
  const EncoderOut ed = encode_stream(t, ps, "enc_dep", t.leaf(depth), encoder_spec(cfg, true));

  const HcaOut hca = hca_block(t, ps, "hca", er.l3, ed.l3, cfg.heads, cfg.lca_radius, cfg.ln_eps,
                               cfg.input, cfg.input, trace ? &trace->hca : nullptr);

  const FusedPyramid fr = fpt_fuse(t, ps, "fpt_rgb", er.l1, er.l2, hca.rgb, cfg.ln_eps);
  const FusedPyramid fd = fpt_fuse(t, ps, "fpt_dep", ed.l1, ed.l2, hca.dep, cfg.ln_eps);

  ModelOut out;
  out.dec = decoder_forward(t, ps, "dec", fr, fd, cfg.input, cfg.input,
                            trace ? &trace->dcm : nullptr);
  out.pred_rgb = hca.pred_rgb;
  out.pred_dep = hca.pred_dep;
  return out;
}

}  // namespace hct
