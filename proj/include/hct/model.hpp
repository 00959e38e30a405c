#pragma once

// Whole-network assembly: two patch-token encoder streams (color and
// depth), one cross-modal exchange block on their deepest level, a fusion
// pyramid per modality and the gated four-stage decoder. Every supervision
// map comes back at input resolution: the two exchange-head logit maps,
// the four decoder stage logit maps and the final probability map.

#include <array>
#include <cstdint>
#include <string>

#include "hct/attention.hpp"
#include "hct/dcm.hpp"
#include "hct/encoder.hpp"
#include "hct/fpt.hpp"
#include "hct/params.hpp"
#include "hct/tape.hpp"

namespace hct {

struct ModelConfig {
  int input = 64;  // square image extent, multiple of 16
  int rgb_channels = 3;
  int depth_channels = 1;
  int c_s = 16;  // width of encoder levels 1 and 2
  int c_d = 96;  // width of encoder level 3
  int heads = 2;
  int enc_blocks = 1;
  int mlp_ratio = 4;
  int lca_radius = 1;
  int dcm_kernel = 3;
  double ln_eps = 1e-5;
  std::uint64_t seed = 1;
};

// Throws ConfigError for any field outside its contract.
void check_config(const ModelConfig& cfg);

// The per-stream encoder settings implied by the config.
EncoderSpec encoder_spec(const ModelConfig& cfg, bool depth);

struct ModelTrace {
  HcaTrace hca;
  std::array<DcmStepTrace, 4> dcm;
};

struct ModelOut {
  MapRef pred_rgb;  // exchange-block color head, logits at input extents
  MapRef pred_dep;  // exchange-block depth head, logits at input extents
  DecoderOut dec;   // stage logits plus the final probability map
};

// Creates every model parameter from the config seed in a fixed draw order:
// color encoder, depth encoder, exchange block, color pyramid, depth
// pyramid, decoder. Prefixes: enc_rgb, enc_dep, hca, fpt_rgb, fpt_dep, dec.
void init_model(ParamStore& ps, const ModelConfig& cfg);

// Records one forward pass. rgb must be [input, input, rgb_channels] and
// depth [input, input, depth_channels], both in [0,1].
ModelOut model_forward(Tape& t, const ParamStore& ps, const ModelConfig& cfg, const Tensor& rgb,
                       const Tensor& depth, ModelTrace* trace = nullptr);

}  // namespace hct
