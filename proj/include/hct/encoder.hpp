#pragma once

// Three-level patch-token encoder, one instance per input stream.
//
// Each level tokenizes the full-resolution image independently with
// non-overlapping patches at strides 4, 8 and 16, adds a learned positional
// table, and runs a stack of pre-norm transformer blocks (self-attention,
// then a GELU MLP, both with residuals). Levels 1 and 2 carry the small
// channel width c_s and level 3 the wide width c_d.

#include <string>

#include "hct/attention.hpp"
#include "hct/params.hpp"
#include "hct/tape.hpp"

namespace hct {

struct EncoderSpec {
  int input = 64;        // square image extent; must be a multiple of 16
  int in_channels = 3;   // 3 for the color stream, 1 for depth
  int c_s = 16;          // channel width of levels 1 and 2
  int c_d = 96;          // channel width of level 3
  int blocks = 1;        // transformer blocks per level
  int heads = 2;
  int mlp_ratio = 4;
  double ln_eps = 1e-5;
};

struct EncoderOut {
  TokenGridRef l1;  // stride 4, c_s channels
  TokenGridRef l2;  // stride 8, c_s channels
  TokenGridRef l3;  // stride 16, c_d channels
};

// Creates every parameter of one encoder stream under `prefix`:
//   .l{1,2,3}.patch.{w,b} .l{1,2,3}.pos
//   .l{1,2,3}.blk{k}.{ln1.{g,b}, attn.{wq,wk,wv,wo}, ln2.{g,b},
//                     mlp.{w1,b1,w2,b2}}
// Projections draw uniform +/- 1/sqrt(fan_in), positional tables draw
// 0.02-scaled normals, LayerNorm starts at identity and biases at zero.
void init_encoder_params(ParamStore& ps, const std::string& prefix, const EncoderSpec& spec,
                         Rng& rng);

// Runs one stream. `img_node` must hold an [input, input, in_channels] grid
// already on the tape.
EncoderOut encode_stream(Tape& t, const ParamStore& ps, const std::string& prefix, int img_node,
                         const EncoderSpec& spec);

}  // namespace hct
