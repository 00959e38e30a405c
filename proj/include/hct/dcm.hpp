#pragma once

// Gated dual-branch decoder over the two fused modality pyramids.
//
// Each stage reconciles the color and depth streams through two parallel
// branches: an agreement branch built from the elementwise product of the
// mapped inputs (plus the first stream, so shared evidence is amplified
// rather than merely intersected) and a disagreement branch built from
// their absolute difference. Both branches are convolved, gated per token
// by the previous stage's saliency probability, convolved again and summed
// into the stage's fused feature, from which a one-channel logit map is
// predicted. Four stages run coarse to fine: the deepest pyramid level is
// decoded under an all-ones gate, and each later stage folds the previous
// fusion into both modality features before decoding under the previous
// stage's prediction.

#include <array>
#include <string>

#include "hct/fpt.hpp"
#include "hct/params.hpp"
#include "hct/tape.hpp"

namespace hct {

// Forward values materialized by one decoder stage, for inspection and
// export. `gate` holds the per-token gate after resizing to the stage
// lattice; the *_gated tensors are the inputs of the post-gate convolutions.
struct DcmStepTrace {
  Tensor map_a;
  Tensor map_b;
  Tensor consistent_pre;   // map_a * map_b + map_a, before convolution
  Tensor complement_pre;   // |map_a - map_b|, before convolution
  Tensor consistent;
  Tensor complement;
  Tensor gate;
  Tensor consistent_gated;
  Tensor complement_gated;
  Tensor fused;
  Tensor pred;  // stage-lattice logits
};

struct DcmStepOut {
  TokenGridRef fused;
  MapRef pred;  // logit map on the stage lattice
};

// One decoder stage. `fa` and `fb` must share lattice and width; `p_prev`
// must be a probability map and is bilinearly resized to the stage lattice
// before gating. Parameters live under `prefix`:
//   .map_a/.map_b                      : {w, b}  width-preserving 1x1 maps
//   .consistent/.complement            : {w, b}  k x k convolutions
//   .gate_consistent/.gate_complement  : {w, b}  k x k convolutions
//   .fuse                              : {w, b}  k x k convolution
//   .head                              : {w, b}  1-channel logit projection
DcmStepOut dcm_step(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef fa,
                    TokenGridRef fb, MapRef p_prev, DcmStepTrace* trace = nullptr);

struct DecoderOut {
  std::array<MapRef, 4> preds;  // per-stage logits, resized to [out_h, out_w]
  MapRef final;                 // sigmoid of the last stage, resized
};

// Runs the four-stage decoding chain over both modality pyramids. Stages
// sit on the level-3, level-2, level-1 and again level-1 lattices; stages
// after the first add a 1x1 projection of the (upsampled) previous fusion
// onto each modality's pyramid feature. Per-stage logits are resized to
// [out_h, out_w] for supervision, and the final probability map is the
// sigmoid of the last stage's logits, resized likewise. Stage parameters
// live under `prefix` + ".d1" .. ".d4"; the fold-in projections are
// .d{2,3,4}.in_a/.in_b : {w, b}.
DecoderOut decoder_forward(Tape& t, const ParamStore& ps, const std::string& prefix,
                           const FusedPyramid& rgb, const FusedPyramid& dep, int out_h, int out_w,
                           std::array<DcmStepTrace, 4>* trace = nullptr);

// Creates all decoder parameters for pyramids of width c_s (fine levels)
// and c_d (deepest level), with k x k stage convolutions. Weights draw
// uniform +/- 1/sqrt(fan_in), biases start at zero.
void init_dcm_params(ParamStore& ps, const std::string& prefix, int c_s, int c_d, int kernel,
                     Rng& rng);

}  // namespace hct
