#pragma once

// Deep-semantics-dominant pyramid fusion, run once per modality.
//
// The three encoder levels are folded top-down: the deepest grid is
// upsampled onto the middle lattice and concatenated deep-first (channel
// ratio c_d:c_s, 6:1 at full width), projected and normalized; the result
// climbs onto the finest lattice against the native level-1 tokens (2:1),
// and a final equal-width stage (1:1) fuses the propagated stream with a
// projected copy of level 1. Every projection is a per-token linear map
// followed by layer_norm and GELU.

#include <string>

#include "hct/params.hpp"
#include "hct/tape.hpp"

namespace hct {

// Widths of the two halves of a concatenation stage, deep stream first.
struct ChannelParts {
  int deep = 0;
  int native = 0;
};

struct FusedPyramid {
  TokenGridRef f3;  // deepest level, passed through unchanged (c_d channels)
  TokenGridRef f2;  // middle lattice, 2*c_s channels
  TokenGridRef f1;  // finest lattice, c_s channels
  ChannelParts parts2;   // stage A concat: (c_d, c_s)
  ChannelParts parts1;   // stage B concat: (2*c_s, c_s)
  ChannelParts parts1b;  // stage C concat: (c_s, c_s)
};

// Reshapes a token grid onto its lattice, bilinearly resizes to
// [nh, nw] and flattens back to tokens.
TokenGridRef upsample_tokens(Tape& t, TokenGridRef g, int nh, int nw);

// Creates the fusion parameters under `prefix`:
//   .a / .b / .side / .c : {conv.{w,b}, ln.{g,b}}
// with stage widths a: c_d+c_s -> 2*c_s, b: 3*c_s -> c_s, side: c_s -> c_s,
// c: 2*c_s -> c_s. Weights draw uniform +/- 1/sqrt(fan_in).
void init_fpt_params(ParamStore& ps, const std::string& prefix, int c_s, int c_d, Rng& rng);

// Fuses one modality's encoder levels. l1/l2/l3 are the stride-4/8/16
// grids; l1 and l2 must share their channel width and each lattice must be
// exactly twice the next-deeper one.
FusedPyramid fpt_fuse(Tape& t, const ParamStore& ps, const std::string& prefix, TokenGridRef l1,
                      TokenGridRef l2, TokenGridRef l3, double ln_eps);

}  // namespace hct
