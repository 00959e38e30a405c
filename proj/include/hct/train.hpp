#pragma once

// Supervision assembly and optimization: the six-head binary cross-entropy
// objective, an exponential learning-rate schedule, a from-scratch Adam
// optimizer, and the deterministic training loop that ties them to the
// model. Everything here is single-threaded and bitwise reproducible for a
// fixed seed.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hct/model.hpp"
#include "hct/params.hpp"
#include "hct/sample.hpp"
#include "hct/tape.hpp"

namespace hct {

struct TrainConfig {
  int batch_size = 8;
  int epochs = 50;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  bool flip_augment = true;  // random horizontal flips, applied to a whole sample
};

// Throws ConfigError for any field outside its contract
// (batch_size >= 1, epochs >= 1, lr_start >= lr_end > 0, betas in [0,1),
// eps > 0).
void check_train_config(const TrainConfig& cfg);

// The six supervision terms and their sum. total is always the left-to-right
// sum loss_r + loss_d + loss_1 + loss_2 + loss_3 + loss_4 in that exact
// order, so repeated evaluations agree bitwise.
struct LossBreakdown {
  double loss_r = 0.0;
  double loss_d = 0.0;
  std::array<double, 4> loss_i{};  // decoder stages 1..4
  double total = 0.0;
};

// Tape node ids for the terms above, for callers that backpropagate.
struct LossNodes {
  int loss_r = -1;
  int loss_d = -1;
  std::array<int, 4> loss_i{-1, -1, -1, -1};
  int total = -1;
};

// Mean binary cross-entropy of each logit map against the ground truth,
// recorded on the tape. All six maps must be logit maps at exactly the
// ground-truth extents; gt must be rank-2 with values in [0, 1]. Throws
// ShapeError on any extent mismatch and Error on a probability-kind map.
LossBreakdown total_loss(Tape& t, MapRef pred_r, MapRef pred_d,
                         const std::array<MapRef, 4>& dcm_preds, const Tensor& gt,
                         LossNodes* nodes = nullptr);

// Exponential decay from lr_start to lr_end across the configured epochs:
// lr(e) = lr_start * (lr_end/lr_start)^(e/(epochs-1)). Both endpoints are
// returned exactly; a single-epoch schedule stays at lr_start. Throws Error
// when epoch is outside [0, epochs).
double lr_schedule(int epoch, const TrainConfig& cfg);

// First and second moment estimates for one parameter tensor.
struct AdamMoments {
  Tensor m;
  Tensor v;
};

struct AdamState {
  std::map<std::string, AdamMoments> moments;
  std::int64_t step = 0;
};

// Zero moments shaped like every parameter in the store.
AdamState make_adam_state(const ParamStore& ps);

// One bias-corrected Adam update over every parameter, reading gradients
// from the tensors' grad vectors (as written by Tape::write_param_grads).
// Throws NumericError naming the parameter on any non-finite gradient and
// Error when a gradient or moment shape is missing or stale.
void adam_step(ParamStore& ps, AdamState& st, double lr, const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<LossBreakdown> epoch_means;  // mean per component, one per epoch
  std::vector<double> epoch_lrs;
};

// Trains the model in place. Each epoch shuffles the sample order with a
// Fisher-Yates pass over one seed-derived stream, then consumes batches of
// at most batch_size samples; the batch loss is the mean over its elements
// of the per-element totals, grouped per component so the recorded
// breakdown keeps the LossBreakdown summation order. When flip_augment is
// set, one coin per consumed sample decides a horizontal flip of rgb,
// depth and gt together. The learning rate changes per epoch, not per
// step. When log is given, one line per step is written: step index, lr,
// the six components and the total, tab-separated at 12 significant
// digits. Any non-finite value inside a step (loss, activation or
// gradient) is rethrown as NumericError prefixed with the step index.
TrainHistory train_loop(const ModelConfig& mcfg, ParamStore& ps, const std::vector<Sample>& data,
                        const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace hct
