#pragma once

// Central-difference verification of analytic gradients.
//
// The loss callback evaluates the model at the current parameter values and,
// when asked, leaves d(loss)/d(param) in each parameter's grad vector. The
// checker replays the callback with single scalars nudged by +/- eps and
// compares the finite-difference slope against the stored analytic value
// using rel_err = |a - n| / max(|a|, |n|, 1e-8).
//
// With budget_per_tensor = 0 every scalar of every parameter is probed.
// A positive budget instead probes, per tensor, the entries with the
// largest analytic magnitude, which keeps the cost bounded on full models
// while still covering every parameter tensor.

#include <functional>
#include <string>
#include <vector>

#include "hct/params.hpp"

namespace hct {

// Evaluates the loss at the store's current values. When need_grad is true
// the callback must also fill every parameter's grad vector. Two calls with
// identical parameters must return bitwise identical losses.
using LossFn = std::function<double(ParamStore&, bool need_grad)>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-6;
  int budget_per_tensor = 0;
};

struct GradCheckEntry {
  std::string name;
  int index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool ok = false;
  int checked = 0;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
};

// One line of the optional per-parameter breakdown.
struct GradCheckParamStat {
  std::string name;
  int checked = 0;
  double max_rel_err = 0.0;
};

GradCheckReport grad_check(const LossFn& fn, ParamStore& params,
                           const GradCheckOptions& opt = {},
                           std::vector<GradCheckParamStat>* per_param = nullptr);

}  // namespace hct
