#include "hct/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <map>
#include <numeric>
#include <vector>

namespace hct {

GradCheckReport grad_check(const LossFn& fn, ParamStore& params, const GradCheckOptions& opt,
                           std::vector<GradCheckParamStat>* per_param) {
  if (!(opt.eps > 0.0)) throw Error("grad_check: eps must be positive");
  if (per_param != nullptr) per_param->clear();

  const double base = fn(params, true);

  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : params.items()) {
    if (t.grad.size() != t.data.size()) {
      throw Error("grad_check: parameter " + name + " received no gradient");
    }
    analytic[name] = t.grad;
  }

  const double replay = fn(params, false);
  if (std::memcmp(&base, &replay, sizeof(double)) != 0) {
    throw NumericError("grad_check: two identical forward passes disagree (" +
                       std::to_string(base) + " vs " + std::to_string(replay) + ")");
  }

  GradCheckReport report;
  for (auto& [name, t] : params.items()) {
    const auto& a = analytic[name];
    const int n = static_cast<int>(t.data.size());

    std::vector<int> picks;
    if (opt.budget_per_tensor <= 0 || n <= opt.budget_per_tensor) {
      picks.resize(static_cast<std::size_t>(n));
      std::iota(picks.begin(), picks.end(), 0);
    } else {
      picks.resize(static_cast<std::size_t>(n));
      std::iota(picks.begin(), picks.end(), 0);
      std::stable_sort(picks.begin(), picks.end(), [&](int x, int y) {
        return std::fabs(a[static_cast<std::size_t>(x)]) >
               std::fabs(a[static_cast<std::size_t>(y)]);
      });
      picks.resize(static_cast<std::size_t>(opt.budget_per_tensor));
    }

    GradCheckParamStat stat;
    stat.name = name;
    for (int idx : picks) {
      double& slot = t.data[static_cast<std::size_t>(idx)];
      const double saved = slot;
      slot = saved + opt.eps;
      const double up = fn(params, false);
      slot = saved - opt.eps;
      const double down = fn(params, false);
      slot = saved;

      const double numeric = (up - down) / (2.0 * opt.eps);
      const double av = a[static_cast<std::size_t>(idx)];
      const double rel =
          std::fabs(av - numeric) / std::max({std::fabs(av), std::fabs(numeric), 1e-8});
      ++report.checked;
      ++stat.checked;
      stat.max_rel_err = std::max(stat.max_rel_err, rel);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {name, idx, av, numeric, rel};
      }
    }
    if (per_param != nullptr) per_param->push_back(std::move(stat));
  }

  report.ok = report.max_rel_err <= opt.tol;

  for (auto& [name, t] : params.items()) {
    t.grad = analytic[name];
  }
  return report;
}

}  // namespace hct
