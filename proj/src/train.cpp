#include "hct/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "hct/common.hpp"

namespace hct {

namespace {

const char* kind_str(MapKind k) { return k == MapKind::kLogit ? "logits" : "probabilities"; }

void check_map(const MapRef& m, const Tensor& gt, const std::string& head) {
  if (m.kind != MapKind::kLogit) {
    throw Error("total_loss: the " + head + " map must carry logits, got " + kind_str(m.kind));
  }
  if (m.h != gt.shape[0] || m.w != gt.shape[1]) {
    throw ShapeError("total_loss: the " + head + " map is " + std::to_string(m.h) + "x" +
                     std::to_string(m.w) + " but the ground truth is " +
                     std::to_string(gt.shape[0]) + "x" + std::to_string(gt.shape[1]));
  }
}

}  // namespace

Tensor flip_horizontal(const Tensor& t) {
  if (t.ndim() != 2 && t.ndim() != 3) {
    throw ShapeError("flip_horizontal: expected rank 2 or 3, got " + shape_str(t.shape));
  }
  const int h = t.shape[0];
  const int w = t.shape[1];
  const int c = t.ndim() == 3 ? t.shape[2] : 1;
  Tensor out = Tensor::zeros(t.shape);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        out.data[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c + ch] =
            t.data[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(w - 1 - x)) * c +
                   ch];
      }
    }
  }
  return out;
}

Sample flip_horizontal(const Sample& s) {
  Sample out;
  out.rgb = flip_horizontal(s.rgb);
  out.depth = flip_horizontal(s.depth);
  out.gt = flip_horizontal(s.gt);
  out.id = s.id;
  return out;
}

void check_train_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) {
    throw ConfigError("train config: batch_size must be at least 1, got " +
                      std::to_string(cfg.batch_size));
  }
  if (cfg.epochs < 1) {
    throw ConfigError("train config: epochs must be at least 1, got " +
                      std::to_string(cfg.epochs));
  }
  if (!(cfg.lr_end > 0.0)) {
    throw ConfigError("train config: lr_end must be positive, got " + std::to_string(cfg.lr_end));
  }
  if (!(cfg.lr_start >= cfg.lr_end)) {
    throw ConfigError("train config: lr_start must be at least lr_end, got " +
                      std::to_string(cfg.lr_start) + " < " + std::to_string(cfg.lr_end));
  }
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("train config: betas must lie in [0, 1), got " + std::to_string(cfg.beta1) +
                      " and " + std::to_string(cfg.beta2));
  }
  if (!(cfg.eps > 0.0)) {
    throw ConfigError("train config: eps must be positive, got " + std::to_string(cfg.eps));
  }
}

LossBreakdown total_loss(Tape& t, MapRef pred_r, MapRef pred_d,
                         const std::array<MapRef, 4>& dcm_preds, const Tensor& gt,
                         LossNodes* nodes) {
  if (gt.ndim() != 2) {
    throw ShapeError("total_loss: ground truth must be rank 2, got " + shape_str(gt.shape));
  }
  check_map(pred_r, gt, "color head");
  check_map(pred_d, gt, "depth head");
  for (int i = 0; i < 4; ++i) {
    check_map(dcm_preds[static_cast<std::size_t>(i)], gt,
              "stage " + std::to_string(i + 1) + " head");
  }

  const int gt_node = t.leaf(gt);
  LossNodes ln;
  ln.loss_r = t.stable_bce(pred_r.id, gt_node);
  ln.loss_d = t.stable_bce(pred_d.id, gt_node);
  for (int i = 0; i < 4; ++i) {
    ln.loss_i[static_cast<std::size_t>(i)] =
        t.stable_bce(dcm_preds[static_cast<std::size_t>(i)].id, gt_node);
  }
  ln.total = t.add(ln.loss_r, ln.loss_d);
  for (int i = 0; i < 4; ++i) ln.total = t.add(ln.total, ln.loss_i[static_cast<std::size_t>(i)]);

  LossBreakdown out;
  out.loss_r = t.val(ln.loss_r).data[0];
  out.loss_d = t.val(ln.loss_d).data[0];
  for (int i = 0; i < 4; ++i) {
    out.loss_i[static_cast<std::size_t>(i)] = t.val(ln.loss_i[static_cast<std::size_t>(i)]).data[0];
  }
  out.total = t.val(ln.total).data[0];
  if (nodes != nullptr) *nodes = ln;
  return out;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw Error("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                std::to_string(cfg.epochs) + ")");
  }
  if (epoch == 0) return cfg.lr_start;
  if (epoch == cfg.epochs - 1) return cfg.lr_end;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

AdamState make_adam_state(const ParamStore& ps) {
  AdamState st;
  for (const std::string& name : ps.names()) {
    const Tensor& p = ps.at(name);
    st.moments.emplace(name, AdamMoments{Tensor::zeros(p.shape), Tensor::zeros(p.shape)});
  }
  return st;
}

void adam_step(ParamStore& ps, AdamState& st, double lr, const TrainConfig& cfg) {
  st.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (const std::string& name : ps.names()) {
    Tensor& p = ps.at(name);
    if (p.grad.size() != p.data.size()) {
      throw Error("adam_step: no gradient for parameter " + name);
    }
    auto it = st.moments.find(name);
    if (it == st.moments.end()) {
      throw Error("adam_step: no optimizer state for parameter " + name);
    }
    AdamMoments& mo = it->second;
    if (!mo.m.same_shape(p) || !mo.v.same_shape(p)) {
      throw Error("adam_step: optimizer state shape is stale for parameter " + name);
    }
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient for parameter " + name);
      }
      mo.m.data[i] = cfg.beta1 * mo.m.data[i] + (1.0 - cfg.beta1) * g;
      mo.v.data[i] = cfg.beta2 * mo.v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = mo.m.data[i] / c1;
      const double v_hat = mo.v.data[i] / c2;
      p.data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

namespace {

// Left-to-right mean of one component across records already collected.
double mean_of(const std::vector<LossBreakdown>& v, double LossBreakdown::* field) {
  double sum = 0.0;
  for (const LossBreakdown& b : v) sum += b.*field;
  return sum / static_cast<double>(v.size());
}

double mean_of(const std::vector<LossBreakdown>& v, int stage) {
  double sum = 0.0;
  for (const LossBreakdown& b : v) sum += b.loss_i[static_cast<std::size_t>(stage)];
  return sum / static_cast<double>(v.size());
}

LossBreakdown mean_breakdown(const std::vector<LossBreakdown>& v) {
  LossBreakdown out;
  out.loss_r = mean_of(v, &LossBreakdown::loss_r);
  out.loss_d = mean_of(v, &LossBreakdown::loss_d);
  for (int i = 0; i < 4; ++i) out.loss_i[static_cast<std::size_t>(i)] = mean_of(v, i);
  out.total = out.loss_r + out.loss_d + out.loss_i[0] + out.loss_i[1] + out.loss_i[2] +
              out.loss_i[3];
  return out;
}

void log_step(std::ostream& os, int step, double lr, const LossBreakdown& b) {
  char line[256];
  std::snprintf(line, sizeof(line),
                "%d\t%.12g\t%.12g\t%.12g\t%.12g\t%.12g\t%.12g\t%.12g\t%.12g\n", step, lr, b.loss_r,
                b.loss_d, b.loss_i[0], b.loss_i[1], b.loss_i[2], b.loss_i[3], b.total);
  os << line;
}

// One optimizer step over data[order[start .. start+count)]: records the
// batch graph, reduces the six components to their batch means, steps Adam,
// and returns the recorded breakdown.
LossBreakdown run_batch(const ModelConfig& mcfg, ParamStore& ps, AdamState& st,
                        const std::vector<Sample>& data, const std::vector<int>& order, int start,
                        int count, double lr, const TrainConfig& cfg, Rng& rng) {
  Tape t;
  std::array<int, 6> sums{-1, -1, -1, -1, -1, -1};
  for (int e = 0; e < count; ++e) {
    const Sample& base =
        data[static_cast<std::size_t>(order[static_cast<std::size_t>(start + e)])];
    const bool flip = cfg.flip_augment && rng.uniform() < 0.5;
    const Sample& s = flip ? flip_horizontal(base) : base;
    const ModelOut out = model_forward(t, ps, mcfg, s.rgb, s.depth);
    LossNodes ln;
    total_loss(t, out.pred_rgb, out.pred_dep, out.dec.preds, s.gt, &ln);
    const std::array<int, 6> terms{ln.loss_r,    ln.loss_d,    ln.loss_i[0],
                                   ln.loss_i[1], ln.loss_i[2], ln.loss_i[3]};
    for (int c = 0; c < 6; ++c) {
      const std::size_t ci = static_cast<std::size_t>(c);
      sums[ci] = e == 0 ? terms[ci] : t.add(sums[ci], terms[ci]);
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::array<int, 6> means{};
  for (int c = 0; c < 6; ++c) {
    means[static_cast<std::size_t>(c)] = t.scale(sums[static_cast<std::size_t>(c)], inv);
  }
  int total_node = t.add(means[0], means[1]);
  for (int c = 2; c < 6; ++c) total_node = t.add(total_node, means[static_cast<std::size_t>(c)]);

  LossBreakdown rec;
  rec.loss_r = t.val(means[0]).data[0];
  rec.loss_d = t.val(means[1]).data[0];
  for (int c = 0; c < 4; ++c) {
    rec.loss_i[static_cast<std::size_t>(c)] = t.val(means[static_cast<std::size_t>(c) + 2]).data[0];
  }
  rec.total = t.val(total_node).data[0];

  t.backward(total_node);
  t.write_param_grads(ps);
  adam_step(ps, st, lr, cfg);
  return rec;
}

}  // namespace

TrainHistory train_loop(const ModelConfig& mcfg, ParamStore& ps, const std::vector<Sample>& data,
                        const TrainConfig& cfg, std::ostream* log) {
  check_config(mcfg);
  check_train_config(cfg);
  if (data.empty()) throw Error("train_loop: dataset is empty");

  AdamState st = make_adam_state(ps);
  Rng rng(cfg.seed);
  const int n = static_cast<int>(data.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainHistory hist;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    for (int i = n - 1; i >= 1; --i) {
      const int j = rng.uniform_int(i + 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    std::vector<LossBreakdown> epoch_records;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      LossBreakdown rec;
      try {
        rec = run_batch(mcfg, ps, st, data, order, start, count, lr, cfg, rng);
      } catch (const NumericError& e) {
        // Tape ops reject non-finite values at the point of eruption; adding
        // the step index locates the failure in the run.
        throw NumericError("train_loop: step " + std::to_string(step) + ": " + e.what());
      }
      if (log != nullptr) log_step(*log, step, lr, rec);
      hist.steps.push_back(StepRecord{step, epoch, lr, rec});
      epoch_records.push_back(rec);
      ++step;
    }
    hist.epoch_means.push_back(mean_breakdown(epoch_records));
    hist.epoch_lrs.push_back(lr);
  }
  return hist;
}

}  // namespace hct
