#include "hct/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hct/common.hpp"
#include "hct/evalkit.hpp"
#include "hct/gradcheck.hpp"
#include "hct/harness.hpp"
#include "hct/kernels.hpp"
#include "hct/model.hpp"
#include "hct/oracleref.hpp"
#include "hct/train.hpp"

namespace fs = std::filesystem;

namespace hct {

namespace {

std::string slurp_text(const std::string& path) {
  std::ifstream ifs(path);
  if (!ifs) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << ifs.rdbuf();
  return ss.str();
}

Tensor random_image(Rng& rng, int extent, int channels) {
  Tensor t = Tensor::zeros({extent, extent, channels});
  for (double& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string out = "out";
  std::string data;
  int epochs = 0;
  int batch = 0;
  int n = 0;
  int size = 0;
  double lr_start = 0.0;
  double lr_end = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  std::uint64_t data_seed = 0;
  bool no_flip = false;
};

int cmd_train(const CLI::App& sub, const TrainArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = parse_run_config(slurp_text(a.config));
  if (sub.count("--epochs") != 0u) rc.train.epochs = a.epochs;
  if (sub.count("--batch") != 0u) rc.train.batch_size = a.batch;
  if (sub.count("--n") != 0u) rc.samples = a.n;
  if (sub.count("--size") != 0u) rc.model.input = a.size;
  if (sub.count("--lr-start") != 0u) rc.train.lr_start = a.lr_start;
  if (sub.count("--lr-end") != 0u) rc.train.lr_end = a.lr_end;
  if (sub.count("--seed") != 0u) rc.train.seed = a.seed;
  if (sub.count("--model-seed") != 0u) rc.model.seed = a.model_seed;
  if (sub.count("--data-seed") != 0u) rc.data_seed = a.data_seed;
  if (a.no_flip) rc.train.flip_augment = false;
  check_config(rc.model);
  check_train_config(rc.train);
  if (rc.samples < 1) throw ConfigError("train: samples must be at least 1");

  std::vector<Sample> data;
  if (a.data.empty()) {
    data = synth_dataset(rc.data_seed, rc.samples, rc.model.input);
  } else {
    data = load_dataset(a.data);
    if (data.empty()) throw ConfigError("train: dataset '" + a.data + "' is empty");
    if (data.front().rgb.dim(0) != rc.model.input) {
      throw ConfigError("train: dataset extent " + std::to_string(data.front().rgb.dim(0)) +
                        " does not match the configured input " +
                        std::to_string(rc.model.input));
    }
  }

  ParamStore ps;
  init_model(ps, rc.model);

  fs::create_directories(a.out);
  const std::string log_path = (fs::path(a.out) / "train.log").string();
  const std::string ckpt_path = (fs::path(a.out) / "model.ckpt").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError(log_path + ": cannot open for writing");

  const TrainHistory hist = train_loop(rc.model, ps, data, rc.train, &log);
  log.close();
  save_checkpoint(ckpt_path, rc.model, ps);

  std::printf("trained %zu steps over %d epochs on %zu samples\n", hist.steps.size(),
              rc.train.epochs, data.size());
  std::printf("final epoch mean loss %.6g\n", hist.epoch_means.back().total);
  std::printf("wrote %s and %s\n", ckpt_path.c_str(), log_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string preds;
  std::string out = "out";
};

int cmd_eval(const EvalArgs& a) {
  if (a.ckpt.empty() == a.preds.empty()) {
    throw ConfigError("eval: pass exactly one of --ckpt or --preds");
  }
  const std::vector<Sample> data = load_dataset(a.data);
  if (data.empty()) throw ConfigError("eval: dataset '" + a.data + "' is empty");

  std::vector<std::string> ids;
  std::vector<Tensor> preds;
  std::vector<Tensor> gts;
  ids.reserve(data.size());
  preds.reserve(data.size());
  gts.reserve(data.size());
  for (const Sample& s : data) {
    ids.push_back(s.id);
    gts.push_back(s.gt);
  }

  if (!a.preds.empty()) {
    for (const Sample& s : data) {
      preds.push_back(read_pgm((fs::path(a.preds) / (s.id + "_pred.pgm")).string()));
    }
  } else {
    Checkpoint ck = load_checkpoint(a.ckpt);
    if (data.front().rgb.dim(0) != ck.config.input) {
      throw Error("eval: dataset extent " + std::to_string(data.front().rgb.dim(0)) +
                  " does not match the checkpoint input " + std::to_string(ck.config.input));
    }
    for (const Sample& s : data) {
      Tape t;
      const ModelOut out = model_forward(t, ck.params, ck.config, s.rgb, s.depth);
      preds.push_back(t.val(out.dec.final.id));
    }
  }

  const std::vector<MetricReport> reports = evaluate_batch(preds, gts);
  const std::string table = metrics_table(ids, reports);
  const std::string records = metrics_records(ids, reports);

  fs::create_directories(a.out);
  const std::string table_path = (fs::path(a.out) / "metrics.txt").string();
  const std::string tsv_path = (fs::path(a.out) / "metrics.tsv").string();
  std::ofstream tf(table_path, std::ios::trunc);
  if (!tf) throw IoError(table_path + ": cannot open for writing");
  tf << table;
  std::ofstream rf(tsv_path, std::ios::trunc);
  if (!rf) throw IoError(tsv_path + ": cannot open for writing");
  rf << records;

  std::fputs(table.c_str(), stdout);
  std::printf("wrote %s and %s\n", table_path.c_str(), tsv_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradArgs {
  std::uint64_t seed = 1;
  int size = 32;
  int budget = 4;
  double eps = 1e-5;
  double tol = 1e-5;
};

int cmd_gradcheck(const GradArgs& a) {
  ModelConfig cfg;
  cfg.input = a.size;
  cfg.c_s = 4;
  cfg.c_d = 8;
  cfg.heads = 2;
  cfg.enc_blocks = 1;
  cfg.mlp_ratio = 2;
  cfg.lca_radius = 1;
  cfg.dcm_kernel = 3;
  cfg.seed = a.seed;
  check_config(cfg);

  ParamStore ps;
  init_model(ps, cfg);

  Rng rng(Rng::mix(a.seed, 9001));
  const Tensor rgb = random_image(rng, cfg.input, cfg.rgb_channels);
  const Tensor dep = random_image(rng, cfg.input, cfg.depth_channels);
  std::vector<Tensor> weights;
  for (int i = 0; i < 6; ++i) {
    Tensor w = Tensor::zeros({cfg.input, cfg.input});
    for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
    weights.push_back(std::move(w));
  }

  // A weighted sum over all six supervision maps exercises every head with
  // a well-conditioned scalar, unlike the training loss whose saturation
  // regions starve finite differences.
  const LossFn fn = [&](ParamStore& p, bool need_grad) {
    Tape t;
    const ModelOut out = model_forward(t, p, cfg, rgb, dep);
    int loss = t.sum_all(t.mul(out.pred_rgb.id, t.leaf(weights[0])));
    loss = t.add(loss, t.sum_all(t.mul(out.pred_dep.id, t.leaf(weights[1]))));
    for (int i = 0; i < 4; ++i) {
      loss = t.add(loss, t.sum_all(t.mul(out.dec.preds[static_cast<std::size_t>(i)].id,
                                         t.leaf(weights[static_cast<std::size_t>(i) + 2]))));
    }
    if (need_grad) {
      t.backward(loss);
      t.write_param_grads(p);
    }
    return t.val(loss).data[0];
  };

  GradCheckOptions opt;
  opt.eps = a.eps;
  opt.tol = a.tol;
  opt.budget_per_tensor = a.budget;
  std::vector<GradCheckParamStat> per;
  const GradCheckReport report = grad_check(fn, ps, opt, &per);

  for (const GradCheckParamStat& st : per) {
    std::printf("%-44s probed %2d  max rel err %.3e\n", st.name.c_str(), st.checked,
                st.max_rel_err);
  }
  std::printf("gradcheck: %d probes over %zu tensors, max rel err %.3e (tol %g): %s\n",
              report.checked, per.size(), report.max_rel_err, a.tol,
              report.ok ? "PASS" : "FAIL");
  if (!report.ok) {
    std::printf("worst: %s[%d] analytic %.12g numeric %.12g rel %.3e\n",
                report.worst.name.c_str(), report.worst.index, report.worst.analytic,
                report.worst.numeric, report.worst.rel_err);
  }
  return report.ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// dump-attn

struct DumpArgs {
  std::string ckpt;
  std::string config;
  std::string data;
  std::string out = "attn";
  std::uint64_t data_seed = 7;
};

int cmd_dump_attn(const DumpArgs& a) {
  ModelConfig cfg;
  ParamStore ps;
  if (!a.ckpt.empty()) {
    Checkpoint ck = load_checkpoint(a.ckpt);
    cfg = ck.config;
    ps = std::move(ck.params);
  } else {
    if (!a.config.empty()) cfg = parse_run_config(slurp_text(a.config)).model;
    check_config(cfg);
    init_model(ps, cfg);
  }

  Sample sample;
  if (!a.data.empty()) {
    std::vector<Sample> data = load_dataset(a.data);
    if (data.empty()) throw ConfigError("dump-attn: dataset '" + a.data + "' is empty");
    sample = std::move(data.front());
  } else {
    sample = std::move(synth_dataset(a.data_seed, 1, cfg.input).front());
  }
  if (sample.rgb.dim(0) != cfg.input || sample.rgb.dim(1) != cfg.input) {
    throw Error("dump-attn: sample extent " + std::to_string(sample.rgb.dim(0)) +
                " does not match the model input " + std::to_string(cfg.input));
  }

  const std::vector<std::string> files = dump_attention(ps, cfg, sample, a.out);
  std::printf("wrote %zu files to %s\n", files.size(), a.out.c_str());
  for (const std::string& f : files) std::printf("  %s\n", f.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out = "data";
  std::uint64_t seed = 7;
  int n = 8;
  int size = 64;
};

int cmd_synth(const SynthArgs& a) {
  const std::vector<Sample> data = synth_dataset(a.seed, a.n, a.size);
  save_dataset(a.out, data);
  std::printf("wrote %d samples of %dx%d to %s\n", a.n, a.size, a.size, a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// oracle

std::vector<double> rand_vec(Rng& rng, int n, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::vector<double> transpose_mat(const std::vector<double>& a, int rows, int cols) {
  std::vector<double> t(a.size());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      t[static_cast<std::size_t>(j) * rows + i] = a[static_cast<std::size_t>(i) * cols + j];
    }
  }
  return t;
}

Tensor tensor_from(const std::vector<double>& v, const std::vector<int>& shape) {
  Tensor t = Tensor::zeros(shape);
  t.data = v;
  return t;
}

Tensor identity_mat(int c) {
  Tensor t = Tensor::zeros({c, c});
  for (int i = 0; i < c; ++i) t.at(i, i) = 1.0;
  return t;
}

struct OracleOutcome {
  std::string name;
  double diff = 0.0;
  double tol = 0.0;
  bool ok() const { return diff <= tol; }
};

OracleOutcome check_matmul(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const int m = 3 + trial;
    const int k = 4 + trial;
    const int n = 5;
    const std::vector<double> a = rand_vec(rng, m * k, -1.0, 1.0);
    const std::vector<double> b = rand_vec(rng, k * n, -1.0, 1.0);
    std::vector<double> c_par(static_cast<std::size_t>(m) * n);
    std::vector<double> c_ser(c_par.size());
    kernels::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n, false);
    kernels::serial::matmul_nn(a.data(), b.data(), c_ser.data(), m, k, n, false);
    if (std::memcmp(c_par.data(), c_ser.data(), c_par.size() * sizeof(double)) != 0) {
      return {"matmul", 1e300, 1e-12};
    }
    worst = std::max(worst, max_abs_diff(c_par, oracle::matmul(a, b, m, k, n)));

    const std::vector<double> bt = rand_vec(rng, n * k, -1.0, 1.0);
    std::vector<double> c_nt(c_par.size());
    kernels::matmul_nt(a.data(), bt.data(), c_nt.data(), m, k, n, false);
    worst = std::max(worst, max_abs_diff(c_nt, oracle::matmul(a, transpose_mat(bt, n, k), m, k, n)));

    const std::vector<double> at = rand_vec(rng, k * m, -1.0, 1.0);
    std::vector<double> c_tn(c_par.size());
    kernels::matmul_tn(at.data(), b.data(), c_tn.data(), m, k, n, false);
    worst = std::max(worst, max_abs_diff(c_tn, oracle::matmul(transpose_mat(at, k, m), b, m, k, n)));
  }
  return {"matmul", worst, 1e-12};
}

OracleOutcome check_conv2d(Rng& rng) {
  double worst = 0.0;
  for (int kk : {1, 3}) {
    const int h = 5, w = 6, ci = 3, co = 4;
    const std::vector<double> in = rand_vec(rng, h * w * ci, -1.0, 1.0);
    const std::vector<double> wt = rand_vec(rng, kk * kk * ci * co, -0.5, 0.5);
    const std::vector<double> bias = rand_vec(rng, co, -0.1, 0.1);
    std::vector<double> out_par(static_cast<std::size_t>(h) * w * co);
    std::vector<double> out_ser(out_par.size());
    kernels::conv2d_fwd(in.data(), wt.data(), bias.data(), out_par.data(), h, w, ci, co, kk);
    kernels::serial::conv2d_fwd(in.data(), wt.data(), bias.data(), out_ser.data(), h, w, ci, co,
                                kk);
    if (std::memcmp(out_par.data(), out_ser.data(), out_par.size() * sizeof(double)) != 0) {
      return {"conv2d", 1e300, 1e-12};
    }
    worst = std::max(worst, max_abs_diff(out_par, oracle::conv2d(in, wt, bias, h, w, ci, co, kk)));
  }
  return {"conv2d", worst, 1e-12};
}

OracleOutcome check_softmax(Rng& rng) {
  const int n = 6, c = 7;
  std::vector<double> x = rand_vec(rng, n * c, -50.0, 50.0);
  std::vector<double> y(x.size());
  kernels::softmax_rows_fwd(x.data(), y.data(), n, c);
  return {"softmax", max_abs_diff(y, oracle::softmax_rows(x, n, c)), 1e-12};
}

OracleOutcome check_bilinear(Rng& rng) {
  const int h = 4, w = 5, c = 2, nh = 7, nw = 3;
  const std::vector<double> in = rand_vec(rng, h * w * c, 0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(nh) * nw * c);
  kernels::bilinear_fwd(in.data(), out.data(), h, w, c, nh, nw);
  double worst = max_abs_diff(out, oracle::bilinear(in, h, w, c, nh, nw));
  std::vector<double> same(in.size());
  kernels::bilinear_fwd(in.data(), same.data(), h, w, c, h, w);
  worst = std::max(worst, max_abs_diff(same, in));
  return {"bilinear", worst, 1e-12};
}

OracleOutcome check_layer_norm(Rng& rng) {
  const int n = 5, c = 8;
  const double eps = 1e-5;
  const std::vector<double> x = rand_vec(rng, n * c, -2.0, 2.0);
  const std::vector<double> g = rand_vec(rng, c, 0.5, 1.5);
  const std::vector<double> b = rand_vec(rng, c, -0.5, 0.5);
  std::vector<double> y(x.size());
  kernels::layer_norm_fwd(x.data(), g.data(), b.data(), eps, y.data(), n, c);
  return {"layer_norm", max_abs_diff(y, oracle::layer_norm(x, g, b, eps, n, c)), 1e-12};
}

OracleOutcome check_attention_row(Rng& rng) {
  const int n = 6, c = 4;
  const std::vector<double> x = rand_vec(rng, n * c, -1.0, 1.0);
  Tape t;
  const int xid = t.leaf(tensor_from(x, {n, c}));
  const int eye = t.leaf(identity_mat(c));
  const int out = attn_delta(t, xid, eye, xid, eye, xid, eye, eye, 1);
  const Tensor& y = t.val(out);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> q(x.begin() + static_cast<std::ptrdiff_t>(i) * c,
                               x.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
    const std::vector<double> row = oracle::attention_row(q, x, x, {}, n, c);
    for (int j = 0; j < c; ++j) {
      worst = std::max(worst, std::fabs(y.at(i, j) - row[static_cast<std::size_t>(j)]));
    }
  }
  return {"attention_row", worst, 1e-12};
}

// From-definition windowed cross-attention: per head, each query row is
// scored against only the keys inside its Chebyshev window, softmaxed over
// that restricted set, and applied to the matching values.
std::vector<double> brute_windowed_delta(const std::vector<double>& xq,
                                         const std::vector<double>& xkv,
                                         const std::vector<double>& wq,
                                         const std::vector<double>& wk,
                                         const std::vector<double>& wv,
                                         const std::vector<double>& wo, int h, int w, int c,
                                         int heads, int radius) {
  const int n = h * w;
  const int d = c / heads;
  const std::vector<double> q = oracle::matmul(xq, wq, n, c, c);
  const std::vector<double> k = oracle::matmul(xkv, wk, n, c, c);
  const std::vector<double> v = oracle::matmul(xkv, wv, n, c, c);
  std::vector<double> concat(static_cast<std::size_t>(n) * c, 0.0);
  for (int hd = 0; hd < heads; ++hd) {
    const int off = hd * d;
    for (int qi = 0; qi < n; ++qi) {
      const int qy = qi / w;
      const int qx = qi % w;
      std::vector<double> qrow(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) qrow[static_cast<std::size_t>(j)] = q[static_cast<std::size_t>(qi) * c + off + j];
      std::vector<double> keys;
      std::vector<double> vals;
      int nk = 0;
      for (int ki = 0; ki < n; ++ki) {
        const int ky = ki / w;
        const int kx = ki % w;
        if (std::abs(ky - qy) > radius || std::abs(kx - qx) > radius) continue;
        for (int j = 0; j < d; ++j) {
          keys.push_back(k[static_cast<std::size_t>(ki) * c + off + j]);
          vals.push_back(v[static_cast<std::size_t>(ki) * c + off + j]);
        }
        ++nk;
      }
      const std::vector<double> row = oracle::attention_row(qrow, keys, vals, {}, nk, d);
      for (int j = 0; j < d; ++j) {
        concat[static_cast<std::size_t>(qi) * c + off + j] = row[static_cast<std::size_t>(j)];
      }
    }
  }
  std::vector<double> delta = oracle::matmul(concat, wo, n, c, c);
  for (int i = 0; i < n * c; ++i) delta[static_cast<std::size_t>(i)] += xq[static_cast<std::size_t>(i)];
  return delta;
}

OracleOutcome check_windowed_exchange(Rng& rng) {
  struct Case {
    int h, w, radius, heads;
  };
  const Case cases[] = {{2, 2, 0, 1}, {3, 3, 1, 2}, {4, 3, 2, 2}, {4, 4, 1, 1}};
  const int c = 4;
  double worst = 0.0;
  for (const Case& cs : cases) {
    const int n = cs.h * cs.w;
    const std::vector<double> xr = rand_vec(rng, n * c, -1.0, 1.0);
    const std::vector<double> xd = rand_vec(rng, n * c, -1.0, 1.0);
    std::vector<std::vector<double>> wr, wd;
    for (int i = 0; i < 4; ++i) wr.push_back(rand_vec(rng, c * c, -0.5, 0.5));
    for (int i = 0; i < 4; ++i) wd.push_back(rand_vec(rng, c * c, -0.5, 0.5));

    Tape t;
    const int xr_id = t.leaf(tensor_from(xr, {n, c}));
    const int xd_id = t.leaf(tensor_from(xd, {n, c}));
    const AttnProj pr{t.leaf(tensor_from(wr[0], {c, c})), t.leaf(tensor_from(wr[1], {c, c})),
                      t.leaf(tensor_from(wr[2], {c, c})), t.leaf(tensor_from(wr[3], {c, c}))};
    const AttnProj pd{t.leaf(tensor_from(wd[0], {c, c})), t.leaf(tensor_from(wd[1], {c, c})),
                      t.leaf(tensor_from(wd[2], {c, c})), t.leaf(tensor_from(wd[3], {c, c}))};
    const int mask = t.leaf(chebyshev_mask(cs.h, cs.w, cs.radius));
    const StreamPair out = lca_exchange(t, xr_id, xd_id, pr, pd, cs.heads, mask);

    const std::vector<double> brute_r =
        brute_windowed_delta(xr, xd, wr[0], wd[1], wd[2], wr[3], cs.h, cs.w, c, cs.heads,
                             cs.radius);
    const std::vector<double> brute_d =
        brute_windowed_delta(xd, xr, wd[0], wr[1], wr[2], wd[3], cs.h, cs.w, c, cs.heads,
                             cs.radius);
    worst = std::max(worst, max_abs_diff(t.val(out.rgb).data, brute_r));
    worst = std::max(worst, max_abs_diff(t.val(out.dep).data, brute_d));
  }
  return {"windowed_exchange", worst, 1e-12};
}

OracleOutcome check_global_degeneracy(Rng& rng) {
  const int h = 3, w = 4, c = 6, heads = 2;
  const int n = h * w;
  const std::vector<double> x = rand_vec(rng, n * c, -1.0, 1.0);
  std::vector<std::vector<double>> wts;
  for (int i = 0; i < 4; ++i) wts.push_back(rand_vec(rng, c * c, -0.5, 0.5));

  Tape t1;
  const int x1 = t1.leaf(tensor_from(x, {n, c}));
  const AttnProj p1{t1.leaf(tensor_from(wts[0], {c, c})), t1.leaf(tensor_from(wts[1], {c, c})),
                    t1.leaf(tensor_from(wts[2], {c, c})), t1.leaf(tensor_from(wts[3], {c, c}))};
  const StreamPair out = gsa_exchange(t1, x1, x1, p1, p1, heads);

  Tape t2;
  const int x2 = t2.leaf(tensor_from(x, {n, c}));
  const AttnProj p2{t2.leaf(tensor_from(wts[0], {c, c})), t2.leaf(tensor_from(wts[1], {c, c})),
                    t2.leaf(tensor_from(wts[2], {c, c})), t2.leaf(tensor_from(wts[3], {c, c}))};
  const int self = t2.add(x2, self_attention(t2, x2, p2, heads));

  const std::vector<double>& ref = t2.val(self).data;
  const bool same_rgb =
      std::memcmp(t1.val(out.rgb).data.data(), ref.data(), ref.size() * sizeof(double)) == 0;
  const bool same_dep =
      std::memcmp(t1.val(out.dep).data.data(), ref.data(), ref.size() * sizeof(double)) == 0;
  return {"global_degeneracy", same_rgb && same_dep ? 0.0 : 1e300, 0.0};
}

OracleOutcome check_adam(Rng& rng) {
  TrainConfig tc;
  ParamStore ps;
  Tensor w = Tensor::zeros({1});
  w.data[0] = 0.3;
  ps.add("w", w);
  AdamState st = make_adam_state(ps);
  oracle::AdamScalar ref;
  double theta = 0.3;
  double worst = 0.0;
  for (int step = 0; step < 8; ++step) {
    const double g = rng.uniform(-1.0, 1.0);
    const double lr = 1e-3;
    ps.at("w").grad = {g};
    adam_step(ps, st, lr, tc);
    theta = ref.step(theta, g, lr, tc.beta1, tc.beta2, tc.eps);
    worst = std::max(worst, std::fabs(ps.at("w").data[0] - theta));
  }
  return {"adam", worst, 1e-14};
}

OracleOutcome check_lr_schedule(Rng&) {
  double worst = 0.0;
  for (int epochs : {1, 2, 5, 50}) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.lr_start = 1e-4;
    tc.lr_end = epochs == 1 ? 1e-4 : 1e-6;
    if (epochs > 1) {
      for (int e = 0; e < epochs; ++e) {
        const double got = lr_schedule(e, tc);
        const double want = oracle::lr_at(tc.lr_start, tc.lr_end, epochs, e);
        worst = std::max(worst, std::fabs(got - want) / std::max(want, 1e-300));
      }
    }
    if (lr_schedule(0, tc) != tc.lr_start) worst = 1e300;
    if (lr_schedule(epochs - 1, tc) != tc.lr_end) worst = 1e300;
  }
  return {"lr_schedule", worst, 1e-12};
}

OracleOutcome check_bce(Rng& rng) {
  const int h = 6, w = 6;
  Tape t;
  std::array<std::vector<double>, 6> logits;
  std::array<MapRef, 6> maps;
  for (int i = 0; i < 6; ++i) {
    logits[static_cast<std::size_t>(i)] = rand_vec(rng, h * w, -4.0, 4.0);
    MapRef mr;
    mr.h = h;
    mr.w = w;
    mr.id = t.leaf(tensor_from(logits[static_cast<std::size_t>(i)], {h, w}));
    mr.kind = MapKind::kLogit;
    maps[static_cast<std::size_t>(i)] = mr;
  }
  Tensor gt = Tensor::zeros({h, w});
  for (double& v : gt.data) v = rng.uniform_int(2);
  const LossBreakdown got =
      total_loss(t, maps[0], maps[1], {maps[2], maps[3], maps[4], maps[5]}, gt);
  double want = 0.0;
  for (int i = 0; i < 6; ++i) {
    want += oracle::bce_mean(logits[static_cast<std::size_t>(i)], gt.data);
  }
  return {"bce", std::fabs(got.total - want) / std::max(std::fabs(want), 1e-300), 1e-12};
}

int cmd_oracle(int trials) {
  if (trials < 1) throw ConfigError("oracle: trials must be at least 1");
  using Check = OracleOutcome (*)(Rng&);
  const Check checks[] = {check_matmul,        check_conv2d,
                          check_softmax,       check_bilinear,
                          check_layer_norm,    check_attention_row,
                          check_windowed_exchange, check_global_degeneracy,
                          check_adam,          check_lr_schedule,
                          check_bce};
  int failures = 0;
  for (int trial = 0; trial < trials; ++trial) {
    for (const Check& check : checks) {
      Rng rng(Rng::mix(7000, static_cast<std::uint64_t>(trial)));
      const OracleOutcome res = check(rng);
      if (res.ok()) {
        std::printf("ok   %-20s trial %d  max diff %.3e (tol %g)\n", res.name.c_str(), trial,
                    res.diff, res.tol);
      } else {
        std::printf("FAIL %-20s trial %d  max diff %.3e (tol %g)\n", res.name.c_str(), trial,
                    res.diff, res.tol);
        ++failures;
      }
    }
  }
  std::printf("oracle: %d comparisons, %d failed\n",
              trials * static_cast<int>(std::size(checks)), failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"hierarchical cross-modal transformer for RGB-D salient object detection"};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train_sub = app.add_subcommand("train", "train a model on a synthetic or on-disk dataset");
  train_sub->add_option("--config", ta.config, "key=value run configuration file");
  train_sub->add_option("--out", ta.out, "output directory for model.ckpt and train.log");
  train_sub->add_option("--data", ta.data, "dataset directory (default: synthetic)");
  train_sub->add_option("--epochs", ta.epochs, "override the epoch count");
  train_sub->add_option("--batch", ta.batch, "override the batch size");
  train_sub->add_option("--n", ta.n, "override the synthetic sample count");
  train_sub->add_option("--size", ta.size, "override the input extent");
  train_sub->add_option("--lr-start", ta.lr_start, "override the initial learning rate");
  train_sub->add_option("--lr-end", ta.lr_end, "override the final learning rate");
  train_sub->add_option("--seed", ta.seed, "override the training seed");
  train_sub->add_option("--model-seed", ta.model_seed, "override the weight init seed");
  train_sub->add_option("--data-seed", ta.data_seed, "override the synthetic data seed");
  train_sub->add_flag("--no-flip", ta.no_flip, "disable horizontal flip augmentation");

  EvalArgs ea;
  CLI::App* eval_sub = app.add_subcommand("eval", "score predictions against a dataset");
  eval_sub->add_option("--ckpt", ea.ckpt, "checkpoint to run the model from");
  eval_sub->add_option("--data", ea.data, "dataset directory")->required();
  eval_sub->add_option("--preds", ea.preds, "directory of <id>_pred.pgm maps instead of a model");
  eval_sub->add_option("--out", ea.out, "output directory for metrics.txt and metrics.tsv");

  GradArgs ga;
  CLI::App* grad_sub =
      app.add_subcommand("gradcheck", "verify analytic gradients with finite differences");
  grad_sub->add_option("--seed", ga.seed, "weight and probe seed");
  grad_sub->add_option("--size", ga.size, "input extent of the toy model");
  grad_sub->add_option("--budget", ga.budget, "probes per parameter tensor");
  grad_sub->add_option("--eps", ga.eps, "finite-difference step");
  grad_sub->add_option("--tol", ga.tol, "relative error tolerance");

  DumpArgs da;
  CLI::App* dump_sub =
      app.add_subcommand("dump-attn", "write attention and saliency maps as grayscale images");
  dump_sub->add_option("--ckpt", da.ckpt, "checkpoint to load (default: fresh weights)");
  dump_sub->add_option("--config", da.config, "run configuration for fresh weights");
  dump_sub->add_option("--data", da.data, "dataset directory; its first sample is used");
  dump_sub->add_option("--out", da.out, "output directory");
  dump_sub->add_option("--data-seed", da.data_seed, "synthetic sample seed");

  SynthArgs sa;
  CLI::App* synth_sub = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth_sub->add_option("--out", sa.out, "output directory");
  synth_sub->add_option("--seed", sa.seed, "generator seed");
  synth_sub->add_option("--n", sa.n, "sample count");
  synth_sub->add_option("--size", sa.size, "image extent (multiple of 16)");

  int oracle_trials = 2;
  CLI::App* oracle_sub =
      app.add_subcommand("oracle", "compare kernels and attention against reference definitions");
  oracle_sub->add_option("--trials", oracle_trials, "independent random repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train_sub->parsed()) return cmd_train(*train_sub, ta);
    if (eval_sub->parsed()) return cmd_eval(ea);
    if (grad_sub->parsed()) return cmd_gradcheck(ga);
    if (dump_sub->parsed()) return cmd_dump_attn(da);
    if (synth_sub->parsed()) return cmd_synth(sa);
    if (oracle_sub->parsed()) return cmd_oracle(oracle_trials);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}

}  // namespace hct
