#include "hct/tape.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "hct/kernels.hpp"

namespace hct {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double sigmoid_stable(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

inline double gelu_slope(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + " produced a non-finite value");
    }
  }
}

}  // namespace

int Tape::push(Node node, Tensor value, const char* what) {
  check_finite(value, what);
  for (int in : node.ins) {
    if (nodes_[static_cast<std::size_t>(in)].needs_grad) {
      node.needs_grad = true;
      break;
    }
  }
  nodes_.push_back(std::move(node));
  vals_.push_back(std::move(value));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_id(int id, const char* what) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw Error(std::string(what) + ": node id " + std::to_string(id) + " is not on this tape");
  }
}

int Tape::leaf(Tensor t) {
  check_finite(t, "leaf");
  Node n;
  n.op = Op::kLeaf;
  n.needs_grad = t.requires_grad;
  nodes_.push_back(std::move(n));
  vals_.push_back(std::move(t));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::param(const ParamStore& store, const std::string& name) {
  for (const auto& [bound, id] : param_nodes_) {
    if (bound == name) return id;
  }
  Tensor copy = store.at(name);
  copy.requires_grad = true;
  copy.grad.clear();
  const int id = leaf(std::move(copy));
  param_nodes_.emplace_back(name, id);
  return id;
}

int Tape::add(int a, int b) {
  check_id(a, "add");
  check_id(b, "add");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (!ta.same_shape(tb)) {
    throw ShapeError("add: shapes differ: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  Node n;
  n.op = Op::kAdd;
  n.ins = {a, b};
  return push(std::move(n), std::move(out), "add");
}

int Tape::sub(int a, int b) {
  check_id(a, "sub");
  check_id(b, "sub");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (!ta.same_shape(tb)) {
    throw ShapeError("sub: shapes differ: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  Node n;
  n.op = Op::kSub;
  n.ins = {a, b};
  return push(std::move(n), std::move(out), "sub");
}

int Tape::mul(int a, int b) {
  check_id(a, "mul");
  check_id(b, "mul");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (!ta.same_shape(tb)) {
    throw ShapeError("mul: shapes differ: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  Node n;
  n.op = Op::kMul;
  n.ins = {a, b};
  return push(std::move(n), std::move(out), "mul");
}

int Tape::abs(int a) {
  check_id(a, "abs");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::fabs(ta.data[i]);
  Node n;
  n.op = Op::kAbs;
  n.ins = {a};
  return push(std::move(n), std::move(out), "abs");
}

int Tape::sigmoid(int a) {
  check_id(a, "sigmoid");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = sigmoid_stable(ta.data[i]);
  Node n;
  n.op = Op::kSigmoid;
  n.ins = {a};
  return push(std::move(n), std::move(out), "sigmoid");
}

int Tape::gelu(int a) {
  check_id(a, "gelu");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = gelu_value(ta.data[i]);
  Node n;
  n.op = Op::kGelu;
  n.ins = {a};
  return push(std::move(n), std::move(out), "gelu");
}

int Tape::scale(int a, double s) {
  check_id(a, "scale");
  if (!std::isfinite(s)) throw NumericError("scale: factor is not finite");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  Tensor out = Tensor::zeros(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * s;
  Node n;
  n.op = Op::kScale;
  n.ins = {a};
  n.dattr = s;
  return push(std::move(n), std::move(out), "scale");
}

int Tape::elementwise(Ew kind, int a, int b, double s) {
  switch (kind) {
    case Ew::kAdd:
      return add(a, b);
    case Ew::kSub:
      return sub(a, b);
    case Ew::kMul:
      return mul(a, b);
    case Ew::kAbs:
      return abs(a);
    case Ew::kSigmoid:
      return sigmoid(a);
    case Ew::kScale:
      return scale(a, s);
  }
  throw Error("elementwise: unknown kind");
}

int Tape::matmul(int a, int b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0]) {
    throw ShapeError("matmul: incompatible shapes: " + shape_str(ta.shape) + " x " +
                     shape_str(tb.shape));
  }
  const int m = ta.shape[0];
  const int k = ta.shape[1];
  const int n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n, false);
  Node node;
  node.op = Op::kMatMul;
  node.ins = {a, b};
  return push(std::move(node), std::move(out), "matmul");
}

int Tape::softmax_rows(int a) {
  check_id(a, "softmax_rows");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  if (ta.ndim() != 2) {
    throw ShapeError("softmax_rows: expected a 2-d tensor, got " + shape_str(ta.shape));
  }
  Tensor out = Tensor::zeros(ta.shape);
  kernels::softmax_rows_fwd(ta.data.data(), out.data.data(), ta.shape[0], ta.shape[1]);
  Node node;
  node.op = Op::kSoftmaxRows;
  node.ins = {a};
  return push(std::move(node), std::move(out), "softmax_rows");
}

int Tape::stable_bce(int logits, int targets) {
  check_id(logits, "stable_bce");
  check_id(targets, "stable_bce");
  const Tensor& tx = vals_[static_cast<std::size_t>(logits)];
  const Tensor& ty = vals_[static_cast<std::size_t>(targets)];
  if (!tx.same_shape(ty)) {
    throw ShapeError("stable_bce: shapes differ: " + shape_str(tx.shape) + " vs " +
                     shape_str(ty.shape));
  }
  for (double y : ty.data) {
    if (y < 0.0 || y > 1.0) {
      throw Error("stable_bce: target " + std::to_string(y) + " outside [0,1]");
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tx.data.size(); ++i) {
    const double x = tx.data[i];
    const double y = ty.data[i];
    const double term = (x > 0.0 ? x : 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    sum += term;
  }
  Tensor out = Tensor::from({1}, {sum / static_cast<double>(tx.data.size())});
  Node node;
  node.op = Op::kStableBce;
  node.ins = {logits, targets};
  return push(std::move(node), std::move(out), "stable_bce");
}

int Tape::conv2d(int in, int w, int b) {
  check_id(in, "conv2d");
  check_id(w, "conv2d");
  check_id(b, "conv2d");
  const Tensor& ti = vals_[static_cast<std::size_t>(in)];
  const Tensor& tw = vals_[static_cast<std::size_t>(w)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (ti.ndim() != 3 || tw.ndim() != 4) {
    throw ShapeError("conv2d: expected [h,w,ci] input and [k,k,ci,co] weights, got " +
                     shape_str(ti.shape) + " and " + shape_str(tw.shape));
  }
  const int kk = tw.shape[0];
  if (tw.shape[1] != kk) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_str(tw.shape));
  }
  if (kk % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(kk));
  }
  if (tw.shape[2] != ti.shape[2]) {
    throw ShapeError("conv2d: input channels differ: " + shape_str(ti.shape) + " vs " +
                     shape_str(tw.shape));
  }
  const int co = tw.shape[3];
  if (tb.ndim() != 1 || tb.shape[0] != co) {
    throw ShapeError("conv2d: bias shape " + shape_str(tb.shape) + " does not match " +
                     std::to_string(co) + " output channels");
  }
  Tensor out = Tensor::zeros({ti.shape[0], ti.shape[1], co});
  kernels::conv2d_fwd(ti.data.data(), tw.data.data(), tb.data.data(), out.data.data(),
                      ti.shape[0], ti.shape[1], ti.shape[2], co, kk);
  Node node;
  node.op = Op::kConv2d;
  node.ins = {in, w, b};
  return push(std::move(node), std::move(out), "conv2d");
}

int Tape::bilinear_resize(int in, int nh, int nw) {
  check_id(in, "bilinear_resize");
  const Tensor& ti = vals_[static_cast<std::size_t>(in)];
  if (ti.ndim() != 3) {
    throw ShapeError("bilinear_resize: expected an [h,w,c] grid, got " + shape_str(ti.shape));
  }
  if (nh < 1 || nw < 1) {
    throw ShapeError("bilinear_resize: target extents must be positive, got [" +
                     std::to_string(nh) + "," + std::to_string(nw) + "]");
  }
  Tensor out = Tensor::zeros({nh, nw, ti.shape[2]});
  kernels::bilinear_fwd(ti.data.data(), out.data.data(), ti.shape[0], ti.shape[1], ti.shape[2],
                        nh, nw);
  Node node;
  node.op = Op::kBilinear;
  node.ins = {in};
  node.iattr = {nh, nw};
  return push(std::move(node), std::move(out), "bilinear_resize");
}

int Tape::layer_norm(int x, int gamma, int beta, double eps) {
  check_id(x, "layer_norm");
  check_id(gamma, "layer_norm");
  check_id(beta, "layer_norm");
  const Tensor& tx = vals_[static_cast<std::size_t>(x)];
  const Tensor& tg = vals_[static_cast<std::size_t>(gamma)];
  const Tensor& tb = vals_[static_cast<std::size_t>(beta)];
  if (tx.ndim() != 2) {
    throw ShapeError("layer_norm: expected [n,c] tokens, got " + shape_str(tx.shape));
  }
  const int c = tx.shape[1];
  if (tg.ndim() != 1 || tg.shape[0] != c || tb.ndim() != 1 || tb.shape[0] != c) {
    throw ShapeError("layer_norm: gamma " + shape_str(tg.shape) + " / beta " +
                     shape_str(tb.shape) + " do not match " + std::to_string(c) + " channels");
  }
  if (!(eps > 0.0)) throw NumericError("layer_norm: eps must be positive");
  Tensor out = Tensor::zeros(tx.shape);
  kernels::layer_norm_fwd(tx.data.data(), tg.data.data(), tb.data.data(), eps, out.data.data(),
                          tx.shape[0], c);
  Node node;
  node.op = Op::kLayerNorm;
  node.ins = {x, gamma, beta};
  node.dattr = eps;
  return push(std::move(node), std::move(out), "layer_norm");
}

int Tape::reshape(int a, std::vector<int> shape) {
  check_id(a, "reshape");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  if (numel_of(shape) != ta.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(ta.shape) + " as " + shape_str(shape));
  }
  Tensor out;
  out.shape = shape;
  out.data = ta.data;
  Node node;
  node.op = Op::kReshape;
  node.ins = {a};
  return push(std::move(node), std::move(out), "reshape");
}

int Tape::transpose(int a) {
  check_id(a, "transpose");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  if (ta.ndim() != 2) {
    throw ShapeError("transpose: expected a 2-d tensor, got " + shape_str(ta.shape));
  }
  const int m = ta.shape[0];
  const int n = ta.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out.data[static_cast<std::size_t>(j) * m + i] = ta.data[static_cast<std::size_t>(i) * n + j];
    }
  }
  Node node;
  node.op = Op::kTranspose;
  node.ins = {a};
  return push(std::move(node), std::move(out), "transpose");
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = -1;
  int total = 0;
  for (int p : parts) {
    check_id(p, "concat_cols");
    const Tensor& t = vals_[static_cast<std::size_t>(p)];
    if (t.ndim() != 2) {
      throw ShapeError("concat_cols: expected 2-d tensors, got " + shape_str(t.shape));
    }
    if (rows < 0) rows = t.shape[0];
    if (t.shape[0] != rows) {
      throw ShapeError("concat_cols: row counts differ: " + std::to_string(rows) + " vs " +
                       shape_str(t.shape));
    }
    total += t.shape[1];
  }
  Tensor out = Tensor::zeros({rows, total});
  int off = 0;
  for (int p : parts) {
    const Tensor& t = vals_[static_cast<std::size_t>(p)];
    const int c = t.shape[1];
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < c; ++j) {
        out.data[static_cast<std::size_t>(i) * total + off + j] =
            t.data[static_cast<std::size_t>(i) * c + j];
      }
    }
    off += c;
  }
  Node node;
  node.op = Op::kConcatCols;
  node.ins = parts;
  return push(std::move(node), std::move(out), "concat_cols");
}

int Tape::slice_cols(int a, int c0, int c1) {
  check_id(a, "slice_cols");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  if (ta.ndim() != 2) {
    throw ShapeError("slice_cols: expected a 2-d tensor, got " + shape_str(ta.shape));
  }
  if (c0 < 0 || c1 > ta.shape[1] || c0 >= c1) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for " + shape_str(ta.shape));
  }
  const int rows = ta.shape[0];
  const int c = ta.shape[1];
  const int width = c1 - c0;
  Tensor out = Tensor::zeros({rows, width});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < width; ++j) {
      out.data[static_cast<std::size_t>(i) * width + j] =
          ta.data[static_cast<std::size_t>(i) * c + c0 + j];
    }
  }
  Node node;
  node.op = Op::kSliceCols;
  node.ins = {a};
  node.iattr = {c0, c1};
  return push(std::move(node), std::move(out), "slice_cols");
}

int Tape::add_bias(int a, int b) {
  check_id(a, "add_bias");
  check_id(b, "add_bias");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& tb = vals_[static_cast<std::size_t>(b)];
  if (ta.ndim() != 2 || tb.ndim() != 1 || tb.shape[0] != ta.shape[1]) {
    throw ShapeError("add_bias: bias " + shape_str(tb.shape) + " does not match " +
                     shape_str(ta.shape));
  }
  const int rows = ta.shape[0];
  const int c = ta.shape[1];
  Tensor out = Tensor::zeros(ta.shape);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < c; ++j) {
      out.data[static_cast<std::size_t>(i) * c + j] =
          ta.data[static_cast<std::size_t>(i) * c + j] + tb.data[static_cast<std::size_t>(j)];
    }
  }
  Node node;
  node.op = Op::kAddBias;
  node.ins = {a, b};
  return push(std::move(node), std::move(out), "add_bias");
}

int Tape::row_scale(int a, int s) {
  check_id(a, "row_scale");
  check_id(s, "row_scale");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  const Tensor& ts = vals_[static_cast<std::size_t>(s)];
  if (ta.ndim() != 2 || ts.ndim() != 1 || ts.shape[0] != ta.shape[0]) {
    throw ShapeError("row_scale: scales " + shape_str(ts.shape) + " do not match " +
                     shape_str(ta.shape));
  }
  const int rows = ta.shape[0];
  const int c = ta.shape[1];
  Tensor out = Tensor::zeros(ta.shape);
  for (int i = 0; i < rows; ++i) {
    const double f = ts.data[static_cast<std::size_t>(i)];
    for (int j = 0; j < c; ++j) {
      out.data[static_cast<std::size_t>(i) * c + j] =
          ta.data[static_cast<std::size_t>(i) * c + j] * f;
    }
  }
  Node node;
  node.op = Op::kRowScale;
  node.ins = {a, s};
  return push(std::move(node), std::move(out), "row_scale");
}

int Tape::sum_all(int a) {
  check_id(a, "sum_all");
  const Tensor& ta = vals_[static_cast<std::size_t>(a)];
  double s = 0.0;
  for (double v : ta.data) s += v;
  Tensor out = Tensor::from({1}, {s});
  Node node;
  node.op = Op::kSumAll;
  node.ins = {a};
  return push(std::move(node), std::move(out), "sum_all");
}

int Tape::extract_patches(int img, int p) {
  check_id(img, "extract_patches");
  const Tensor& ti = vals_[static_cast<std::size_t>(img)];
  if (ti.ndim() != 3) {
    throw ShapeError("extract_patches: expected an [h,w,c] grid, got " + shape_str(ti.shape));
  }
  if (p < 1 || ti.shape[0] % p != 0 || ti.shape[1] % p != 0) {
    throw ShapeError("extract_patches: patch size " + std::to_string(p) +
                     " does not tile " + shape_str(ti.shape));
  }
  const int h = ti.shape[0];
  const int w = ti.shape[1];
  const int c = ti.shape[2];
  const int gh = h / p;
  const int gw = w / p;
  const int width = p * p * c;
  Tensor out = Tensor::zeros({gh * gw, width});
  for (int ti_ = 0; ti_ < gh; ++ti_) {
    for (int tj = 0; tj < gw; ++tj) {
      double* row = out.data.data() + static_cast<std::size_t>(ti_ * gw + tj) * width;
      for (int py = 0; py < p; ++py) {
        const double* src =
            ti.data.data() + (static_cast<std::size_t>(ti_ * p + py) * w + tj * p) * c;
        for (int px = 0; px < p; ++px) {
          for (int ch = 0; ch < c; ++ch) {
            row[(py * p + px) * c + ch] = src[static_cast<std::size_t>(px) * c + ch];
          }
        }
      }
    }
  }
  Node node;
  node.op = Op::kExtractPatches;
  node.ins = {img};
  node.iattr = {p};
  return push(std::move(node), std::move(out), "extract_patches");
}

const Tensor& Tape::val(int id) const {
  check_id(id, "val");
  return vals_[static_cast<std::size_t>(id)];
}

std::vector<double> Tape::grad(int id) const {
  check_id(id, "grad");
  if (!backward_ran_) throw Error("grad: backward has not run on this tape");
  const auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty()) {
    return std::vector<double>(static_cast<std::size_t>(vals_[static_cast<std::size_t>(id)].numel()),
                               0.0);
  }
  return g;
}

void Tape::write_param_grads(ParamStore& store) const {
  if (!backward_ran_) throw Error("write_param_grads: backward has not run on this tape");
  for (auto& [name, t] : store.items()) {
    t.grad.assign(t.data.size(), 0.0);
  }
  for (const auto& [name, id] : param_nodes_) {
    store.at(name).grad = grad(id);
  }
}

void Tape::backward(int loss) {
  check_id(loss, "backward");
  if (backward_ran_) throw Error("backward: already ran on this tape");
  if (vals_[static_cast<std::size_t>(loss)].numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(vals_[static_cast<std::size_t>(loss)].shape));
  }
  backward_ran_ = true;
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss)] = {1.0};

  auto ensure = [&](int id) -> std::vector<double>& {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) {
      g.assign(static_cast<std::size_t>(vals_[static_cast<std::size_t>(id)].numel()), 0.0);
    }
    return g;
  };
  auto needs = [&](int id) { return nodes_[static_cast<std::size_t>(id)].needs_grad; };

  for (int id = loss; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty() || !node.needs_grad) continue;
    switch (node.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (needs(node.ins[1])) {
          auto& gb = ensure(node.ins[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (needs(node.ins[1])) {
          auto& gb = ensure(node.ins[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& tb = vals_[static_cast<std::size_t>(node.ins[1])];
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tb.data[i];
        }
        if (needs(node.ins[1])) {
          auto& gb = ensure(node.ins[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ta.data[i];
        }
        break;
      }
      case Op::kAbs: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        auto& ga = ensure(node.ins[0]);
        // Subgradient 0 at the kink.
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = ta.data[i];
          ga[i] += g[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
        break;
      }
      case Op::kSigmoid: {
        const Tensor& y = vals_[static_cast<std::size_t>(id)];
        auto& ga = ensure(node.ins[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y.data[i] * (1.0 - y.data[i]);
        break;
      }
      case Op::kGelu: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        auto& ga = ensure(node.ins[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_slope(ta.data[i]);
        break;
      }
      case Op::kScale: {
        auto& ga = ensure(node.ins[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.dattr;
        break;
      }
      case Op::kMatMul: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& tb = vals_[static_cast<std::size_t>(node.ins[1])];
        const int m = ta.shape[0];
        const int k = ta.shape[1];
        const int n = tb.shape[1];
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          kernels::matmul_nt(g.data(), tb.data.data(), ga.data(), m, n, k, true);
        }
        if (needs(node.ins[1])) {
          auto& gb = ensure(node.ins[1]);
          kernels::matmul_tn(ta.data.data(), g.data(), gb.data(), k, m, n, true);
        }
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& y = vals_[static_cast<std::size_t>(id)];
        auto& ga = ensure(node.ins[0]);
        kernels::softmax_rows_bwd(y.data.data(), g.data(), ga.data(), y.shape[0], y.shape[1]);
        break;
      }
      case Op::kStableBce: {
        const Tensor& tx = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& ty = vals_[static_cast<std::size_t>(node.ins[1])];
        const double g0 = g[0] / static_cast<double>(tx.data.size());
        if (needs(node.ins[0])) {
          auto& gx = ensure(node.ins[0]);
          for (std::size_t i = 0; i < tx.data.size(); ++i) {
            gx[i] += g0 * (sigmoid_stable(tx.data[i]) - ty.data[i]);
          }
        }
        if (needs(node.ins[1])) {
          auto& gy = ensure(node.ins[1]);
          for (std::size_t i = 0; i < tx.data.size(); ++i) gy[i] += g0 * (-tx.data[i]);
        }
        break;
      }
      case Op::kConv2d: {
        const Tensor& ti = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& tw = vals_[static_cast<std::size_t>(node.ins[1])];
        const int h = ti.shape[0];
        const int wd = ti.shape[1];
        const int ci = ti.shape[2];
        const int co = tw.shape[3];
        const int kk = tw.shape[0];
        if (needs(node.ins[0])) {
          auto& gi = ensure(node.ins[0]);
          kernels::conv2d_bwd_in(g.data(), tw.data.data(), gi.data(), h, wd, ci, co, kk);
        }
        if (needs(node.ins[1])) {
          auto& gw = ensure(node.ins[1]);
          kernels::conv2d_bwd_w(ti.data.data(), g.data(), gw.data(), h, wd, ci, co, kk);
        }
        if (needs(node.ins[2])) {
          auto& gb = ensure(node.ins[2]);
          kernels::conv2d_bwd_b(g.data(), gb.data(), h, wd, co);
        }
        break;
      }
      case Op::kBilinear: {
        const Tensor& ti = vals_[static_cast<std::size_t>(node.ins[0])];
        auto& gi = ensure(node.ins[0]);
        kernels::bilinear_bwd(g.data(), gi.data(), ti.shape[0], ti.shape[1], ti.shape[2],
                              node.iattr[0], node.iattr[1]);
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& tx = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& tg = vals_[static_cast<std::size_t>(node.ins[1])];
        const int n = tx.shape[0];
        const int c = tx.shape[1];
        // The kernel computes all three gradients in one pass; unused ones
        // land in scratch buffers.
        std::vector<double> scratch_x;
        std::vector<double> scratch_g;
        std::vector<double> scratch_b;
        double* dx = nullptr;
        double* dg = nullptr;
        double* db = nullptr;
        if (needs(node.ins[0])) {
          dx = ensure(node.ins[0]).data();
        } else {
          scratch_x.assign(tx.data.size(), 0.0);
          dx = scratch_x.data();
        }
        if (needs(node.ins[1])) {
          dg = ensure(node.ins[1]).data();
        } else {
          scratch_g.assign(static_cast<std::size_t>(c), 0.0);
          dg = scratch_g.data();
        }
        if (needs(node.ins[2])) {
          db = ensure(node.ins[2]).data();
        } else {
          scratch_b.assign(static_cast<std::size_t>(c), 0.0);
          db = scratch_b.data();
        }
        kernels::layer_norm_bwd(tx.data.data(), tg.data.data(), node.dattr, g.data(), dx, dg, db,
                                n, c);
        break;
      }
      case Op::kReshape: {
        auto& ga = ensure(node.ins[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kTranspose: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        const int m = ta.shape[0];
        const int n = ta.shape[1];
        auto& ga = ensure(node.ins[0]);
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
          }
        }
        break;
      }
      case Op::kConcatCols: {
        const int total = vals_[static_cast<std::size_t>(id)].shape[1];
        const int rows = vals_[static_cast<std::size_t>(id)].shape[0];
        int off = 0;
        for (int p : node.ins) {
          const int c = vals_[static_cast<std::size_t>(p)].shape[1];
          if (needs(p)) {
            auto& gp = ensure(p);
            for (int i = 0; i < rows; ++i) {
              for (int j = 0; j < c; ++j) {
                gp[static_cast<std::size_t>(i) * c + j] +=
                    g[static_cast<std::size_t>(i) * total + off + j];
              }
            }
          }
          off += c;
        }
        break;
      }
      case Op::kSliceCols: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        const int rows = ta.shape[0];
        const int c = ta.shape[1];
        const int c0 = node.iattr[0];
        const int width = node.iattr[1] - c0;
        auto& ga = ensure(node.ins[0]);
        for (int i = 0; i < rows; ++i) {
          for (int j = 0; j < width; ++j) {
            ga[static_cast<std::size_t>(i) * c + c0 + j] +=
                g[static_cast<std::size_t>(i) * width + j];
          }
        }
        break;
      }
      case Op::kAddBias: {
        const Tensor& out = vals_[static_cast<std::size_t>(id)];
        const int rows = out.shape[0];
        const int c = out.shape[1];
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (needs(node.ins[1])) {
          auto& gb = ensure(node.ins[1]);
          for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(j)] +=
                g[static_cast<std::size_t>(i) * c + j];
          }
        }
        break;
      }
      case Op::kRowScale: {
        const Tensor& ta = vals_[static_cast<std::size_t>(node.ins[0])];
        const Tensor& ts = vals_[static_cast<std::size_t>(node.ins[1])];
        const int rows = ta.shape[0];
        const int c = ta.shape[1];
        if (needs(node.ins[0])) {
          auto& ga = ensure(node.ins[0]);
          for (int i = 0; i < rows; ++i) {
            const double f = ts.data[static_cast<std::size_t>(i)];
            for (int j = 0; j < c; ++j) {
              ga[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(i) * c + j] * f;
            }
          }
        }
        if (needs(node.ins[1])) {
          auto& gs = ensure(node.ins[1]);
          for (int i = 0; i < rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < c; ++j) {
              s += g[static_cast<std::size_t>(i) * c + j] *
                   ta.data[static_cast<std::size_t>(i) * c + j];
            }
            gs[static_cast<std::size_t>(i)] += s;
          }
        }
        break;
      }
      case Op::kSumAll: {
        auto& ga = ensure(node.ins[0]);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::kExtractPatches: {
        const Tensor& ti = vals_[static_cast<std::size_t>(node.ins[0])];
        const int h = ti.shape[0];
        const int w = ti.shape[1];
        const int c = ti.shape[2];
        const int p = node.iattr[0];
        const int gw = w / p;
        const int width = p * p * c;
        auto& gi = ensure(node.ins[0]);
        for (int ti_ = 0; ti_ < h / p; ++ti_) {
          for (int tj = 0; tj < gw; ++tj) {
            const double* row = g.data() + static_cast<std::size_t>(ti_ * gw + tj) * width;
            for (int py = 0; py < p; ++py) {
              double* dst = gi.data() + (static_cast<std::size_t>(ti_ * p + py) * w + tj * p) * c;
              for (int px = 0; px < p; ++px) {
                for (int ch = 0; ch < c; ++ch) {
                  dst[static_cast<std::size_t>(px) * c + ch] += row[(py * p + px) * c + ch];
                }
              }
            }
          }
        }
        break;
      }
    }
  }
}

}  // namespace hct
