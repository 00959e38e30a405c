#pragma once

// Reverse-mode automatic differentiation over a recorded operation graph.
//
// A Tape owns every tensor produced during one forward pass. Operations
// append nodes in execution order (which is therefore topological), and
// backward() walks the nodes once in reverse, accumulating gradients into
// per-node buffers. Recording and backward are single-threaded per Tape;
// the numeric work inside an operation may use the OpenMP kernels.
//
// Every forward result is checked for NaN/Inf and all shape mismatches
// throw with both shapes named, so contract violations surface at the
// offending operation rather than downstream.

#include <string>
#include <vector>

#include "hct/params.hpp"
#include "hct/tensor.hpp"

namespace hct {

enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kAbs,
  kSigmoid,
  kGelu,
  kScale,
  kMatMul,
  kSoftmaxRows,
  kStableBce,
  kConv2d,
  kBilinear,
  kLayerNorm,
  kReshape,
  kTranspose,
  kConcatCols,
  kSliceCols,
  kAddBias,
  kRowScale,
  kSumAll,
  kExtractPatches,
};

// Elementwise kinds exposed through the elementwise() dispatcher.
enum class Ew { kAdd, kSub, kMul, kAbs, kSigmoid, kScale };

// Handle to a token matrix node: lattice extents plus channel count, with
// the tokens stored as a [h*w, c] tensor in row-major patch order
// (patch (i, j) lives at row i*w + j).
struct TokenGridRef {
  int h = 0;
  int w = 0;
  int c = 0;
  int id = -1;
};

enum class MapKind { kLogit, kProbability };

// Handle to a single-channel [h, w] saliency map node.
struct MapRef {
  int h = 0;
  int w = 0;
  int id = -1;
  MapKind kind = MapKind::kLogit;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Inserts a leaf carrying `t` (requires_grad taken from the tensor).
  int leaf(Tensor t);
  // Inserts a leaf bound to the named parameter; repeated binds of the same
  // name return the existing node so gradients accumulate in one place.
  int param(const ParamStore& store, const std::string& name);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int abs(int a);
  int sigmoid(int a);
  int gelu(int a);
  int scale(int a, double s);
  // Dispatcher over the elementwise kinds; `b` is ignored for unary kinds
  // and `s` only applies to Ew::kScale.
  int elementwise(Ew kind, int a, int b = -1, double s = 0.0);

  int matmul(int a, int b);
  int softmax_rows(int a);
  // Mean over all elements of max(x,0) - x*y + log(1 + exp(-|x|)); targets
  // must lie in [0,1]. Returns a scalar node.
  int stable_bce(int logits, int targets);
  int conv2d(int in, int w, int b);
  int bilinear_resize(int in, int nh, int nw);
  int layer_norm(int x, int gamma, int beta, double eps);

  int reshape(int a, std::vector<int> shape);
  int transpose(int a);
  int concat_cols(const std::vector<int>& parts);
  int slice_cols(int a, int c0, int c1);
  // A[n,c] + b[c] added to every row.
  int add_bias(int a, int b);
  // A[n,c] with row i multiplied by s[i].
  int row_scale(int a, int s);
  int sum_all(int a);
  // Non-overlapping p x p patches of an [h,w,ch] grid, flattened row-major
  // (py, px, ch) into a [(h/p)*(w/p), p*p*ch] token matrix.
  int extract_patches(int img, int p);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node that
  // can reach a grad-requiring leaf. `loss` must be scalar. Each node is
  // visited exactly once, in reverse recording order.
  void backward(int loss);

  const Tensor& val(int id) const;
  // Gradient buffer for a node; zeros if the node did not receive any
  // gradient during backward.
  std::vector<double> grad(int id) const;
  // Copies leaf gradients into the bound parameters' grad fields. Store
  // entries the loss never reached, or that were never bound at all, get
  // zero gradients.
  void write_param_grads(ParamStore& store) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> ins;
    std::vector<int> iattr;
    double dattr = 0.0;
    bool needs_grad = false;
  };

  int push(Node node, Tensor value, const char* what);
  void check_id(int id, const char* what) const;
  bool backward_ran_ = false;

  std::vector<Node> nodes_;
  std::vector<Tensor> vals_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<std::string, int>> param_nodes_;
};

}  // namespace hct
