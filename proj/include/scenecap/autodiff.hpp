#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "scenecap/util.hpp"

namespace scenecap::ad {

/// Dense row-major matrix of doubles. Vectors are 1xN rows, scalars 1x1.
/// Shapes are fixed at construction.
struct Tensor {
  std::vector<int> shape;  // {rows, cols}
  std::vector<double> data;

  Tensor() : shape{0, 0} {}
  Tensor(int r, int c) : shape{r, c}, data(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor row(std::vector<double> v) {
    Tensor t;
    t.shape = {1, static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
  }
  static Tensor scalar(double v) { return row({v}); }

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; invalid when id < 0.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Records primitive operations in execution order (inputs always precede
/// consumers) and runs reverse-mode accumulation from a scalar node.
/// One tape per training step; a tape owns the forward values and, after
/// backward(), the gradients of every recorded node.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Copies `value` onto the tape as a leaf. Gradients are accumulated only
  /// for leaves created with requires_grad = true.
  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& value(Var v) const;
  double scalar_value(Var v) const;

  /// Reverse pass from a 1x1 loss node. Gradients of leaves that the loss
  /// does not touch are zero tensors.
  void backward(Var loss);
  const Tensor& grad(Var v) const;

  size_t num_nodes() const { return nodes_.size(); }

 private:
  friend Var matmul(Var a, Var b);
  friend Var add(Var a, Var b);
  friend Var mul(Var a, Var b);
  friend Var concat(const std::vector<Var>& parts);
  friend Var broadcast_rows(Var row, int n);
  friend Var transpose(Var a);
  friend Var tanh(Var a);
  friend Var sigmoid(Var a);
  friend Var relu(Var a);
  friend Var softmax_rows(Var a);
  friend Var log_softmax_rows(Var a);
  friend Var mean_axis(Var a, int axis);
  friend Var sum_all(Var a);
  friend Var lookup_rows(Var table, const std::vector<int>& ids);
  friend Var pick(Var m, const std::vector<int>& col_ids);
  friend Var slice_cols(Var a, int begin, int len);
  friend Var reshape(Var a, int r, int c);
  friend Var dropout(Var a, double p, bool train, Rng& rng);
  friend Var scale(Var a, double c);
  friend Var scale_by(Var a, Var s);

  enum class Op {
    kLeaf,
    kMatmul,
    kAdd,
    kMul,
    kConcat,
    kBroadcastRows,
    kTranspose,
    kTanh,
    kSigmoid,
    kRelu,
    kSoftmaxRows,
    kLogSoftmaxRows,
    kMeanAxis,
    kSumAll,
    kLookupRows,
    kPick,
    kSliceCols,
    kReshape,
    kDropout,
    kScale,
    kScaleBy,
  };

  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    std::vector<int> inputs;  // kConcat only
    Tensor value;
    bool needs_grad = false;
    std::vector<int> idx;     // kLookupRows / kPick
    int i0 = 0;               // axis / slice begin / broadcast count
    int i1 = 0;               // slice length
    double c = 0.0;           // kScale constant
    std::vector<double> mask; // kDropout: 0 or 1/(1-p) per element
  };

  Var push(Node n);
  const Node& node(Var v) const;
  bool needs(int id) const { return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad; }
  Tensor& grad_buf(int id);
  void backprop_node(int id);

  std::vector<Node> nodes_;
  mutable std::vector<Tensor> grads_;
  bool ran_backward_ = false;
};

// Primitive operations. Every op validates input shapes and throws Error
// naming the operation and the offending shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var concat(const std::vector<Var>& parts);
Var broadcast_rows(Var row, int n);
Var transpose(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var mean_axis(Var a, int axis);
Var sum_all(Var a);
Var lookup_rows(Var table, const std::vector<int>& ids);
Var pick(Var m, const std::vector<int>& col_ids);
Var slice_cols(Var a, int begin, int len);
Var reshape(Var a, int r, int c);
Var dropout(Var a, double p, bool train, Rng& rng);
Var scale(Var a, double c);
Var scale_by(Var a, Var s);

inline Var operator+(Var a, Var b) { return add(a, b); }

/// Scalar function of a parameter list, built on a caller-provided tape.
/// Must be deterministic (dropout disabled or fixed-mask).
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares backward() gradients against central finite differences.
/// Returns max over parameter coordinates of
///   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                         double eps = 1e-5);

}  // namespace scenecap::ad
