#include "scenecap/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace scenecap::ad {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// C += A * B, row-major, i-k-j order for contiguous inner loops.
void mm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    const double* ai = &a.data[static_cast<size_t>(i) * k];
    double* ci = &c.data[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = &b.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C += A * B^T  (A: m x n, B: k x n, C: m x k); row-dot-row.
void mm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  int m = a.rows(), n = a.cols(), k = b.rows();
  for (int i = 0; i < m; ++i) {
    const double* ai = &a.data[static_cast<size_t>(i) * n];
    double* ci = &c.data[static_cast<size_t>(i) * k];
    for (int p = 0; p < k; ++p) {
      const double* bp = &b.data[static_cast<size_t>(p) * n];
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// C += A^T * B  (A: m x k, B: m x n, C: k x n).
void mm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    const double* ai = &a.data[static_cast<size_t>(i) * k];
    const double* bi = &b.data[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* cp = &c.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.tape != this || v.id >= static_cast<int>(nodes_.size()))
    throw Error("tape: invalid node handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar_value(Var v) const {
  const Tensor& t = node(v).value;
  if (t.size() != 1) throw Error("scalar_value: tensor is " + shape_str(t) + ", not 1x1");
  return t.data[0];
}

Tensor& Tape::grad_buf(int id) {
  Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.empty() && !nodes_[static_cast<size_t>(id)].value.empty()) {
    const Tensor& v = nodes_[static_cast<size_t>(id)].value;
    g = Tensor::zeros(v.rows(), v.cols());
  }
  return g;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!ran_backward_) throw Error("tape: grad requested before backward()");
  Tensor& g = grads_[static_cast<size_t>(v.id)];
  if (g.empty()) g = Tensor::zeros(n.value.rows(), n.value.cols());
  return g;
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw Error("backward: loss is " + shape_str(ln.value) + ", expected scalar 1x1");
  grads_.assign(nodes_.size(), Tensor());
  ran_backward_ = true;
  if (!ln.needs_grad) return;  // loss independent of all parameters
  grad_buf(loss.id).data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || grads_[static_cast<size_t>(id)].empty()) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& gy = grads_[static_cast<size_t>(id)];
  const Tensor& y = n.value;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.a)].value;
      const Tensor& b = nodes_[static_cast<size_t>(n.b)].value;
      if (needs(n.a)) mm_nt(gy, b, grad_buf(n.a));
      if (needs(n.b)) mm_tn(a, gy, grad_buf(n.b));
      break;
    }
    case Op::kAdd: {
      for (int in : {n.a, n.b}) {
        if (!needs(in)) continue;
        Tensor& g = grad_buf(in);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i];
      }
      break;
    }
    case Op::kMul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.a)].value;
      const Tensor& b = nodes_[static_cast<size_t>(n.b)].value;
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i] * b.data[i];
      }
      if (needs(n.b)) {
        Tensor& g = grad_buf(n.b);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i] * a.data[i];
      }
      break;
    }
    case Op::kConcat: {
      int r = y.rows();
      int off = 0;
      for (int in : n.inputs) {
        const Tensor& part = nodes_[static_cast<size_t>(in)].value;
        int c = part.cols();
        if (needs(in)) {
          Tensor& g = grad_buf(in);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) g.at(i, j) += gy.at(i, off + j);
        }
        off += c;
      }
      break;
    }
    case Op::kBroadcastRows: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        int c = y.cols();
        for (int i = 0; i < y.rows(); ++i)
          for (int j = 0; j < c; ++j) g.data[static_cast<size_t>(j)] += gy.at(i, j);
      }
      break;
    }
    case Op::kTranspose: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (int i = 0; i < y.rows(); ++i)
          for (int j = 0; j < y.cols(); ++j) g.at(j, i) += gy.at(i, j);
      }
      break;
    }
    case Op::kTanh: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i)
          g.data[i] += gy.data[i] * (1.0 - y.data[i] * y.data[i]);
      }
      break;
    }
    case Op::kSigmoid: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i)
          g.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
      }
      break;
    }
    case Op::kRelu: {
      if (needs(n.a)) {
        const Tensor& x = nodes_[static_cast<size_t>(n.a)].value;
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i)
          if (x.data[i] > 0.0) g.data[i] += gy.data[i];
      }
      break;
    }
    case Op::kSoftmaxRows: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        int c = y.cols();
        for (int i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += gy.at(i, j) * y.at(i, j);
          for (int j = 0; j < c; ++j) g.at(i, j) += y.at(i, j) * (gy.at(i, j) - dot);
        }
      }
      break;
    }
    case Op::kLogSoftmaxRows: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        int c = y.cols();
        for (int i = 0; i < y.rows(); ++i) {
          double gsum = 0.0;
          for (int j = 0; j < c; ++j) gsum += gy.at(i, j);
          for (int j = 0; j < c; ++j)
            g.at(i, j) += gy.at(i, j) - std::exp(y.at(i, j)) * gsum;
        }
      }
      break;
    }
    case Op::kMeanAxis: {
      if (needs(n.a)) {
        const Tensor& x = nodes_[static_cast<size_t>(n.a)].value;
        Tensor& g = grad_buf(n.a);
        if (n.i0 == 0) {
          double inv = 1.0 / x.rows();
          for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) g.at(i, j) += gy.at(0, j) * inv;
        } else {
          double inv = 1.0 / x.cols();
          for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) g.at(i, j) += gy.at(i, 0) * inv;
        }
      }
      break;
    }
    case Op::kSumAll: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        double gv = gy.data[0];
        for (size_t i = 0; i < g.size(); ++i) g.data[i] += gv;
      }
      break;
    }
    case Op::kLookupRows: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        int c = y.cols();
        for (size_t i = 0; i < n.idx.size(); ++i)
          for (int j = 0; j < c; ++j)
            g.at(n.idx[i], j) += gy.at(static_cast<int>(i), j);
      }
      break;
    }
    case Op::kPick: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < n.idx.size(); ++i)
          g.at(static_cast<int>(i), n.idx[i]) += gy.at(static_cast<int>(i), 0);
      }
      break;
    }
    case Op::kSliceCols: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (int i = 0; i < y.rows(); ++i)
          for (int j = 0; j < y.cols(); ++j) g.at(i, n.i0 + j) += gy.at(i, j);
      }
      break;
    }
    case Op::kReshape: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i];
      }
      break;
    }
    case Op::kDropout: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i] * n.mask[i];
      }
      break;
    }
    case Op::kScale: {
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i] * n.c;
      }
      break;
    }
    case Op::kScaleBy: {
      const Tensor& x = nodes_[static_cast<size_t>(n.a)].value;
      double s = nodes_[static_cast<size_t>(n.b)].value.data[0];
      if (needs(n.a)) {
        Tensor& g = grad_buf(n.a);
        for (size_t i = 0; i < gy.size(); ++i) g.data[i] += gy.data[i] * s;
      }
      if (needs(n.b)) {
        Tensor& g = grad_buf(n.b);
        double acc = 0.0;
        for (size_t i = 0; i < gy.size(); ++i) acc += gy.data[i] * x.data[i];
        g.data[0] += acc;
      }
      break;
    }
  }
}

namespace {

Tape* tape_of(Var a, const char* op) {
  if (!a.valid()) throw Error(std::string(op) + ": invalid operand");
  return a.tape;
}

void same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw Error(std::string(op) + ": operands live on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  Tape* t = a.tape;
  const Tensor& av = t->value(a);
  const Tensor& bv = t->value(b);
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tape::Node n;
  n.op = Tape::Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros(av.rows(), bv.cols());
  mm_nn(av, bv, n.value);
  n.needs_grad = t->needs(a.id) || t->needs(b.id);
  return t->push(std::move(n));
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  Tape* t = a.tape;
  const Tensor& av = t->value(a);
  const Tensor& bv = t->value(b);
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tape::Node n;
  n.op = Tape::Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = av;
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += bv.data[i];
  n.needs_grad = t->needs(a.id) || t->needs(b.id);
  return t->push(std::move(n));
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  Tape* t = a.tape;
  const Tensor& av = t->value(a);
  const Tensor& bv = t->value(b);
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tape::Node n;
  n.op = Tape::Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.value = av;
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= bv.data[i];
  n.needs_grad = t->needs(a.id) || t->needs(b.id);
  return t->push(std::move(n));
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat: no inputs");
  Tape* t = tape_of(parts[0], "concat");
  int r = t->value(parts[0]).rows();
  int total = 0;
  bool ng = false;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat");
    const Tensor& pv = t->value(p);
    if (pv.rows() != r) shape_error("concat", t->value(parts[0]), pv);
    total += pv.cols();
    ng = ng || t->needs(p.id);
  }
  Tape::Node n;
  n.op = Tape::Op::kConcat;
  n.value = Tensor::zeros(r, total);
  n.needs_grad = ng;
  int off = 0;
  for (Var p : parts) {
    n.inputs.push_back(p.id);
    const Tensor& pv = t->value(p);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < pv.cols(); ++j) n.value.at(i, off + j) = pv.at(i, j);
    off += pv.cols();
  }
  return t->push(std::move(n));
}

Var broadcast_rows(Var row, int n_rows) {
  Tape* t = tape_of(row, "broadcast_rows");
  const Tensor& rv = t->value(row);
  if (rv.rows() != 1) throw Error("broadcast_rows: input is " + shape_str(rv) + ", expected 1xN");
  if (n_rows < 1) throw Error("broadcast_rows: row count must be >= 1");
  Tape::Node n;
  n.op = Tape::Op::kBroadcastRows;
  n.a = row.id;
  n.i0 = n_rows;
  n.value = Tensor::zeros(n_rows, rv.cols());
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < rv.cols(); ++j) n.value.at(i, j) = rv.at(0, j);
  n.needs_grad = t->needs(row.id);
  return t->push(std::move(n));
}

Var transpose(Var a) {
  Tape* t = tape_of(a, "transpose");
  const Tensor& av = t->value(a);
  Tape::Node n;
  n.op = Tape::Op::kTranspose;
  n.a = a.id;
  n.value = Tensor::zeros(av.cols(), av.rows());
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) n.value.at(j, i) = av.at(i, j);
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var tanh(Var a) {
  Tape* t = tape_of(a, "tanh");
  Tape::Node n;
  n.op = Tape::Op::kTanh;
  n.a = a.id;
  n.value = t->value(a);
  for (double& x : n.value.data) x = std::tanh(x);
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var sigmoid(Var a) {
  Tape* t = tape_of(a, "sigmoid");
  Tape::Node n;
  n.op = Tape::Op::kSigmoid;
  n.a = a.id;
  n.value = t->value(a);
  for (double& x : n.value.data) x = 1.0 / (1.0 + std::exp(-x));
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var relu(Var a) {
  Tape* t = tape_of(a, "relu");
  Tape::Node n;
  n.op = Tape::Op::kRelu;
  n.a = a.id;
  n.value = t->value(a);
  for (double& x : n.value.data) x = x > 0.0 ? x : 0.0;
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var softmax_rows(Var a) {
  Tape* t = tape_of(a, "softmax_rows");
  Tape::Node n;
  n.op = Tape::Op::kSoftmaxRows;
  n.a = a.id;
  n.value = t->value(a);
  int c = n.value.cols();
  for (int i = 0; i < n.value.rows(); ++i) {
    double* row = &n.value.data[static_cast<size_t>(i) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= sum;
  }
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var log_softmax_rows(Var a) {
  Tape* t = tape_of(a, "log_softmax_rows");
  Tape::Node n;
  n.op = Tape::Op::kLogSoftmaxRows;
  n.a = a.id;
  n.value = t->value(a);
  int c = n.value.cols();
  for (int i = 0; i < n.value.rows(); ++i) {
    double* row = &n.value.data[static_cast<size_t>(i) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j) row[j] -= lse;
  }
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var mean_axis(Var a, int axis) {
  Tape* t = tape_of(a, "mean_axis");
  if (axis != 0 && axis != 1) throw Error("mean_axis: axis must be 0 or 1");
  const Tensor& av = t->value(a);
  if (av.rows() == 0 || av.cols() == 0) throw Error("mean_axis: empty input");
  Tape::Node n;
  n.op = Tape::Op::kMeanAxis;
  n.a = a.id;
  n.i0 = axis;
  if (axis == 0) {
    n.value = Tensor::zeros(1, av.cols());
    for (int i = 0; i < av.rows(); ++i)
      for (int j = 0; j < av.cols(); ++j) n.value.at(0, j) += av.at(i, j);
    for (double& x : n.value.data) x /= av.rows();
  } else {
    n.value = Tensor::zeros(av.rows(), 1);
    for (int i = 0; i < av.rows(); ++i) {
      for (int j = 0; j < av.cols(); ++j) n.value.at(i, 0) += av.at(i, j);
      n.value.at(i, 0) /= av.cols();
    }
  }
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var sum_all(Var a) {
  Tape* t = tape_of(a, "sum_all");
  const Tensor& av = t->value(a);
  Tape::Node n;
  n.op = Tape::Op::kSumAll;
  n.a = a.id;
  double s = 0.0;
  for (double x : av.data) s += x;
  n.value = Tensor::scalar(s);
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var lookup_rows(Var table, const std::vector<int>& ids) {
  Tape* t = tape_of(table, "lookup_rows");
  const Tensor& tv = t->value(table);
  Tape::Node n;
  n.op = Tape::Op::kLookupRows;
  n.a = table.id;
  n.idx = ids;
  n.value = Tensor::zeros(static_cast<int>(ids.size()), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw Error("lookup_rows: index " + std::to_string(ids[i]) + " out of range for " +
                  shape_str(tv));
    for (int j = 0; j < tv.cols(); ++j) n.value.at(static_cast<int>(i), j) = tv.at(ids[i], j);
  }
  n.needs_grad = t->needs(table.id);
  return t->push(std::move(n));
}

Var pick(Var m, const std::vector<int>& col_ids) {
  Tape* t = tape_of(m, "pick");
  const Tensor& mv = t->value(m);
  if (static_cast<int>(col_ids.size()) != mv.rows())
    throw Error("pick: " + std::to_string(col_ids.size()) + " indices for " + shape_str(mv));
  Tape::Node n;
  n.op = Tape::Op::kPick;
  n.a = m.id;
  n.idx = col_ids;
  n.value = Tensor::zeros(mv.rows(), 1);
  for (int i = 0; i < mv.rows(); ++i) {
    if (col_ids[static_cast<size_t>(i)] < 0 || col_ids[static_cast<size_t>(i)] >= mv.cols())
      throw Error("pick: column " + std::to_string(col_ids[static_cast<size_t>(i)]) +
                  " out of range for " + shape_str(mv));
    n.value.at(i, 0) = mv.at(i, col_ids[static_cast<size_t>(i)]);
  }
  n.needs_grad = t->needs(m.id);
  return t->push(std::move(n));
}

Var slice_cols(Var a, int begin, int len) {
  Tape* t = tape_of(a, "slice_cols");
  const Tensor& av = t->value(a);
  if (begin < 0 || len < 1 || begin + len > av.cols())
    throw Error("slice_cols: range [" + std::to_string(begin) + ", " +
                std::to_string(begin + len) + ") out of " + shape_str(av));
  Tape::Node n;
  n.op = Tape::Op::kSliceCols;
  n.a = a.id;
  n.i0 = begin;
  n.i1 = len;
  n.value = Tensor::zeros(av.rows(), len);
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < len; ++j) n.value.at(i, j) = av.at(i, begin + j);
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var reshape(Var a, int r, int c) {
  Tape* t = tape_of(a, "reshape");
  const Tensor& av = t->value(a);
  if (static_cast<size_t>(r) * static_cast<size_t>(c) != av.size())
    throw Error("reshape: cannot view " + shape_str(av) + " as [" + std::to_string(r) + "x" +
                std::to_string(c) + "]");
  Tape::Node n;
  n.op = Tape::Op::kReshape;
  n.a = a.id;
  n.value.shape = {r, c};
  n.value.data = av.data;
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var dropout(Var a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return a;  // eval mode is the exact identity
  Tape* t = tape_of(a, "dropout");
  const Tensor& av = t->value(a);
  Tape::Node n;
  n.op = Tape::Op::kDropout;
  n.a = a.id;
  n.value = av;
  n.mask.resize(av.size());
  double keep_scale = 1.0 / (1.0 - p);  // inverted dropout
  for (size_t i = 0; i < av.size(); ++i) {
    n.mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    n.value.data[i] *= n.mask[i];
  }
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var scale(Var a, double c) {
  Tape* t = tape_of(a, "scale");
  Tape::Node n;
  n.op = Tape::Op::kScale;
  n.a = a.id;
  n.c = c;
  n.value = t->value(a);
  for (double& x : n.value.data) x *= c;
  n.needs_grad = t->needs(a.id);
  return t->push(std::move(n));
}

Var scale_by(Var a, Var s) {
  same_tape(a, s, "scale_by");
  Tape* t = a.tape;
  const Tensor& sv = t->value(s);
  if (sv.size() != 1) throw Error("scale_by: scale operand is " + shape_str(sv) + ", expected 1x1");
  Tape::Node n;
  n.op = Tape::Op::kScaleBy;
  n.a = a.id;
  n.b = s.id;
  n.value = t->value(a);
  for (double& x : n.value.data) x *= sv.data[0];
  n.needs_grad = t->needs(a.id) || t->needs(s.id);
  return t->push(std::move(n));
}

double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params, double eps) {
  // Reverse-mode gradients.
  std::vector<Tensor> grads;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (Var v : vars) grads.push_back(tape.grad(v));
  }

  auto eval = [&](const std::vector<Tensor>& theta) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(theta.size());
    for (const Tensor& p : theta) vars.push_back(tape.leaf(p, false));
    return tape.scalar_value(f(tape, vars));
  };

  std::vector<Tensor> theta = params;
  double max_err = 0.0;
  for (size_t pi = 0; pi < theta.size(); ++pi) {
    for (size_t i = 0; i < theta[pi].size(); ++i) {
      double orig = theta[pi].data[i];
      theta[pi].data[i] = orig + eps;
      double fp = eval(theta);
      theta[pi].data[i] = orig - eps;
      double fm = eval(theta);
      theta[pi].data[i] = orig;
      double g_fd = (fp - fm) / (2.0 * eps);
      double g_ad = grads[pi].data[i];
      double err = std::abs(g_ad - g_fd) / std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace scenecap::ad
