#include "vrnmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace vrnmt {

Tensor::Tensor(Shape s, std::vector<double> d) : shape(s), data(std::move(d)) {
  if (shape.numel() != data.size())
    throw Error("Tensor: shape/product mismatch (" + std::to_string(shape.numel()) +
                " vs " + std::to_string(data.size()) + ")");
}

Tensor Tensor::vec(std::vector<double> d) {
  const std::size_t n = d.size();
  return Tensor(vec_shape(n), std::move(d));
}

Tensor Tensor::mat(std::size_t r, std::size_t c, std::vector<double> d) {
  return Tensor(mat_shape(r, c), std::move(d));
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Graph::check(Var v, const char* who) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw Error(std::string(who) + ": var not in this graph");
}

Var Graph::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::leaf(Tensor& t) {
  auto it = leaf_cache_.find(&t);
  if (it != leaf_cache_.end()) return Var{it->second};
  Node n;
  n.op = Op::leaf;
  n.needs_grad = t.requires_grad;
  n.target = &t;
  n.val = t;  // snapshot of the current value
  Var v = push(std::move(n));
  leaf_cache_.emplace(&t, v.id);
  return v;
}

Var Graph::constant(Tensor t) {
  Node n;
  n.op = Op::constant;
  n.val = std::move(t);
  return push(std::move(n));
}

Var Graph::constant_vec(std::span<const double> v) {
  return constant(Tensor::vec(std::vector<double>(v.begin(), v.end())));
}

Var Graph::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& A = node(a.id).val;
  const Tensor& B = node(b.id).val;
  if (A.shape.rank != 2 || B.shape.rank != 2 || A.shape.cols != B.shape.rows)
    throw Error("matmul: incompatible shapes");
  const std::size_t m = A.shape.rows, k = A.shape.cols, n2 = B.shape.cols;
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(mat_shape(m, n2));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data[i * k + p];
      const double* brow = &B.data[p * n2];
      double* crow = &n.val.data[i * n2];
      for (std::size_t j = 0; j < n2; ++j) crow[j] += av * brow[j];
    }
  return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
  check(a, "matmul_nt");
  check(b, "matmul_nt");
  const Tensor& A = node(a.id).val;
  const Tensor& B = node(b.id).val;
  if (A.shape.rank != 2 || B.shape.rank != 2 || A.shape.cols != B.shape.cols)
    throw Error("matmul_nt: incompatible shapes");
  const std::size_t m = A.shape.rows, k = A.shape.cols, n2 = B.shape.rows;
  Node n;
  n.op = Op::matmul_nt;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(mat_shape(m, n2));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      const double* arow = &A.data[i * k];
      const double* brow = &B.data[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      n.val.data[i * n2 + j] = acc;
    }
  return push(std::move(n));
}

Var Graph::matvec(Var w, Var x) {
  check(w, "matvec");
  check(x, "matvec");
  const Tensor& W = node(w.id).val;
  const Tensor& X = node(x.id).val;
  if (W.shape.rank != 2 || X.shape.rank != 1 || W.shape.cols != X.shape.rows)
    throw Error("matvec: incompatible shapes");
  const std::size_t m = W.shape.rows, k = W.shape.cols;
  Node n;
  n.op = Op::matvec;
  n.a = w.id;
  n.b = x.id;
  n.needs_grad = node(w.id).needs_grad || node(x.id).needs_grad;
  n.val = Tensor(vec_shape(m));
  for (std::size_t i = 0; i < m; ++i) {
    const double* wrow = &W.data[i * k];
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += wrow[p] * X.data[p];
    n.val.data[i] = acc;
  }
  return push(std::move(n));
}

Var Graph::vecmat(Var x, Var a) {
  check(x, "vecmat");
  check(a, "vecmat");
  const Tensor& X = node(x.id).val;
  const Tensor& A = node(a.id).val;
  if (X.shape.rank != 1 || A.shape.rank != 2 || X.shape.rows != A.shape.rows)
    throw Error("vecmat: incompatible shapes");
  const std::size_t m = A.shape.rows, c = A.shape.cols;
  Node n;
  n.op = Op::vecmat;
  n.a = x.id;
  n.b = a.id;
  n.needs_grad = node(x.id).needs_grad || node(a.id).needs_grad;
  n.val = Tensor(vec_shape(c));
  for (std::size_t i = 0; i < m; ++i) {
    const double xv = X.data[i];
    const double* arow = &A.data[i * c];
    for (std::size_t j = 0; j < c; ++j) n.val.data[j] += xv * arow[j];
  }
  return push(std::move(n));
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!(a.shape == b.shape)) throw Error(std::string(who) + ": shape mismatch");
}
}  // namespace

Var Graph::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Tensor& A = node(a.id).val;
  const Tensor& B = node(b.id).val;
  require_same_shape(A, B, "add");
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(A.shape);
  for (std::size_t i = 0; i < A.data.size(); ++i)
    n.val.data[i] = A.data[i] + B.data[i];
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  const Tensor& A = node(a.id).val;
  const Tensor& B = node(b.id).val;
  require_same_shape(A, B, "sub");
  Node n;
  n.op = Op::sub;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(A.shape);
  for (std::size_t i = 0; i < A.data.size(); ++i)
    n.val.data[i] = A.data[i] - B.data[i];
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Tensor& A = node(a.id).val;
  const Tensor& B = node(b.id).val;
  require_same_shape(A, B, "mul");
  Node n;
  n.op = Op::mul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(A.shape);
  for (std::size_t i = 0; i < A.data.size(); ++i)
    n.val.data[i] = A.data[i] * B.data[i];
  return push(std::move(n));
}

Var Graph::add_bias(Var m, Var b) {
  check(m, "add_bias");
  check(b, "add_bias");
  const Tensor& M = node(m.id).val;
  const Tensor& B = node(b.id).val;
  if (M.shape.rank != 2 || B.shape.rank != 1 || B.shape.rows != M.shape.cols)
    throw Error("add_bias: incompatible shapes");
  Node n;
  n.op = Op::add_bias;
  n.a = m.id;
  n.b = b.id;
  n.needs_grad = node(m.id).needs_grad || node(b.id).needs_grad;
  n.val = Tensor(M.shape);
  const std::size_t c = M.shape.cols;
  for (std::size_t i = 0; i < M.shape.rows; ++i)
    for (std::size_t j = 0; j < c; ++j)
      n.val.data[i * c + j] = M.data[i * c + j] + B.data[j];
  return push(std::move(n));
}

namespace {
template <typename F>
Tensor map_unary(const Tensor& in, F f) {
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = f(in.data[i]);
  return out;
}
}  // namespace

Var Graph::tanh_op(Var v) {
  check(v, "tanh");
  Node n;
  n.op = Op::tanh_fn;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val, [](double x) { return std::tanh(x); });
  return push(std::move(n));
}

Var Graph::sigmoid(Var v) {
  check(v, "sigmoid");
  Node n;
  n.op = Op::sigmoid_fn;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val, [](double x) {
    // split on sign so exp never overflows
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return push(std::move(n));
}

Var Graph::exp_op(Var v) {
  check(v, "exp");
  Node n;
  n.op = Op::exp_fn;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val, [](double x) { return std::exp(x); });
  return push(std::move(n));
}

Var Graph::log_op(Var v) {
  check(v, "log");
  Node n;
  n.op = Op::log_fn;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val,
                    [](double x) { return std::log(std::max(x, 1e-300)); });
  return push(std::move(n));
}

Var Graph::softmax_row(Var v) {
  check(v, "softmax_row");
  const Tensor& X = node(v.id).val;
  Node n;
  n.op = Op::softmax_row;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor(X.shape);
  const std::size_t rows = X.shape.rank == 2 ? X.shape.rows : 1;
  const std::size_t c = X.shape.rank == 2 ? X.shape.cols : X.shape.rows;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = &X.data[i * c];
    double* y = &n.val.data[i * c];
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return push(std::move(n));
}

Var Graph::log_softmax_row(Var v) {
  check(v, "log_softmax_row");
  const Tensor& X = node(v.id).val;
  Node n;
  n.op = Op::log_softmax_row;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor(X.shape);
  const std::size_t rows = X.shape.rank == 2 ? X.shape.rows : 1;
  const std::size_t c = X.shape.rank == 2 ? X.shape.cols : X.shape.rows;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = &X.data[i * c];
    double* y = &n.val.data[i * c];
    double mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lz;
  }
  return push(std::move(n));
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat: no inputs");
  std::size_t total = 0;
  Node n;
  n.op = Op::concat;
  for (Var p : parts) {
    check(p, "concat");
    const Tensor& T = node(p.id).val;
    if (T.shape.rank != 1) throw Error("concat: rank-1 inputs only");
    total += T.shape.rows;
    n.needs_grad = n.needs_grad || node(p.id).needs_grad;
    n.many.push_back(p.id);
  }
  n.val = Tensor(vec_shape(total));
  std::size_t off = 0;
  for (int pid : n.many) {
    const Tensor& T = node(pid).val;
    std::copy(T.data.begin(), T.data.end(), n.val.data.begin() + off);
    off += T.data.size();
  }
  return push(std::move(n));
}

Var Graph::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var Graph::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw Error("stack_rows: no inputs");
  check(rows[0], "stack_rows");
  const std::size_t c = node(rows[0].id).val.shape.rows;
  Node n;
  n.op = Op::stack_rows;
  n.val = Tensor(mat_shape(rows.size(), c));
  std::size_t i = 0;
  for (Var r : rows) {
    check(r, "stack_rows");
    const Tensor& T = node(r.id).val;
    if (T.shape.rank != 1 || T.shape.rows != c)
      throw Error("stack_rows: inconsistent row length");
    n.needs_grad = n.needs_grad || node(r.id).needs_grad;
    n.many.push_back(r.id);
    std::copy(T.data.begin(), T.data.end(), n.val.data.begin() + i * c);
    ++i;
  }
  return push(std::move(n));
}

Var Graph::row(Var m, std::size_t i) {
  check(m, "row");
  const Tensor& M = node(m.id).val;
  if (M.shape.rank != 2 || i >= M.shape.rows) throw Error("row: out of range");
  Node n;
  n.op = Op::row;
  n.a = m.id;
  n.i0 = i;
  n.needs_grad = node(m.id).needs_grad;
  const std::size_t c = M.shape.cols;
  n.val = Tensor(vec_shape(c));
  std::copy(M.data.begin() + i * c, M.data.begin() + (i + 1) * c,
            n.val.data.begin());
  return push(std::move(n));
}

Var Graph::slice(Var v, std::size_t begin, std::size_t len) {
  check(v, "slice");
  const Tensor& X = node(v.id).val;
  if (X.shape.rank != 1 || begin + len > X.shape.rows)
    throw Error("slice: out of range");
  Node n;
  n.op = Op::slice;
  n.a = v.id;
  n.i0 = begin;
  n.i1 = len;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor(vec_shape(len));
  std::copy(X.data.begin() + begin, X.data.begin() + begin + len,
            n.val.data.begin());
  return push(std::move(n));
}

Var Graph::pick(Var v, std::size_t i) {
  check(v, "pick");
  const Tensor& X = node(v.id).val;
  if (i >= X.data.size()) throw Error("pick: out of range");
  Node n;
  n.op = Op::pick;
  n.a = v.id;
  n.i0 = i;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor::vec({X.data[i]});
  return push(std::move(n));
}

Var Graph::sum(Var v) {
  check(v, "sum");
  const Tensor& X = node(v.id).val;
  double acc = 0.0;
  for (double x : X.data) acc += x;
  Node n;
  n.op = Op::sum_all;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor::vec({acc});
  return push(std::move(n));
}

Var Graph::mean(Var v) {
  check(v, "mean");
  const Tensor& X = node(v.id).val;
  if (X.data.empty()) throw Error("mean: empty input");
  double acc = 0.0;
  for (double x : X.data) acc += x;
  Node n;
  n.op = Op::mean_all;
  n.a = v.id;
  n.needs_grad = node(v.id).needs_grad;
  n.val = Tensor::vec({acc / static_cast<double>(X.data.size())});
  return push(std::move(n));
}

Var Graph::scale(Var v, double k) {
  check(v, "scale");
  Node n;
  n.op = Op::scale_k;
  n.a = v.id;
  n.c0 = k;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val, [k](double x) { return k * x; });
  return push(std::move(n));
}

Var Graph::add_const(Var v, double k) {
  check(v, "add_const");
  Node n;
  n.op = Op::add_k;
  n.a = v.id;
  n.c0 = k;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val, [k](double x) { return x + k; });
  return push(std::move(n));
}

Var Graph::clamp(Var v, double lo, double hi) {
  check(v, "clamp");
  Node n;
  n.op = Op::clamp_lh;
  n.a = v.id;
  n.c0 = lo;
  n.c1 = hi;
  n.needs_grad = node(v.id).needs_grad;
  n.val = map_unary(node(v.id).val,
                    [lo, hi](double x) { return std::min(std::max(x, lo), hi); });
  return push(std::move(n));
}

double Graph::scalar(Var v) const {
  check(v, "scalar");
  const Tensor& T = node(v.id).val;
  if (T.numel() != 1) throw Error("scalar: node is not scalar");
  return T.data[0];
}

std::span<const double> Graph::grad_of(Var v) const {
  check(v, "grad_of");
  return node(v.id).grad;
}

void Graph::backward(Var loss) {
  check(loss, "backward");
  if (node(loss.id).val.numel() != 1)
    throw Error("backward: loss must be scalar");
  for (auto& n : nodes_) n.grad.assign(n.needs_grad ? n.val.numel() : 0, 0.0);
  Node& top = node(loss.id);
  if (!top.needs_grad) return;  // no parameter reachable
  top.grad[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    backward_node(n);
  }
}

void Graph::backward_node(Node& n) {
  auto g_in = [this](int id) -> std::vector<double>* {
    Node& in = node(id);
    if (!in.needs_grad) return nullptr;
    return &in.grad;
  };
  const std::vector<double>& g = n.grad;
  switch (n.op) {
    case Op::leaf:
      if (n.target && n.target->requires_grad) {
        n.target->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) n.target->grad[i] += g[i];
      }
      break;
    case Op::constant:
      break;
    case Op::matmul: {
      const Tensor& A = node(n.a).val;
      const Tensor& B = node(n.b).val;
      const std::size_t m = A.shape.rows, k = A.shape.cols, n2 = B.shape.cols;
      if (auto* ga = g_in(n.a)) {
        // dA = G · B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double* grow = &g[i * n2];
            const double* brow = &B.data[p * n2];
            double acc = 0.0;
            for (std::size_t j = 0; j < n2; ++j) acc += grow[j] * brow[j];
            (*ga)[i * k + p] += acc;
          }
      }
      if (auto* gb = g_in(n.b)) {
        // dB = A^T · G
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A.data[i * k + p];
            const double* grow = &g[i * n2];
            double* brow = &(*gb)[p * n2];
            for (std::size_t j = 0; j < n2; ++j) brow[j] += av * grow[j];
          }
      }
      break;
    }
    case Op::matmul_nt: {
      const Tensor& A = node(n.a).val;
      const Tensor& B = node(n.b).val;
      const std::size_t m = A.shape.rows, k = A.shape.cols, n2 = B.shape.rows;
      if (auto* ga = g_in(n.a)) {
        // dA = G · B
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n2; ++j) {
            const double gv = g[i * n2 + j];
            const double* brow = &B.data[j * k];
            double* arow = &(*ga)[i * k];
            for (std::size_t p = 0; p < k; ++p) arow[p] += gv * brow[p];
          }
      }
      if (auto* gb = g_in(n.b)) {
        // dB = G^T · A
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n2; ++j) {
            const double gv = g[i * n2 + j];
            const double* arow = &A.data[i * k];
            double* brow = &(*gb)[j * k];
            for (std::size_t p = 0; p < k; ++p) brow[p] += gv * arow[p];
          }
      }
      break;
    }
    case Op::matvec: {
      const Tensor& W = node(n.a).val;
      const Tensor& X = node(n.b).val;
      const std::size_t m = W.shape.rows, k = W.shape.cols;
      if (auto* gw = g_in(n.a)) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gv = g[i];
          double* wrow = &(*gw)[i * k];
          for (std::size_t p = 0; p < k; ++p) wrow[p] += gv * X.data[p];
        }
      }
      if (auto* gx = g_in(n.b)) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gv = g[i];
          const double* wrow = &W.data[i * k];
          for (std::size_t p = 0; p < k; ++p) (*gx)[p] += gv * wrow[p];
        }
      }
      break;
    }
    case Op::vecmat: {
      const Tensor& X = node(n.a).val;
      const Tensor& A = node(n.b).val;
      const std::size_t m = A.shape.rows, c = A.shape.cols;
      if (auto* gx = g_in(n.a)) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = &A.data[i * c];
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += arow[j] * g[j];
          (*gx)[i] += acc;
        }
      }
      if (auto* ga = g_in(n.b)) {
        for (std::size_t i = 0; i < m; ++i) {
          const double xv = X.data[i];
          double* arow = &(*ga)[i * c];
          for (std::size_t j = 0; j < c; ++j) arow[j] += xv * g[j];
        }
      }
      break;
    }
    case Op::add:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = g_in(n.b))
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      break;
    case Op::sub:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = g_in(n.b))
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      break;
    case Op::mul: {
      const Tensor& A = node(n.a).val;
      const Tensor& B = node(n.b).val;
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B.data[i];
      if (auto* gb = g_in(n.b))
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A.data[i];
      break;
    }
    case Op::add_bias: {
      const Tensor& M = node(n.a).val;
      const std::size_t c = M.shape.cols;
      if (auto* gm = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
      if (auto* gb = g_in(n.b))
        for (std::size_t i = 0; i < M.shape.rows; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[i * c + j];
      break;
    }
    case Op::tanh_fn:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.val.data[i];
          (*ga)[i] += g[i] * (1.0 - y * y);
        }
      break;
    case Op::sigmoid_fn:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.val.data[i];
          (*ga)[i] += g[i] * y * (1.0 - y);
        }
      break;
    case Op::exp_fn:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i)
          (*ga)[i] += g[i] * n.val.data[i];
      break;
    case Op::log_fn:
      if (auto* ga = g_in(n.a)) {
        const Tensor& X = node(n.a).val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = X.data[i];
          if (x >= 1e-300) (*ga)[i] += g[i] / x;
          // below the clamp the function is constant
        }
      }
      break;
    case Op::softmax_row: {
      if (auto* ga = g_in(n.a)) {
        const std::size_t rows = n.val.shape.rank == 2 ? n.val.shape.rows : 1;
        const std::size_t c =
            n.val.shape.rank == 2 ? n.val.shape.cols : n.val.shape.rows;
        for (std::size_t i = 0; i < rows; ++i) {
          const double* y = &n.val.data[i * c];
          const double* gr = &g[i * c];
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gr[j] * y[j];
          double* out = &(*ga)[i * c];
          for (std::size_t j = 0; j < c; ++j) out[j] += (gr[j] - dot) * y[j];
        }
      }
      break;
    }
    case Op::log_softmax_row: {
      if (auto* ga = g_in(n.a)) {
        const std::size_t rows = n.val.shape.rank == 2 ? n.val.shape.rows : 1;
        const std::size_t c =
            n.val.shape.rank == 2 ? n.val.shape.cols : n.val.shape.rows;
        for (std::size_t i = 0; i < rows; ++i) {
          const double* y = &n.val.data[i * c];
          const double* gr = &g[i * c];
          double gsum = 0.0;
          for (std::size_t j = 0; j < c; ++j) gsum += gr[j];
          double* out = &(*ga)[i * c];
          for (std::size_t j = 0; j < c; ++j)
            out[j] += gr[j] - std::exp(y[j]) * gsum;
        }
      }
      break;
    }
    case Op::concat: {
      std::size_t off = 0;
      for (int pid : n.many) {
        Node& in = node(pid);
        const std::size_t len = in.val.numel();
        if (in.needs_grad)
          for (std::size_t i = 0; i < len; ++i) in.grad[i] += g[off + i];
        off += len;
      }
      break;
    }
    case Op::stack_rows: {
      const std::size_t c = n.val.shape.cols;
      std::size_t i = 0;
      for (int pid : n.many) {
        Node& in = node(pid);
        if (in.needs_grad)
          for (std::size_t j = 0; j < c; ++j) in.grad[j] += g[i * c + j];
        ++i;
      }
      break;
    }
    case Op::row: {
      if (auto* ga = g_in(n.a)) {
        const std::size_t c = n.val.shape.rows;
        for (std::size_t j = 0; j < c; ++j) (*ga)[n.i0 * c + j] += g[j];
      }
      break;
    }
    case Op::slice:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < n.i1; ++i) (*ga)[n.i0 + i] += g[i];
      break;
    case Op::pick:
      if (auto* ga = g_in(n.a)) (*ga)[n.i0] += g[0];
      break;
    case Op::sum_all:
      if (auto* ga = g_in(n.a))
        for (auto& v : *ga) v += g[0];
      break;
    case Op::mean_all:
      if (auto* ga = g_in(n.a)) {
        const double k = g[0] / static_cast<double>(ga->size());
        for (auto& v : *ga) v += k;
      }
      break;
    case Op::scale_k:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += n.c0 * g[i];
      break;
    case Op::add_k:
      if (auto* ga = g_in(n.a))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      break;
    case Op::clamp_lh:
      if (auto* ga = g_in(n.a)) {
        const Tensor& X = node(n.a).val;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X.data[i] >= n.c0 && X.data[i] <= n.c1) (*ga)[i] += g[i];
      }
      break;
  }
}

}  // namespace vrnmt
