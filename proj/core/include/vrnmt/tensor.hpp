#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vrnmt/error.hpp"

namespace vrnmt {

// Tensors are rank-1 (vector) or rank-2 (matrix), row-major, 64-bit.
struct Shape {
  std::uint8_t rank = 1;
  std::size_t rows = 0;  // rank-1: element count
  std::size_t cols = 1;
  std::size_t numel() const { return rank == 2 ? rows * cols : rows; }
  bool operator==(const Shape&) const = default;
};

inline Shape vec_shape(std::size_t n) { return Shape{1, n, 1}; }
inline Shape mat_shape(std::size_t r, std::size_t c) { return Shape{2, r, c}; }

struct Tensor {
  Shape shape{1, 0, 1};
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as data once ensure_grad() ran

  Tensor() = default;
  Tensor(Shape s, double fill = 0.0) : shape(s), data(s.numel(), fill) {}
  Tensor(Shape s, std::vector<double> d);

  static Tensor vec(std::vector<double> d);
  static Tensor mat(std::size_t r, std::size_t c, std::vector<double> d);

  std::size_t numel() const { return data.size(); }
  double& at(std::size_t r, std::size_t c) { return data[r * shape.cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape.cols + c]; }

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

// Stable (name, tensor) registry used for checkpoints, the optimizer, and
// gradient checking.  Order is the declaration order of the owning model.
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Handle to a node in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamically recorded computation tape. Forward values are computed eagerly
// as nodes are pushed; backward() walks the record in reverse exactly once.
// A graph is confined to one thread.
class Graph {
 public:
  // Leaf over a persistent tensor. The current value is copied in; after
  // backward(), d(loss)/d(tensor) is accumulated into tensor.grad when
  // requires_grad is set. Repeated calls with the same tensor return the
  // same node, so gradients of shared parameters accumulate additively.
  Var leaf(Tensor& t);

  // Constant input: participates in the forward pass, receives no gradient.
  Var constant(Tensor t);
  Var constant_vec(std::span<const double> v);

  Var matmul(Var a, Var b);     // [m,k]·[k,n] -> [m,n]
  Var matmul_nt(Var a, Var b);  // [m,k]·[n,k]^T -> [m,n]
  Var matvec(Var w, Var x);     // [m,n]·[n] -> [m]
  Var vecmat(Var x, Var a);     // [m]^T·[m,n] -> [n]
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var add_bias(Var m, Var b);     // [r,c] + broadcast [c]
  Var tanh_op(Var v);
  Var sigmoid(Var v);
  Var exp_op(Var v);
  Var log_op(Var v);  // input clamped to >= 1e-300
  Var softmax_row(Var v);
  Var log_softmax_row(Var v);
  Var concat(std::span<const Var> parts);  // rank-1 concatenation
  Var concat(std::initializer_list<Var> parts);
  Var stack_rows(std::span<const Var> rows);  // n rank-1 vectors -> [n,c]
  Var row(Var m, std::size_t i);              // matrix row as rank-1 (gather)
  Var slice(Var v, std::size_t begin, std::size_t len);  // rank-1 slice
  Var pick(Var v, std::size_t i);                        // element -> [1]
  Var sum(Var v);   // -> [1]
  Var mean(Var v);  // -> [1]
  Var scale(Var v, double k);
  Var add_const(Var v, double k);
  Var clamp(Var v, double lo, double hi);  // pass-through gradient inside

  // Seeds d(loss)=1 and accumulates gradients into every reachable leaf's
  // tensor. loss must be a scalar node of this graph.
  void backward(Var loss);

  const Tensor& value(Var v) const { return node(v.id).val; }
  double scalar(Var v) const;
  // Gradient buffer of a node after backward(); for tests and diagnostics.
  std::span<const double> grad_of(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf, constant, matmul, matmul_nt, matvec, vecmat, add, sub, mul,
    add_bias, tanh_fn, sigmoid_fn, exp_fn, log_fn, softmax_row,
    log_softmax_row, concat, stack_rows, row, slice, pick, sum_all,
    mean_all, scale_k, add_k, clamp_lh,
  };

  struct Node {
    Op op;
    bool needs_grad = false;
    int a = -1, b = -1;
    std::vector<int> many;  // concat / stack_rows inputs
    double c0 = 0.0, c1 = 0.0;
    std::size_t i0 = 0, i1 = 0;
    Tensor* target = nullptr;  // leaf only
    Tensor val;
    std::vector<double> grad;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Var push(Node&& n);
  void check(Var v, const char* who) const;
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_cache_;
};

}  // namespace vrnmt
