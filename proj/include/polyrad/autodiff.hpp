#pragma once

// Minimal tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph records nodes in creation order, which is a topological order by
// construction: an op can only reference nodes that already exist. backward()
// walks the tape in reverse. Persistent weights live in Parameter objects and
// are bound into a graph per forward pass; their gradients accumulate (+=)
// across backward calls until zero_grad() is called.
//
// Broadcasting is limited to exact shape matches or a single-element operand.
// Bias addition and row replication are separate named ops.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace polyrad::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major 2-D access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(double v);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Learnable array whose lifetime spans many graphs.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::size_t> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Graph&, Node&)> backward;
  bool requires_grad = false;
  Parameter* param = nullptr;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Differentiable leaf owned by the graph (gradient read back via Var::grad).
  Var leaf(Tensor value);
  /// Binds a persistent parameter; backward() accumulates into p.grad.
  Var param(Parameter& p);
  /// Binds a parameter read-only (inference on shared weights).
  Var param(const Parameter& p);

  /// Records an op result. Used by the op implementations.
  Var record(Tensor value, std::vector<std::size_t> parents,
             std::function<void(Graph&, Node&)> backward);

  /// Reverse sweep from a single-element loss. Resets every node gradient
  /// first, so calling it twice on the same graph is idempotent for graph
  /// nodes; bound parameters still accumulate.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return *nodes_[id]; }
  const Node& node(std::size_t id) const { return *nodes_[id]; }

  /// When on, relu and abs_sum append the sign of every input they see.
  /// Two evaluations with equal signatures lie on the same smooth piece.
  void track_kinks(bool on) { track_kinks_ = on; }
  void note_signs(std::span<const double> x);
  const std::vector<std::int8_t>& kink_signature() const { return signs_; }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  bool track_kinks_ = false;
  std::vector<std::int8_t> signs_;
};

// ---- ops ------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double s);
Var add_scalar(Var a, double s);
Var power(Var a, int exponent);
Var relu(Var a);

Var mean(Var a);
Var sum(Var a);
Var abs_sum(Var a);  // subgradient 0 at the kink
Var square_sum(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var softmax_rows(Var a);
Var reshape(Var a, Shape shape);

/// x[m x n] + bias[n] added to every row.
Var add_rowwise(Var x, Var bias);
/// [m x n] -> [1 x n] column means.
Var mean_rows(Var x);
/// [1 x n] -> [m x n].
Var repeat_rows(Var x, std::size_t m);

/// Cross-correlation of x[H x W x Cin] with kernels[k x k x Cin x Cout],
/// zero padding (k-1)/2, output [Ho x Wo x Cout], Ho = (H + 2p - k)/s + 1.
Var conv2d(Var x, Var kernels, std::size_t stride);

// ---- tensor helpers (no graph) ---------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace polyrad::ad
