#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace semgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Evaluation-time failure. Recoverable errors (the implied covariance left
/// the positive-definite cone, a structural matrix became singular) can be
/// handled by the optimizer through step shortening; non-recoverable ones
/// indicate a broken graph or input.
class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& what, bool recoverable)
      : std::runtime_error(what), recoverable_(recoverable) {}
  bool recoverable() const { return recoverable_; }

 private:
  bool recoverable_;
};

enum class Op {
  Constant,
  ParamGather,
  MatMul,
  Transpose,
  Inverse,
  LogDet,
  Trace,
  Add,
  Sub,
  Neg,
  Scale,
  EwiseSquare,
  EwiseAbs,
  SumAll,
  Kron,
  Reshape,
};

using NodeId = int;

/// One cell of a param-gather node: entry (row, col) reads theta[index].
struct GatherEntry {
  int row = 0;
  int col = 0;
  int index = 0;
};

struct Node {
  NodeId id = -1;
  Op op = Op::Constant;
  std::vector<NodeId> inputs;
  int rows = 0;
  int cols = 0;
  Matrix value;                      // Constant payload; ParamGather fill
  std::vector<GatherEntry> gathers;  // ParamGather only
  double factor = 1.0;               // Scale only
};

/// Append-only DAG of matrix-valued nodes. Shapes are checked at build time;
/// a built graph is immutable during evaluation, so forward/backward can run
/// concurrently on independent caches.
class Graph {
 public:
  explicit Graph(int theta_dim);

  NodeId constant(const Matrix& value);
  NodeId param_gather(const Matrix& fill, std::vector<GatherEntry> entries);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId inverse(NodeId a);
  NodeId logdet(NodeId a);
  NodeId trace(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId scale(NodeId a, double factor);
  NodeId ewise_square(NodeId a);
  NodeId ewise_abs(NodeId a);
  NodeId sum_all(NodeId a);
  NodeId kron(NodeId a, NodeId b);
  NodeId reshape(NodeId a, int rows, int cols);

  void set_output(NodeId id);

  int theta_dim() const { return theta_dim_; }
  NodeId output() const { return output_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(NodeId id) const;

 private:
  NodeId push(Node n);
  const Node& checked(NodeId id, const char* ctx) const;

  int theta_dim_;
  NodeId output_ = -1;
  std::vector<Node> nodes_;
};

/// Per-evaluation state: node values from one forward pass. Owned by a
/// single logical execution; the graph itself is never mutated. Storage is
/// reused across evaluations of the same graph.
struct EvalCache {
  std::vector<Matrix> values;
  Vector theta;
  bool valid = false;
  mutable std::vector<Matrix> adjoints;  // backward-pass scratch
};

/// Evaluates the output scalar at theta, caching every intermediate.
/// Throws EvalError (recoverable) when a Cholesky factorization fails or the
/// objective is non-finite.
double forward(const Graph& graph, const Vector& theta, EvalCache& cache);

/// Reverse-mode gradient of the cached forward pass with respect to theta.
Vector backward(const Graph& graph, const EvalCache& cache);

/// Hessian by central finite differences of the analytic gradient, with
/// per-coordinate step cbrt(machine epsilon)*max(1,|theta_i|), symmetrized.
Matrix hessian(const Graph& graph, const Vector& theta);

}  // namespace semgraph
