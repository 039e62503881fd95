#include "semgraph/graph.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <limits>
#include <utility>

namespace semgraph {

namespace {

bool nearly_symmetric(const Matrix& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

// Cholesky factor of a symmetric positive-definite matrix, or a recoverable
// evaluation error.
Eigen::LLT<Matrix> cholesky(const Matrix& a, const char* ctx) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success ||
      !(Matrix(llt.matrixL()).diagonal().minCoeff() > 0.0)) {
    throw EvalError(std::string(ctx) + ": matrix is not positive definite",
                    /*recoverable=*/true);
  }
  return llt;
}

Matrix symmetric_inverse(const Matrix& a, const char* ctx) {
  auto llt = cholesky(a, ctx);
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

Matrix general_inverse(const Matrix& a, const char* ctx) {
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) {
    throw EvalError(std::string(ctx) + ": matrix is singular",
                    /*recoverable=*/true);
  }
  return lu.inverse();
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Graph::Graph(int theta_dim) : theta_dim_(theta_dim) {
  if (theta_dim < 0) {
    throw std::invalid_argument("theta_dim must be nonnegative");
  }
}

const Node& Graph::node(NodeId id) const { return checked(id, "node"); }

const Node& Graph::checked(NodeId id, const char* ctx) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(ctx) + ": unknown node id " +
                                std::to_string(id));
  }
  return nodes_[id];
}

NodeId Graph::push(Node n) {
  n.id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

NodeId Graph::constant(const Matrix& value) {
  if (!value.allFinite()) {
    throw std::invalid_argument("constant: entries must be finite");
  }
  Node n;
  n.op = Op::Constant;
  n.rows = static_cast<int>(value.rows());
  n.cols = static_cast<int>(value.cols());
  n.value = value;
  return push(std::move(n));
}

NodeId Graph::param_gather(const Matrix& fill,
                           std::vector<GatherEntry> entries) {
  if (!fill.allFinite()) {
    throw std::invalid_argument("param_gather: fill entries must be finite");
  }
  std::vector<char> taken(fill.size(), 0);
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= fill.rows() || e.col < 0 ||
        e.col >= fill.cols()) {
      throw std::invalid_argument("param_gather: entry position out of range");
    }
    if (e.index < 0 || e.index >= theta_dim_) {
      throw std::invalid_argument("param_gather: theta index " +
                                  std::to_string(e.index) +
                                  " outside [0, " +
                                  std::to_string(theta_dim_) + ")");
    }
    char& cell = taken[e.col * fill.rows() + e.row];
    if (cell) {
      throw std::invalid_argument("param_gather: duplicate entry position");
    }
    cell = 1;
  }
  Node n;
  n.op = Op::ParamGather;
  n.rows = static_cast<int>(fill.rows());
  n.cols = static_cast<int>(fill.cols());
  n.value = fill;
  n.gathers = std::move(entries);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Node& na = checked(a, "matmul");
  const Node& nb = checked(b, "matmul");
  if (na.cols != nb.rows) {
    throw std::invalid_argument(
        "matmul: shape mismatch " + std::to_string(na.rows) + "x" +
        std::to_string(na.cols) + " * " + std::to_string(nb.rows) + "x" +
        std::to_string(nb.cols));
  }
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a, b};
  n.rows = na.rows;
  n.cols = nb.cols;
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Node& na = checked(a, "transpose");
  Node n;
  n.op = Op::Transpose;
  n.inputs = {a};
  n.rows = na.cols;
  n.cols = na.rows;
  return push(std::move(n));
}

NodeId Graph::inverse(NodeId a) {
  const Node& na = checked(a, "inverse");
  if (na.rows != na.cols) {
    throw std::invalid_argument("inverse: input must be square");
  }
  Node n;
  n.op = Op::Inverse;
  n.inputs = {a};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::logdet(NodeId a) {
  const Node& na = checked(a, "logdet");
  if (na.rows != na.cols) {
    throw std::invalid_argument("logdet: input must be square");
  }
  Node n;
  n.op = Op::LogDet;
  n.inputs = {a};
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

NodeId Graph::trace(NodeId a) {
  const Node& na = checked(a, "trace");
  if (na.rows != na.cols) {
    throw std::invalid_argument("trace: input must be square");
  }
  Node n;
  n.op = Op::Trace;
  n.inputs = {a};
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Node& na = checked(a, "add");
  const Node& nb = checked(b, "add");
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw std::invalid_argument("add: shape mismatch");
  }
  Node n;
  n.op = Op::Add;
  n.inputs = {a, b};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Node& na = checked(a, "sub");
  const Node& nb = checked(b, "sub");
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw std::invalid_argument("sub: shape mismatch");
  }
  Node n;
  n.op = Op::Sub;
  n.inputs = {a, b};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::neg(NodeId a) {
  const Node& na = checked(a, "neg");
  Node n;
  n.op = Op::Neg;
  n.inputs = {a};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
  if (!std::isfinite(factor)) {
    throw std::invalid_argument("scale: factor must be finite");
  }
  const Node& na = checked(a, "scale");
  Node n;
  n.op = Op::Scale;
  n.inputs = {a};
  n.rows = na.rows;
  n.cols = na.cols;
  n.factor = factor;
  return push(std::move(n));
}

NodeId Graph::ewise_square(NodeId a) {
  const Node& na = checked(a, "ewise_square");
  Node n;
  n.op = Op::EwiseSquare;
  n.inputs = {a};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::ewise_abs(NodeId a) {
  const Node& na = checked(a, "ewise_abs");
  Node n;
  n.op = Op::EwiseAbs;
  n.inputs = {a};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  checked(a, "sum_all");
  Node n;
  n.op = Op::SumAll;
  n.inputs = {a};
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

NodeId Graph::kron(NodeId a, NodeId b) {
  const Node& na = checked(a, "kron");
  const Node& nb = checked(b, "kron");
  Node n;
  n.op = Op::Kron;
  n.inputs = {a, b};
  n.rows = na.rows * nb.rows;
  n.cols = na.cols * nb.cols;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, int rows, int cols) {
  const Node& na = checked(a, "reshape");
  if (rows < 0 || cols < 0 || rows * cols != na.rows * na.cols) {
    throw std::invalid_argument("reshape: element count must be preserved");
  }
  Node n;
  n.op = Op::Reshape;
  n.inputs = {a};
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

void Graph::set_output(NodeId id) {
  const Node& n = checked(id, "set_output");
  if (n.rows != 1 || n.cols != 1) {
    throw std::invalid_argument("set_output: output node must be 1x1");
  }
  output_ = id;
}

double forward(const Graph& graph, const Vector& theta, EvalCache& cache) {
  if (graph.output() < 0) {
    throw std::logic_error("forward: no output node designated");
  }
  if (theta.size() != graph.theta_dim()) {
    throw std::invalid_argument("forward: theta has length " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(graph.theta_dim()));
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("forward: theta entries must be finite");
  }

  cache.valid = false;
  cache.theta = theta;
  // keep allocated storage across evaluations; Eigen assignment reuses it
  if (static_cast<int>(cache.values.size()) != graph.size()) {
    cache.values.assign(graph.size(), Matrix());
  }

  for (NodeId id = 0; id < graph.size(); ++id) {
    const Node& n = graph.node(id);
    Matrix& out = cache.values[id];
    switch (n.op) {
      case Op::Constant:
        out = n.value;
        break;
      case Op::ParamGather: {
        out = n.value;
        for (const auto& e : n.gathers) out(e.row, e.col) = theta(e.index);
        break;
      }
      case Op::MatMul:
        out = cache.values[n.inputs[0]] * cache.values[n.inputs[1]];
        break;
      case Op::Transpose:
        out = cache.values[n.inputs[0]].transpose();
        break;
      case Op::Inverse: {
        const Matrix& a = cache.values[n.inputs[0]];
        out = nearly_symmetric(a) ? symmetric_inverse(a, "inverse")
                                  : general_inverse(a, "inverse");
        break;
      }
      case Op::LogDet: {
        const Matrix& a = cache.values[n.inputs[0]];
        if (!nearly_symmetric(a)) {
          throw EvalError("logdet: input is not symmetric",
                          /*recoverable=*/false);
        }
        auto llt = cholesky(a, "logdet");
        out.resize(1, 1);
        out(0, 0) =
            2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
        break;
      }
      case Op::Trace:
        out.resize(1, 1);
        out(0, 0) = cache.values[n.inputs[0]].trace();
        break;
      case Op::Add:
        out = cache.values[n.inputs[0]] + cache.values[n.inputs[1]];
        break;
      case Op::Sub:
        out = cache.values[n.inputs[0]] - cache.values[n.inputs[1]];
        break;
      case Op::Neg:
        out = -cache.values[n.inputs[0]];
        break;
      case Op::Scale:
        out = n.factor * cache.values[n.inputs[0]];
        break;
      case Op::EwiseSquare:
        out = cache.values[n.inputs[0]].array().square();
        break;
      case Op::EwiseAbs:
        out = cache.values[n.inputs[0]].array().abs();
        break;
      case Op::SumAll:
        out.resize(1, 1);
        out(0, 0) = cache.values[n.inputs[0]].sum();
        break;
      case Op::Kron:
        out = Eigen::kroneckerProduct(cache.values[n.inputs[0]],
                                      cache.values[n.inputs[1]]);
        break;
      case Op::Reshape:
        out = cache.values[n.inputs[0]].reshaped(n.rows, n.cols);
        break;
    }
  }

  const double value = cache.values[graph.output()](0, 0);
  if (!std::isfinite(value)) {
    throw EvalError("forward: objective evaluated to a non-finite value",
                    /*recoverable=*/true);
  }
  cache.valid = true;
  return value;
}

Vector backward(const Graph& graph, const EvalCache& cache) {
  if (!cache.valid || static_cast<int>(cache.values.size()) != graph.size()) {
    throw std::logic_error("backward: stale or missing forward cache");
  }

  std::vector<Matrix>& adjoint = cache.adjoints;
  if (static_cast<int>(adjoint.size()) != graph.size()) {
    adjoint.assign(graph.size(), Matrix());
  }
  for (NodeId id = 0; id < graph.size(); ++id) {
    const Node& n = graph.node(id);
    adjoint[id].setZero(n.rows, n.cols);
  }
  adjoint[graph.output()](0, 0) = 1.0;

  Vector grad = Vector::Zero(graph.theta_dim());

  for (NodeId id = graph.size() - 1; id >= 0; --id) {
    const Node& n = graph.node(id);
    const Matrix& g = adjoint[id];
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::ParamGather:
        for (const auto& e : n.gathers) grad(e.index) += g(e.row, e.col);
        break;
      case Op::MatMul: {
        const Matrix& a = cache.values[n.inputs[0]];
        const Matrix& b = cache.values[n.inputs[1]];
        adjoint[n.inputs[0]] += g * b.transpose();
        adjoint[n.inputs[1]] += a.transpose() * g;
        break;
      }
      case Op::Transpose:
        adjoint[n.inputs[0]] += g.transpose();
        break;
      case Op::Inverse: {
        const Matrix& inv = cache.values[id];
        adjoint[n.inputs[0]] -= inv.transpose() * g * inv.transpose();
        break;
      }
      case Op::LogDet: {
        const Matrix& a = cache.values[n.inputs[0]];
        adjoint[n.inputs[0]] +=
            g(0, 0) * symmetric_inverse(a, "logdet gradient").transpose();
        break;
      }
      case Op::Trace: {
        const Node& in = graph.node(n.inputs[0]);
        adjoint[n.inputs[0]] +=
            g(0, 0) * Matrix::Identity(in.rows, in.cols);
        break;
      }
      case Op::Add:
        adjoint[n.inputs[0]] += g;
        adjoint[n.inputs[1]] += g;
        break;
      case Op::Sub:
        adjoint[n.inputs[0]] += g;
        adjoint[n.inputs[1]] -= g;
        break;
      case Op::Neg:
        adjoint[n.inputs[0]] -= g;
        break;
      case Op::Scale:
        adjoint[n.inputs[0]] += n.factor * g;
        break;
      case Op::EwiseSquare:
        adjoint[n.inputs[0]] +=
            2.0 * cache.values[n.inputs[0]].cwiseProduct(g);
        break;
      case Op::EwiseAbs: {
        const Matrix& a = cache.values[n.inputs[0]];
        adjoint[n.inputs[0]] +=
            a.unaryExpr([](double x) { return sign0(x); }).cwiseProduct(g);
        break;
      }
      case Op::SumAll: {
        const Node& in = graph.node(n.inputs[0]);
        adjoint[n.inputs[0]] +=
            g(0, 0) * Matrix::Ones(in.rows, in.cols);
        break;
      }
      case Op::Kron: {
        const Matrix& a = cache.values[n.inputs[0]];
        const Matrix& b = cache.values[n.inputs[1]];
        Matrix& da = adjoint[n.inputs[0]];
        Matrix& db = adjoint[n.inputs[1]];
        const int p = static_cast<int>(b.rows());
        const int q = static_cast<int>(b.cols());
        for (int i = 0; i < a.rows(); ++i) {
          for (int j = 0; j < a.cols(); ++j) {
            const auto block = g.block(i * p, j * q, p, q);
            da(i, j) += block.cwiseProduct(b).sum();
            db += a(i, j) * block;
          }
        }
        break;
      }
      case Op::Reshape: {
        const Node& in = graph.node(n.inputs[0]);
        adjoint[n.inputs[0]] += g.reshaped(in.rows, in.cols);
        break;
      }
    }
  }
  return grad;
}

Matrix hessian(const Graph& graph, const Vector& theta) {
  const int dim = graph.theta_dim();
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  Matrix h(dim, dim);
  EvalCache cache;
  Vector probe = theta;
  for (int i = 0; i < dim; ++i) {
    const double step = base * std::max(1.0, std::abs(theta(i)));
    probe(i) = theta(i) + step;
    forward(graph, probe, cache);
    const Vector gplus = backward(graph, cache);
    probe(i) = theta(i) - step;
    forward(graph, probe, cache);
    const Vector gminus = backward(graph, cache);
    probe(i) = theta(i);
    h.col(i) = (gplus - gminus) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace semgraph
