#include "semgraph/model.hpp"

#include <algorithm>
#include <cmath>

namespace semgraph {

namespace {

void check_symmetric_pattern(const SlotMatrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(name) + " must be square");
  }
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = j + 1; i < m.rows(); ++i) {
      if (!(m(i, j) == m(j, i))) {
        throw std::invalid_argument(std::string(name) +
                                    " slot pattern is not symmetric");
      }
    }
  }
}

void mark_used(const SlotMatrix& m, int theta_dim, std::vector<char>& used,
               const char* name) {
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) {
      const Slot& s = m(i, j);
      if (!s.is_free()) continue;
      if (s.index >= theta_dim) {
        throw std::invalid_argument(std::string(name) +
                                    ": free index exceeds theta_dim");
      }
      used[s.index] = 1;
    }
  }
}

// vech-ordered gather node for a symmetric slot matrix, expanded to the full
// matrix through the duplication matrix.
NodeId symmetric_matrix_node(Graph& graph, const SlotMatrix& m) {
  const int p = m.rows();
  const int q = p * (p + 1) / 2;
  Matrix fill = Matrix::Zero(q, 1);
  std::vector<GatherEntry> entries;
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) {
      const Slot& s = m(i, j);
      const int k = vech_index(i, j, p);
      if (s.is_free()) {
        entries.push_back({k, 0, s.index});
      } else {
        fill(k, 0) = s.value;
      }
    }
  }
  NodeId vech_node = graph.param_gather(fill, std::move(entries));
  NodeId vec_node = graph.matmul(graph.constant(duplication_matrix(p)),
                                 vech_node);
  return graph.reshape(vec_node, p, p);
}

NodeId dense_matrix_node(Graph& graph, const SlotMatrix& m) {
  Matrix fill = Matrix::Zero(m.rows(), m.cols());
  std::vector<GatherEntry> entries;
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) {
      const Slot& s = m(i, j);
      if (s.is_free()) {
        entries.push_back({i, j, s.index});
      } else {
        fill(i, j) = s.value;
      }
    }
  }
  return graph.param_gather(fill, std::move(entries));
}

}  // namespace

void validate(const ParameterSpec& spec) {
  const int p = spec.lambda.rows();
  const int m = spec.lambda.cols();
  if (p <= 0 || m <= 0) {
    throw std::invalid_argument("lambda must have positive dimensions");
  }
  if (spec.psi.rows() != m || spec.psi.cols() != m) {
    throw std::invalid_argument("psi must be M x M");
  }
  if (spec.b0.rows() != m || spec.b0.cols() != m) {
    throw std::invalid_argument("b0 must be M x M");
  }
  if (spec.theta.rows() != p || spec.theta.cols() != p) {
    throw std::invalid_argument("theta must be P x P");
  }
  check_symmetric_pattern(spec.psi, "psi");
  check_symmetric_pattern(spec.theta, "theta");
  for (int i = 0; i < m; ++i) {
    const Slot& d = spec.b0(i, i);
    if (d.is_free() || d.value != 0.0) {
      throw std::invalid_argument("b0 diagonal must be fixed to zero");
    }
  }
  if (static_cast<int>(spec.labels.size()) != spec.theta_dim) {
    throw std::invalid_argument("labels must have one entry per free index");
  }
  std::vector<char> used(spec.theta_dim, 0);
  mark_used(spec.lambda, spec.theta_dim, used, "lambda");
  mark_used(spec.psi, spec.theta_dim, used, "psi");
  mark_used(spec.b0, spec.theta_dim, used, "b0");
  mark_used(spec.theta, spec.theta_dim, used, "theta");
  for (int i = 0; i < spec.theta_dim; ++i) {
    if (!used[i]) {
      throw std::invalid_argument("free index " + std::to_string(i) +
                                  " is never referenced");
    }
  }
}

Vector vech(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("vech: input must be square");
  }
  const int p = static_cast<int>(a.rows());
  Vector out(p * (p + 1) / 2);
  int k = 0;
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) out(k++) = a(i, j);
  }
  return out;
}

int vech_index(int i, int j, int p) {
  // requires i >= j
  return j * p - j * (j - 1) / 2 + (i - j);
}

Matrix duplication_matrix(int p) {
  if (p < 1) {
    throw std::invalid_argument("duplication_matrix: p must be >= 1");
  }
  Matrix d = Matrix::Zero(p * p, p * (p + 1) / 2);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < p; ++i) {
      const int vec_idx = j * p + i;
      const int vech_idx = i >= j ? vech_index(i, j, p) : vech_index(j, i, p);
      d(vec_idx, vech_idx) = 1.0;
    }
  }
  return d;
}

Matrix elimination_matrix(int p) {
  if (p < 1) {
    throw std::invalid_argument("elimination_matrix: p must be >= 1");
  }
  Matrix l = Matrix::Zero(p * (p + 1) / 2, p * p);
  for (int j = 0; j < p; ++j) {
    for (int i = j; i < p; ++i) {
      l(vech_index(i, j, p), j * p + i) = 1.0;
    }
  }
  return l;
}

NodeId build_sigma(Graph& graph, const ParameterSpec& spec) {
  validate(spec);
  if (graph.theta_dim() != spec.theta_dim) {
    throw std::invalid_argument(
        "build_sigma: graph theta_dim does not match the parameter pattern");
  }
  const int m = spec.num_latent();

  NodeId lambda = dense_matrix_node(graph, spec.lambda);
  NodeId psi = symmetric_matrix_node(graph, spec.psi);
  NodeId b0 = dense_matrix_node(graph, spec.b0);
  NodeId theta = symmetric_matrix_node(graph, spec.theta);

  NodeId binv =
      graph.inverse(graph.sub(graph.constant(Matrix::Identity(m, m)), b0));
  NodeId latent_cov =
      graph.matmul(graph.matmul(binv, psi), graph.transpose(binv));
  NodeId common =
      graph.matmul(graph.matmul(lambda, latent_cov), graph.transpose(lambda));
  return graph.add(common, theta);
}

Vector default_start(const ParameterSpec& spec, const Matrix& sample_cov) {
  const int p = spec.num_observed();
  const int m = spec.num_latent();
  if (sample_cov.rows() != p || sample_cov.cols() != p) {
    throw std::invalid_argument("default_start: sample covariance must be PxP");
  }
  Vector theta0 = Vector::Zero(spec.theta_dim);
  const double mean_var = sample_cov.diagonal().mean();

  // delta order: loadings, latent covariance, regressions, residuals.
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < p; ++i) {
      const Slot& s = spec.lambda(i, j);
      if (s.is_free()) theta0(s.index) = 1.0;
    }
  }
  for (int j = 0; j < m; ++j) {
    bool marker = false;
    for (int i = 0; i < p; ++i) {
      const Slot& s = spec.lambda(i, j);
      if (!s.is_free() && s.value != 0.0) marker = true;
    }
    const Slot& d = spec.psi(j, j);
    if (d.is_free()) theta0(d.index) = marker ? 0.05 * mean_var : 1.0;
  }
  // free b0 and off-diagonal covariance slots stay at zero
  for (int i = 0; i < p; ++i) {
    const Slot& d = spec.theta(i, i);
    if (d.is_free()) theta0(d.index) = 0.5 * sample_cov(i, i);
  }
  return theta0;
}

}  // namespace semgraph
