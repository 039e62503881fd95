#include "semgraph/objectives.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <set>

namespace semgraph {

namespace {

void check_sample_cov(const Matrix& s, int p, const char* ctx) {
  if (s.rows() != p || s.cols() != p) {
    throw std::invalid_argument(std::string(ctx) +
                                ": sample covariance dimension mismatch");
  }
  if (!s.allFinite()) {
    throw std::invalid_argument(std::string(ctx) +
                                ": sample covariance must be finite");
  }
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument(std::string(ctx) +
                                ": sample covariance must be symmetric");
  }
}

void check_penalty_params(const PenaltyTerm& term) {
  if (term.lambda1 < 0 || term.lambda2 < 0) {
    throw std::invalid_argument("penalty strengths must be nonnegative");
  }
  if (term.kind == PenaltyKind::SpikeSlab &&
      (term.pi < 0.0 || term.pi > 1.0)) {
    throw std::invalid_argument("spike weight pi must lie in [0, 1]");
  }
}

void collect_free(const SlotMatrix& m, bool symmetric, std::set<int>& out) {
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = symmetric ? j : 0; i < m.rows(); ++i) {
      if (m(i, j).is_free()) out.insert(m(i, j).index);
    }
  }
}

}  // namespace

NodeId f_ml(Graph& graph, NodeId sigma, const Matrix& sample_cov) {
  const Node& n = graph.node(sigma);
  if (n.rows != n.cols) {
    throw std::invalid_argument("f_ml: sigma node must be square");
  }
  check_sample_cov(sample_cov, n.rows, "f_ml");
  if (Eigen::LLT<Matrix>(sample_cov).info() != Eigen::Success) {
    throw std::invalid_argument(
        "f_ml: sample covariance must be positive definite");
  }
  NodeId s = graph.constant(sample_cov);
  return graph.add(graph.logdet(sigma),
                   graph.trace(graph.matmul(s, graph.inverse(sigma))));
}

NodeId f_gls(Graph& graph, NodeId sigma, const Matrix& sample_cov,
             const Matrix& weight) {
  const Node& n = graph.node(sigma);
  if (n.rows != n.cols) {
    throw std::invalid_argument("f_gls: sigma node must be square");
  }
  const int p = n.rows;
  const int q = p * (p + 1) / 2;
  check_sample_cov(sample_cov, p, "f_gls");
  if (weight.rows() != q || weight.cols() != q) {
    throw std::invalid_argument("f_gls: weight must be " + std::to_string(q) +
                                "x" + std::to_string(q));
  }
  const double wscale = std::max(1.0, weight.cwiseAbs().maxCoeff());
  if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-10 * wscale) {
    throw std::invalid_argument("f_gls: weight must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(weight);
  if (es.eigenvalues().minCoeff() < -1e-8 * wscale) {
    throw std::invalid_argument("f_gls: weight must be positive semidefinite");
  }

  NodeId s_vech = graph.constant(vech(sample_cov));
  NodeId sigma_vech = graph.matmul(graph.constant(elimination_matrix(p)),
                                   graph.reshape(sigma, p * p, 1));
  NodeId resid = graph.sub(s_vech, sigma_vech);
  return graph.matmul(graph.transpose(resid),
                      graph.matmul(graph.constant(weight), resid));
}

Matrix gls_weight_at(const Matrix& sigma) {
  const int p = static_cast<int>(sigma.rows());
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(
        "gls weight: covariance must be positive definite");
  }
  const Matrix inv = llt.solve(Matrix::Identity(p, p));
  const Matrix d = duplication_matrix(p);
  return 0.5 * d.transpose() * Eigen::kroneckerProduct(inv, inv) * d;
}

Matrix gls_default_weight(const Matrix& sample_cov) {
  check_sample_cov(sample_cov, static_cast<int>(sample_cov.rows()),
                   "gls weight");
  return gls_weight_at(sample_cov);
}

NodeId f_lad(Graph& graph, NodeId sigma, const Matrix& sample_cov) {
  const Node& n = graph.node(sigma);
  if (n.rows != n.cols) {
    throw std::invalid_argument("f_lad: sigma node must be square");
  }
  check_sample_cov(sample_cov, n.rows, "f_lad");
  NodeId s = graph.constant(sample_cov);
  return graph.sum_all(graph.ewise_abs(graph.sub(sigma, s)));
}

NodeId f_ls(Graph& graph, const Matrix& x, const Vector& y, NodeId beta) {
  const Node& b = graph.node(beta);
  if (b.cols != 1 || b.rows != x.cols()) {
    throw std::invalid_argument("f_ls: beta node must be " +
                                std::to_string(x.cols()) + "x1");
  }
  if (y.size() != x.rows()) {
    throw std::invalid_argument("f_ls: y length must match rows of X");
  }
  NodeId resid =
      graph.sub(graph.constant(y), graph.matmul(graph.constant(x), beta));
  return graph.sum_all(graph.ewise_square(resid));
}

std::vector<int> resolve_penalty_target(const PenaltyTerm& term,
                                        const ParameterSpec& spec) {
  std::set<int> indices;
  if (term.matrix) {
    switch (*term.matrix) {
      case MatrixTarget::Lambda:
        collect_free(spec.lambda, false, indices);
        break;
      case MatrixTarget::Psi:
        collect_free(spec.psi, true, indices);
        break;
      case MatrixTarget::B0:
        collect_free(spec.b0, false, indices);
        break;
      case MatrixTarget::Theta:
        collect_free(spec.theta, true, indices);
        break;
    }
  }
  for (const std::string& label : term.labels) {
    auto it = std::find(spec.labels.begin(), spec.labels.end(), label);
    if (it == spec.labels.end()) {
      throw std::invalid_argument("penalty target '" + label +
                                  "' is not a free parameter");
    }
    indices.insert(static_cast<int>(it - spec.labels.begin()));
  }
  if (indices.empty()) {
    throw std::invalid_argument("penalty target selects no free parameters");
  }
  return {indices.begin(), indices.end()};
}

NodeId add_penalty(Graph& graph, NodeId objective, const PenaltyTerm& term,
                   const ParameterSpec& spec) {
  check_penalty_params(term);
  const std::vector<int> indices = resolve_penalty_target(term, spec);
  const int k = static_cast<int>(indices.size());
  std::vector<GatherEntry> entries;
  entries.reserve(k);
  for (int i = 0; i < k; ++i) entries.push_back({i, 0, indices[i]});
  NodeId gathered = graph.param_gather(Matrix::Zero(k, 1), std::move(entries));

  NodeId out = objective;
  double l1 = 0.0;
  double l2 = 0.0;
  switch (term.kind) {
    case PenaltyKind::Lasso:
      l1 = term.lambda1;
      break;
    case PenaltyKind::Ridge:
      l2 = term.lambda2;
      break;
    case PenaltyKind::ElasticNet:
      l1 = term.lambda1;
      l2 = term.lambda2;
      break;
    case PenaltyKind::SpikeSlab:
      l1 = term.pi * term.lambda1;
      l2 = (1.0 - term.pi) * term.lambda2;
      break;
  }
  if (l1 != 0.0) {
    out = graph.add(
        out, graph.scale(graph.sum_all(graph.ewise_abs(gathered)), l1));
  }
  if (l2 != 0.0) {
    out = graph.add(
        out, graph.scale(graph.sum_all(graph.ewise_square(gathered)), l2));
  }
  return out;
}

double penalty_value(const PenaltyTerm& term, const ParameterSpec& spec,
                     const Vector& theta) {
  check_penalty_params(term);
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (int idx : resolve_penalty_target(term, spec)) {
    abs_sum += std::abs(theta(idx));
    sq_sum += theta(idx) * theta(idx);
  }
  switch (term.kind) {
    case PenaltyKind::Lasso:
      return term.lambda1 * abs_sum;
    case PenaltyKind::Ridge:
      return term.lambda2 * sq_sum;
    case PenaltyKind::ElasticNet:
      return term.lambda1 * abs_sum + term.lambda2 * sq_sum;
    case PenaltyKind::SpikeSlab:
      return term.pi * term.lambda1 * abs_sum +
             (1.0 - term.pi) * term.lambda2 * sq_sum;
  }
  return 0.0;
}

NodeId build_objective(Graph& graph, const ParameterSpec& spec,
                       const ObjectiveSpec& objective,
                       const Matrix& sample_cov) {
  NodeId sigma = build_sigma(graph, spec);
  NodeId out;
  switch (objective.base) {
    case BaseObjective::ML:
      out = f_ml(graph, sigma, sample_cov);
      break;
    case BaseObjective::GLS: {
      const Matrix w = objective.gls_weight ? *objective.gls_weight
                                            : gls_default_weight(sample_cov);
      out = f_gls(graph, sigma, sample_cov, w);
      break;
    }
    case BaseObjective::LAD:
      out = f_lad(graph, sigma, sample_cov);
      break;
    case BaseObjective::LS:
      throw std::invalid_argument(
          "build_objective: least squares needs explicit design matrices");
  }
  for (const PenaltyTerm& term : objective.penalties) {
    out = add_penalty(graph, out, term, spec);
  }
  graph.set_output(out);
  return out;
}

}  // namespace semgraph
