#pragma once

#include "semgraph/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semgraph {

enum class BaseObjective { ML, GLS, LAD, LS };

enum class PenaltyKind { Lasso, Ridge, ElasticNet, SpikeSlab };

enum class MatrixTarget { Lambda, Psi, B0, Theta };

/// One penalty on a set of free parameters: a whole parameter matrix or an
/// explicit label set.
struct PenaltyTerm {
  PenaltyKind kind = PenaltyKind::Lasso;
  double lambda1 = 0.0;  // L1 strength
  double lambda2 = 0.0;  // squared strength
  double pi = 0.5;       // spike weight, SpikeSlab only
  std::optional<MatrixTarget> matrix;
  std::vector<std::string> labels;
};

struct ObjectiveSpec {
  BaseObjective base = BaseObjective::ML;
  std::optional<Matrix> gls_weight;  // GLS only; defaults to the S-based form
  std::vector<PenaltyTerm> penalties;
};

/// log|Sigma| + tr(S Sigma^-1).
NodeId f_ml(Graph& graph, NodeId sigma, const Matrix& sample_cov);

/// (s - sigma(theta))' W (s - sigma(theta)) on vech vectors.
NodeId f_gls(Graph& graph, NodeId sigma, const Matrix& sample_cov,
             const Matrix& weight);

/// Default GLS weight 0.5 D' (S^-1 kron S^-1) D.
Matrix gls_default_weight(const Matrix& sample_cov);

/// Same weight evaluated at a supplied implied covariance.
Matrix gls_weight_at(const Matrix& sigma);

/// Sum of absolute elementwise deviations over all P^2 cells; no inversion.
NodeId f_lad(Graph& graph, NodeId sigma, const Matrix& sample_cov);

/// (y - X beta)'(y - X beta) for a p x 1 coefficient node.
NodeId f_ls(Graph& graph, const Matrix& x, const Vector& y, NodeId beta);

/// Free-parameter indices a penalty term applies to, in increasing order.
std::vector<int> resolve_penalty_target(const PenaltyTerm& term,
                                        const ParameterSpec& spec);

/// Adds the penalty value to an objective node and returns the new output.
NodeId add_penalty(Graph& graph, NodeId objective, const PenaltyTerm& term,
                   const ParameterSpec& spec);

/// Closed-form penalty value at theta, independent of any graph.
double penalty_value(const PenaltyTerm& term, const ParameterSpec& spec,
                     const Vector& theta);

/// Builds sigma, the base fit function and all penalties; designates the
/// result as the graph output and returns it. LS is not a covariance-fitting
/// objective and is rejected here.
NodeId build_objective(Graph& graph, const ParameterSpec& spec,
                       const ObjectiveSpec& objective,
                       const Matrix& sample_cov);

}  // namespace semgraph
