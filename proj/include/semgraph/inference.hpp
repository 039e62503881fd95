#pragma once

#include "semgraph/graph.hpp"
#include "semgraph/objectives.hpp"

#include <string>
#include <vector>

namespace semgraph {

struct FitMeasures {
  double chi2 = 0.0;
  int df = 0;
  double p_value = 1.0;
  double aic = 0.0;
  double bic = 0.0;
  double loglik = 0.0;
};

struct InferenceReport {
  Vector se;
  Matrix acov;
  FitMeasures measures;
  int n = 0;
  std::vector<std::string> warnings;
};

/// (2/(n-1)) H^-1 under the Wishart convention (sample covariance with
/// divisor n-1). A non-positive-definite Hessian falls back to the
/// pseudo-inverse with a warning, never silently.
Matrix acov_from_hessian(const Matrix& hessian, int n,
                         std::vector<std::string>& warnings);

/// Upper-tail chi-square probability; df == 0 reports 1.
double chi_square_p_value(double chi2, int df);

/// chi2 = (n-1)(F - log|S| - P), df = P(P+1)/2 - theta_dim, and the
/// Wishart-consistent log-likelihood with its AIC/BIC.
FitMeasures fit_measures(double f_ml_value, const Matrix& sample_cov, int n,
                         int theta_dim);

/// Standard errors and fit measures for an unpenalized maximum-likelihood
/// fit. Any other objective is refused with std::invalid_argument: no
/// numbers are produced for penalized or LAD estimates.
InferenceReport infer(const Graph& graph, const ObjectiveSpec& objective,
                      const Vector& theta_hat, const Matrix& sample_cov,
                      int n);

}  // namespace semgraph
