#include "semgraph/inference.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>

namespace semgraph {

Matrix acov_from_hessian(const Matrix& hessian, int n,
                         std::vector<std::string>& warnings) {
  if (hessian.rows() != hessian.cols()) {
    throw std::invalid_argument("acov: Hessian must be square");
  }
  if (n < 2) throw std::invalid_argument("acov: need n >= 2");
  const Matrix h = 0.5 * (hessian + hessian.transpose());
  const double rescale = 2.0 / (n - 1);

  Eigen::LLT<Matrix> llt(h);
  if (llt.info() == Eigen::Success &&
      Matrix(llt.matrixL()).diagonal().minCoeff() > 0.0) {
    return rescale * llt.solve(Matrix::Identity(h.rows(), h.cols()));
  }
  warnings.push_back(
      "Hessian is not positive definite; standard errors use a "
      "pseudo-inverse and may be unreliable");
  return rescale *
         h.completeOrthogonalDecomposition().pseudoInverse();
}

double chi_square_p_value(double chi2, int df) {
  if (df < 0) throw std::invalid_argument("chi_square_p_value: df < 0");
  if (df == 0) return 1.0;
  if (chi2 <= 0.0) return 1.0;
  using Arr = Eigen::Array<double, 1, 1>;
  Arr a, x;
  a << df / 2.0;
  x << chi2 / 2.0;
  return Eigen::igammac(a, x)(0);
}

FitMeasures fit_measures(double f_ml_value, const Matrix& sample_cov, int n,
                         int theta_dim) {
  const int p = static_cast<int>(sample_cov.rows());
  const int moments = p * (p + 1) / 2;
  FitMeasures fm;
  fm.df = moments - theta_dim;
  if (fm.df < 0) {
    throw std::invalid_argument(
        "fit_measures: more free parameters than covariance moments");
  }
  Eigen::LLT<Matrix> llt(sample_cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(
        "fit_measures: sample covariance must be positive definite");
  }
  const double logdet_s =
      2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();

  fm.chi2 = (n - 1) * (f_ml_value - logdet_s - p);
  fm.p_value = chi_square_p_value(fm.chi2, fm.df);
  fm.loglik = -0.5 * (n - 1) * f_ml_value -
              0.5 * (n - 1) * p * std::log(2.0 * std::numbers::pi);
  fm.aic = -2.0 * fm.loglik + 2.0 * theta_dim;
  fm.bic = -2.0 * fm.loglik + theta_dim * std::log(static_cast<double>(n));
  return fm;
}

InferenceReport infer(const Graph& graph, const ObjectiveSpec& objective,
                      const Vector& theta_hat, const Matrix& sample_cov,
                      int n) {
  if (objective.base != BaseObjective::ML || !objective.penalties.empty()) {
    throw std::invalid_argument(
        "standard errors and test statistics are available only for "
        "unpenalized maximum-likelihood fits");
  }
  InferenceReport report;
  report.n = n;

  EvalCache cache;
  const double value = forward(graph, theta_hat, cache);
  report.measures = fit_measures(value, sample_cov, n, graph.theta_dim());

  const Matrix h = hessian(graph, theta_hat);
  report.acov = acov_from_hessian(h, n, report.warnings);
  report.se = Vector(report.acov.rows());
  bool clamped = false;
  for (int i = 0; i < report.se.size(); ++i) {
    const double v = report.acov(i, i);
    if (v < 0.0) clamped = true;
    report.se(i) = std::sqrt(std::max(v, 0.0));
  }
  if (clamped) {
    report.warnings.push_back(
        "negative variance estimates clamped to zero in standard errors");
  }
  return report;
}

}  // namespace semgraph
