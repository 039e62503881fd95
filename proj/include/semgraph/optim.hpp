#pragma once

#include "semgraph/graph.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace semgraph {

enum class Method { GD, Momentum, Adam };

struct OptimizerConfig {
  Method method = Method::Adam;
  double step_size = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_iter = 5000;
  double tol_grad = 1e-5;
  double tol_obj = 1e-9;
};

enum class FitStatus { Converged, MaxIter, Failed };

struct FitResult {
  Vector theta_hat;
  std::vector<double> objective_trace;  // one value per completed iteration
  double objective = 0.0;
  double grad_inf_norm = 0.0;
  int iterations = 0;
  FitStatus status = FitStatus::Failed;
  std::string failure;  // reason when status == Failed
  std::optional<Matrix> hessian;
};

/// theta - s * g.
Vector step_gd(const Vector& theta, const Vector& grad,
               const OptimizerConfig& config);

struct MomentumState {
  Vector m;  // first-moment moving average, zero-initialized
};

/// m <- beta1 m + (1 - beta1) g; theta - s * m.
Vector step_momentum(const Vector& theta, const Vector& grad,
                     MomentumState& state, const OptimizerConfig& config);

struct AdamState {
  Vector m;
  Vector v;
};

/// Bias-corrected first/second-moment update; t counts from 1.
Vector step_adam(const Vector& theta, const Vector& grad, AdamState& state,
                 const OptimizerConfig& config, int t);

/// Iterates the configured stepper from theta0. A recoverable evaluation
/// failure at a proposed point is retried with the step halved, up to ten
/// times within the iteration. Convergence: gradient infinity norm at or
/// below tol_grad, or relative objective change at or below tol_obj across
/// the last ten iterations.
FitResult fit(const Graph& graph, const Vector& theta0,
              const OptimizerConfig& config = {});

/// Sequential fits over a penalty-strength grid, warm-starting each fit from
/// the previous estimate. Per-fit failures are recorded, not thrown.
std::vector<FitResult> penalty_path(
    const std::function<Graph(double)>& graph_builder, const Vector& theta0,
    const std::vector<double>& lambdas, const OptimizerConfig& config = {});

}  // namespace semgraph
