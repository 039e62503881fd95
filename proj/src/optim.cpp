#include "semgraph/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semgraph {

namespace {

void check_config(const OptimizerConfig& c) {
  if (!(c.step_size > 0)) {
    throw std::invalid_argument("step_size must be positive");
  }
  if (c.beta1 < 0 || c.beta1 >= 1 || c.beta2 < 0 || c.beta2 >= 1) {
    throw std::invalid_argument("decay rates must lie in [0, 1)");
  }
  if (c.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
}

// Raw update vector; the proposed point is theta - update.
struct Stepper {
  const OptimizerConfig& config;
  MomentumState momentum;
  AdamState adam;

  explicit Stepper(const OptimizerConfig& c, int dim) : config(c) {
    momentum.m = Vector::Zero(dim);
    adam.m = Vector::Zero(dim);
    adam.v = Vector::Zero(dim);
  }

  Vector update(const Vector& grad, int t) {
    switch (config.method) {
      case Method::GD:
        return config.step_size * grad;
      case Method::Momentum:
        momentum.m =
            config.beta1 * momentum.m + (1.0 - config.beta1) * grad;
        return config.step_size * momentum.m;
      case Method::Adam: {
        adam.m = config.beta1 * adam.m + (1.0 - config.beta1) * grad;
        adam.v = config.beta2 * adam.v +
                 (1.0 - config.beta2) * grad.cwiseProduct(grad);
        const Vector m_hat = adam.m / (1.0 - std::pow(config.beta1, t));
        const Vector v_hat = adam.v / (1.0 - std::pow(config.beta2, t));
        return config.step_size *
               (m_hat.array() / (v_hat.array().sqrt() + config.epsilon))
                   .matrix();
      }
    }
    return Vector::Zero(grad.size());
  }
};

}  // namespace

Vector step_gd(const Vector& theta, const Vector& grad,
               const OptimizerConfig& config) {
  check_config(config);
  return theta - config.step_size * grad;
}

Vector step_momentum(const Vector& theta, const Vector& grad,
                     MomentumState& state, const OptimizerConfig& config) {
  check_config(config);
  if (state.m.size() == 0) state.m = Vector::Zero(theta.size());
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  return theta - config.step_size * state.m;
}

Vector step_adam(const Vector& theta, const Vector& grad, AdamState& state,
                 const OptimizerConfig& config, int t) {
  check_config(config);
  if (t < 1) throw std::invalid_argument("step_adam: t counts from 1");
  if (state.m.size() == 0) state.m = Vector::Zero(theta.size());
  if (state.v.size() == 0) state.v = Vector::Zero(theta.size());
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v +
            (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const Vector m_hat = state.m / (1.0 - std::pow(config.beta1, t));
  const Vector v_hat = state.v / (1.0 - std::pow(config.beta2, t));
  return theta -
         config.step_size *
             (m_hat.array() / (v_hat.array().sqrt() + config.epsilon))
                 .matrix();
}

FitResult fit(const Graph& graph, const Vector& theta0,
              const OptimizerConfig& config) {
  check_config(config);
  FitResult result;
  result.theta_hat = theta0;

  EvalCache cache;
  double value;
  try {
    value = forward(graph, theta0, cache);
  } catch (const EvalError& e) {
    result.failure =
        std::string("objective undefined at the starting values: ") + e.what();
    return result;
  }
  Vector theta = theta0;
  Vector grad = backward(graph, cache);

  Stepper stepper(config, graph.theta_dim());
  const int window = 10;

  for (int t = 1; t <= config.max_iter; ++t) {
    if (!grad.allFinite()) {
      result.failure = "gradient is not finite";
      result.theta_hat = theta;
      result.objective = value;
      result.grad_inf_norm = std::numeric_limits<double>::quiet_NaN();
      result.iterations = static_cast<int>(result.objective_trace.size());
      return result;
    }
    if (grad.cwiseAbs().maxCoeff() <= config.tol_grad) {
      result.status = FitStatus::Converged;
      break;
    }

    const Vector update = stepper.update(grad, t);
    bool accepted = false;
    double scale = 1.0;
    for (int attempt = 0; attempt <= 10; ++attempt) {
      const Vector proposal = theta - scale * update;
      try {
        value = forward(graph, proposal, cache);
        theta = proposal;
        accepted = true;
        break;
      } catch (const EvalError& e) {
        if (!e.recoverable()) {
          result.failure = e.what();
          result.theta_hat = theta;
          result.iterations =
              static_cast<int>(result.objective_trace.size());
          return result;
        }
        scale *= 0.5;
      }
    }
    if (!accepted) {
      result.failure =
          "could not restore a valid evaluation point after 10 halvings";
      result.theta_hat = theta;
      result.iterations = static_cast<int>(result.objective_trace.size());
      return result;
    }

    grad = backward(graph, cache);
    result.objective_trace.push_back(value);

    const int n = static_cast<int>(result.objective_trace.size());
    if (n > window) {
      const auto begin = result.objective_trace.end() - (window + 1);
      const auto [lo, hi] = std::minmax_element(begin,
                                                result.objective_trace.end());
      const double rel = (*hi - *lo) / std::max(1.0, std::abs(value));
      if (rel <= config.tol_obj) {
        result.status = FitStatus::Converged;
        break;
      }
    }
  }

  if (result.status != FitStatus::Converged) result.status = FitStatus::MaxIter;
  result.theta_hat = theta;
  result.objective = value;
  result.grad_inf_norm = grad.cwiseAbs().maxCoeff();
  result.iterations = static_cast<int>(result.objective_trace.size());
  return result;
}

std::vector<FitResult> penalty_path(
    const std::function<Graph(double)>& graph_builder, const Vector& theta0,
    const std::vector<double>& lambdas, const OptimizerConfig& config) {
  if (lambdas.empty()) {
    throw std::invalid_argument("penalty_path: need at least one lambda");
  }
  std::vector<FitResult> results;
  results.reserve(lambdas.size());
  Vector warm = theta0;
  for (double lambda : lambdas) {
    Graph graph = graph_builder(lambda);
    FitResult r = fit(graph, warm, config);
    if (r.theta_hat.size() == warm.size() && r.theta_hat.allFinite()) {
      warm = r.theta_hat;
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace semgraph
