#include "semgraph/optim.hpp"

#include <doctest.h>

#include <cmath>

#include "model_helpers.hpp"
#include "oracles.hpp"
#include "semgraph/data.hpp"
#include "semgraph/objectives.hpp"

using namespace semgraph;

namespace {

Graph bowl_graph() {
  Graph g(2);
  NodeId theta = g.param_gather(Matrix::Zero(2, 1), {{0, 0, 0}, {1, 0, 1}});
  Matrix w(1, 2);
  w << 1.0, 5.0;
  g.set_output(g.matmul(g.constant(w), g.ewise_square(theta)));
  return g;
}

Vector bowl_grad(const Vector& t) {
  Vector g(2);
  g << 2.0 * t(0), 10.0 * t(1);
  return g;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// iterations until the infinity norm drops below the threshold
template <typename Step>
int iterations_to(Step step, Vector theta, double threshold, int cap,
                  std::vector<Vector>* path = nullptr) {
  for (int t = 1; t <= cap; ++t) {
    theta = step(theta, t);
    if (path) path->push_back(theta);
    if (theta.cwiseAbs().maxCoeff() < threshold) return t;
  }
  return cap + 1;
}

}  // namespace

TEST_CASE("gradient descent step") {
  OptimizerConfig config;
  config.method = Method::GD;

  const Vector theta = vec2(-0.9, -0.9);
  const Vector stepped = step_gd(theta, bowl_grad(theta), config);
  CHECK(stepped(0) == doctest::Approx(-0.882));
  CHECK(stepped(1) == doctest::Approx(-0.81));

  // zero gradient is a fixed point
  const Vector still = step_gd(theta, Vector::Zero(2), config);
  CHECK((still - theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("2000 gradient descent steps solve the bowl") {
  OptimizerConfig config;
  config.method = Method::GD;
  Vector theta = vec2(-0.9, -0.9);
  for (int t = 0; t < 2000; ++t) theta = step_gd(theta, bowl_grad(theta), config);
  CHECK(theta.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("momentum step") {
  OptimizerConfig config;
  config.method = Method::Momentum;

  SUBCASE("first step is the gradient step scaled by 1 - beta1") {
    MomentumState state;
    const Vector theta = vec2(-0.9, -0.9);
    const Vector grad = bowl_grad(theta);
    const Vector got = step_momentum(theta, grad, state, config);
    const Vector want = theta - config.step_size * (1.0 - config.beta1) * grad;
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("constant gradient accumulates geometrically") {
    MomentumState state;
    Vector theta = Vector::Zero(1);
    Vector grad = Vector::Ones(1);
    for (int t = 0; t < 200; ++t) {
      step_momentum(theta, grad, state, config);
    }
    CHECK(state.m(0) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("adam step") {
  OptimizerConfig config;

  SUBCASE("first update magnitude is about the step size") {
    AdamState state;
    const Vector theta = vec2(-0.9, -0.9);
    const Vector grad = bowl_grad(theta);
    const Vector stepped = step_adam(theta, grad, state, config, 1);
    const Vector update = theta - stepped;
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(update(i)) ==
            doctest::Approx(config.step_size).epsilon(1e-6));
      CHECK(update(i) * grad(i) > 0.0);  // moves against the gradient
    }
  }

  SUBCASE("zero gradient from rest stays put") {
    AdamState state;
    const Vector theta = vec2(0.4, -0.2);
    const Vector stepped = step_adam(theta, Vector::Zero(2), state, config, 1);
    CHECK((stepped - theta).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("iterates stay finite under violent gradients") {
    AdamState state;
    Vector theta = vec2(0.0, 0.0);
    oracles::Rng rng(5);
    for (int t = 1; t <= 500; ++t) {
      Vector g = vec2(rng.normal() * 1e12, rng.normal() * 1e-12);
      theta = step_adam(theta, g, state, config, t);
      REQUIRE(theta.allFinite());
    }
  }
}

TEST_CASE("optimizer ordering on the quadratic bowl") {
  OptimizerConfig config;
  const Vector start = vec2(-0.9, -0.9);
  const int cap = 100000;

  OptimizerConfig gd_config = config;
  gd_config.method = Method::GD;
  const int gd_iters = iterations_to(
      [&](const Vector& t, int) {
        return step_gd(t, bowl_grad(t), gd_config);
      },
      start, 1e-3, cap);

  MomentumState ms;
  OptimizerConfig mo_config = config;
  mo_config.method = Method::Momentum;
  const int mo_iters = iterations_to(
      [&](const Vector& t, int) {
        return step_momentum(t, bowl_grad(t), ms, mo_config);
      },
      start, 1e-3, cap);

  // run the Adam trajectory over a fixed horizon: the momentum overshoot
  // develops after the threshold is first reached
  AdamState as;
  Vector theta = start;
  int adam_iters = cap;
  bool crossed = false;
  for (int t = 1; t <= 2000; ++t) {
    theta = step_adam(theta, bowl_grad(theta), as, config, t);
    if (theta(1) > 0.0) crossed = true;
    if (adam_iters == cap && theta.cwiseAbs().maxCoeff() < 1e-3) {
      adam_iters = t;
    }
  }

  CHECK(adam_iters < mo_iters);
  CHECK(mo_iters < gd_iters);
  CHECK(crossed);
}

TEST_CASE("fit reproduces a saturated model exactly") {
  Matrix s(3, 3);
  s << 2.0, 0.7, 0.3, 0.7, 1.6, 0.5, 0.3, 0.5, 1.2;
  ParameterSpec spec = model_helpers::saturated(3);
  Graph g(spec.theta_dim);
  build_objective(g, spec, ObjectiveSpec{BaseObjective::ML, {}, {}}, s);

  OptimizerConfig config;
  config.tol_grad = 1e-8;
  config.tol_obj = 0.0;
  config.max_iter = 100000;
  const FitResult result = fit(g, default_start(spec, s), config);

  CHECK(result.status == FitStatus::Converged);
  CHECK(static_cast<int>(result.objective_trace.size()) == result.iterations);
  const Matrix fitted = model_helpers::sigma_of(spec, result.theta_hat);
  CHECK((fitted - s).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(result.objective ==
        doctest::Approx(std::log(s.determinant()) + 3.0).epsilon(1e-10));
}

TEST_CASE("fit recovers the two-factor population") {
  ParameterSpec spec = model_helpers::two_factor_path(3, 3);
  Vector pop(13);
  pop << 0.8, 0.9,          // F1 loadings x2 x3
      0.7, 1.1,             // F2 loadings x5 x6
      1.0, 0.8,             // F1 variance, F2 disturbance
      0.5,                  // F2 ~ F1
      0.5, 0.6, 0.7, 0.8, 0.9, 1.0;  // residuals
  const Matrix sigma = model_helpers::sigma_of(spec, pop);

  Graph g(spec.theta_dim);
  build_objective(g, spec, ObjectiveSpec{BaseObjective::ML, {}, {}}, sigma);
  OptimizerConfig config;
  config.tol_grad = 1e-8;
  config.tol_obj = 0.0;
  config.max_iter = 100000;
  const FitResult result = fit(g, default_start(spec, sigma), config);

  CHECK(result.status == FitStatus::Converged);
  CHECK((result.theta_hat - pop).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("lad trace decreases after the early oscillation") {
  model_helpers::LadSetup setup;
  Graph g(setup.spec.theta_dim);
  build_objective(g, setup.spec, ObjectiveSpec{BaseObjective::LAD, {}, {}},
                  setup.contaminated);

  OptimizerConfig config;
  config.step_size = 0.001;
  config.max_iter = 600;
  config.tol_grad = 0.0;  // run the full trace
  config.tol_obj = 0.0;
  const FitResult result =
      fit(g, default_start(setup.spec, setup.contaminated), config);

  REQUIRE(result.objective_trace.size() >= 600);
  for (size_t t = 50; t + 1 < result.objective_trace.size(); ++t) {
    CHECK(result.objective_trace[t + 1] <=
          result.objective_trace[t] + 1e-12);
  }
}

TEST_CASE("fit halves the step out of the non-positive-definite cone") {
  // one free variance; an aggressive step proposes a negative variance
  ParameterSpec spec = model_helpers::saturated(1);
  Matrix s(1, 1);
  s << 1.0;
  Graph g(1);
  build_objective(g, spec, ObjectiveSpec{BaseObjective::ML, {}, {}}, s);

  OptimizerConfig config;
  config.method = Method::GD;
  config.step_size = 2.0;  // from 0.5 the pure step lands at -1.5
  config.max_iter = 2000;
  Vector start(1);
  start << 0.5;
  const FitResult result = fit(g, start, config);
  CHECK(result.status != FitStatus::Failed);
  CHECK(result.theta_hat(0) > 0.0);
}

TEST_CASE("fit fails cleanly") {
  SUBCASE("undefined at the starting values") {
    ParameterSpec spec = model_helpers::saturated(1);
    Matrix s(1, 1);
    s << 1.0;
    Graph g(1);
    build_objective(g, spec, ObjectiveSpec{BaseObjective::ML, {}, {}}, s);
    Vector start(1);
    start << -1.0;  // negative variance
    const FitResult result = fit(g, start, OptimizerConfig{});
    CHECK(result.status == FitStatus::Failed);
    CHECK(!result.failure.empty());
  }

  SUBCASE("non-finite gradient") {
    Graph g(1);
    NodeId t = g.param_gather(Matrix::Zero(1, 1), {{0, 0, 0}});
    g.set_output(g.trace(g.inverse(t)));
    Vector start(1);
    start << 1e-200;  // value 1e200 is finite, gradient -1e400 is not
    const FitResult result = fit(g, start, OptimizerConfig{});
    CHECK(result.status == FitStatus::Failed);
    CHECK(result.failure == "gradient is not finite");
  }

  SUBCASE("iteration cap") {
    Graph g = bowl_graph();
    OptimizerConfig config;
    config.max_iter = 3;
    const FitResult result = fit(g, vec2(-0.9, -0.9), config);
    CHECK(result.status == FitStatus::MaxIter);
    CHECK(result.iterations == 3);
    CHECK(result.objective_trace.size() == 3);
  }
}

TEST_CASE("fit is deterministic") {
  Graph g = bowl_graph();
  const FitResult a = fit(g, vec2(-0.9, -0.9), OptimizerConfig{});
  const FitResult b = fit(g, vec2(-0.9, -0.9), OptimizerConfig{});
  CHECK(a.status == b.status);
  CHECK(a.iterations == b.iterations);
  CHECK((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective == b.objective);
}

TEST_CASE("gradient descent trace is strictly decreasing on the bowl") {
  Graph g = bowl_graph();
  OptimizerConfig config;
  config.method = Method::GD;  // s = 0.01 is below the 2/10 stability bound
  config.max_iter = 500;
  config.tol_grad = 0.0;
  config.tol_obj = 0.0;
  const FitResult result = fit(g, vec2(-0.9, -0.9), config);
  for (size_t t = 0; t + 1 < result.objective_trace.size(); ++t) {
    CHECK(result.objective_trace[t + 1] < result.objective_trace[t]);
  }
}

TEST_CASE("penalty path") {
  // one factor with three null loadings in the population
  ParameterSpec spec = model_helpers::one_factor(6);
  Vector lambda_pop(6);
  lambda_pop << 1.0, 0.8, 0.7, 0.0, 0.0, 0.0;
  Vector resid = Vector::Ones(6);
  oracles::Rng rng(303);
  const Matrix sample = model_helpers::simulate_factor_sample(
      rng, lambda_pop, 1.0, resid, 200);
  const Matrix s = sample_covariance(sample);

  auto builder = [&](double lambda) {
    Graph g(spec.theta_dim);
    ObjectiveSpec obj;
    obj.base = BaseObjective::ML;
    if (lambda > 0.0) {
      obj.penalties.push_back(PenaltyTerm{
          PenaltyKind::Lasso, lambda, 0.0, 0.5, MatrixTarget::Lambda, {}});
    }
    build_objective(g, spec, obj, s);
    return g;
  };
  const Vector start = default_start(spec, s);

  SUBCASE("singleton zero path equals the plain fit") {
    OptimizerConfig config;
    const auto path = penalty_path(builder, start, {0.0}, config);
    Graph g = builder(0.0);
    const FitResult single = fit(g, start, config);
    REQUIRE(path.size() == 1);
    CHECK(path[0].iterations == single.iterations);
    CHECK((path[0].theta_hat - single.theta_hat).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("zero counts are nondecreasing in lambda") {
    OptimizerConfig config;
    config.max_iter = 20000;
    const auto path = penalty_path(builder, start, {0.0, 0.1, 0.3}, config);
    REQUIRE(path.size() == 3);
    int prev = -1;
    for (const FitResult& r : path) {
      int zeros = 0;
      for (int i = 0; i < 5; ++i) {  // the five free loadings
        if (std::abs(r.theta_hat(i)) < 1e-3) ++zeros;
      }
      CHECK(zeros >= prev);
      prev = zeros;
    }
  }

  SUBCASE("warm starts spend fewer iterations than cold starts") {
    OptimizerConfig config;
    config.tol_obj = 1e-7;  // loose enough for the penalized fits to stop
    config.max_iter = 50000;
    const std::vector<double> grid = {0.0, 0.1, 0.3};
    const auto warm = penalty_path(builder, start, grid, config);
    int warm_total = 0;
    int cold_total = 0;
    for (size_t i = 0; i < grid.size(); ++i) {
      warm_total += warm[i].iterations;
      Graph g = builder(grid[i]);
      cold_total += fit(g, start, config).iterations;
    }
    CHECK(warm_total < cold_total);
  }

  SUBCASE("per-fit failures do not abort the path") {
    ParameterSpec tiny = model_helpers::saturated(1);
    Matrix one(1, 1);
    one << 1.0;
    auto failing_builder = [&](double lambda) {
      Graph g(1);
      if (lambda == 0.0) {
        build_objective(g, tiny, ObjectiveSpec{BaseObjective::ML, {}, {}},
                        one);
      } else {
        // undefined at the warm start the first fit hands over
        NodeId t = g.param_gather(Matrix::Zero(1, 1), {{0, 0, 0}});
        g.set_output(
            g.logdet(g.sub(t, g.constant(2.0 * Matrix::Identity(1, 1)))));
      }
      return g;
    };
    Vector tiny_start(1);
    tiny_start << 0.5;
    const auto path =
        penalty_path(failing_builder, tiny_start, {0.0, 1.0}, {});
    REQUIRE(path.size() == 2);
    CHECK(path[0].status == FitStatus::Converged);
    CHECK(path[1].status == FitStatus::Failed);
  }
}
