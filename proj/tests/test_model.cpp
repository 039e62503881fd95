#include "semgraph/model.hpp"

#include <doctest.h>

#include "model_helpers.hpp"
#include "oracles.hpp"

using namespace semgraph;
using model_helpers::sigma_of;

TEST_CASE("vech stacks the lower triangle column-major") {
  Matrix a(2, 2);
  a << 1, 2, 2, 3;
  const Vector v = vech(a);
  CHECK(v.size() == 3);
  CHECK(v(0) == 1);
  CHECK(v(1) == 2);
  CHECK(v(2) == 3);

  const Vector vi = vech(Matrix::Identity(3, 3));
  Vector want(6);
  want << 1, 0, 0, 1, 0, 1;
  CHECK((vi - want).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(vech(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("duplication matrix definitions") {
  const Matrix d1 = duplication_matrix(1);
  CHECK(d1.rows() == 1);
  CHECK(d1(0, 0) == 1.0);

  Matrix d2_want(4, 3);
  d2_want << 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1;
  CHECK((duplication_matrix(2) - d2_want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("duplication roundtrip on random symmetric matrices") {
  oracles::Rng rng(7);
  for (int p : {4, 5}) {
    const Matrix d = duplication_matrix(p);
    const Matrix l = elimination_matrix(p);
    for (int rep = 0; rep < 20; ++rep) {
      Matrix raw = rng.normal_matrix(p, p);
      Matrix sym = 0.5 * (raw + raw.transpose());
      const Vector v = vech(sym);
      const Vector vec_full = d * v;
      CHECK((vec_full - sym.reshaped(p * p, 1)).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((l * vec_full - v).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("build_sigma identity pass-through") {
  ParameterSpec spec;
  spec.lambda = SlotMatrix(2, 2);
  spec.psi = SlotMatrix(2, 2);
  spec.b0 = SlotMatrix(2, 2);
  spec.theta = SlotMatrix(2, 2);
  for (int i = 0; i < 2; ++i) {
    spec.lambda(i, i) = Slot::fixed(1.0);
    spec.psi(i, i) = Slot::fixed(1.0);
  }
  Graph g(0);
  NodeId sigma = build_sigma(g, spec);
  g.set_output(g.trace(sigma));  // output just to drive evaluation
  EvalCache cache;
  forward(g, Vector(0), cache);
  CHECK((cache.values[sigma] - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("build_sigma one factor by hand expansion") {
  ParameterSpec spec;
  spec.lambda = SlotMatrix(2, 1);
  spec.psi = SlotMatrix(1, 1);
  spec.b0 = SlotMatrix(1, 1);
  spec.theta = SlotMatrix(2, 2);
  spec.lambda(0, 0) = Slot::fixed(1.0);
  spec.lambda(1, 0) = Slot::fixed(1.0);
  spec.psi(0, 0) = Slot::fixed(1.0);
  spec.theta(0, 0) = Slot::fixed(1.0);
  spec.theta(1, 1) = Slot::fixed(1.0);

  Graph g(0);
  NodeId sigma = build_sigma(g, spec);
  g.set_output(g.trace(sigma));
  EvalCache cache;
  forward(g, Vector(0), cache);
  Matrix want(2, 2);
  want << 2, 1, 1, 2;
  CHECK((cache.values[sigma] - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("build_sigma two-latent path latent covariance block") {
  // F1 -> F2 with beta 0.5 and unit variances; identity loadings expose the
  // latent block directly
  ParameterSpec spec;
  spec.lambda = SlotMatrix(2, 2);
  spec.psi = SlotMatrix(2, 2);
  spec.b0 = SlotMatrix(2, 2);
  spec.theta = SlotMatrix(2, 2);
  spec.lambda(0, 0) = Slot::fixed(1.0);
  spec.lambda(1, 1) = Slot::fixed(1.0);
  spec.psi(0, 0) = Slot::fixed(1.0);
  spec.psi(1, 1) = Slot::fixed(1.0);
  spec.b0(1, 0) = Slot::fixed(0.5);

  Graph g(0);
  NodeId sigma = build_sigma(g, spec);
  g.set_output(g.trace(sigma));
  EvalCache cache;
  forward(g, Vector(0), cache);
  Matrix want(2, 2);
  want << 1.0, 0.5, 0.5, 1.25;
  CHECK((cache.values[sigma] - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a structurally singular structural matrix fails at evaluation") {
  // fixed cycle with product one: I - b0 is singular, but building is fine
  ParameterSpec spec;
  spec.lambda = SlotMatrix(2, 2);
  spec.psi = SlotMatrix(2, 2);
  spec.b0 = SlotMatrix(2, 2);
  spec.theta = SlotMatrix(2, 2);
  spec.lambda(0, 0) = Slot::fixed(1.0);
  spec.lambda(1, 1) = Slot::fixed(1.0);
  spec.psi(0, 0) = Slot::fixed(1.0);
  spec.psi(1, 1) = Slot::fixed(1.0);
  spec.b0(0, 1) = Slot::fixed(1.0);
  spec.b0(1, 0) = Slot::fixed(1.0);

  Graph g(0);
  NodeId sigma = build_sigma(g, spec);  // no error at build time
  g.set_output(g.trace(sigma));
  EvalCache cache;
  CHECK_THROWS_AS(forward(g, Vector(0), cache), EvalError);
}

TEST_CASE("sigma is exactly symmetric for random models") {
  oracles::Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    auto [spec, theta] = model_helpers::random_model(rng, 5, 2);
    Graph g(spec.theta_dim);
    NodeId sigma = build_sigma(g, spec);
    g.set_output(g.sum_all(sigma));
    EvalCache cache;
    forward(g, theta, cache);
    const Matrix& s = cache.values[sigma];
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("equality-constrained slots carry identical values") {
  ParameterSpec spec;
  spec.lambda = SlotMatrix(3, 1);
  spec.psi = SlotMatrix(1, 1);
  spec.b0 = SlotMatrix(1, 1);
  spec.theta = SlotMatrix(3, 3);
  spec.lambda(0, 0) = Slot::fixed(1.0);
  spec.lambda(1, 0) = Slot::free(0);  // shared index: equality constraint
  spec.lambda(2, 0) = Slot::free(0);
  spec.psi(0, 0) = Slot::free(1);
  for (int i = 0; i < 3; ++i) spec.theta(i, i) = Slot::fixed(0.5);
  spec.theta_dim = 2;
  spec.labels = {"load", "var"};

  Graph g(2);
  NodeId sigma = build_sigma(g, spec);
  g.set_output(g.sum_all(sigma));
  Vector theta(2);
  theta << 0.8, 1.2;
  EvalCache cache;
  forward(g, theta, cache);
  const Matrix& s = cache.values[sigma];
  // both constrained loadings produce the same cross-covariance with x1
  CHECK(s(0, 1) == s(0, 2));
  CHECK(s(0, 1) == doctest::Approx(0.8 * 1.2));

  // and the gradient accumulates over both occurrences
  const Vector grad = backward(g, cache);
  const Vector fd = oracles::fd_gradient(g, theta);
  CHECK(oracles::max_rel_error(grad, fd) < 1e-6);
}

TEST_CASE("no structural part reduces to loadings times covariance") {
  oracles::Rng rng(33);
  for (int rep = 0; rep < 10; ++rep) {
    // build a pattern with no structural regressions at all
    auto model = model_helpers::random_model(rng, 6, 1);
    Graph g(model.spec.theta_dim);
    NodeId sigma = build_sigma(g, model.spec);
    g.set_output(g.sum_all(sigma));
    EvalCache cache;
    forward(g, model.theta, cache);

    const auto a = model_helpers::assemble(model.spec, model.theta);
    const Matrix want = a.lambda * a.psi * a.lambda.transpose() + a.theta;
    CHECK((cache.values[sigma] - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient flows through build_sigma") {
  oracles::Rng rng(55);
  for (int rep = 0; rep < 10; ++rep) {
    auto [spec, theta] = model_helpers::random_model(rng, 5, 2);
    Graph g(spec.theta_dim);
    NodeId sigma = build_sigma(g, spec);
    g.set_output(g.sum_all(g.ewise_square(sigma)));
    EvalCache cache;
    forward(g, theta, cache);
    const Vector grad = backward(g, cache);
    const Vector fd = oracles::fd_gradient(g, theta);
    CHECK(oracles::max_rel_error(grad, fd) < 1e-6);
  }
}

TEST_CASE("default_start follows the stated rules") {
  SUBCASE("one factor with three indicators") {
    ParameterSpec spec = model_helpers::one_factor(3);
    Matrix s = 2.0 * Matrix::Identity(3, 3);
    const Vector theta0 = default_start(spec, s);
    // loadings (indices 0, 1) start at 1
    CHECK(theta0(0) == 1.0);
    CHECK(theta0(1) == 1.0);
    // marker case: factor variance starts at 0.05 * mean diag
    CHECK(theta0(2) == doctest::Approx(0.1));
    // residual variances start at half the sample variances
    CHECK(theta0(3) == doctest::Approx(1.0));
    CHECK(theta0(4) == doctest::Approx(1.0));
    CHECK(theta0(5) == doctest::Approx(1.0));
  }

  SUBCASE("saturated model starts diagonally") {
    ParameterSpec spec = model_helpers::saturated(3);
    Matrix s(3, 3);
    s << 2, 1, 0.5, 1, 3, 0.8, 0.5, 0.8, 1.5;
    const Vector theta0 = default_start(spec, s);
    const Matrix sigma0 = sigma_of(spec, theta0);
    Matrix want = Matrix::Zero(3, 3);
    want.diagonal() = 0.5 * s.diagonal();
    CHECK((sigma0 - want).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(Eigen::LLT<Matrix>(sigma0).info() == Eigen::Success);
  }

  SUBCASE("implied covariance at the start is positive definite") {
    oracles::Rng rng(77);
    for (int rep = 0; rep < 30; ++rep) {
      auto [spec, theta] = model_helpers::random_model(rng, 6, 2);
      Matrix raw = rng.normal_matrix(12, 6);
      Matrix s = Matrix(raw.transpose() * raw / 11.0) +
                 0.5 * Matrix::Identity(6, 6);
      const Vector theta0 = default_start(spec, s);
      const Matrix sigma0 = sigma_of(spec, theta0);
      CHECK(Eigen::LLT<Matrix>(sigma0).info() == Eigen::Success);
    }
  }
}

TEST_CASE("validate rejects malformed patterns") {
  SUBCASE("asymmetric psi pattern") {
    ParameterSpec bad = model_helpers::two_factor_path(3, 3);
    bad.psi(0, 1) = Slot::free(4);  // breaks symmetry
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  }
  SUBCASE("free diagonal in b0") {
    ParameterSpec bad = model_helpers::two_factor_path(3, 3);
    bad.b0(0, 0) = Slot::free(6);
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  }
  SUBCASE("unreferenced free index") {
    ParameterSpec bad = model_helpers::one_factor(3);
    bad.theta_dim += 1;
    bad.labels.push_back("orphan");
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  }
}
