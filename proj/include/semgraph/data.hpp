#pragma once

#include "semgraph/graph.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semgraph {

struct Dataset {
  std::vector<std::string> names;
  Matrix cov;  // P x P, divisor n-1
  int n = 0;
  std::optional<Matrix> raw;  // n x P when loaded from observations
  std::vector<std::string> warnings;
};

/// Centered sample covariance with divisor n-1.
Matrix sample_covariance(const Matrix& raw);

/// CSV of observations with a header row. Missing or non-numeric cells are
/// hard errors; n <= P only warns.
Dataset load_raw_csv(const std::string& path);

/// CSV holding a covariance matrix (header row of variable names). Requires
/// the sample size it was computed from; must be symmetric and positive
/// definite.
Dataset load_cov_csv(const std::string& path, int n);

}  // namespace semgraph
