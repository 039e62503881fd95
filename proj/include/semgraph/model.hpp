#pragma once

#include "semgraph/graph.hpp"

#include <string>
#include <vector>

namespace semgraph {

/// One matrix cell: either a fixed constant or a position in the free
/// parameter vector. Shared positions across cells encode equality
/// constraints.
struct Slot {
  double value = 0.0;
  int index = -1;  // >= 0 means free, reading theta[index]

  static Slot fixed(double v) { return Slot{v, -1}; }
  static Slot free(int index) { return Slot{0.0, index}; }
  bool is_free() const { return index >= 0; }

  friend bool operator==(const Slot&, const Slot&) = default;
};

class SlotMatrix {
 public:
  SlotMatrix() = default;
  SlotMatrix(int rows, int cols)
      : rows_(rows), cols_(cols), slots_(rows * cols) {}

  Slot& operator()(int r, int c) { return slots_[c * rows_ + r]; }
  const Slot& operator()(int r, int c) const { return slots_[c * rows_ + r]; }

  // Writes both (r, c) and (c, r); used for the symmetric matrices.
  void set_symmetric(int r, int c, Slot s) {
    (*this)(r, c) = s;
    (*this)(c, r) = s;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Slot> slots_;  // column-major
};

/// The four all-y parameter matrices with the free/fixed pattern and the
/// labels of the free parameters. Free indices follow the canonical order
/// vec(lambda), vech(psi), vec(b0), vech(theta).
struct ParameterSpec {
  SlotMatrix lambda;  // P x M factor loadings
  SlotMatrix psi;     // M x M latent covariance, symmetric pattern
  SlotMatrix b0;      // M x M structural regressions, fixed-zero diagonal
  SlotMatrix theta;   // P x P residual covariance, symmetric pattern
  int theta_dim = 0;
  std::vector<std::string> labels;  // one per free index

  int num_observed() const { return lambda.rows(); }
  int num_latent() const { return lambda.cols(); }
};

/// Shape, symmetry and index-coverage checks; throws std::invalid_argument.
void validate(const ParameterSpec& spec);

/// Column-major lower-triangle stacking, diagonal included.
Vector vech(const Matrix& a);

/// Position of cell (i, j), i >= j, inside vech of a p x p matrix.
int vech_index(int i, int j, int p);

/// The p^2 x p(p+1)/2 zero/one matrix with D vech(A) = vec(A) for symmetric A.
Matrix duplication_matrix(int p);

/// The p(p+1)/2 x p^2 zero/one matrix with L vec(A) = vech(A).
Matrix elimination_matrix(int p);

/// Emits the subgraph for lambda (I - b0)^-1 psi (I - b0)^-T lambda^T + theta.
/// Symmetric matrices are gathered as vech vectors and expanded through the
/// duplication matrix, so each free symmetric parameter appears once in theta.
NodeId build_sigma(Graph& graph, const ParameterSpec& spec);

/// Default starting values given the sample covariance: free loadings 1,
/// free residual variances half the sample variances, free latent variances
/// 0.05*mean sample variance under a fixed marker loading (1.0 otherwise),
/// free covariances and regressions 0. The implied covariance at this start
/// is positive definite.
Vector default_start(const ParameterSpec& spec, const Matrix& sample_cov);

}  // namespace semgraph
