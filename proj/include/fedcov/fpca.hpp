#pragma once

// Federated principal component analysis: each center eigendecomposes its
// own corrected data and shares a truncated eigen-pack; the aggregator
// reconstructs an approximate global covariance basis from the packs alone.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedcov/common.hpp"

namespace fedcov::fpca {

struct LocalEigenpack {
  Eigen::MatrixXd basis;            // F x k_c, orthonormal columns
  Eigen::VectorXd singular_values;  // length k_c, nonincreasing
  std::uint64_t n_local = 0;
  double variance_captured = 1.0;   // attained cumulative fraction in (0, 1]
};

struct GlobalBasis {
  Eigen::MatrixXd components;          // F x m, orthonormal columns
  Eigen::VectorXd eigenvalues;         // length m, nonincreasing
  Eigen::VectorXd explained_fraction;  // length m, sums to <= 1
};

struct Scores {
  Eigen::MatrixXd coords;  // N_c x m
};

// Either a fixed component count or a cumulative explained-variance rule.
struct BasisSelection {
  std::optional<int> m_components;
  double variance_threshold = 0.8;
};

// Eigendecomposition of one center's corrected data, truncated to the
// smallest k_c whose cumulative squared singular values reach the
// threshold. Uses the N_c x N_c Gram matrix E E' when N_c <= F (the route
// that makes N_c << F tractable) and the F x F covariance E'E otherwise;
// both yield the same feature-space basis. Singular values below
// 1e-12 * sigma_max are dropped before the 1/sigma inversion.
LocalEigenpack local_eigendecomposition(const Eigen::MatrixXd& e, double variance_threshold);

// Eigendecomposition of sum_c U_c S_c^2 U_c', realized as the thin SVD of
// the stacked weighted bases [U_1 S_1 | ... | U_C S_C] so no F x F matrix
// is ever materialized.
GlobalBasis aggregate(const std::vector<LocalEigenpack>& packs, const BasisSelection& selection);

Scores project(const Eigen::MatrixXd& e, const GlobalBasis& basis);

// Flips column signs so the entry of largest magnitude is nonnegative;
// makes bases comparable across runs and routes.
void canonicalize_signs(Eigen::MatrixXd& basis);

}  // namespace fedcov::fpca
