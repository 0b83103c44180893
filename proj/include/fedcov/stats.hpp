#pragma once

// Mergeable per-feature moment statistics and standardization against
// global statistics. Centers accumulate locally in one batch pass; the
// aggregator combines accumulators with the pairwise parallel update, so
// the result is independent of merge order up to floating tolerance.

#include <Eigen/Dense>
#include <cstdint>

#include "fedcov/common.hpp"

namespace fedcov::stats {

struct FeatureMoments {
  std::uint64_t count = 0;
  Eigen::VectorXd mean;  // length F
  Eigen::VectorXd m2;    // column sums of squared deviations from the mean

  static FeatureMoments empty(Eigen::Index n_features);
};

struct GlobalStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population convention, sqrt(m2 / count)
  std::uint64_t n_total = 0;
};

struct CenterData {
  Eigen::MatrixXd x;  // N_c x F features
  Eigen::MatrixXd y;  // N_c x q covariates
};

// Column means and squared deviations of one center's data in a single batch.
FeatureMoments accumulate_local(const Eigen::MatrixXd& x);

// Pairwise parallel-moments combination:
//   delta = mean_b - mean_a
//   m2    = m2_a + m2_b + delta^2 * n_a * n_b / (n_a + n_b)
FeatureMoments merge(const FeatureMoments& a, const FeatureMoments& b);

GlobalStats finalize(const FeatureMoments& m);

// (x - mean) / std per column. Zero-variance columns map to zero rather
// than NaN so degenerate features cannot poison downstream regression/PCA.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const GlobalStats& g);

// A column counts as zero-variance when its std is zero or indistinguishable
// from accumulation roundoff at the scale of its mean.
bool is_zero_variance(double std_j, double mean_j);

}  // namespace fedcov::stats
