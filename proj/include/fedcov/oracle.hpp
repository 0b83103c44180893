#pragma once

// Centralized reference computations and comparison metrics used to certify
// federated results. The oracle pools all centers' data (possible only at
// desk scale) and follows independent numerical routes: QR for the OLS
// weights and a dense eigendecomposition of the pooled covariance for PCA.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fedcov/federation.hpp"
#include "fedcov/fpca.hpp"
#include "fedcov/stats.hpp"

namespace fedcov::oracle {

struct CentralizedResult {
  stats::GlobalStats global_stats;
  Eigen::MatrixXd w_ols;        // q x F pooled OLS weights
  fpca::GlobalBasis basis;      // PCA of pooled corrected data
  Eigen::MatrixXd corrected;    // pooled residuals (kept for variance checks)
};

CentralizedResult centralized_pipeline(const std::vector<stats::CenterData>& centers,
                                       const std::optional<int>& m_components,
                                       double variance_threshold);

struct ComparisonReport {
  double stats_max_rel_err = 0.0;
  double w_rel_frobenius_err = 0.0;
  Eigen::VectorXd eigenvalue_rel_errs;
  Eigen::VectorXd principal_angles_rad;  // ascending, in [0, pi/2]
  Eigen::VectorXd pc_cosines;            // per-component after sign canonicalization
};

ComparisonReport compare(const fed::AnalysisResult& federated, const CentralizedResult& centralized,
                         int m);

// Principal angles between the spans of two orthonormal bases, via the
// singular values of a'b.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Elementwise relative error with a scale-aware floor on the denominator.
double max_rel_err(const Eigen::VectorXd& actual, const Eigen::VectorXd& reference);

std::string to_text(const ComparisonReport& report);

}  // namespace fedcov::oracle
