#pragma once

// Consensus estimation of the covariate weight matrix via ADMM and removal
// of the estimated covariate effect from standardized data.
//
// Each center c holds standardized features Xhat_c (N_c x F) and covariates
// Y_c (N_c x q) and fits the multi-output regression Xhat_c ~ Y_c W_c while
// a consensus variable W~ ties the local solutions together:
//
//   local:     W_c   <- (Y'Y + rho/2 I)^-1 (Y'Xhat - alpha_c/2 + rho/2 W~)
//   consensus: W~    <- (1/C) sum_c (alpha_c/rho + W_c)
//   dual:      alpha_c <- alpha_c + rho (W_c - W~)
//
// executed in that order within one iteration; the consensus step consumes
// the duals from the previous iteration. The fixed point is the pooled OLS
// solution (sum_c Y_c'Y_c)^-1 (sum_c Y_c'Xhat_c).

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fedcov/common.hpp"

namespace fedcov::admm {

struct AdmmConfig {
  double rho = 1.0;     // penalty factor / dual step length
  int iterations = 10;  // fixed round count
  std::optional<double> tolerance;  // optional early stop on max_c ||W_c - W~||_F
};

struct LocalAdmmState {
  Eigen::MatrixXd w;      // q x F
  Eigen::MatrixXd alpha;  // q x F
};

struct ConsensusWeights {
  Eigen::MatrixXd w_tilde;  // q x F
};

struct CorrectedData {
  Eigen::MatrixXd e;  // N_c x F residuals
};

// Caches the SPD factorization of (Y'Y + rho/2 I) and the product Y'Xhat,
// both constant across iterations.
class LocalSolver {
 public:
  LocalSolver(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y, double rho);

  Eigen::MatrixXd update(const ConsensusWeights& w_tilde, const Eigen::MatrixXd& alpha) const;

  Eigen::Index n_covariates() const { return yt_xhat_.rows(); }
  Eigen::Index n_features() const { return yt_xhat_.cols(); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd yt_xhat_;
  double rho_;
};

Eigen::MatrixXd local_update(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y,
                             const ConsensusWeights& w_tilde, const Eigen::MatrixXd& alpha,
                             double rho);

Eigen::MatrixXd dual_update(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& w_new,
                            const ConsensusWeights& w_tilde_new, double rho);

ConsensusWeights consensus_update(const std::vector<LocalAdmmState>& locals, double rho);

struct CenterProblem {
  Eigen::MatrixXd xhat;
  Eigen::MatrixXd y;
};

struct IterationStats {
  int iteration = 0;                  // 1-based
  double max_primal_residual = 0.0;   // max_c ||W_c - W~||_F
  std::optional<double> mse_vs_truth; // ||W~ - truth||_F^2 / (q F) when truth given
};

struct AdmmResult {
  ConsensusWeights weights;
  std::vector<IterationStats> trace;
};

// Runs the full loop. When w_truth is supplied the trace carries the
// per-iteration mean squared error against it.
AdmmResult run_admm(const std::vector<CenterProblem>& centers, const AdmmConfig& config,
                    const Eigen::MatrixXd* w_truth = nullptr);

// E_c = Xhat_c - Y_c W~
CorrectedData correct(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y,
                      const ConsensusWeights& w_tilde);

double mse_between(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace fedcov::admm
