#include "fedcov/admm.hpp"

#include <cmath>
#include <string>

namespace fedcov::admm {

namespace {

void check_center_shapes(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y) {
  if (xhat.rows() != y.rows())
    throw ShapeMismatch("admm: data rows " + std::to_string(xhat.rows()) + " != covariate rows " +
                        std::to_string(y.rows()));
  if (xhat.rows() == 0) throw EmptyCenter("admm: center has no subjects");
}

}  // namespace

LocalSolver::LocalSolver(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y, double rho)
    : rho_(rho) {
  check_center_shapes(xhat, y);
  const Eigen::Index q = y.cols();
  Eigen::MatrixXd system = y.transpose() * y;
  system.diagonal().array() += rho / 2.0;
  llt_.compute(system);
  if (llt_.info() != Eigen::Success)
    throw SingularSystem("admm: Y'Y + rho/2 I not positive definite (rank-deficient Y with rho=" +
                         std::to_string(rho) + ")");
  yt_xhat_ = y.transpose() * xhat;
  (void)q;
}

Eigen::MatrixXd LocalSolver::update(const ConsensusWeights& w_tilde,
                                    const Eigen::MatrixXd& alpha) const {
  if (alpha.rows() != yt_xhat_.rows() || alpha.cols() != yt_xhat_.cols())
    throw ShapeMismatch("local_update: alpha shape mismatch");
  if (w_tilde.w_tilde.rows() != yt_xhat_.rows() || w_tilde.w_tilde.cols() != yt_xhat_.cols())
    throw ShapeMismatch("local_update: consensus shape mismatch");
  return llt_.solve(yt_xhat_ - 0.5 * alpha + (rho_ / 2.0) * w_tilde.w_tilde);
}

Eigen::MatrixXd local_update(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y,
                             const ConsensusWeights& w_tilde, const Eigen::MatrixXd& alpha,
                             double rho) {
  return LocalSolver(xhat, y, rho).update(w_tilde, alpha);
}

Eigen::MatrixXd dual_update(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& w_new,
                            const ConsensusWeights& w_tilde_new, double rho) {
  if (alpha.rows() != w_new.rows() || alpha.cols() != w_new.cols() ||
      w_new.rows() != w_tilde_new.w_tilde.rows() || w_new.cols() != w_tilde_new.w_tilde.cols())
    throw ShapeMismatch("dual_update: shape mismatch");
  return alpha + rho * (w_new - w_tilde_new.w_tilde);
}

ConsensusWeights consensus_update(const std::vector<LocalAdmmState>& locals, double rho) {
  if (locals.empty()) throw NoCenters("consensus_update: no centers");
  const Eigen::Index q = locals.front().w.rows();
  const Eigen::Index f = locals.front().w.cols();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(q, f);
  for (const auto& s : locals) {
    if (s.w.rows() != q || s.w.cols() != f || s.alpha.rows() != q || s.alpha.cols() != f)
      throw ShapeMismatch("consensus_update: center state shape mismatch");
    sum += s.alpha / rho + s.w;
  }
  return ConsensusWeights{sum / static_cast<double>(locals.size())};
}

double mse_between(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch("mse: shape mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

AdmmResult run_admm(const std::vector<CenterProblem>& centers, const AdmmConfig& config,
                    const Eigen::MatrixXd* w_truth) {
  if (centers.empty()) throw NoCenters("run_admm: no centers");
  if (config.rho <= 0.0) throw SpecError("run_admm: rho must be positive");
  if (config.iterations < 1) throw SpecError("run_admm: iterations must be >= 1");

  const Eigen::Index q = centers.front().y.cols();
  const Eigen::Index f = centers.front().xhat.cols();
  std::vector<LocalSolver> solvers;
  solvers.reserve(centers.size());
  for (const auto& c : centers) {
    if (c.y.cols() != q || c.xhat.cols() != f)
      throw ShapeMismatch("run_admm: centers disagree on q or F");
    solvers.emplace_back(c.xhat, c.y, config.rho);
  }
  if (w_truth && (w_truth->rows() != q || w_truth->cols() != f))
    throw ShapeMismatch("run_admm: truth matrix is not q x F");

  std::vector<LocalAdmmState> states(centers.size());
  for (auto& s : states) {
    s.w = Eigen::MatrixXd::Zero(q, f);
    s.alpha = Eigen::MatrixXd::Zero(q, f);
  }
  ConsensusWeights consensus{Eigen::MatrixXd::Zero(q, f)};

  AdmmResult result;
  result.trace.reserve(static_cast<std::size_t>(config.iterations));

  for (int it = 1; it <= config.iterations; ++it) {
    for (std::size_t c = 0; c < states.size(); ++c)
      states[c].w = solvers[c].update(consensus, states[c].alpha);
    consensus = consensus_update(states, config.rho);
    double residual = 0.0;
    for (auto& s : states) {
      residual = std::max(residual, (s.w - consensus.w_tilde).norm());
      s.alpha = dual_update(s.alpha, s.w, consensus, config.rho);
    }

    if (!consensus.w_tilde.allFinite())
      throw DivergenceDetected("run_admm: non-finite consensus at iteration " + std::to_string(it) +
                               " (check rho)");

    IterationStats row;
    row.iteration = it;
    row.max_primal_residual = residual;
    if (w_truth) row.mse_vs_truth = mse_between(consensus.w_tilde, *w_truth);
    result.trace.push_back(row);

    if (config.tolerance && residual <= *config.tolerance) break;
  }

  result.weights = std::move(consensus);
  return result;
}

CorrectedData correct(const Eigen::MatrixXd& xhat, const Eigen::MatrixXd& y,
                      const ConsensusWeights& w_tilde) {
  if (y.cols() != w_tilde.w_tilde.rows() || xhat.cols() != w_tilde.w_tilde.cols() ||
      xhat.rows() != y.rows())
    throw ShapeMismatch("correct: inconsistent shapes");
  return CorrectedData{xhat - y * w_tilde.w_tilde};
}

}  // namespace fedcov::admm
