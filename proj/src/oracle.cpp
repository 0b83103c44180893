#include "fedcov/oracle.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedcov::oracle {

CentralizedResult centralized_pipeline(const std::vector<stats::CenterData>& centers,
                                       const std::optional<int>& m_components,
                                       double variance_threshold) {
  if (centers.empty()) throw NoCenters("centralized_pipeline: no centers");

  Eigen::Index n = 0;
  const Eigen::Index f = centers.front().x.cols(), q = centers.front().y.cols();
  for (const auto& c : centers) {
    if (c.x.cols() != f || c.y.cols() != q)
      throw ShapeMismatch("centralized_pipeline: centers disagree on F or q");
    if (c.x.rows() != c.y.rows()) throw ShapeMismatch("centralized_pipeline: x/y row mismatch");
    n += c.x.rows();
  }

  Eigen::MatrixXd x(n, f), y(n, q);
  Eigen::Index row = 0;
  for (const auto& c : centers) {
    x.middleRows(row, c.x.rows()) = c.x;
    y.middleRows(row, c.y.rows()) = c.y;
    row += c.x.rows();
  }

  CentralizedResult out;
  out.global_stats = stats::finalize(stats::accumulate_local(x));
  Eigen::MatrixXd xhat = stats::standardize(x, out.global_stats);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(y);
  if (qr.rank() < q)
    throw SingularSystem("centralized_pipeline: covariates are rank-deficient (rank " +
                         std::to_string(qr.rank()) + " of " + std::to_string(q) + ")");
  out.w_ols = qr.solve(xhat);
  out.corrected = xhat - y * out.w_ols;

  // full decomposition of the pooled covariance
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.corrected.transpose() * out.corrected);
  if (eig.info() != Eigen::Success) throw DegenerateData("centralized_pipeline: PCA failed");
  Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double total = values.sum();
  if (total <= 0.0) throw DegenerateData("centralized_pipeline: zero variance after correction");

  int m;
  if (m_components) {
    m = std::min<int>(*m_components, static_cast<int>(values.size()));
  } else {
    double cum = 0.0;
    m = static_cast<int>(values.size());
    for (int k = 0; k < values.size(); ++k) {
      cum += values(k);
      if (cum / total >= variance_threshold) {
        m = k + 1;
        break;
      }
    }
  }

  out.basis.components = vectors.leftCols(m);
  out.basis.eigenvalues = values.head(m);
  out.basis.explained_fraction = out.basis.eigenvalues / total;
  fpca::canonicalize_signs(out.basis.components);
  return out;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw ShapeMismatch("principal_angles: ambient dimensions differ");
  Eigen::MatrixXd cross = a.transpose() * b;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  Eigen::VectorXd angles(svd.singularValues().size());
  for (Eigen::Index i = 0; i < angles.size(); ++i)
    angles(i) = std::acos(std::clamp(svd.singularValues()(i), -1.0, 1.0));
  return angles;  // singular values descending -> angles ascending
}

double max_rel_err(const Eigen::VectorXd& actual, const Eigen::VectorXd& reference) {
  if (actual.size() != reference.size()) throw ShapeMismatch("max_rel_err: length mismatch");
  const double scale = reference.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < actual.size(); ++i) {
    const double denom = std::max(std::abs(reference(i)), 1e-15 * std::max(scale, 1.0));
    worst = std::max(worst, std::abs(actual(i) - reference(i)) / denom);
  }
  return worst;
}

ComparisonReport compare(const fed::AnalysisResult& federated, const CentralizedResult& centralized,
                         int m) {
  const int m_use = static_cast<int>(std::min<Eigen::Index>(
      {static_cast<Eigen::Index>(m), federated.basis.components.cols(),
       centralized.basis.components.cols()}));
  if (m_use < 1) throw SpecError("compare: no components to compare");
  if (federated.basis.components.rows() != centralized.basis.components.rows())
    throw ShapeMismatch("compare: bases have different feature dimensions");
  if (federated.weights.w_tilde.rows() != centralized.w_ols.rows() ||
      federated.weights.w_tilde.cols() != centralized.w_ols.cols())
    throw ShapeMismatch("compare: weight shapes differ");

  ComparisonReport report;
  report.stats_max_rel_err =
      std::max(max_rel_err(federated.global_stats.mean, centralized.global_stats.mean),
               max_rel_err(federated.global_stats.std, centralized.global_stats.std));
  report.w_rel_frobenius_err =
      (federated.weights.w_tilde - centralized.w_ols).norm() / centralized.w_ols.norm();

  report.eigenvalue_rel_errs.resize(m_use);
  for (int i = 0; i < m_use; ++i) {
    const double ref = centralized.basis.eigenvalues(i);
    report.eigenvalue_rel_errs(i) =
        std::abs(federated.basis.eigenvalues(i) - ref) / std::max(ref, 1e-300);
  }

  Eigen::MatrixXd fed_top = federated.basis.components.leftCols(m_use);
  Eigen::MatrixXd cen_top = centralized.basis.components.leftCols(m_use);
  report.principal_angles_rad = principal_angles(fed_top, cen_top);

  // both bases are sign-canonicalized already; cosine per matched column
  report.pc_cosines.resize(m_use);
  for (int i = 0; i < m_use; ++i)
    report.pc_cosines(i) =
        fed_top.col(i).dot(cen_top.col(i)) / (fed_top.col(i).norm() * cen_top.col(i).norm());
  return report;
}

std::string to_text(const ComparisonReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific;
  os << "stats_max_rel_err = " << r.stats_max_rel_err << "\n";
  os << "w_rel_frobenius_err = " << r.w_rel_frobenius_err << "\n";
  for (Eigen::Index i = 0; i < r.eigenvalue_rel_errs.size(); ++i)
    os << "eigenvalue_rel_err_" << (i + 1) << " = " << r.eigenvalue_rel_errs(i) << "\n";
  for (Eigen::Index i = 0; i < r.principal_angles_rad.size(); ++i)
    os << "principal_angle_rad_" << (i + 1) << " = " << r.principal_angles_rad(i) << "\n";
  for (Eigen::Index i = 0; i < r.pc_cosines.size(); ++i)
    os << "pc_cosine_" << (i + 1) << " = " << r.pc_cosines(i) << "\n";
  return os.str();
}

}  // namespace fedcov::oracle
