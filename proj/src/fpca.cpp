#include "fedcov/fpca.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

namespace fedcov::fpca {

namespace {

constexpr double kSigmaFloor = 1e-12;  // relative floor before 1/sigma inversion

// Descending eigenpairs of a symmetric PSD matrix, eigenvalues clipped at 0.
void eigh_descending(const Eigen::MatrixXd& sym, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw DegenerateData("fpca: eigendecomposition failed");
  values = solver.eigenvalues().reverse().cwiseMax(0.0);
  vectors = solver.eigenvectors().rowwise().reverse();
}

int select_k(const Eigen::VectorXd& squared, double threshold, double* attained) {
  const double total = squared.sum();
  double cum = 0.0;
  for (int k = 0; k < squared.size(); ++k) {
    cum += squared(k);
    if (cum / total >= threshold) {
      if (attained) *attained = cum / total;
      return k + 1;
    }
  }
  if (attained) *attained = 1.0;
  return static_cast<int>(squared.size());
}

}  // namespace

void canonicalize_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::Index imax = 0;
    basis.col(j).cwiseAbs().maxCoeff(&imax);
    if (basis(imax, j) < 0.0) basis.col(j) = -basis.col(j);
  }
}

LocalEigenpack local_eigendecomposition(const Eigen::MatrixXd& e, double variance_threshold) {
  if (variance_threshold <= 0.0 || variance_threshold > 1.0)
    throw SpecError("local_eigendecomposition: variance threshold must be in (0, 1]");
  if (e.rows() == 0 || e.cols() == 0) throw EmptyCenter("local_eigendecomposition: empty data");
  if (e.squaredNorm() == 0.0) throw DegenerateData("local_eigendecomposition: all-zero data");

  Eigen::VectorXd lambda;   // eigenvalues of the data Gram/covariance = sigma^2
  Eigen::MatrixXd basis;    // feature-space components

  if (e.rows() <= e.cols()) {
    // Gram trick: the N x N eigenproblem, then map to feature space.
    Eigen::MatrixXd gram = e * e.transpose();
    Eigen::MatrixXd v;
    eigh_descending(gram, lambda, v);
    Eigen::VectorXd sigma = lambda.cwiseSqrt();
    const double floor = kSigmaFloor * sigma(0);
    int keep = 0;
    while (keep < sigma.size() && sigma(keep) > floor) ++keep;
    if (keep == 0) throw DegenerateData("local_eigendecomposition: no usable singular values");
    lambda = lambda.head(keep).eval();
    basis = e.transpose() * v.leftCols(keep);
    for (int j = 0; j < keep; ++j) basis.col(j) /= sigma(j);
  } else {
    Eigen::MatrixXd cov = e.transpose() * e;
    Eigen::MatrixXd u;
    eigh_descending(cov, lambda, u);
    Eigen::VectorXd sigma = lambda.cwiseSqrt();
    const double floor = kSigmaFloor * sigma(0);
    int keep = 0;
    while (keep < sigma.size() && sigma(keep) > floor) ++keep;
    if (keep == 0) throw DegenerateData("local_eigendecomposition: no usable singular values");
    lambda = lambda.head(keep).eval();
    basis = u.leftCols(keep);
  }

  double attained = 1.0;
  const int k = select_k(lambda, variance_threshold, &attained);

  LocalEigenpack pack;
  pack.basis = basis.leftCols(k);
  pack.singular_values = lambda.head(k).cwiseSqrt();
  pack.n_local = static_cast<std::uint64_t>(e.rows());
  pack.variance_captured = attained;
  canonicalize_signs(pack.basis);
  return pack;
}

GlobalBasis aggregate(const std::vector<LocalEigenpack>& packs, const BasisSelection& selection) {
  if (packs.empty()) throw NoCenters("aggregate: no eigenpacks");
  const Eigen::Index f = packs.front().basis.rows();
  Eigen::Index total_k = 0;
  for (const auto& p : packs) {
    if (p.basis.rows() != f) throw ShapeMismatch("aggregate: eigenpacks disagree on F");
    if (p.basis.cols() != p.singular_values.size())
      throw ShapeMismatch("aggregate: basis/singular value count mismatch");
    total_k += p.basis.cols();
  }

  // B = [U_1 S_1 | ... | U_C S_C]; eigendecomposing B B' == SVD of B.
  Eigen::MatrixXd stacked(f, total_k);
  Eigen::Index col = 0;
  for (const auto& p : packs) {
    stacked.middleCols(col, p.basis.cols()) =
        p.basis * p.singular_values.asDiagonal();
    col += p.basis.cols();
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  Eigen::VectorXd eigenvalues = svd.singularValues().array().square();
  const double total_variance = eigenvalues.sum();
  if (total_variance <= 0.0) throw DegenerateData("aggregate: zero total variance");

  const double floor = kSigmaFloor * svd.singularValues()(0);
  int usable = 0;
  while (usable < eigenvalues.size() && svd.singularValues()(usable) > floor) ++usable;

  int m;
  if (selection.m_components) {
    if (*selection.m_components < 1) throw SpecError("aggregate: m_components must be >= 1");
    m = std::min<int>(*selection.m_components, usable);
  } else {
    if (selection.variance_threshold <= 0.0 || selection.variance_threshold > 1.0)
      throw SpecError("aggregate: variance threshold must be in (0, 1]");
    m = select_k(eigenvalues.head(usable), selection.variance_threshold, nullptr);
  }

  GlobalBasis basis;
  basis.components = svd.matrixU().leftCols(m);
  basis.eigenvalues = eigenvalues.head(m);
  basis.explained_fraction = basis.eigenvalues / total_variance;
  canonicalize_signs(basis.components);
  return basis;
}

Scores project(const Eigen::MatrixXd& e, const GlobalBasis& basis) {
  if (e.cols() != basis.components.rows())
    throw ShapeMismatch("project: data has " + std::to_string(e.cols()) +
                        " features, basis expects " + std::to_string(basis.components.rows()));
  return Scores{e * basis.components};
}

}  // namespace fedcov::fpca
