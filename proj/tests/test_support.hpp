#pragma once

// Shared helpers for the test suites. The oracles here are deliberately
// independent of the library's numerical routes: brute-force two-pass
// moments, QR-based least squares, and direct dense eigendecomposition.

#include <Eigen/Dense>
#include <Eigen/QR>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testsup {

inline Eigen::MatrixXd random_matrix(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// brute-force per-column mean and sum of squared deviations
struct BruteMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd m2;
  Eigen::VectorXd std_pop;
};

inline BruteMoments brute_moments(const Eigen::MatrixXd& x) {
  BruteMoments out;
  const auto n = static_cast<double>(x.rows());
  out.mean.resize(x.cols());
  out.m2.resize(x.cols());
  out.std_pop.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) s += x(i, j);
    const double mean = s / n;
    double m2 = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double d = x(i, j) - mean;
      m2 += d * d;
    }
    out.mean(j) = mean;
    out.m2(j) = m2;
    out.std_pop(j) = std::sqrt(m2 / n);
  }
  return out;
}

// least squares via column-pivoted QR, independent of the ADMM solve path
inline Eigen::MatrixXd ols_qr(const Eigen::MatrixXd& y, const Eigen::MatrixXd& x) {
  return y.colPivHouseholderQr().solve(x);
}

// descending eigenpairs of a symmetric matrix
inline void dense_eigh(const Eigen::MatrixXd& sym, Eigen::VectorXd& values,
                       Eigen::MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  values = solver.eigenvalues().reverse();
  vectors = solver.eigenvectors().rowwise().reverse();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fedcov_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsup
