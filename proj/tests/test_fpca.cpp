#include <doctest.h>

#include "fedcov/fpca.hpp"
#include "fedcov/oracle.hpp"
#include "test_support.hpp"

using namespace fedcov;

namespace {

double orthonormality_defect(const Eigen::MatrixXd& u) {
  Eigen::MatrixXd g = u.transpose() * u;
  g.diagonal().array() -= 1.0;
  return g.cwiseAbs().maxCoeff();
}

std::vector<Eigen::MatrixXd> split_rows(const Eigen::MatrixXd& x, int c) {
  std::vector<Eigen::MatrixXd> parts;
  const Eigen::Index n = x.rows() / c;
  for (int i = 0; i < c; ++i) parts.push_back(x.middleRows(i * n, n));
  return parts;
}

}  // namespace

TEST_SUITE("fpca") {

TEST_CASE("rank-1 data yields one component along the right direction") {
  Eigen::VectorXd u = testsup::random_matrix(1, 9, 1);
  Eigen::VectorXd v = testsup::random_matrix(2, 14, 1);
  u.normalize();
  v.normalize();
  const double sigma = 3.5;
  Eigen::MatrixXd e = sigma * u * v.transpose();

  auto pack = fpca::local_eigendecomposition(e, 0.9);
  CHECK(pack.basis.cols() == 1);
  CHECK(pack.singular_values(0) == doctest::Approx(sigma).epsilon(1e-10));
  CHECK(std::abs(pack.basis.col(0).dot(v)) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(pack.n_local == 9);
  CHECK(pack.variance_captured == doctest::Approx(1.0));
}

TEST_CASE("threshold 1.0 reconstructs the local covariance contribution") {
  // N < F exercises the Gram route, N > F the covariance route; the
  // oracle is the raw product E'E itself
  for (auto [n, f] : {std::pair<int, int>{8, 12}, {12, 8}}) {
    Eigen::MatrixXd e = testsup::random_matrix(17, n, f);
    auto pack = fpca::local_eigendecomposition(e, 1.0);
    Eigen::MatrixXd reconstructed = pack.basis *
                                    pack.singular_values.array().square().matrix().asDiagonal() *
                                    pack.basis.transpose();
    Eigen::MatrixXd oracle = e.transpose() * e;
    CHECK((reconstructed - oracle).norm() < 1e-8 * oracle.norm());
  }
}

TEST_CASE("equal-variance data keeps ceil(threshold * dims) components") {
  // 10 exactly equal eigenvalues: cumulative fraction is j/10
  Eigen::MatrixXd e = 2.0 * Eigen::MatrixXd::Identity(10, 10);
  auto pack = fpca::local_eigendecomposition(e, 0.8);
  CHECK(pack.basis.cols() == 8);
  CHECK(pack.variance_captured == doctest::Approx(0.8));
}

TEST_CASE("degenerate and invalid inputs") {
  CHECK_THROWS_AS(fpca::local_eigendecomposition(Eigen::MatrixXd::Zero(5, 4), 0.8),
                  DegenerateData);
  CHECK_THROWS_AS(fpca::local_eigendecomposition(Eigen::MatrixXd(0, 4), 0.8), EmptyCenter);
  Eigen::MatrixXd ok = testsup::random_matrix(3, 4, 4);
  CHECK_THROWS_AS(fpca::local_eigendecomposition(ok, 0.0), SpecError);
  CHECK_THROWS_AS(fpca::local_eigendecomposition(ok, 1.5), SpecError);
}

TEST_CASE("emitted bases are orthonormal") {
  for (std::uint64_t seed : {21, 22, 23}) {
    Eigen::MatrixXd tall = testsup::random_matrix(seed, 30, 9);
    Eigen::MatrixXd wide = testsup::random_matrix(seed + 10, 9, 30);
    CHECK(orthonormality_defect(fpca::local_eigendecomposition(tall, 1.0).basis) < 1e-8);
    CHECK(orthonormality_defect(fpca::local_eigendecomposition(wide, 1.0).basis) < 1e-8);
  }
}

TEST_CASE("aggregate of a single full-rank pack is the pack itself") {
  Eigen::MatrixXd e = testsup::random_matrix(31, 20, 6);
  auto pack = fpca::local_eigendecomposition(e, 1.0);
  auto basis = fpca::aggregate({pack}, fpca::BasisSelection{std::nullopt, 1.0});
  CHECK(basis.eigenvalues.size() == pack.singular_values.size());
  for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) {
    CHECK(basis.eigenvalues(i) ==
          doctest::Approx(pack.singular_values(i) * pack.singular_values(i)).epsilon(1e-10));
    CHECK(std::abs(basis.components.col(i).dot(pack.basis.col(i))) ==
          doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("orthogonal rank-1 packs add independently") {
  Eigen::MatrixXd dirs = testsup::random_matrix(41, 10, 2);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(dirs);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(10, 2);

  fpca::LocalEigenpack a, b;
  a.basis = q.col(0);
  a.singular_values = Eigen::VectorXd::Constant(1, 2.0);
  a.n_local = 5;
  b.basis = q.col(1);
  b.singular_values = Eigen::VectorXd::Constant(1, 1.0);
  b.n_local = 5;

  auto basis = fpca::aggregate({a, b}, fpca::BasisSelection{2, 0.8});
  CHECK(basis.eigenvalues(0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(basis.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(basis.components.col(0).dot(q.col(0))) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(basis.components.col(1).dot(q.col(1))) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("full sharing reproduces centralized PCA") {
  Eigen::MatrixXd e = testsup::random_matrix(51, 60, 20);
  // centralized oracle: dense eigendecomposition of the pooled covariance
  Eigen::VectorXd cen_values;
  Eigen::MatrixXd cen_vectors;
  testsup::dense_eigh(e.transpose() * e, cen_values, cen_vectors);

  std::vector<fpca::LocalEigenpack> packs;
  for (const auto& part : split_rows(e, 3))
    packs.push_back(fpca::local_eigendecomposition(part, 1.0));
  auto basis = fpca::aggregate(packs, fpca::BasisSelection{std::nullopt, 1.0});

  REQUIRE(basis.eigenvalues.size() == 20);
  for (Eigen::Index i = 0; i < 20; ++i)
    CHECK(std::abs(basis.eigenvalues(i) - cen_values(i)) < 1e-8 * cen_values(i));

  auto angles = oracle::principal_angles(basis.components.leftCols(4), cen_vectors.leftCols(4));
  CHECK(angles.maxCoeff() < 1e-6);
}

TEST_CASE("project is the linear map onto the components") {
  Eigen::MatrixXd e = testsup::random_matrix(61, 25, 8);
  auto pack = fpca::local_eigendecomposition(e, 1.0);
  auto basis = fpca::aggregate({pack}, fpca::BasisSelection{4, 0.8});

  SUBCASE("component rows map to unit coordinates") {
    Eigen::MatrixXd rows = basis.components.leftCols(2).transpose();
    auto scores = fpca::project(rows, basis);
    Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(2, 4);
    CHECK((scores.coords - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("zero maps to zero") {
    auto scores = fpca::project(Eigen::MatrixXd::Zero(3, 8), basis);
    CHECK(scores.coords.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("projection never gains variance, exact at full rank") {
    auto truncated = fpca::project(e, basis);
    CHECK(truncated.coords.squaredNorm() <= e.squaredNorm() + 1e-12);
    auto full = fpca::aggregate({pack}, fpca::BasisSelection{std::nullopt, 1.0});
    auto all = fpca::project(e, full);
    CHECK(all.coords.squaredNorm() == doctest::Approx(e.squaredNorm()).epsilon(1e-10));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(fpca::project(Eigen::MatrixXd::Zero(3, 9), basis), ShapeMismatch);
  }
}

TEST_CASE("raising the threshold never shrinks the pack or worsens the subspace") {
  Eigen::MatrixXd e = testsup::random_matrix(71, 40, 12);
  Eigen::VectorXd cen_values;
  Eigen::MatrixXd cen_vectors;
  testsup::dense_eigh(e.transpose() * e, cen_values, cen_vectors);

  Eigen::Index last_k = 0;
  double last_angle = M_PI;
  for (double threshold : {0.5, 0.7, 0.9, 1.0}) {
    std::vector<fpca::LocalEigenpack> packs;
    Eigen::Index k_sum = 0;
    for (const auto& part : split_rows(e, 2)) {
      auto pack = fpca::local_eigendecomposition(part, threshold);
      k_sum += pack.basis.cols();
      packs.push_back(std::move(pack));
    }
    CHECK(k_sum >= last_k);
    last_k = k_sum;

    auto basis = fpca::aggregate(packs, fpca::BasisSelection{3, 0.8});
    double angle =
        oracle::principal_angles(basis.components, cen_vectors.leftCols(3)).maxCoeff();
    CHECK(angle <= last_angle + 1e-9);
    last_angle = angle;
  }
}

TEST_CASE("eigenvalue ordering, explained fractions and sign convention") {
  std::vector<fpca::LocalEigenpack> packs;
  for (int c = 0; c < 3; ++c)
    packs.push_back(
        fpca::local_eigendecomposition(testsup::random_matrix(80 + c, 15, 10), 0.9));
  auto basis = fpca::aggregate(packs, fpca::BasisSelection{std::nullopt, 0.8});

  for (Eigen::Index i = 1; i < basis.eigenvalues.size(); ++i)
    CHECK(basis.eigenvalues(i) <= basis.eigenvalues(i - 1));
  CHECK(basis.eigenvalues.minCoeff() >= 0.0);
  CHECK(basis.explained_fraction.sum() <= 1.0 + 1e-12);
  CHECK(orthonormality_defect(basis.components) < 1e-8);
  for (Eigen::Index j = 0; j < basis.components.cols(); ++j) {
    Eigen::Index imax = 0;
    basis.components.col(j).cwiseAbs().maxCoeff(&imax);
    CHECK(basis.components(imax, j) >= 0.0);
  }
}

TEST_CASE("aggregate error paths") {
  CHECK_THROWS_AS(fpca::aggregate({}, fpca::BasisSelection{}), NoCenters);
  auto a = fpca::local_eigendecomposition(testsup::random_matrix(91, 8, 5), 1.0);
  auto b = fpca::local_eigendecomposition(testsup::random_matrix(92, 8, 6), 1.0);
  CHECK_THROWS_AS(fpca::aggregate({a, b}, fpca::BasisSelection{}), ShapeMismatch);
}

}  // TEST_SUITE
