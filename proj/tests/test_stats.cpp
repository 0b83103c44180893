#include <doctest.h>

#include <algorithm>
#include <random>

#include "fedcov/stats.hpp"
#include "test_support.hpp"

using namespace fedcov;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> values) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("accumulate_local on a single column") {
  auto m = stats::accumulate_local(column({1.0, 2.0}));
  // oracle: direct two-pass computation
  auto brute = testsup::brute_moments(column({1.0, 2.0}));
  CHECK(m.count == 2);
  CHECK(m.mean(0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(m.m2(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.mean(0) == doctest::Approx(brute.mean(0)));
  CHECK(m.m2(0) == doctest::Approx(brute.m2(0)));
}

TEST_CASE("accumulate_local degenerate columns") {
  auto constant = stats::accumulate_local(column({5.0, 5.0, 5.0}));
  CHECK(constant.mean(0) == 5.0);
  CHECK(constant.m2(0) == 0.0);

  auto single = stats::accumulate_local(column({3.0}));
  CHECK(single.count == 1);
  CHECK(single.mean(0) == 3.0);
  CHECK(single.m2(0) == 0.0);
}

TEST_CASE("accumulate_local rejects empty input") {
  CHECK_THROWS_AS(stats::accumulate_local(Eigen::MatrixXd(0, 3)), EmptyCenter);
  CHECK_THROWS_AS(stats::accumulate_local(Eigen::MatrixXd(3, 0)), EmptyCenter);
}

TEST_CASE("merge equals moments of the concatenation") {
  auto a = stats::accumulate_local(column({1.0, 2.0}));
  auto b = stats::accumulate_local(column({4.0, 6.0}));
  auto merged = stats::merge(a, b);
  // oracle: two-pass on [1, 2, 4, 6] gives mean 3.25, m2 14.75
  auto brute = testsup::brute_moments(column({1.0, 2.0, 4.0, 6.0}));
  CHECK(brute.mean(0) == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(brute.m2(0) == doctest::Approx(14.75).epsilon(1e-15));
  CHECK(merged.count == 4);
  CHECK(merged.mean(0) == doctest::Approx(3.25).epsilon(1e-12));
  CHECK(merged.m2(0) == doctest::Approx(14.75).epsilon(1e-12));
}

TEST_CASE("merge identity and commutativity") {
  auto a = stats::accumulate_local(column({1.0, 2.0, 7.0}));
  auto empty = stats::FeatureMoments::empty(1);
  auto right = stats::merge(a, empty);
  CHECK(right.count == a.count);
  CHECK(right.mean(0) == a.mean(0));
  CHECK(right.m2(0) == a.m2(0));
  auto left = stats::merge(empty, a);
  CHECK(left.mean(0) == a.mean(0));

  auto b = stats::accumulate_local(column({-3.0, 0.5}));
  auto ab = stats::merge(a, b);
  auto ba = stats::merge(b, a);
  CHECK(ab.mean(0) == doctest::Approx(ba.mean(0)).epsilon(1e-12));
  CHECK(ab.m2(0) == doctest::Approx(ba.m2(0)).epsilon(1e-12));
}

TEST_CASE("merge rejects mismatched feature counts") {
  auto a = stats::FeatureMoments::empty(2);
  auto b = stats::FeatureMoments::empty(3);
  CHECK_THROWS_AS(stats::merge(a, b), ShapeMismatch);
}

TEST_CASE("finalize population convention") {
  auto merged = stats::merge(stats::accumulate_local(column({1.0, 2.0})),
                             stats::accumulate_local(column({4.0, 6.0})));
  auto g = stats::finalize(merged);
  CHECK(g.n_total == 4);
  CHECK(g.std(0) == doctest::Approx(std::sqrt(3.6875)).epsilon(1e-12));

  auto constant = stats::finalize(stats::accumulate_local(column({2.0, 2.0})));
  CHECK(constant.std(0) == 0.0);
  auto single = stats::finalize(stats::accumulate_local(column({9.0})));
  CHECK(single.std(0) == 0.0);

  CHECK_THROWS_AS(stats::finalize(stats::FeatureMoments::empty(2)), EmptyAccumulator);
}

TEST_CASE("standardize identity and zero-variance policy") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 1, -1, 1, 1, 1, -1, 1;  // col 0 has mean 0 / std 1, col 1 constant
  auto g = stats::finalize(stats::accumulate_local(x));
  auto z = stats::standardize(x, g);
  CHECK((z.col(0) - x.col(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(stats::standardize(Eigen::MatrixXd(2, 3), g), ShapeMismatch);
}

TEST_CASE("constant feature across centers standardizes to zero") {
  // 0.1 is not exactly representable; the accumulated std is roundoff, not 0
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(7, 1, 0.1);
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(5, 1, 0.1);
  auto g = stats::finalize(stats::merge(stats::accumulate_local(a), stats::accumulate_local(b)));
  auto z = stats::standardize(a, g);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("any partition matches centralized standardization") {
  const Eigen::MatrixXd x = testsup::random_matrix(101, 240, 7);
  auto brute = testsup::brute_moments(x);
  std::mt19937_64 rng(999);

  for (int trial = 0; trial < 20; ++trial) {
    // random partition into 1..6 contiguous blocks, merged in random order
    std::uniform_int_distribution<int> n_centers_dist(1, 6);
    const int c = n_centers_dist(rng);
    std::vector<Eigen::Index> cuts{0, x.rows()};
    std::uniform_int_distribution<Eigen::Index> cut_dist(1, x.rows() - 1);
    while (static_cast<int>(cuts.size()) < c + 1) cuts.push_back(cut_dist(rng));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<stats::FeatureMoments> parts;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
      parts.push_back(stats::accumulate_local(x.middleRows(cuts[i], cuts[i + 1] - cuts[i])));
    std::shuffle(parts.begin(), parts.end(), rng);
    auto total = stats::FeatureMoments::empty(x.cols());
    for (const auto& p : parts) total = stats::merge(total, p);
    auto g = stats::finalize(total);

    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      CHECK(std::abs(g.mean(j) - brute.mean(j)) <=
            1e-10 * std::max(1.0, std::abs(brute.mean(j))));
      CHECK(std::abs(g.std(j) - brute.std_pop(j)) <= 1e-10 * brute.std_pop(j));
    }

    // pooled standardized columns: mean 0 +- 1e-9, population std 1 +- 1e-9
    auto z = stats::standardize(x, g);
    auto zb = testsup::brute_moments(z);
    CHECK(zb.mean.cwiseAbs().maxCoeff() < 1e-9);
    CHECK((zb.std_pop.array() - 1.0).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("merge is associative within tolerance") {
  auto a = stats::accumulate_local(testsup::random_matrix(1, 13, 4));
  auto b = stats::accumulate_local(testsup::random_matrix(2, 29, 4));
  auto c = stats::accumulate_local(testsup::random_matrix(3, 7, 4));
  auto left = stats::merge(stats::merge(a, b), c);
  auto right = stats::merge(a, stats::merge(b, c));
  CHECK((left.mean - right.mean).cwiseAbs().maxCoeff() < 1e-9 * right.mean.cwiseAbs().maxCoeff());
  CHECK((left.m2 - right.m2).cwiseAbs().maxCoeff() < 1e-9 * right.m2.cwiseAbs().maxCoeff());
}

TEST_CASE("standardize is invertible on nonzero-std columns") {
  const Eigen::MatrixXd x = testsup::random_matrix(55, 40, 3, 2.5);
  auto g = stats::finalize(stats::accumulate_local(x));
  auto z = stats::standardize(x, g);
  Eigen::MatrixXd back = (z * g.std.asDiagonal()).rowwise() + g.mean.transpose();
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-10);
}

}  // TEST_SUITE
