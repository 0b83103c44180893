#include "fedcov/stats.hpp"

#include <cmath>

namespace fedcov::stats {

FeatureMoments FeatureMoments::empty(Eigen::Index n_features) {
  FeatureMoments m;
  m.count = 0;
  m.mean = Eigen::VectorXd::Zero(n_features);
  m.m2 = Eigen::VectorXd::Zero(n_features);
  return m;
}

FeatureMoments accumulate_local(const Eigen::MatrixXd& x) {
  if (x.rows() == 0 || x.cols() == 0) throw EmptyCenter("accumulate_local: empty data matrix");
  FeatureMoments m;
  m.count = static_cast<std::uint64_t>(x.rows());
  m.mean = x.colwise().mean();
  m.m2 = (x.rowwise() - m.mean.transpose()).colwise().squaredNorm();
  return m;
}

FeatureMoments merge(const FeatureMoments& a, const FeatureMoments& b) {
  if (a.mean.size() != b.mean.size())
    throw ShapeMismatch("merge: feature counts differ (" + std::to_string(a.mean.size()) + " vs " +
                        std::to_string(b.mean.size()) + ")");
  if (a.count == 0) return b;
  if (b.count == 0) return a;

  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = na + nb;

  FeatureMoments out;
  out.count = a.count + b.count;
  Eigen::VectorXd delta = b.mean - a.mean;
  out.mean = (na * a.mean + nb * b.mean) / n;
  out.m2 = a.m2 + b.m2 + delta.array().square().matrix() * (na * nb / n);
  return out;
}

GlobalStats finalize(const FeatureMoments& m) {
  if (m.count == 0) throw EmptyAccumulator("finalize: no samples accumulated");
  GlobalStats g;
  g.n_total = m.count;
  g.mean = m.mean;
  g.std = (m.m2 / static_cast<double>(m.count)).array().max(0.0).sqrt();
  return g;
}

bool is_zero_variance(double std_j, double mean_j) {
  return std_j <= 1e-13 * std::abs(mean_j) || std_j == 0.0;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const GlobalStats& g) {
  if (x.cols() != g.mean.size())
    throw ShapeMismatch("standardize: data has " + std::to_string(x.cols()) +
                        " features, stats have " + std::to_string(g.mean.size()));
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (is_zero_variance(g.std(j), g.mean(j))) {
      out.col(j).setZero();
    } else {
      out.col(j) = (x.col(j).array() - g.mean(j)) / g.std(j);
    }
  }
  return out;
}

}  // namespace fedcov::stats
