#include "fedcov/synthdata.hpp"

#include <cmath>
#include <random>

#include "fedcov/oracle.hpp"

namespace fedcov::synth {

namespace {

void validate(const SynthSpec& s) {
  if (s.n_total < 1 || s.n_features < 1 || s.n_covariates < 1 || s.n_centers < 1 || s.folds < 1)
    throw SpecError("synth spec: all sizes must be positive");
  if (s.noise_frac < 0.0) throw SpecError("synth spec: noise fraction must be >= 0");
  if (s.n_total % s.n_centers != 0)
    throw SpecError("synth spec: n_total " + std::to_string(s.n_total) +
                    " not divisible into " + std::to_string(s.n_centers) + " equal centers");
  if (s.n_total / s.n_centers < 1) throw SpecError("synth spec: centers would be empty");
}

Eigen::MatrixXd draw_normal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(fold) + 1));
}

SynthDataset generate(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);

  const Eigen::Index n = spec.n_total, f = spec.n_features, q = spec.n_covariates;
  Eigen::MatrixXd y = draw_normal(rng, n, q);
  if (spec.intercept) y.col(0).setOnes();
  Eigen::MatrixXd w = draw_normal(rng, q, f);

  Eigen::MatrixXd x = y * w;
  const double x_norm = x.norm();
  if (spec.noise_frac > 0.0) {
    // sigma = noise_frac * rms entry of the noise-free signal
    const double sigma = spec.noise_frac * x_norm / std::sqrt(static_cast<double>(n * f));
    x += sigma * draw_normal(rng, n, f);
  }

  SynthDataset out;
  out.w_true = std::move(w);
  out.x_norm = x_norm;
  const Eigen::Index rows_per_center = n / spec.n_centers;
  out.centers.reserve(static_cast<std::size_t>(spec.n_centers));
  for (int c = 0; c < spec.n_centers; ++c) {
    stats::CenterData data;
    data.x = x.middleRows(c * rows_per_center, rows_per_center);
    data.y = y.middleRows(c * rows_per_center, rows_per_center);
    out.centers.push_back(std::move(data));
  }
  return out;
}

FoldSummary fold_runner(const SynthSpec& spec, const fed::PipelineConfig& config, int pc_count) {
  validate(spec);
  FoldSummary summary;
  summary.n_centers = spec.n_centers;
  summary.iterations = config.admm.iterations;

  for (int fold = 0; fold < spec.folds; ++fold) {
    SynthSpec fold_spec = spec;
    fold_spec.seed = fold_seed(spec.seed, fold);
    SynthDataset data = generate(fold_spec);

    std::vector<fed::CenterInput> inputs;
    inputs.reserve(data.centers.size());
    for (const auto& c : data.centers) inputs.push_back(fed::CenterInput{c, {}, {}});

    fed::GroundTruth truth;
    truth.w = data.w_true;
    if (spec.intercept) truth.intercept_column = 0;

    fed::InProcTransport transport(static_cast<std::uint32_t>(inputs.size()));
    auto output = fed::run_pipeline(inputs, config, transport, truth);

    std::vector<double> mse;
    mse.reserve(output.result.trace.size());
    for (const auto& row : output.result.trace) mse.push_back(row.mse_vs_truth.value_or(0.0));
    summary.fold_mse.push_back(std::move(mse));

    // PC fidelity against the centralized oracle on the same pooled data
    auto centralized =
        oracle::centralized_pipeline(data.centers, config.m_components, config.variance_threshold);
    auto report = oracle::compare(output.result,
                                  centralized,
                                  static_cast<int>(std::min<Eigen::Index>(
                                      {static_cast<Eigen::Index>(pc_count),
                                       output.result.basis.components.cols(),
                                       centralized.basis.components.cols()})));
    std::vector<double> cosines(report.pc_cosines.data(),
                                report.pc_cosines.data() + report.pc_cosines.size());
    summary.fold_cosines.push_back(std::move(cosines));
  }

  auto aggregate = [](const std::vector<std::vector<double>>& per_fold, std::vector<double>& mean,
                      std::vector<double>& sd) {
    if (per_fold.empty()) return;
    std::size_t width = 0;
    for (const auto& row : per_fold) width = std::max(width, row.size());
    mean.assign(width, 0.0);
    sd.assign(width, 0.0);
    std::vector<std::size_t> counts(width, 0);
    for (const auto& row : per_fold)
      for (std::size_t i = 0; i < row.size(); ++i) {
        mean[i] += row[i];
        ++counts[i];
      }
    for (std::size_t i = 0; i < width; ++i) mean[i] /= counts[i] ? counts[i] : 1;
    for (const auto& row : per_fold)
      for (std::size_t i = 0; i < row.size(); ++i) {
        const double d = row[i] - mean[i];
        sd[i] += d * d;
      }
    for (std::size_t i = 0; i < width; ++i)
      sd[i] = counts[i] ? std::sqrt(sd[i] / static_cast<double>(counts[i])) : 0.0;
  };
  aggregate(summary.fold_mse, summary.mse_mean, summary.mse_sd);
  aggregate(summary.fold_cosines, summary.cosine_mean, summary.cosine_sd);
  return summary;
}

}  // namespace fedcov::synth
