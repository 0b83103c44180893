#include <doctest.h>

#include <set>

#include "fedcov/synthdata.hpp"
#include "test_support.hpp"

using namespace fedcov;

TEST_SUITE("synthdata") {

TEST_CASE("noise-free data is exactly the linear model") {
  synth::SynthSpec spec;
  spec.seed = 5;
  spec.n_total = 200;
  spec.n_features = 30;
  spec.n_covariates = 5;
  spec.n_centers = 4;
  spec.noise_frac = 0.0;
  auto data = synth::generate(spec);

  Eigen::MatrixXd x(spec.n_total, spec.n_features), y(spec.n_total, spec.n_covariates);
  Eigen::Index row = 0;
  for (const auto& c : data.centers) {
    x.middleRows(row, c.x.rows()) = c.x;
    y.middleRows(row, c.y.rows()) = c.y;
    row += c.x.rows();
  }
  CHECK((x - y * data.w_true).cwiseAbs().maxCoeff() == 0.0);
  // pooled OLS oracle recovers the exact weights
  Eigen::MatrixXd w_hat = testsup::ols_qr(y, x);
  CHECK((w_hat - data.w_true).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("noise level matches the requested fraction") {
  synth::SynthSpec spec;
  spec.seed = 6;
  spec.n_total = 1000;
  spec.n_features = 200;
  spec.n_covariates = 10;
  spec.n_centers = 4;
  spec.noise_frac = 0.2;
  auto data = synth::generate(spec);

  synth::SynthSpec clean = spec;
  clean.noise_frac = 0.0;
  auto noiseless = synth::generate(clean);

  double noise_norm = 0.0;
  for (std::size_t c = 0; c < data.centers.size(); ++c)
    noise_norm += (data.centers[c].x - noiseless.centers[c].x).squaredNorm();
  noise_norm = std::sqrt(noise_norm);

  const double ratio = noise_norm / data.x_norm;
  CHECK(ratio > 0.18);
  CHECK(ratio < 0.22);
  // law of large numbers: within 10% relative of the nominal fraction
  CHECK(std::abs(ratio - spec.noise_frac) < 0.1 * spec.noise_frac);
}

TEST_CASE("generation is deterministic in the seed") {
  synth::SynthSpec spec;
  spec.seed = 7;
  spec.n_total = 60;
  spec.n_features = 10;
  spec.n_covariates = 4;
  spec.n_centers = 3;
  auto a = synth::generate(spec);
  auto b = synth::generate(spec);
  CHECK((a.w_true - b.w_true).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t c = 0; c < a.centers.size(); ++c) {
    CHECK((a.centers[c].x - b.centers[c].x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.centers[c].y - b.centers[c].y).cwiseAbs().maxCoeff() == 0.0);
  }
  spec.seed = 8;
  auto other = synth::generate(spec);
  CHECK((a.w_true - other.w_true).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("splitting into centers preserves the pooled matrices") {
  synth::SynthSpec spec;
  spec.seed = 9;
  spec.n_total = 48;
  spec.n_features = 6;
  spec.n_covariates = 3;
  spec.n_centers = 4;
  auto split = synth::generate(spec);
  spec.n_centers = 1;
  auto pooled = synth::generate(spec);

  Eigen::Index row = 0;
  for (const auto& c : split.centers) {
    CHECK((pooled.centers[0].x.middleRows(row, c.x.rows()) - c.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pooled.centers[0].y.middleRows(row, c.y.rows()) - c.y).cwiseAbs().maxCoeff() == 0.0);
    row += c.x.rows();
  }
  CHECK(row == 48);
}

TEST_CASE("intercept column is constant when enabled") {
  synth::SynthSpec spec;
  spec.seed = 10;
  spec.n_total = 30;
  spec.n_features = 4;
  spec.n_covariates = 3;
  spec.n_centers = 2;
  auto with = synth::generate(spec);
  CHECK(with.centers[0].y.col(0).isOnes());

  spec.intercept = false;
  auto without = synth::generate(spec);
  CHECK_FALSE(without.centers[0].y.col(0).isOnes());
}

TEST_CASE("invalid specs are rejected") {
  synth::SynthSpec spec;
  spec.n_total = 100;
  spec.n_centers = 7;  // not divisible
  CHECK_THROWS_AS(synth::generate(spec), SpecError);
  spec.n_centers = 4;
  spec.noise_frac = -0.1;
  CHECK_THROWS_AS(synth::generate(spec), SpecError);
  spec.noise_frac = 0.2;
  spec.n_features = 0;
  CHECK_THROWS_AS(synth::generate(spec), SpecError);
}

TEST_CASE("fold seeds are distinct and deterministic") {
  std::set<std::uint64_t> seen;
  for (int fold = 0; fold < 64; ++fold) seen.insert(synth::fold_seed(42, fold));
  CHECK(seen.size() == 64);
  CHECK(synth::fold_seed(42, 3) == synth::fold_seed(42, 3));
  CHECK(synth::fold_seed(42, 3) != synth::fold_seed(43, 3));
}

TEST_CASE("fold_runner aggregates per-iteration convergence and PC fidelity") {
  synth::SynthSpec spec;
  spec.seed = 11;
  spec.n_total = 60;
  spec.n_features = 8;
  spec.n_covariates = 3;
  spec.n_centers = 2;
  spec.folds = 3;

  fed::PipelineConfig config;
  config.admm.iterations = 4;
  config.m_components = 2;

  auto summary = synth::fold_runner(spec, config);
  CHECK(summary.n_centers == 2);
  REQUIRE(summary.fold_mse.size() == 3);
  for (const auto& row : summary.fold_mse) CHECK(row.size() == 4);
  REQUIRE(summary.fold_cosines.size() == 3);
  for (const auto& row : summary.fold_cosines) CHECK(row.size() == 2);
  CHECK(summary.mse_mean.size() == 4);
  CHECK(summary.mse_sd.size() == 4);

  // per-fold seeds differ, so per-fold results differ
  CHECK(summary.fold_mse[0].back() != summary.fold_mse[1].back());

  SUBCASE("a single fold equals a direct pipeline run") {
    synth::SynthSpec one = spec;
    one.folds = 1;
    auto single = synth::fold_runner(one, config);

    synth::SynthSpec direct_spec = spec;
    direct_spec.seed = synth::fold_seed(spec.seed, 0);
    auto data = synth::generate(direct_spec);
    std::vector<fed::CenterInput> inputs;
    for (auto& c : data.centers) inputs.push_back(fed::CenterInput{std::move(c), {}, {}});
    fed::InProcTransport transport(2);
    auto direct = fed::run_pipeline(inputs, config, transport,
                                    fed::GroundTruth{data.w_true, 0, true});
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(single.fold_mse[0][i] == *direct.result.trace[i].mse_vs_truth);
  }
}

}  // TEST_SUITE
