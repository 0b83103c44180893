#pragma once

// Synthetic benchmark data: covariates Y and weights W drawn from the
// standard normal, X = Y W corrupted with Gaussian noise whose sd is a
// fraction of the rms entry of the noise-free signal, rows split into
// equal-size centers. Ground truth is retained for evaluation.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fedcov/federation.hpp"
#include "fedcov/stats.hpp"

namespace fedcov::synth {

struct SynthSpec {
  std::uint64_t seed = 42;
  int n_total = 2400;
  int n_features = 500;
  int n_covariates = 20;  // dim(y), including the intercept column when enabled
  int n_centers = 4;
  double noise_frac = 0.2;
  int folds = 20;
  bool intercept = true;  // first covariate column is constant 1
};

struct SynthDataset {
  std::vector<stats::CenterData> centers;
  Eigen::MatrixXd w_true;  // q x F
  double x_norm = 0.0;     // Frobenius norm of the noise-free X used for noise scaling
};

// Deterministic in the seed: same seed, same bytes.
SynthDataset generate(const SynthSpec& spec);

// Derived per-fold seed (splitmix64 of seed and fold index).
std::uint64_t fold_seed(std::uint64_t seed, int fold);

struct FoldSummary {
  int n_centers = 0;
  int iterations = 0;
  // per fold per iteration MSE(W_true, W~), and per fold per component
  // |cos| between federated and centralized PCs
  std::vector<std::vector<double>> fold_mse;
  std::vector<std::vector<double>> fold_cosines;
  // aggregates over folds (mean and sd per iteration / per component)
  std::vector<double> mse_mean, mse_sd;
  std::vector<double> cosine_mean, cosine_sd;
};

// Runs generate + run_pipeline per fold with derived seeds and aggregates
// convergence and PC-fidelity statistics. Compares at most `pc_count`
// leading components against the centralized oracle.
FoldSummary fold_runner(const SynthSpec& spec, const fed::PipelineConfig& config,
                        int pc_count = 4);

}  // namespace fedcov::synth
