// fedcov: generate synthetic federated experiments, run the
// standardize/correct/analyze pipeline over a chosen transport, certify
// results against the centralized oracle, and emit plot-ready CSVs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fedcov/binio.hpp"
#include "fedcov/csvio.hpp"
#include "fedcov/federation.hpp"
#include "fedcov/oracle.hpp"
#include "fedcov/synthdata.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fedcov;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAuditFail = 2;
constexpr int kExitPhaseTimeout = 3;

// ---------------------------------------------------------------------------
// dataset directory

struct Manifest {
  synth::SynthSpec spec;
  double x_norm = 0.0;
  std::vector<std::string> covariate_names;
  std::vector<std::string> center_files;
  std::vector<std::uint64_t> center_rows;
};

void save_center_file(const fs::path& path, const stats::CenterData& center) {
  io::ByteWriter w;
  w.matrix(center.x);
  w.matrix(center.y);
  io::write_file(path, w.buffer());
}

stats::CenterData load_center_file(const fs::path& path) {
  auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  stats::CenterData center;
  center.x = r.matrix();
  center.y = r.matrix();
  return center;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  json j;
  j["format"] = 1;
  j["seed"] = m.spec.seed;
  j["n_total"] = m.spec.n_total;
  j["n_features"] = m.spec.n_features;
  j["n_covariates"] = m.spec.n_covariates;
  j["n_centers"] = m.spec.n_centers;
  j["noise_frac"] = m.spec.noise_frac;
  j["folds"] = m.spec.folds;
  j["intercept"] = m.spec.intercept;
  j["x_norm"] = m.x_norm;
  j["covariate_names"] = m.covariate_names;
  json centers = json::array();
  for (std::size_t i = 0; i < m.center_files.size(); ++i)
    centers.push_back({{"file", m.center_files[i]}, {"rows", m.center_rows[i]}});
  j["centers"] = centers;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string() + " (not a dataset directory?)");
  json j = json::parse(in);
  Manifest m;
  m.spec.seed = j.at("seed").get<std::uint64_t>();
  m.spec.n_total = j.at("n_total").get<int>();
  m.spec.n_features = j.at("n_features").get<int>();
  m.spec.n_covariates = j.at("n_covariates").get<int>();
  m.spec.n_centers = j.at("n_centers").get<int>();
  m.spec.noise_frac = j.at("noise_frac").get<double>();
  m.spec.folds = j.at("folds").get<int>();
  m.spec.intercept = j.at("intercept").get<bool>();
  m.x_norm = j.at("x_norm").get<double>();
  m.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
  for (const auto& c : j.at("centers")) {
    m.center_files.push_back(c.at("file").get<std::string>());
    m.center_rows.push_back(c.at("rows").get<std::uint64_t>());
  }
  return m;
}

std::vector<std::string> default_covariate_names(const synth::SynthSpec& spec) {
  std::vector<std::string> names;
  for (int i = 0; i < spec.n_covariates; ++i) {
    if (i == 0 && spec.intercept)
      names.emplace_back("intercept");
    else
      names.push_back("y" + std::to_string(i));
  }
  return names;
}

// ---------------------------------------------------------------------------
// result directory

void save_stats(const fs::path& path, const stats::GlobalStats& g) {
  io::ByteWriter w;
  w.u64(static_cast<std::uint64_t>(g.mean.size()));
  w.u64(g.n_total);
  w.vector(g.mean);
  w.vector(g.std);
  io::write_file(path, w.buffer());
}

stats::GlobalStats load_stats(const fs::path& path) {
  auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  stats::GlobalStats g;
  std::uint64_t f = r.u64();
  g.n_total = r.u64();
  g.mean = r.vector(f);
  g.std = r.vector(f);
  return g;
}

void save_basis(const fs::path& path, const fpca::GlobalBasis& b) {
  io::ByteWriter w;
  w.u64(static_cast<std::uint64_t>(b.eigenvalues.size()));
  w.vector(b.eigenvalues);
  w.vector(b.explained_fraction);
  w.matrix(b.components, /*row_major=*/false);
  io::write_file(path, w.buffer());
}

fpca::GlobalBasis load_basis(const fs::path& path) {
  auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  fpca::GlobalBasis b;
  std::uint64_t m = r.u64();
  b.eigenvalues = r.vector(m);
  b.explained_fraction = r.vector(m);
  b.components = r.matrix(/*row_major=*/false);
  return b;
}

void save_transcript(const fs::path& path, const std::vector<fed::Message>& transcript) {
  io::ByteWriter w;
  w.u64(transcript.size());
  for (const auto& m : transcript) {
    auto bytes = fed::encode(m);
    w.u64(bytes.size());
    w.bytes(bytes);
  }
  io::write_file(path, w.buffer());
}

// ---------------------------------------------------------------------------
// shared option state

struct RunOptions {
  std::string dataset;
  std::string out;
  std::string transport = "inproc";
  std::string exchange_dir;
  std::string as = "all";
  double rho = 1.0;
  int admm_iterations = 10;
  double variance_threshold = 0.8;
  int m_components = 0;  // 0 = threshold-selected
  bool share_scores = false;
  std::vector<std::string> covariate_spec;
  int folds = 1;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  int timeout_sec = 60;
};

fed::PipelineConfig pipeline_config(const RunOptions& opt) {
  fed::PipelineConfig config;
  config.admm.rho = opt.rho;
  config.admm.iterations = opt.admm_iterations;
  config.variance_threshold = opt.variance_threshold;
  if (opt.m_components > 0) config.m_components = opt.m_components;
  config.share_scores = opt.share_scores;
  config.covariate_spec = opt.covariate_spec;
  return config;
}

std::string run_config_text(const RunOptions& opt, const Manifest& manifest) {
  std::string text;
  text += "dataset_seed = " + std::to_string(manifest.spec.seed) + "\n";
  text += "n_centers = " + std::to_string(manifest.spec.n_centers) + "\n";
  text += "n_features = " + std::to_string(manifest.spec.n_features) + "\n";
  text += "n_covariates = " + std::to_string(manifest.spec.n_covariates) + "\n";
  text += "rho = " + io::format_double(opt.rho) + "\n";
  text += "admm_iterations = " + std::to_string(opt.admm_iterations) + "\n";
  text += "variance_threshold = " + io::format_double(opt.variance_threshold) + "\n";
  text += "m_components = " + std::to_string(opt.m_components) + "\n";
  text += "share_scores = " + std::string(opt.share_scores ? "1" : "0") + "\n";
  text += "transport = " + opt.transport + "\n";
  text += "folds = " + std::to_string(opt.folds) + "\n";
  return text;
}

std::string provenance_line(const std::string& config_text, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "config_hash=0x%016llx seed=%llu",
                static_cast<unsigned long long>(fnv1a64(config_text)),
                static_cast<unsigned long long>(seed));
  return buf;
}

std::string score_label(const fed::PooledScores& scores, std::size_t row) {
  if (!scores.labels.empty() && !scores.labels[row].empty()) return scores.labels[row];
  return "c" + std::to_string(scores.center_ids[row]);
}

void write_run_outputs(const fs::path& out, const fed::PipelineOutput& output,
                       const fed::AuditReport& audit, const std::string& config_text,
                       std::uint64_t seed) {
  const std::string provenance = provenance_line(config_text, seed);
  {
    std::ofstream cfg(out / "run_config.txt");
    cfg << config_text;
  }
  save_stats(out / "global_stats.bin", output.result.global_stats);
  io::save_matrix(out / "w_tilde.bin", output.result.weights.w_tilde);
  save_basis(out / "global_basis.bin", output.result.basis);
  io::write_file(out / "result.bin", fed::serialize_result(output.result));
  save_transcript(out / "transcript.bin", output.transcript);
  {
    std::ofstream a(out / "audit.txt");
    a << fed::to_text(audit);
  }

  io::CsvWriter trace(out / "trace.csv", provenance,
                      {"iteration", "max_primal_residual", "mse_vs_truth"});
  for (const auto& row : output.result.trace)
    trace.write_row({std::to_string(row.iteration), io::format_double(row.max_primal_residual),
                     row.mse_vs_truth ? io::format_double(*row.mse_vs_truth) : ""});

  if (output.result.scores) {
    const auto& s = *output.result.scores;
    std::vector<std::string> header{"center_id", "subject", "label"};
    for (Eigen::Index j = 0; j < s.coords.cols(); ++j)
      header.push_back("pc" + std::to_string(j + 1));
    io::CsvWriter scores(out / "scores.csv", provenance, header);
    for (Eigen::Index i = 0; i < s.coords.rows(); ++i) {
      std::vector<std::string> row{std::to_string(s.center_ids[static_cast<std::size_t>(i)]),
                                   std::to_string(s.subject_index[static_cast<std::size_t>(i)]),
                                   score_label(s, static_cast<std::size_t>(i))};
      for (Eigen::Index j = 0; j < s.coords.cols(); ++j)
        row.push_back(io::format_double(s.coords(i, j)));
      scores.write_row(row);
    }
  }
}

fed::AuditContext audit_context(const Manifest& manifest, const fed::PipelineConfig& config) {
  fed::AuditContext ctx;
  ctx.center_rows = manifest.center_rows;
  ctx.n_features = static_cast<std::uint64_t>(manifest.spec.n_features);
  ctx.n_covariates = config.covariate_spec.empty()
                         ? static_cast<std::uint64_t>(manifest.spec.n_covariates)
                         : config.covariate_spec.size();
  ctx.admm_rounds = static_cast<std::uint32_t>(config.admm.iterations);
  ctx.share_scores = config.share_scores;
  ctx.score_column_cap = config.score_column_cap;
  return ctx;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_synth(const synth::SynthSpec& spec, const fs::path& out) {
  fs::create_directories(out);
  auto data = synth::generate(spec);

  Manifest manifest;
  manifest.spec = spec;
  manifest.x_norm = data.x_norm;
  manifest.covariate_names = default_covariate_names(spec);
  for (std::size_t c = 0; c < data.centers.size(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "center_%04zu.bin", c);
    save_center_file(out / name, data.centers[c]);
    manifest.center_files.emplace_back(name);
    manifest.center_rows.push_back(static_cast<std::uint64_t>(data.centers[c].x.rows()));
  }
  io::save_matrix(out / "w_true.bin", data.w_true);
  write_manifest(out, manifest);
  log_info("dataset written to " + out.string());
  return kExitOk;
}

std::vector<fed::CenterInput> load_all_centers(const fs::path& dataset, const Manifest& manifest) {
  std::vector<fed::CenterInput> inputs;
  inputs.reserve(manifest.center_files.size());
  for (const auto& file : manifest.center_files) {
    fed::CenterInput input;
    input.data = load_center_file(dataset / file);
    input.covariate_names = manifest.covariate_names;
    inputs.push_back(std::move(input));
  }
  return inputs;
}

std::optional<fed::GroundTruth> load_truth(const fs::path& dataset, const Manifest& manifest) {
  if (!fs::exists(dataset / "w_true.bin")) return std::nullopt;
  fed::GroundTruth truth;
  truth.w = io::load_matrix(dataset / "w_true.bin");
  if (manifest.spec.intercept) truth.intercept_column = 0;
  return truth;
}

int run_folds(const RunOptions& opt, const Manifest& manifest) {
  synth::SynthSpec spec = manifest.spec;
  spec.folds = opt.folds;
  if (opt.has_seed_override) spec.seed = opt.seed_override;
  auto config = pipeline_config(opt);

  auto summary = synth::fold_runner(spec, config);

  fs::create_directories(opt.out);
  const std::string config_text = run_config_text(opt, manifest);
  {
    std::ofstream cfg(fs::path(opt.out) / "run_config.txt");
    cfg << config_text;
  }
  io::CsvWriter csv(fs::path(opt.out) / "fold_summary.csv",
                    provenance_line(config_text, spec.seed),
                    {"fold", "C", "iteration", "mse_w", "pc_index", "cosine_similarity"});
  for (std::size_t fold = 0; fold < summary.fold_mse.size(); ++fold) {
    for (std::size_t it = 0; it < summary.fold_mse[fold].size(); ++it)
      csv.write_row({std::to_string(fold), std::to_string(summary.n_centers),
                     std::to_string(it + 1), io::format_double(summary.fold_mse[fold][it]), "",
                     ""});
    for (std::size_t pc = 0; pc < summary.fold_cosines[fold].size(); ++pc)
      csv.write_row({std::to_string(fold), std::to_string(summary.n_centers), "", "",
                     std::to_string(pc + 1), io::format_double(summary.fold_cosines[fold][pc])});
  }
  log_info("fold summary written to " + opt.out);
  return kExitOk;
}

int cmd_run(const RunOptions& opt) {
  const fs::path dataset(opt.dataset);
  Manifest manifest = read_manifest(dataset);
  auto config = pipeline_config(opt);

  if (opt.folds > 1) return run_folds(opt, manifest);

  const auto timeout = std::chrono::seconds(opt.timeout_sec);
  const fs::path exchange =
      opt.exchange_dir.empty() ? fs::path(opt.out) / "exchange" : fs::path(opt.exchange_dir);

  // per-party agent modes never load the other parties' data
  if (opt.as != "all") {
    if (opt.transport != "file")
      throw SpecError("--as " + opt.as + " requires --transport file");
    fed::FileExchangeTransport transport(exchange);
    if (opt.as == "coordinator") {
      auto truth = load_truth(dataset, manifest);
      auto output = fed::run_coordinator_agent(
          static_cast<std::uint32_t>(manifest.spec.n_centers), config, transport, truth, timeout);
      auto audit = fed::audit_privacy(output.transcript, audit_context(manifest, config));
      fs::create_directories(opt.out);
      write_run_outputs(opt.out, output, audit, run_config_text(opt, manifest),
                        manifest.spec.seed);
      if (!audit.pass) {
        std::cerr << "privacy audit failed\n";
        return kExitAuditFail;
      }
      return kExitOk;
    }
    if (opt.as.rfind("center:", 0) == 0) {
      const auto id = static_cast<std::uint32_t>(std::stoul(opt.as.substr(7)));
      if (id >= manifest.center_files.size()) throw SpecError("center id out of range");
      fed::CenterInput input;
      input.data = load_center_file(dataset / manifest.center_files[id]);
      input.covariate_names = manifest.covariate_names;
      fed::run_center_agent(id, std::move(input), config, transport, timeout);
      return kExitOk;
    }
    throw SpecError("unknown --as mode '" + opt.as + "' (all | coordinator | center:<id>)");
  }

  auto inputs = load_all_centers(dataset, manifest);
  auto truth = load_truth(dataset, manifest);

  std::unique_ptr<fed::Transport> transport;
  if (opt.transport == "inproc") {
    transport = std::make_unique<fed::InProcTransport>(static_cast<std::uint32_t>(inputs.size()));
  } else if (opt.transport == "file") {
    transport = std::make_unique<fed::FileExchangeTransport>(exchange);
  } else {
    throw SpecError("unknown transport '" + opt.transport + "' (inproc | file)");
  }

  auto output = fed::run_pipeline(inputs, config, *transport, truth, timeout);
  auto audit = fed::audit_privacy(output.transcript, audit_context(manifest, config));

  fs::create_directories(opt.out);
  write_run_outputs(opt.out, output, audit, run_config_text(opt, manifest), manifest.spec.seed);

  if (!audit.pass || !audit.counts_ok) {
    std::cerr << "privacy audit " << (audit.pass ? "count check" : "") << " failed\n";
    return kExitAuditFail;
  }
  log_info("results written to " + opt.out);
  return kExitOk;
}

int cmd_compare(const std::string& dataset_dir, const std::string& results_dir, int m) {
  const fs::path dataset(dataset_dir), results(results_dir);
  Manifest manifest = read_manifest(dataset);

  std::vector<stats::CenterData> centers;
  for (const auto& file : manifest.center_files) centers.push_back(load_center_file(dataset / file));

  auto result_bytes = io::read_file(results / "result.bin");
  auto federated = fed::deserialize_result(result_bytes);

  const int m_fed = static_cast<int>(federated.basis.components.cols());
  auto centralized = oracle::centralized_pipeline(centers, std::max(m, m_fed),
                                                  /*variance_threshold=*/0.8);
  auto report = oracle::compare(federated, centralized, m);

  {
    std::ofstream txt(results / "comparison.txt");
    txt << oracle::to_text(report);
  }
  const std::string provenance = provenance_line(oracle::to_text(report), manifest.spec.seed);
  io::CsvWriter csv(results / "comparison.csv", provenance, {"metric", "index", "value"});
  csv.write_row({"stats_max_rel_err", "", io::format_double(report.stats_max_rel_err)});
  csv.write_row({"w_rel_frobenius_err", "", io::format_double(report.w_rel_frobenius_err)});
  for (Eigen::Index i = 0; i < report.eigenvalue_rel_errs.size(); ++i)
    csv.write_row({"eigenvalue_rel_err", std::to_string(i + 1),
                   io::format_double(report.eigenvalue_rel_errs(i))});
  for (Eigen::Index i = 0; i < report.principal_angles_rad.size(); ++i)
    csv.write_row({"principal_angle_rad", std::to_string(i + 1),
                   io::format_double(report.principal_angles_rad(i))});
  for (Eigen::Index i = 0; i < report.pc_cosines.size(); ++i)
    csv.write_row({"pc_cosine", std::to_string(i + 1), io::format_double(report.pc_cosines(i))});

  save_basis(results / "oracle_basis.bin", centralized.basis);
  io::save_matrix(results / "oracle_w.bin", centralized.w_ols);
  save_stats(results / "oracle_stats.bin", centralized.global_stats);

  std::cout << oracle::to_text(report);
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& results_dirs, const std::string& out_dir) {
  const fs::path out(out_dir);
  fs::create_directories(out);

  // provenance covers the list of inputs
  std::string inputs_text;
  for (const auto& d : results_dirs) inputs_text += d + "\n";
  const std::string provenance = provenance_line(inputs_text, 0);

  // ---- mse_vs_iteration.csv: one series per results dir (per C)
  io::CsvWriter mse_csv(out / "mse_vs_iteration.csv", provenance,
                        {"centers", "iteration", "mse_w_mean", "mse_w_sd", "n_folds"});
  for (const auto& dir : results_dirs) {
    const fs::path results(dir);
    auto run_cfg = io::parse_kv_file(results / "run_config.txt");
    const std::string centers = run_cfg.count("n_centers") ? run_cfg["n_centers"] : "?";

    if (fs::exists(results / "fold_summary.csv")) {
      // aggregate the per-fold rows
      std::ifstream in(results / "fold_summary.csv");
      std::string line;
      std::map<int, std::vector<double>> per_iteration;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("fold,", 0) == 0) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 4 || fields[2].empty() || fields[3].empty()) continue;
        per_iteration[std::stoi(fields[2])].push_back(std::stod(fields[3]));
      }
      for (const auto& [iteration, values] : per_iteration) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double sd = 0.0;
        for (double v : values) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(values.size()));
        mse_csv.write_row({centers, std::to_string(iteration), io::format_double(mean),
                           io::format_double(sd), std::to_string(values.size())});
      }
    } else if (fs::exists(results / "result.bin")) {
      auto result = fed::deserialize_result(io::read_file(results / "result.bin"));
      for (const auto& row : result.trace)
        if (row.mse_vs_truth)
          mse_csv.write_row({centers, std::to_string(row.iteration),
                             io::format_double(*row.mse_vs_truth), "0", "1"});
    }
  }

  // ---- pc_scatter.csv and projections.csv from the first dir carrying them
  bool scatter_written = false, projections_written = false;
  for (const auto& dir : results_dirs) {
    const fs::path results(dir);
    if (!scatter_written && fs::exists(results / "oracle_basis.bin") &&
        fs::exists(results / "global_basis.bin")) {
      auto fed_basis = load_basis(results / "global_basis.bin");
      auto cen_basis = load_basis(results / "oracle_basis.bin");
      const Eigen::Index m = std::min({fed_basis.components.cols(), cen_basis.components.cols(),
                                       static_cast<Eigen::Index>(4)});
      io::CsvWriter scatter(out / "pc_scatter.csv", provenance,
                            {"component", "feature_index", "pc_loading", "fpc_loading"});
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < fed_basis.components.rows(); ++i)
          scatter.write_row({std::to_string(j + 1), std::to_string(i),
                             io::format_double(cen_basis.components(i, j)),
                             io::format_double(fed_basis.components(i, j))});
      scatter_written = true;
    }
    if (!projections_written && fs::exists(results / "result.bin")) {
      auto result = fed::deserialize_result(io::read_file(results / "result.bin"));
      if (result.scores) {
        const auto& s = *result.scores;
        std::vector<std::string> header{"center_id", "subject", "label"};
        for (Eigen::Index j = 0; j < s.coords.cols(); ++j)
          header.push_back("pc" + std::to_string(j + 1));
        io::CsvWriter proj(out / "projections.csv", provenance, header);
        for (Eigen::Index i = 0; i < s.coords.rows(); ++i) {
          std::vector<std::string> row{std::to_string(s.center_ids[static_cast<std::size_t>(i)]),
                                       std::to_string(s.subject_index[static_cast<std::size_t>(i)]),
                                       score_label(s, static_cast<std::size_t>(i))};
          for (Eigen::Index j = 0; j < s.coords.cols(); ++j)
            row.push_back(io::format_double(s.coords(i, j)));
          proj.write_row(row);
        }
        projections_written = true;
      }
    }
  }
  if (!scatter_written)
    std::cerr << "note: no oracle_basis.bin found (run `fedcov compare` first); "
                 "pc_scatter.csv not written\n";
  if (!projections_written)
    std::cerr << "note: no shared scores found; projections.csv not written\n";
  return kExitOk;
}

// applies `key = value` config-file entries as new defaults before flags parse
template <typename T>
void apply_kv(const std::map<std::string, std::string>& kv, const std::string& key, T& target) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  if constexpr (std::is_same_v<T, bool>)
    target = it->second == "1" || it->second == "true" || it->second == "yes";
  else if constexpr (std::is_integral_v<T>)
    target = static_cast<T>(std::stoll(it->second));
  else if constexpr (std::is_floating_point_v<T>)
    target = std::stod(it->second);
  else
    target = it->second;
}

}  // namespace

int main(int argc, char** argv) {
  // pre-scan for --config so file values become defaults that flags override
  std::map<std::string, std::string> kv;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") kv = io::parse_kv_file(argv[i + 1]);

  CLI::App app{"federated standardization, confound correction and PCA toolkit"};
  app.require_subcommand(1);
  std::string config_path;

  // ---- synth
  synth::SynthSpec spec;
  bool no_intercept = false;
  std::string synth_out = "dataset";
  apply_kv(kv, "seed", spec.seed);
  apply_kv(kv, "subjects", spec.n_total);
  apply_kv(kv, "features", spec.n_features);
  apply_kv(kv, "covariates", spec.n_covariates);
  apply_kv(kv, "centers", spec.n_centers);
  apply_kv(kv, "noise_frac", spec.noise_frac);
  apply_kv(kv, "folds", spec.folds);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth_cmd->add_option("--config", config_path, "key = value config file");
  synth_cmd->add_option("--seed", spec.seed, "RNG seed");
  synth_cmd->add_option("--subjects", spec.n_total, "total subjects N");
  synth_cmd->add_option("--features", spec.n_features, "feature count F");
  synth_cmd->add_option("--covariates", spec.n_covariates, "covariate count q");
  synth_cmd->add_option("--centers", spec.n_centers, "number of centers C");
  synth_cmd->add_option("--noise-frac", spec.noise_frac, "noise sd as a fraction of rms signal");
  synth_cmd->add_option("--folds", spec.folds, "fold count stored in the manifest");
  synth_cmd->add_flag("--no-intercept", no_intercept, "omit the constant covariate column");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // ---- run
  RunOptions run;
  apply_kv(kv, "rho", run.rho);
  apply_kv(kv, "admm_iterations", run.admm_iterations);
  apply_kv(kv, "variance_threshold", run.variance_threshold);
  apply_kv(kv, "m_components", run.m_components);
  apply_kv(kv, "share_scores", run.share_scores);
  apply_kv(kv, "transport", run.transport);
  apply_kv(kv, "folds", run.folds);

  auto* run_cmd = app.add_subcommand("run", "run the federated pipeline on a dataset");
  run_cmd->add_option("--config", config_path, "key = value config file");
  run_cmd->add_option("--dataset", run.dataset, "dataset directory")->required();
  run_cmd->add_option("--out", run.out, "results directory")->required();
  run_cmd->add_option("--transport", run.transport, "inproc | file");
  run_cmd->add_option("--exchange-dir", run.exchange_dir,
                      "message directory for --transport file (default <out>/exchange)");
  run_cmd->add_option("--as", run.as,
                      "party to play: all | coordinator | center:<id> (file transport)");
  run_cmd->add_option("--rho", run.rho, "ADMM penalty factor");
  run_cmd->add_option("--admm-iterations", run.admm_iterations, "ADMM round count");
  run_cmd->add_option("--variance-threshold", run.variance_threshold,
                      "explained-variance truncation threshold");
  run_cmd->add_option("--m-components", run.m_components, "fixed global component count");
  run_cmd->add_flag("--share-scores", run.share_scores, "share projected scores");
  run_cmd->add_option("--covariates", run.covariate_spec,
                      "covariate terms to derive, e.g. intercept y1 y1^2")
      ->delimiter(',');
  run_cmd->add_option("--folds", run.folds, "run a multi-fold experiment instead of one pass");
  auto* seed_opt = run_cmd->add_option("--seed", run.seed_override, "fold experiment seed");
  run_cmd->add_option("--timeout-sec", run.timeout_sec, "phase stall timeout");

  // ---- compare
  std::string cmp_dataset, cmp_results;
  int cmp_m = 4;
  auto* cmp_cmd = app.add_subcommand("compare", "certify results against the centralized oracle");
  cmp_cmd->add_option("--config", config_path, "key = value config file");
  cmp_cmd->add_option("--dataset", cmp_dataset, "dataset directory")->required();
  cmp_cmd->add_option("--results", cmp_results, "results directory")->required();
  cmp_cmd->add_option("--m", cmp_m, "components to compare");

  // ---- report
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  auto* report_cmd = app.add_subcommand("report", "emit plot-ready CSVs from results");
  report_cmd->add_option("--config", config_path, "key = value config file");
  report_cmd->add_option("--results", report_dirs, "one or more results directories")->required();
  report_cmd->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      spec.intercept = !no_intercept;
      return cmd_synth(spec, synth_out);
    }
    if (run_cmd->parsed()) {
      run.has_seed_override = seed_opt->count() > 0;
      return cmd_run(run);
    }
    if (cmp_cmd->parsed()) return cmd_compare(cmp_dataset, cmp_results, cmp_m);
    if (report_cmd->parsed()) return cmd_report(report_dirs, report_out);
  } catch (const PhaseTimeout& e) {
    std::cerr << "phase timeout: " << e.what() << "\n";
    return kExitPhaseTimeout;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
