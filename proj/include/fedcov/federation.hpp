#pragma once

// Coordinator/center state machines for the three-phase pipeline
// (standardize -> ADMM rounds -> PCA, optionally followed by score
// sharing), plus pluggable transports: an in-process queue and a
// file-exchange directory layout usable across separate processes.
//
// Star topology: centers talk only to the coordinator. Phases advance
// through barriers; the coordinator aggregates in center-id order, so
// results do not depend on arrival order within a round.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedcov/admm.hpp"
#include "fedcov/fpca.hpp"
#include "fedcov/message.hpp"
#include "fedcov/stats.hpp"

namespace fedcov::fed {

// ---------------------------------------------------------------------------
// configuration and results

struct PipelineConfig {
  admm::AdmmConfig admm;
  double variance_threshold = 0.8;     // local and global truncation rule
  std::optional<int> m_components;     // fixed global m, overrides threshold
  std::vector<std::string> covariate_spec;  // e.g. {"intercept", "age", "age^2"}
  bool share_scores = false;
  int score_column_cap = kDefaultScoreColumnCap;
};

struct CenterInput {
  stats::CenterData data;
  std::vector<std::string> covariate_names;  // names for data.y columns; may be empty
  std::vector<std::string> labels;           // optional per-subject group tags
};

// Raw-model ground truth for diagnostics only. When adjust_for_standardization
// is set, the coordinator rescales it by the global stats after the
// standardization phase (w'[:,j] = w[:,j]/std_j, intercept row absorbing
// -mean_j/std_j) so the trace MSE measures the recoverable weights.
struct GroundTruth {
  Eigen::MatrixXd w;  // q x F
  std::optional<int> intercept_column;
  bool adjust_for_standardization = true;
};

struct PooledScores {
  Eigen::MatrixXd coords;                   // sum N_c x m, center blocks in id order
  std::vector<std::uint32_t> center_ids;    // one per row
  std::vector<std::uint64_t> subject_index; // local index within the center
  std::vector<std::string> labels;          // empty when no center supplied tags
};

struct AnalysisResult {
  stats::GlobalStats global_stats;
  admm::ConsensusWeights weights;
  std::vector<admm::IterationStats> trace;
  fpca::GlobalBasis basis;
  std::optional<PooledScores> scores;
};

// Canonical bit-exact serialization used for determinism checks and the
// result.bin artifact.
std::vector<std::uint8_t> serialize_result(const AnalysisResult& r);
AnalysisResult deserialize_result(std::span<const std::uint8_t> bytes);

// Builds the design matrix from a named covariate table. Supported entries:
// "intercept" (or "1"), "<name>", "<name>^2". An empty spec passes the
// table through unchanged.
Eigen::MatrixXd derive_covariates(const Eigen::MatrixXd& table,
                                  const std::vector<std::string>& names,
                                  const std::vector<std::string>& spec);

// ---------------------------------------------------------------------------
// transport

struct NodeRef {
  enum class Kind : std::uint8_t { coordinator, center } kind = Kind::coordinator;
  std::uint32_t id = 0;  // center id; unused for the coordinator

  static NodeRef coord() { return {Kind::coordinator, 0}; }
  static NodeRef center(std::uint32_t id) { return {Kind::center, id}; }
  std::string name() const;
};

struct Dest {
  enum class Kind : std::uint8_t { coordinator, center, all_centers } kind = Kind::coordinator;
  std::uint32_t id = 0;

  static Dest coord() { return {Kind::coordinator, 0}; }
  static Dest center(std::uint32_t id) { return {Kind::center, id}; }
  static Dest broadcast() { return {Kind::all_centers, 0}; }
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const Dest& to, const Message& m) = 0;
  // Next message addressed to this endpoint, waiting up to `wait`.
  virtual std::optional<std::pair<NodeRef, Message>> receive(std::chrono::milliseconds wait) = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::unique_ptr<Endpoint> endpoint(NodeRef self) = 0;
};

// Shared in-memory queues. A delivery seed, when set, hands queued messages
// to the receiver in a seed-determined order instead of FIFO; results must
// not depend on it.
class InProcTransport : public Transport {
 public:
  explicit InProcTransport(std::uint32_t n_centers, std::optional<std::uint64_t> delivery_seed = {});
  std::unique_ptr<Endpoint> endpoint(NodeRef self) override;

  struct Shared;

 private:
  std::shared_ptr<Shared> shared_;
};

// One directory per round, one file per message named
// {phase}_{round}_{sender}.msg. Writable by independent processes; files
// are renamed into place so readers never see partial writes.
class FileExchangeTransport : public Transport {
 public:
  explicit FileExchangeTransport(std::filesystem::path root,
                                 std::chrono::milliseconds poll_interval = std::chrono::milliseconds(2));
  std::unique_ptr<Endpoint> endpoint(NodeRef self) override;

  static std::string message_filename(const Message& m, const NodeRef& sender);
  static std::string round_dirname(const Message& m);

 private:
  std::filesystem::path root_;
  std::chrono::milliseconds poll_;
};

// ---------------------------------------------------------------------------
// state machines

enum class Phase { standardize, admm, pca, done };
const char* phase_name(Phase p);

class CenterNode {
 public:
  CenterNode(std::uint32_t id, CenterInput input, PipelineConfig config);

  // Initial outbound messages (the stats share).
  std::vector<Message> start();
  std::vector<Message> handle_message(const Message& m);

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::done; }
  std::uint32_t id() const { return id_; }
  Eigen::Index n_features() const { return x_.cols(); }
  Eigen::Index n_covariates() const { return y_.cols(); }
  Eigen::Index n_subjects() const { return x_.rows(); }

 private:
  std::uint32_t id_;
  PipelineConfig config_;
  Eigen::MatrixXd x_;     // raw features until standardized, then released
  Eigen::MatrixXd y_;     // derived covariates
  std::vector<std::string> labels_;
  Phase phase_ = Phase::standardize;
  bool started_ = false;

  Eigen::MatrixXd xhat_;
  Eigen::MatrixXd corrected_;
  std::optional<admm::LocalSolver> solver_;
  Eigen::MatrixXd w_, alpha_;
  std::uint32_t round_ = 0;
};

class CoordinatorNode {
 public:
  CoordinatorNode(std::uint32_t n_centers, PipelineConfig config,
                  std::optional<GroundTruth> truth = {});

  std::vector<Message> handle_message(const Message& m);

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::done; }
  std::uint32_t admm_round() const { return round_; }
  // Center ids the current barrier still waits for.
  std::vector<std::uint32_t> missing_centers() const;
  [[noreturn]] void throw_timeout() const;

  const AnalysisResult& result() const;
  // All accepted inbound messages and emitted broadcasts in canonical order
  // (per barrier: center shares by ascending id, then the broadcast).
  const std::vector<Message>& transcript() const { return transcript_; }

 private:
  void expect_phase(Phase p, const Message& m) const;
  std::vector<Message> broadcast_and_log(Message m);

  std::uint32_t n_centers_;
  PipelineConfig config_;
  std::optional<GroundTruth> truth_;
  Eigen::MatrixXd adjusted_truth_;  // valid once stats are final and truth given
  bool have_adjusted_truth_ = false;

  Phase phase_ = Phase::standardize;
  std::uint32_t round_ = 0;
  bool awaiting_scores_ = false;

  std::map<std::uint32_t, stats::FeatureMoments> pending_moments_;
  std::map<std::uint32_t, admm::LocalAdmmState> pending_states_;
  std::map<std::uint32_t, fpca::LocalEigenpack> pending_packs_;
  std::map<std::uint32_t, ScoresShare> pending_scores_;

  AnalysisResult result_;
  std::vector<Message> transcript_;
};

// ---------------------------------------------------------------------------
// orchestration

struct PipelineOutput {
  AnalysisResult result;
  std::vector<Message> transcript;
};

PipelineOutput run_pipeline(const std::vector<CenterInput>& centers, const PipelineConfig& config,
                            Transport& transport, const std::optional<GroundTruth>& truth = {},
                            std::chrono::milliseconds stall_timeout = std::chrono::seconds(60));

// Single-party drivers for multi-process file-exchange operation.
PipelineOutput run_coordinator_agent(std::uint32_t n_centers, const PipelineConfig& config,
                                     Transport& transport,
                                     const std::optional<GroundTruth>& truth = {},
                                     std::chrono::milliseconds stall_timeout = std::chrono::seconds(60));
void run_center_agent(std::uint32_t id, CenterInput input, const PipelineConfig& config,
                      Transport& transport,
                      std::chrono::milliseconds stall_timeout = std::chrono::seconds(60));

// ---------------------------------------------------------------------------
// privacy audit

struct AuditContext {
  std::vector<std::uint64_t> center_rows;  // declared N_c per center id
  std::uint64_t n_features = 0;
  std::uint64_t n_covariates = 0;
  std::uint32_t admm_rounds = 0;
  bool share_scores = false;
  int score_column_cap = kDefaultScoreColumnCap;
};

struct AuditEntry {
  std::size_t index = 0;
  MsgTag tag{};
  std::string dims;
  std::uint64_t payload_bytes = 0;
  bool flagged = false;
  std::string note;
};

struct AuditReport {
  bool pass = true;
  std::vector<AuditEntry> entries;
  std::vector<std::string> violations;
  bool counts_ok = true;
  std::size_t expected_messages = 0;
  std::size_t actual_messages = 0;
};

// Report-only inspection of a transcript: every message must be a legal
// variant with in-bound dimensions, and no payload may have the shape of a
// raw data block (N_c x F) or covariate block (N_c x q) for any declared
// center size. Also checks the message-count conservation formula
// (C+1) + K(C+1) + (C+1) + [share_scores] C.
AuditReport audit_privacy(const std::vector<Message>& transcript, const AuditContext& ctx);

std::string to_text(const AuditReport& report);

}  // namespace fedcov::fed
