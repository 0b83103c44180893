#include "fedcov/federation.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "fedcov/binio.hpp"

namespace fedcov::fed {

namespace {

std::string format_center(std::uint32_t id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%04u", id);
  return buf;
}

}  // namespace

std::string NodeRef::name() const {
  return kind == Kind::coordinator ? "coordinator" : format_center(id);
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::standardize: return "standardize";
    case Phase::admm: return "admm";
    case Phase::pca: return "pca";
    case Phase::done: return "done";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// covariate derivation

Eigen::MatrixXd derive_covariates(const Eigen::MatrixXd& table,
                                  const std::vector<std::string>& names,
                                  const std::vector<std::string>& spec) {
  if (spec.empty()) return table;
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != table.cols())
    throw ShapeMismatch("derive_covariates: " + std::to_string(names.size()) + " names for " +
                        std::to_string(table.cols()) + " columns");

  auto column_of = [&](const std::string& name) -> Eigen::Index {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<Eigen::Index>(i);
    throw SpecError("derive_covariates: unknown covariate '" + name + "'");
  };

  Eigen::MatrixXd out(table.rows(), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const std::string& term = spec[j];
    if (term == "intercept" || term == "1") {
      out.col(static_cast<Eigen::Index>(j)).setOnes();
    } else if (term.size() > 2 && term.substr(term.size() - 2) == "^2") {
      Eigen::Index c = column_of(term.substr(0, term.size() - 2));
      out.col(static_cast<Eigen::Index>(j)) = table.col(c).array().square();
    } else {
      out.col(static_cast<Eigen::Index>(j)) = table.col(column_of(term));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// canonical result serialization

namespace {

void put_stats_block(io::ByteWriter& w, const stats::GlobalStats& g) {
  w.u64(static_cast<std::uint64_t>(g.mean.size()));
  w.u64(g.n_total);
  w.vector(g.mean);
  w.vector(g.std);
}

stats::GlobalStats get_stats_block(io::ByteReader& r) {
  stats::GlobalStats g;
  std::uint64_t f = r.u64();
  g.n_total = r.u64();
  g.mean = r.vector(f);
  g.std = r.vector(f);
  return g;
}

}  // namespace

std::vector<std::uint8_t> serialize_result(const AnalysisResult& res) {
  io::ByteWriter w;
  w.u32(1);  // format version
  put_stats_block(w, res.global_stats);
  w.matrix(res.weights.w_tilde);
  w.u64(res.trace.size());
  for (const auto& row : res.trace) {
    w.u32(static_cast<std::uint32_t>(row.iteration));
    w.f64(row.max_primal_residual);
    w.u8(row.mse_vs_truth ? 1 : 0);
    w.f64(row.mse_vs_truth.value_or(0.0));
  }
  w.u64(static_cast<std::uint64_t>(res.basis.eigenvalues.size()));
  w.vector(res.basis.eigenvalues);
  w.vector(res.basis.explained_fraction);
  w.matrix(res.basis.components, /*row_major=*/false);
  w.u8(res.scores ? 1 : 0);
  if (res.scores) {
    const auto& s = *res.scores;
    w.matrix(s.coords);
    for (auto id : s.center_ids) w.u32(id);
    for (auto idx : s.subject_index) w.u64(idx);
    w.u8(s.labels.empty() ? 0 : 1);
    if (!s.labels.empty())
      for (const auto& l : s.labels) w.str(l);
  }
  return w.take();
}

AnalysisResult deserialize_result(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.u32() != 1) throw DecodeError("unsupported result format version");
  AnalysisResult res;
  res.global_stats = get_stats_block(r);
  res.weights.w_tilde = r.matrix();
  std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    admm::IterationStats row;
    row.iteration = static_cast<int>(r.u32());
    row.max_primal_residual = r.f64();
    bool has = r.u8() != 0;
    double mse = r.f64();
    if (has) row.mse_vs_truth = mse;
    res.trace.push_back(row);
  }
  std::uint64_t m = r.u64();
  res.basis.eigenvalues = r.vector(m);
  res.basis.explained_fraction = r.vector(m);
  res.basis.components = r.matrix(/*row_major=*/false);
  if (r.u8()) {
    PooledScores s;
    s.coords = r.matrix();
    const auto rows = static_cast<std::size_t>(s.coords.rows());
    s.center_ids.resize(rows);
    for (auto& id : s.center_ids) id = r.u32();
    s.subject_index.resize(rows);
    for (auto& idx : s.subject_index) idx = r.u64();
    if (r.u8()) {
      s.labels.resize(rows);
      for (auto& l : s.labels) l = r.str();
    }
    res.scores = std::move(s);
  }
  return res;
}

// ---------------------------------------------------------------------------
// in-process transport

struct InProcTransport::Shared {
  std::mutex mu;
  std::uint32_t n_centers = 0;
  // one inbox per receiver: index 0 = coordinator, 1 + id = center
  std::vector<std::deque<std::pair<NodeRef, Message>>> inboxes;
  std::optional<std::mt19937_64> shuffle;
};

namespace {

class InProcEndpoint : public Endpoint {
 public:
  InProcEndpoint(std::shared_ptr<InProcTransport::Shared> shared, NodeRef self)
      : shared_(std::move(shared)), self_(self) {}

  void send(const Dest& to, const Message& m) override {
    std::lock_guard lock(shared_->mu);
    switch (to.kind) {
      case Dest::Kind::coordinator:
        shared_->inboxes[0].emplace_back(self_, m);
        break;
      case Dest::Kind::center:
        shared_->inboxes.at(1 + to.id).emplace_back(self_, m);
        break;
      case Dest::Kind::all_centers:
        for (std::uint32_t c = 0; c < shared_->n_centers; ++c)
          shared_->inboxes[1 + c].emplace_back(self_, m);
        break;
    }
  }

  std::optional<std::pair<NodeRef, Message>> receive(std::chrono::milliseconds) override {
    std::lock_guard lock(shared_->mu);
    auto& box = shared_->inboxes[self_.kind == NodeRef::Kind::coordinator ? 0 : 1 + self_.id];
    if (box.empty()) return std::nullopt;
    std::size_t pick = 0;
    if (shared_->shuffle && box.size() > 1)
      pick = static_cast<std::size_t>((*shared_->shuffle)() % box.size());
    auto msg = std::move(box[pick]);
    box.erase(box.begin() + static_cast<std::ptrdiff_t>(pick));
    return msg;
  }

 private:
  std::shared_ptr<InProcTransport::Shared> shared_;
  NodeRef self_;
};

}  // namespace

InProcTransport::InProcTransport(std::uint32_t n_centers, std::optional<std::uint64_t> delivery_seed)
    : shared_(std::make_shared<Shared>()) {
  shared_->n_centers = n_centers;
  shared_->inboxes.resize(1 + n_centers);
  if (delivery_seed) shared_->shuffle.emplace(*delivery_seed);
}

std::unique_ptr<Endpoint> InProcTransport::endpoint(NodeRef self) {
  if (self.kind == NodeRef::Kind::center && self.id >= shared_->n_centers)
    throw SpecError("inproc endpoint: center id out of range");
  return std::make_unique<InProcEndpoint>(shared_, self);
}

// ---------------------------------------------------------------------------
// file-exchange transport

namespace {

std::pair<std::string, std::uint32_t> phase_round_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::pair<std::string, std::uint32_t> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StatsShare> || std::is_same_v<T, GlobalStatsBroadcast>)
          return {"stats", 0};
        else if constexpr (std::is_same_v<T, AdmmLocalShare>)
          return {"admm", v.round};
        else if constexpr (std::is_same_v<T, ConsensusBroadcast>)
          return {"admm", v.round};
        else if constexpr (std::is_same_v<T, EigenpackShare> ||
                           std::is_same_v<T, GlobalBasisBroadcast>)
          return {"pca", 0};
        else
          return {"scores", 0};
      },
      m);
}

class FileEndpoint : public Endpoint {
 public:
  FileEndpoint(std::filesystem::path root, std::chrono::milliseconds poll, NodeRef self)
      : root_(std::move(root)), poll_(poll), self_(self) {}

  void send(const Dest&, const Message& m) override {
    // recipients are implied by the sender role in the star topology;
    // a broadcast is a single file every center reads
    auto dir = root_ / FileExchangeTransport::round_dirname(m);
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir / FileExchangeTransport::message_filename(m, self_), encode(m));
  }

  std::optional<std::pair<NodeRef, Message>> receive(std::chrono::milliseconds wait) override {
    const auto deadline = std::chrono::steady_clock::now() + wait;
    while (true) {
      if (auto found = scan()) return found;
      if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(poll_);
    }
  }

 private:
  std::optional<std::pair<NodeRef, Message>> scan() {
    if (!std::filesystem::exists(root_)) return std::nullopt;
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root_))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".msg") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        if (consumed_.count(f.string())) continue;
        std::string stem = f.stem().string();
        std::string sender = stem.substr(stem.rfind('_') + 1);
        const bool from_coordinator = sender == "coordinator";
        if (self_.kind == NodeRef::Kind::coordinator ? from_coordinator : !from_coordinator)
          continue;  // not addressed to this role
        consumed_.insert(f.string());
        NodeRef from = from_coordinator
                           ? NodeRef::coord()
                           : NodeRef::center(static_cast<std::uint32_t>(std::stoul(sender.substr(1))));
        auto bytes = io::read_file(f);
        return std::make_pair(from, decode(bytes));
      }
    }
    return std::nullopt;
  }

  std::filesystem::path root_;
  std::chrono::milliseconds poll_;
  NodeRef self_;
  std::set<std::string> consumed_;
};

}  // namespace

FileExchangeTransport::FileExchangeTransport(std::filesystem::path root,
                                             std::chrono::milliseconds poll_interval)
    : root_(std::move(root)), poll_(poll_interval) {
  std::filesystem::create_directories(root_);
}

std::unique_ptr<Endpoint> FileExchangeTransport::endpoint(NodeRef self) {
  return std::make_unique<FileEndpoint>(root_, poll_, self);
}

std::string FileExchangeTransport::round_dirname(const Message& m) {
  auto [phase, round] = phase_round_of(m);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03u", phase.c_str(), round);
  return buf;
}

std::string FileExchangeTransport::message_filename(const Message& m, const NodeRef& sender) {
  auto [phase, round] = phase_round_of(m);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03u_%s.msg", phase.c_str(), round, sender.name().c_str());
  return buf;
}

// ---------------------------------------------------------------------------
// center state machine

namespace {

void validate_config(const PipelineConfig& c) {
  if (c.admm.rho <= 0.0) throw SpecError("pipeline config: rho must be positive");
  if (c.admm.iterations < 1) throw SpecError("pipeline config: iterations must be >= 1");
  // the lockstep protocol has no early-stop signaling; a tolerance-based
  // stop is a run_admm-only option
  if (c.admm.tolerance)
    throw SpecError("pipeline config: tolerance-based stopping is not available over the wire");
  if (c.variance_threshold <= 0.0 || c.variance_threshold > 1.0)
    throw SpecError("pipeline config: variance threshold must be in (0, 1]");
  if (c.m_components && *c.m_components < 1)
    throw SpecError("pipeline config: m_components must be >= 1");
  if (c.score_column_cap < 1) throw SpecError("pipeline config: score column cap must be >= 1");
}

}  // namespace

CenterNode::CenterNode(std::uint32_t id, CenterInput input, PipelineConfig config)
    : id_(id), config_(std::move(config)) {
  validate_config(config_);
  x_ = std::move(input.data.x);
  y_ = derive_covariates(input.data.y, input.covariate_names, config_.covariate_spec);
  labels_ = std::move(input.labels);
  if (x_.rows() == 0) throw EmptyCenter("center " + std::to_string(id) + ": no subjects");
  if (x_.rows() != y_.rows())
    throw ShapeMismatch("center " + std::to_string(id) + ": feature rows " +
                        std::to_string(x_.rows()) + " != covariate rows " + std::to_string(y_.rows()));
  if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != x_.rows())
    throw ShapeMismatch("center " + std::to_string(id) + ": label count mismatch");
}

std::vector<Message> CenterNode::start() {
  if (started_) throw UnexpectedPhase("center " + std::to_string(id_) + ": already started");
  started_ = true;
  return {StatsShare{id_, stats::accumulate_local(x_)}};
}

std::vector<Message> CenterNode::handle_message(const Message& m) {
  if (const auto* g = std::get_if<GlobalStatsBroadcast>(&m)) {
    if (phase_ != Phase::standardize)
      throw UnexpectedPhase("center " + std::to_string(id_) + ": stats broadcast in phase " +
                            phase_name(phase_));
    xhat_ = stats::standardize(x_, g->stats);
    x_.resize(0, 0);
    solver_.emplace(xhat_, y_, config_.admm.rho);
    const Eigen::Index q = y_.cols(), f = xhat_.cols();
    alpha_ = Eigen::MatrixXd::Zero(q, f);
    w_ = solver_->update(admm::ConsensusWeights{Eigen::MatrixXd::Zero(q, f)}, alpha_);
    round_ = 1;
    phase_ = Phase::admm;
    return {AdmmLocalShare{id_, round_, w_, alpha_}};
  }

  if (const auto* c = std::get_if<ConsensusBroadcast>(&m)) {
    if (phase_ != Phase::admm)
      throw UnexpectedPhase("center " + std::to_string(id_) + ": consensus in phase " +
                            phase_name(phase_));
    if (c->round != round_)
      throw UnexpectedPhase("center " + std::to_string(id_) + ": consensus for round " +
                            std::to_string(c->round) + ", expected " + std::to_string(round_));
    alpha_ = admm::dual_update(alpha_, w_, c->weights, config_.admm.rho);
    if (round_ < static_cast<std::uint32_t>(config_.admm.iterations)) {
      w_ = solver_->update(c->weights, alpha_);
      ++round_;
      return {AdmmLocalShare{id_, round_, w_, alpha_}};
    }
    corrected_ = admm::correct(xhat_, y_, c->weights).e;
    phase_ = Phase::pca;
    return {EigenpackShare{id_, fpca::local_eigendecomposition(corrected_, config_.variance_threshold)}};
  }

  if (const auto* b = std::get_if<GlobalBasisBroadcast>(&m)) {
    if (phase_ != Phase::pca)
      throw UnexpectedPhase("center " + std::to_string(id_) + ": basis in phase " +
                            phase_name(phase_));
    phase_ = Phase::done;
    if (!config_.share_scores) return {};
    fpca::Scores scores = fpca::project(corrected_, b->basis);
    const Eigen::Index m_share =
        std::min<Eigen::Index>(scores.coords.cols(), config_.score_column_cap);
    ScoresShare share;
    share.center_id = id_;
    share.scores.coords = scores.coords.leftCols(m_share);
    if (!labels_.empty()) share.labels = labels_;
    return {Message(std::move(share))};
  }

  throw UnexpectedPhase("center " + std::to_string(id_) + ": unexpected " +
                        tag_name(tag_of(m)) + " in phase " + phase_name(phase_));
}

// ---------------------------------------------------------------------------
// coordinator state machine

CoordinatorNode::CoordinatorNode(std::uint32_t n_centers, PipelineConfig config,
                                 std::optional<GroundTruth> truth)
    : n_centers_(n_centers), config_(std::move(config)), truth_(std::move(truth)) {
  if (n_centers_ == 0) throw NoCenters("coordinator: no centers");
  validate_config(config_);
}

void CoordinatorNode::expect_phase(Phase p, const Message& m) const {
  if (phase_ != p)
    throw UnexpectedPhase(std::string("coordinator: ") + tag_name(tag_of(m)) + " in phase " +
                          phase_name(phase_));
}

std::vector<Message> CoordinatorNode::broadcast_and_log(Message m) {
  transcript_.push_back(m);
  return {std::move(m)};
}

std::vector<Message> CoordinatorNode::handle_message(const Message& m) {
  if (const auto* s = std::get_if<StatsShare>(&m)) {
    expect_phase(Phase::standardize, m);
    if (s->center_id >= n_centers_)
      throw DecodeError("coordinator: unknown center id " + std::to_string(s->center_id));
    if (!pending_moments_.emplace(s->center_id, s->moments).second)
      throw DuplicateSender("coordinator: duplicate stats share from center " +
                            std::to_string(s->center_id));
    if (pending_moments_.size() < n_centers_) return {};

    // barrier complete: id-sorted reduction (map iteration is ascending)
    stats::FeatureMoments total = stats::FeatureMoments::empty(pending_moments_.begin()->second.mean.size());
    for (const auto& [id, moments] : pending_moments_) {
      transcript_.push_back(StatsShare{id, moments});
      total = stats::merge(total, moments);
    }
    result_.global_stats = stats::finalize(total);
    pending_moments_.clear();

    if (truth_) {
      const auto& g = result_.global_stats;
      if (truth_->w.cols() != g.mean.size())
        throw ShapeMismatch("coordinator: truth has " + std::to_string(truth_->w.cols()) +
                            " features, data has " + std::to_string(g.mean.size()));
      adjusted_truth_ = truth_->w;
      if (truth_->adjust_for_standardization) {
        for (Eigen::Index j = 0; j < adjusted_truth_.cols(); ++j) {
          if (stats::is_zero_variance(g.std(j), g.mean(j))) {
            adjusted_truth_.col(j).setZero();
            continue;
          }
          adjusted_truth_.col(j) /= g.std(j);
          if (truth_->intercept_column)
            adjusted_truth_(*truth_->intercept_column, j) -= g.mean(j) / g.std(j);
        }
      }
      have_adjusted_truth_ = true;
    }

    phase_ = Phase::admm;
    round_ = 1;
    return broadcast_and_log(GlobalStatsBroadcast{result_.global_stats});
  }

  if (const auto* a = std::get_if<AdmmLocalShare>(&m)) {
    expect_phase(Phase::admm, m);
    if (a->center_id >= n_centers_)
      throw DecodeError("coordinator: unknown center id " + std::to_string(a->center_id));
    if (a->round != round_)
      throw UnexpectedPhase("coordinator: share for round " + std::to_string(a->round) +
                            ", expected " + std::to_string(round_));
    if (a->w.cols() != result_.global_stats.mean.size() || a->w.rows() != a->alpha.rows() ||
        a->w.cols() != a->alpha.cols())
      throw ShapeMismatch("coordinator: W share with inconsistent shape from center " +
                          std::to_string(a->center_id));
    if (!pending_states_.empty() && (a->w.rows() != pending_states_.begin()->second.w.rows()))
      throw ShapeMismatch("coordinator: centers disagree on covariate count");
    if (!pending_states_.emplace(a->center_id, admm::LocalAdmmState{a->w, a->alpha}).second)
      throw DuplicateSender("coordinator: duplicate ADMM share from center " +
                            std::to_string(a->center_id));
    if (pending_states_.size() < n_centers_) return {};

    std::vector<admm::LocalAdmmState> states;
    states.reserve(n_centers_);
    for (const auto& [id, st] : pending_states_) {
      transcript_.push_back(AdmmLocalShare{id, round_, st.w, st.alpha});
      states.push_back(st);
    }
    result_.weights = admm::consensus_update(states, config_.admm.rho);
    if (!result_.weights.w_tilde.allFinite())
      throw DivergenceDetected("coordinator: non-finite consensus at round " +
                               std::to_string(round_) + " (check rho)");

    admm::IterationStats row;
    row.iteration = static_cast<int>(round_);
    for (const auto& st : states)
      row.max_primal_residual =
          std::max(row.max_primal_residual, (st.w - result_.weights.w_tilde).norm());
    if (have_adjusted_truth_ && adjusted_truth_.rows() == result_.weights.w_tilde.rows())
      row.mse_vs_truth = admm::mse_between(result_.weights.w_tilde, adjusted_truth_);
    result_.trace.push_back(row);
    pending_states_.clear();

    const std::uint32_t finished_round = round_;
    if (round_ < static_cast<std::uint32_t>(config_.admm.iterations)) {
      ++round_;
    } else {
      phase_ = Phase::pca;
    }
    return broadcast_and_log(ConsensusBroadcast{finished_round, result_.weights});
  }

  if (const auto* e = std::get_if<EigenpackShare>(&m)) {
    expect_phase(Phase::pca, m);
    if (awaiting_scores_)
      throw UnexpectedPhase("coordinator: eigenpack after basis broadcast");
    if (e->center_id >= n_centers_)
      throw DecodeError("coordinator: unknown center id " + std::to_string(e->center_id));
    if (e->pack.basis.rows() != result_.global_stats.mean.size())
      throw ShapeMismatch("coordinator: eigenpack feature count mismatch from center " +
                          std::to_string(e->center_id));
    if (!pending_packs_.emplace(e->center_id, e->pack).second)
      throw DuplicateSender("coordinator: duplicate eigenpack from center " +
                            std::to_string(e->center_id));
    if (pending_packs_.size() < n_centers_) return {};

    std::vector<fpca::LocalEigenpack> packs;
    packs.reserve(n_centers_);
    for (const auto& [id, p] : pending_packs_) {
      transcript_.push_back(EigenpackShare{id, p});
      packs.push_back(p);
    }
    fpca::BasisSelection sel;
    sel.m_components = config_.m_components;
    sel.variance_threshold = config_.variance_threshold;
    result_.basis = fpca::aggregate(packs, sel);
    pending_packs_.clear();

    if (config_.share_scores) {
      awaiting_scores_ = true;
    } else {
      phase_ = Phase::done;
    }
    return broadcast_and_log(GlobalBasisBroadcast{result_.basis});
  }

  if (const auto* s = std::get_if<ScoresShare>(&m)) {
    expect_phase(Phase::pca, m);
    if (!awaiting_scores_) throw UnexpectedPhase("coordinator: scores before basis broadcast");
    if (s->center_id >= n_centers_)
      throw DecodeError("coordinator: unknown center id " + std::to_string(s->center_id));
    if (!pending_scores_.emplace(s->center_id, *s).second)
      throw DuplicateSender("coordinator: duplicate scores from center " +
                            std::to_string(s->center_id));
    if (pending_scores_.size() < n_centers_) return {};

    Eigen::Index total_rows = 0, m_cols = pending_scores_.begin()->second.scores.coords.cols();
    bool any_labels = false;
    for (const auto& [id, share] : pending_scores_) {
      if (share.scores.coords.cols() != m_cols)
        throw ShapeMismatch("coordinator: centers disagree on score dimension");
      total_rows += share.scores.coords.rows();
      any_labels = any_labels || share.labels.has_value();
    }
    PooledScores pooled;
    pooled.coords.resize(total_rows, m_cols);
    pooled.center_ids.reserve(static_cast<std::size_t>(total_rows));
    pooled.subject_index.reserve(static_cast<std::size_t>(total_rows));
    Eigen::Index row = 0;
    for (const auto& [id, share] : pending_scores_) {
      transcript_.push_back(share);
      pooled.coords.middleRows(row, share.scores.coords.rows()) = share.scores.coords;
      for (Eigen::Index i = 0; i < share.scores.coords.rows(); ++i) {
        pooled.center_ids.push_back(id);
        pooled.subject_index.push_back(static_cast<std::uint64_t>(i));
        if (any_labels)
          pooled.labels.push_back(share.labels && i < static_cast<Eigen::Index>(share.labels->size())
                                      ? (*share.labels)[static_cast<std::size_t>(i)]
                                      : std::string());
      }
      row += share.scores.coords.rows();
    }
    result_.scores = std::move(pooled);
    pending_scores_.clear();
    phase_ = Phase::done;
    return {};
  }

  throw UnexpectedPhase(std::string("coordinator: unexpected ") + tag_name(tag_of(m)));
}

std::vector<std::uint32_t> CoordinatorNode::missing_centers() const {
  std::vector<std::uint32_t> missing;
  auto collect = [&](const auto& pending) {
    for (std::uint32_t c = 0; c < n_centers_; ++c)
      if (!pending.count(c)) missing.push_back(c);
  };
  switch (phase_) {
    case Phase::standardize: collect(pending_moments_); break;
    case Phase::admm: collect(pending_states_); break;
    case Phase::pca: awaiting_scores_ ? collect(pending_scores_) : collect(pending_packs_); break;
    case Phase::done: break;
  }
  return missing;
}

void CoordinatorNode::throw_timeout() const {
  std::ostringstream os;
  os << "phase " << phase_name(phase_);
  if (phase_ == Phase::admm) os << " (round " << round_ << ")";
  if (phase_ == Phase::pca && awaiting_scores_) os << " (scores)";
  os << ": no message from center(s)";
  for (auto c : missing_centers()) os << " " << c;
  throw PhaseTimeout(os.str());
}

const AnalysisResult& CoordinatorNode::result() const {
  if (phase_ != Phase::done) throw Error("coordinator: pipeline not complete");
  return result_;
}

// ---------------------------------------------------------------------------
// drivers

namespace {

struct CenterParty {
  CenterNode node;
  std::unique_ptr<Endpoint> ep;
};

// Drains every currently deliverable message for one party; returns whether
// anything was handled.
template <typename Node>
bool pump(Node& node, Endpoint& ep, const Dest& out_dest) {
  bool progress = false;
  while (auto incoming = ep.receive(std::chrono::milliseconds(0))) {
    auto outs = node.handle_message(incoming->second);
    for (auto& out : outs) ep.send(out_dest, out);
    progress = true;
  }
  return progress;
}

}  // namespace

PipelineOutput run_pipeline(const std::vector<CenterInput>& centers, const PipelineConfig& config,
                            Transport& transport, const std::optional<GroundTruth>& truth,
                            std::chrono::milliseconds stall_timeout) {
  if (centers.empty()) throw NoCenters("run_pipeline: no centers");

  CoordinatorNode coordinator(static_cast<std::uint32_t>(centers.size()), config, truth);
  auto coord_ep = transport.endpoint(NodeRef::coord());

  std::vector<CenterParty> parties;
  parties.reserve(centers.size());
  for (std::size_t c = 0; c < centers.size(); ++c) {
    auto id = static_cast<std::uint32_t>(c);
    parties.push_back(CenterParty{CenterNode(id, centers[c], config),
                                  transport.endpoint(NodeRef::center(id))});
  }
  for (auto& p : parties) {
    if (p.node.n_features() != parties.front().node.n_features() ||
        p.node.n_covariates() != parties.front().node.n_covariates())
      throw ShapeMismatch("run_pipeline: centers disagree on F or q");
  }

  for (auto& p : parties)
    for (auto& msg : p.node.start()) p.ep->send(Dest::coord(), msg);

  auto last_progress = std::chrono::steady_clock::now();
  while (true) {
    bool progress = pump(coordinator, *coord_ep, Dest::broadcast());
    for (auto& p : parties) progress = pump(p.node, *p.ep, Dest::coord()) || progress;

    bool all_done = coordinator.done();
    for (auto& p : parties) all_done = all_done && p.node.done();
    if (all_done) break;

    if (progress) {
      last_progress = std::chrono::steady_clock::now();
    } else {
      if (std::chrono::steady_clock::now() - last_progress > stall_timeout)
        coordinator.throw_timeout();
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }

  return PipelineOutput{coordinator.result(), coordinator.transcript()};
}

PipelineOutput run_coordinator_agent(std::uint32_t n_centers, const PipelineConfig& config,
                                     Transport& transport, const std::optional<GroundTruth>& truth,
                                     std::chrono::milliseconds stall_timeout) {
  CoordinatorNode coordinator(n_centers, config, truth);
  auto ep = transport.endpoint(NodeRef::coord());
  while (!coordinator.done()) {
    auto incoming = ep->receive(stall_timeout);
    if (!incoming) coordinator.throw_timeout();
    for (auto& out : coordinator.handle_message(incoming->second))
      ep->send(Dest::broadcast(), out);
  }
  return PipelineOutput{coordinator.result(), coordinator.transcript()};
}

void run_center_agent(std::uint32_t id, CenterInput input, const PipelineConfig& config,
                      Transport& transport, std::chrono::milliseconds stall_timeout) {
  CenterNode node(id, std::move(input), config);
  auto ep = transport.endpoint(NodeRef::center(id));
  for (auto& msg : node.start()) ep->send(Dest::coord(), msg);
  while (!node.done()) {
    auto incoming = ep->receive(stall_timeout);
    if (!incoming)
      throw PhaseTimeout("center " + std::to_string(id) + ": no coordinator message in phase " +
                         phase_name(node.phase()));
    for (auto& out : node.handle_message(incoming->second)) ep->send(Dest::coord(), out);
  }
}

// ---------------------------------------------------------------------------
// privacy audit

namespace {

std::string dims_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

AuditReport audit_privacy(const std::vector<Message>& transcript, const AuditContext& ctx) {
  AuditReport report;
  report.actual_messages = transcript.size();

  const std::uint64_t f = ctx.n_features, q = ctx.n_covariates;
  auto forbidden = [&](Eigen::Index r, Eigen::Index c) -> bool {
    for (auto n_c : ctx.center_rows) {
      if (static_cast<std::uint64_t>(r) != n_c) continue;
      if (static_cast<std::uint64_t>(c) == f || static_cast<std::uint64_t>(c) == q) return true;
    }
    return false;
  };
  auto flag = [&](AuditEntry& entry, const std::string& why) {
    entry.flagged = true;
    entry.note = entry.note.empty() ? why : entry.note + "; " + why;
    report.violations.push_back("message " + std::to_string(entry.index) + " (" +
                                tag_name(entry.tag) + "): " + why);
  };
  auto check_matrix = [&](AuditEntry& entry, const Eigen::MatrixXd& m, const std::string& role) {
    if (!entry.dims.empty()) entry.dims += ", ";
    entry.dims += role + " " + dims_str(m.rows(), m.cols());
    if (forbidden(m.rows(), m.cols()))
      flag(entry, role + " has a subjects x features/covariates shape " +
                      dims_str(m.rows(), m.cols()));
  };

  std::map<MsgTag, std::size_t> tally;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const Message& m = transcript[i];
    AuditEntry entry;
    entry.index = i;
    entry.tag = tag_of(m);
    entry.payload_bytes = payload_size(m);
    ++tally[entry.tag];

    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, StatsShare>) {
            entry.dims = "moments F=" + std::to_string(v.moments.mean.size());
            if (static_cast<std::uint64_t>(v.moments.mean.size()) != f)
              flag(entry, "moment length differs from declared F");
          } else if constexpr (std::is_same_v<T, GlobalStatsBroadcast>) {
            entry.dims = "stats F=" + std::to_string(v.stats.mean.size());
            if (static_cast<std::uint64_t>(v.stats.mean.size()) != f)
              flag(entry, "stats length differs from declared F");
          } else if constexpr (std::is_same_v<T, AdmmLocalShare>) {
            check_matrix(entry, v.w, "W");
            check_matrix(entry, v.alpha, "alpha");
            if (static_cast<std::uint64_t>(v.w.rows()) != q ||
                static_cast<std::uint64_t>(v.w.cols()) != f)
              flag(entry, "weight share is not q x F");
          } else if constexpr (std::is_same_v<T, ConsensusBroadcast>) {
            check_matrix(entry, v.weights.w_tilde, "W~");
            if (static_cast<std::uint64_t>(v.weights.w_tilde.rows()) != q ||
                static_cast<std::uint64_t>(v.weights.w_tilde.cols()) != f)
              flag(entry, "consensus is not q x F");
          } else if constexpr (std::is_same_v<T, EigenpackShare>) {
            check_matrix(entry, v.pack.basis, "basis");
            if (static_cast<std::uint64_t>(v.pack.basis.rows()) != f)
              flag(entry, "eigenpack rows differ from declared F");
          } else if constexpr (std::is_same_v<T, GlobalBasisBroadcast>) {
            check_matrix(entry, v.basis.components, "components");
            if (static_cast<std::uint64_t>(v.basis.components.rows()) != f)
              flag(entry, "basis rows differ from declared F");
          } else if constexpr (std::is_same_v<T, ScoresShare>) {
            check_matrix(entry, v.scores.coords, "scores");
            if (v.scores.coords.cols() > ctx.score_column_cap)
              flag(entry, "score columns exceed cap " + std::to_string(ctx.score_column_cap));
            if (!entry.flagged)
              entry.note = "derived low-dimensional projections (m=" +
                           std::to_string(v.scores.coords.cols()) + " <= cap)";
          }
        },
        m);
    report.entries.push_back(std::move(entry));
  }

  if (ctx.admm_rounds > 0) {
    const std::size_t c = ctx.center_rows.size();
    const std::size_t k = ctx.admm_rounds;
    report.expected_messages = (c + 1) + k * (c + 1) + (c + 1) + (ctx.share_scores ? c : 0);
    report.counts_ok =
        report.actual_messages == report.expected_messages && tally[MsgTag::stats_share] == c &&
        tally[MsgTag::global_stats_broadcast] == 1 && tally[MsgTag::admm_local_share] == c * k &&
        tally[MsgTag::consensus_broadcast] == k && tally[MsgTag::eigenpack_share] == c &&
        tally[MsgTag::global_basis_broadcast] == 1 &&
        tally[MsgTag::scores_share] == (ctx.share_scores ? c : 0);
  }

  report.pass = report.violations.empty();
  return report;
}

std::string to_text(const AuditReport& report) {
  std::ostringstream os;
  os << "privacy audit: " << (report.pass ? "PASS" : "FAIL") << "\n";
  os << "messages: " << report.actual_messages;
  if (report.expected_messages > 0)
    os << " (expected " << report.expected_messages << ", counts "
       << (report.counts_ok ? "ok" : "MISMATCH") << ")";
  os << "\n";
  for (const auto& e : report.entries) {
    os << "  [" << e.index << "] " << tag_name(e.tag) << " " << e.payload_bytes << "B";
    if (!e.dims.empty()) os << " | " << e.dims;
    if (e.flagged) os << " | FLAG";
    if (!e.note.empty()) os << " | " << e.note;
    os << "\n";
  }
  for (const auto& v : report.violations) os << "violation: " << v << "\n";
  return os.str();
}

}  // namespace fedcov::fed
