#pragma once

// The closed set of payloads allowed on the wire. No variant can carry a
// subjects x features or subjects x covariates matrix: raw rows are
// structurally unrepresentable. Scores are the one subject-indexed payload
// and their column count is capped by the pipeline configuration.
//
// Envelope: magic "FDCV" | version u16 | variant tag u16 | payload len u64 |
// payload bytes. All integers and doubles little-endian.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedcov/admm.hpp"
#include "fedcov/fpca.hpp"
#include "fedcov/stats.hpp"

namespace fedcov::fed {

inline constexpr char kMagic[4] = {'F', 'D', 'C', 'V'};
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr int kDefaultScoreColumnCap = 16;

enum class MsgTag : std::uint16_t {
  stats_share = 1,
  global_stats_broadcast = 2,
  admm_local_share = 3,
  consensus_broadcast = 4,
  eigenpack_share = 5,
  global_basis_broadcast = 6,
  scores_share = 7,
};

const char* tag_name(MsgTag tag);

struct StatsShare {
  std::uint32_t center_id = 0;
  stats::FeatureMoments moments;
};

struct GlobalStatsBroadcast {
  stats::GlobalStats stats;
};

struct AdmmLocalShare {
  std::uint32_t center_id = 0;
  std::uint32_t round = 0;
  Eigen::MatrixXd w;      // q x F
  Eigen::MatrixXd alpha;  // q x F, dual from the previous round
};

struct ConsensusBroadcast {
  std::uint32_t round = 0;
  admm::ConsensusWeights weights;
};

struct EigenpackShare {
  std::uint32_t center_id = 0;
  fpca::LocalEigenpack pack;
};

struct GlobalBasisBroadcast {
  fpca::GlobalBasis basis;
};

struct ScoresShare {
  std::uint32_t center_id = 0;
  fpca::Scores scores;
  std::optional<std::vector<std::string>> labels;  // per-subject group tags
};

using Message = std::variant<StatsShare, GlobalStatsBroadcast, AdmmLocalShare, ConsensusBroadcast,
                             EigenpackShare, GlobalBasisBroadcast, ScoresShare>;

MsgTag tag_of(const Message& m);

// Exact serialized payload size in bytes (envelope excluded).
std::size_t payload_size(const Message& m);

std::vector<std::uint8_t> encode(const Message& m);
Message decode(std::span<const std::uint8_t> bytes);  // DecodeError on malformed input

}  // namespace fedcov::fed
