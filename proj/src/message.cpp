#include "fedcov/message.hpp"

#include "fedcov/binio.hpp"

namespace fedcov::fed {

namespace {

using io::ByteReader;
using io::ByteWriter;

// FeatureMoments wire layout: (F: u64, count: u64) then 2F doubles,
// mean before m2. GlobalStats reuses the same shape with std in place
// of m2 and n_total in place of count.
void put_moments(ByteWriter& w, const stats::FeatureMoments& m) {
  w.u64(static_cast<std::uint64_t>(m.mean.size()));
  w.u64(m.count);
  w.vector(m.mean);
  w.vector(m.m2);
}

stats::FeatureMoments get_moments(ByteReader& r) {
  stats::FeatureMoments m;
  std::uint64_t f = r.u64();
  m.count = r.u64();
  m.mean = r.vector(f);
  m.m2 = r.vector(f);
  return m;
}

void put_global_stats(ByteWriter& w, const stats::GlobalStats& g) {
  w.u64(static_cast<std::uint64_t>(g.mean.size()));
  w.u64(g.n_total);
  w.vector(g.mean);
  w.vector(g.std);
}

stats::GlobalStats get_global_stats(ByteReader& r) {
  stats::GlobalStats g;
  std::uint64_t f = r.u64();
  g.n_total = r.u64();
  g.mean = r.vector(f);
  g.std = r.vector(f);
  return g;
}

// Weight matrices: header (q: u64, F: u64) + q*F doubles row-major.
void put_weights(ByteWriter& w, const Eigen::MatrixXd& m) { w.matrix(m, /*row_major=*/true); }

// Eigenpack: header (F: u64, k: u64, n_local: u64) + k singular values +
// F*k basis entries column-major.
void put_eigenpack(ByteWriter& w, const fpca::LocalEigenpack& p) {
  w.u64(static_cast<std::uint64_t>(p.basis.rows()));
  w.u64(static_cast<std::uint64_t>(p.basis.cols()));
  w.u64(p.n_local);
  w.vector(p.singular_values);
  for (Eigen::Index j = 0; j < p.basis.cols(); ++j)
    for (Eigen::Index i = 0; i < p.basis.rows(); ++i) w.f64(p.basis(i, j));
}

fpca::LocalEigenpack get_eigenpack(ByteReader& r) {
  fpca::LocalEigenpack p;
  std::uint64_t f = r.u64();
  std::uint64_t k = r.u64();
  p.n_local = r.u64();
  p.singular_values = r.vector(k);
  p.basis.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k));
  for (Eigen::Index j = 0; j < p.basis.cols(); ++j)
    for (Eigen::Index i = 0; i < p.basis.rows(); ++i) p.basis(i, j) = r.f64();
  // the attained local fraction is not on the wire; downstream never uses it
  p.variance_captured = 1.0;
  return p;
}

void put_basis(ByteWriter& w, const fpca::GlobalBasis& b) {
  w.u64(static_cast<std::uint64_t>(b.components.rows()));
  w.u64(static_cast<std::uint64_t>(b.components.cols()));
  w.vector(b.eigenvalues);
  w.vector(b.explained_fraction);
  for (Eigen::Index j = 0; j < b.components.cols(); ++j)
    for (Eigen::Index i = 0; i < b.components.rows(); ++i) w.f64(b.components(i, j));
}

fpca::GlobalBasis get_basis(ByteReader& r) {
  fpca::GlobalBasis b;
  std::uint64_t f = r.u64();
  std::uint64_t m = r.u64();
  b.eigenvalues = r.vector(m);
  b.explained_fraction = r.vector(m);
  b.components.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < b.components.cols(); ++j)
    for (Eigen::Index i = 0; i < b.components.rows(); ++i) b.components(i, j) = r.f64();
  return b;
}

struct PayloadEncoder {
  ByteWriter& w;

  void operator()(const StatsShare& m) {
    w.u32(m.center_id);
    put_moments(w, m.moments);
  }
  void operator()(const GlobalStatsBroadcast& m) { put_global_stats(w, m.stats); }
  void operator()(const AdmmLocalShare& m) {
    w.u32(m.center_id);
    w.u32(m.round);
    put_weights(w, m.w);
    put_weights(w, m.alpha);
  }
  void operator()(const ConsensusBroadcast& m) {
    w.u32(m.round);
    put_weights(w, m.weights.w_tilde);
  }
  void operator()(const EigenpackShare& m) {
    w.u32(m.center_id);
    put_eigenpack(w, m.pack);
  }
  void operator()(const GlobalBasisBroadcast& m) { put_basis(w, m.basis); }
  void operator()(const ScoresShare& m) {
    w.u32(m.center_id);
    w.matrix(m.scores.coords, /*row_major=*/true);
    w.u8(m.labels ? 1 : 0);
    if (m.labels) {
      w.u64(m.labels->size());
      for (const auto& s : *m.labels) w.str(s);
    }
  }
};

}  // namespace

const char* tag_name(MsgTag tag) {
  switch (tag) {
    case MsgTag::stats_share: return "StatsShare";
    case MsgTag::global_stats_broadcast: return "GlobalStatsBroadcast";
    case MsgTag::admm_local_share: return "AdmmLocalShare";
    case MsgTag::consensus_broadcast: return "ConsensusBroadcast";
    case MsgTag::eigenpack_share: return "EigenpackShare";
    case MsgTag::global_basis_broadcast: return "GlobalBasisBroadcast";
    case MsgTag::scores_share: return "ScoresShare";
  }
  return "Unknown";
}

MsgTag tag_of(const Message& m) {
  return static_cast<MsgTag>(static_cast<std::uint16_t>(m.index() + 1));
}

std::size_t payload_size(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StatsShare>)
          return 4 + 16 + 16 * static_cast<std::size_t>(v.moments.mean.size());
        else if constexpr (std::is_same_v<T, GlobalStatsBroadcast>)
          return 16 + 16 * static_cast<std::size_t>(v.stats.mean.size());
        else if constexpr (std::is_same_v<T, AdmmLocalShare>)
          return 8 + 2 * (16 + 8 * static_cast<std::size_t>(v.w.size()));
        else if constexpr (std::is_same_v<T, ConsensusBroadcast>)
          return 4 + 16 + 8 * static_cast<std::size_t>(v.weights.w_tilde.size());
        else if constexpr (std::is_same_v<T, EigenpackShare>)
          return 4 + 24 + 8 * static_cast<std::size_t>(v.pack.singular_values.size()) +
                 8 * static_cast<std::size_t>(v.pack.basis.size());
        else if constexpr (std::is_same_v<T, GlobalBasisBroadcast>)
          return 16 + 16 * static_cast<std::size_t>(v.basis.eigenvalues.size()) +
                 8 * static_cast<std::size_t>(v.basis.components.size());
        else {
          std::size_t n = 4 + 16 + 8 * static_cast<std::size_t>(v.scores.coords.size()) + 1;
          if (v.labels) {
            n += 8;
            for (const auto& s : *v.labels) n += 4 + s.size();
          }
          return n;
        }
      },
      m);
}

std::vector<std::uint8_t> encode(const Message& m) {
  ByteWriter payload;
  std::visit(PayloadEncoder{payload}, m);

  ByteWriter out;
  for (char c : kMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u16(kProtocolVersion);
  out.u16(static_cast<std::uint16_t>(tag_of(m)));
  out.u64(payload.size());
  out.bytes(payload.buffer());
  return out.take();
}

Message decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw DecodeError("bad magic");
  std::uint16_t version = r.u16();
  if (version != kProtocolVersion)
    throw DecodeError("unsupported protocol version " + std::to_string(version));
  std::uint16_t tag = r.u16();
  std::uint64_t len = r.u64();
  if (len != r.remaining()) throw DecodeError("payload length mismatch");

  switch (static_cast<MsgTag>(tag)) {
    case MsgTag::stats_share: {
      StatsShare m;
      m.center_id = r.u32();
      m.moments = get_moments(r);
      return m;
    }
    case MsgTag::global_stats_broadcast: {
      GlobalStatsBroadcast m;
      m.stats = get_global_stats(r);
      return m;
    }
    case MsgTag::admm_local_share: {
      AdmmLocalShare m;
      m.center_id = r.u32();
      m.round = r.u32();
      m.w = r.matrix();
      m.alpha = r.matrix();
      return m;
    }
    case MsgTag::consensus_broadcast: {
      ConsensusBroadcast m;
      m.round = r.u32();
      m.weights.w_tilde = r.matrix();
      return m;
    }
    case MsgTag::eigenpack_share: {
      EigenpackShare m;
      m.center_id = r.u32();
      m.pack = get_eigenpack(r);
      return m;
    }
    case MsgTag::global_basis_broadcast: {
      GlobalBasisBroadcast m;
      m.basis = get_basis(r);
      return m;
    }
    case MsgTag::scores_share: {
      ScoresShare m;
      m.center_id = r.u32();
      m.scores.coords = r.matrix();
      if (r.u8()) {
        std::uint64_t n = r.u64();
        std::vector<std::string> labels;
        labels.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) labels.push_back(r.str());
        m.labels = std::move(labels);
      }
      return m;
    }
  }
  throw DecodeError("unknown message tag " + std::to_string(tag));
}

}  // namespace fedcov::fed
