#pragma once

// Shared error taxonomy and small utilities used across the fedcov modules.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedcov {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class EmptyCenter : public Error {
 public:
  using Error::Error;
};
class EmptyAccumulator : public Error {
 public:
  using Error::Error;
};
class SingularSystem : public Error {
 public:
  using Error::Error;
};
class NoCenters : public Error {
 public:
  using Error::Error;
};
class DivergenceDetected : public Error {
 public:
  using Error::Error;
};
class DegenerateData : public Error {
 public:
  using Error::Error;
};
class PhaseTimeout : public Error {
 public:
  using Error::Error;
};
class UnexpectedPhase : public Error {
 public:
  using Error::Error;
};
class DuplicateSender : public Error {
 public:
  using Error::Error;
};
class SpecError : public Error {
 public:
  using Error::Error;
};
class DecodeError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

// FNV-1a, used for config hashes in CSV provenance lines. Stable across
// runs and platforms, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Verbosity from FEDCOV_LOG: 0 = warnings only (default), 1 = info, 2 = debug.
inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("FEDCOV_LOG");
    if (!v) return 0;
    return std::atoi(v);
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[fedcov] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[fedcov:debug] %s\n", msg.c_str());
}

}  // namespace fedcov
