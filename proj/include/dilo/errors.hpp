#pragma once

#include <stdexcept>
#include <string>

namespace dilo {

// All library failures derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/rank mismatch detected when building an operation or a network.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Violated call contract (non-scalar backward seed, empty cloud, bad factor range).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Malformed text input (OBJ, JSON); message carries file/line context.
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Filesystem trouble: missing file, short read, checksum mismatch.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Inconsistent or out-of-range configuration values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset manifest violations: duplicate ids, missing files, V mismatch.
struct ManifestError : Error {
  explicit ManifestError(const std::string& msg) : Error(msg) {}
};

}  // namespace dilo
