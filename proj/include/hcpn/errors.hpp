#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hcpn {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class DimensionError : public Error {
 public:
    using Error::Error;
};

// Invalid model or run configuration (level counts, checkpoint mismatches).
class ConfigError : public Error {
 public:
    using Error::Error;
};

// A caller violated an operation precondition.
class ContractError : public Error {
 public:
    using Error::Error;
};

// NaN or Inf surfaced inside a recorded computation.
class CorruptStateError : public Error {
 public:
    using Error::Error;
};

// Invalid synthetic scene description.
class SpecError : public Error {
 public:
    using Error::Error;
};

class IoError : public Error {
 public:
    using Error::Error;
};

// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    std::uint64_t offset() const noexcept { return offset_; }

 private:
    std::uint64_t offset_ = 0;
};

class UsageError : public Error {
 public:
    using Error::Error;
};

}  // namespace hcpn
