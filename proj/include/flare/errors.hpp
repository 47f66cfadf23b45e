#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flare {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Codec / parser failures carry the byte offset where decoding stopped.
struct CodecError : std::runtime_error {
  std::size_t offset;
  CodecError(const std::string& what, std::size_t off)
      : std::runtime_error(what + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& what, std::size_t off)
      : std::runtime_error(what + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace flare
