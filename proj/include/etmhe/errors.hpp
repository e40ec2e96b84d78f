#pragma once

#include <stdexcept>
#include <string>

namespace etmhe {

// Bad dimensions, missing keys, malformed values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Certificate matrices violate symmetry/definiteness or eta is out of range.
class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Horizon too short for the stability condition.
class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent internal bookkeeping (negative delta, window/solution mismatch).
class LogicError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Event feedback missing d_{t+1} or the fresh estimate.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace etmhe
