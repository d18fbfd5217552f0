#pragma once

#include <stdexcept>
#include <string>

namespace rrl {

// Violated precondition or malformed input (CLI exit code 1).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Missing or unreadable file (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace rrl
