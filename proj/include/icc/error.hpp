#pragma once

#include <stdexcept>
#include <string>

namespace icc {

// Exit-code classes used by the CLI: configuration (1), physics/runtime (2),
// I/O (3). Library code throws these; nothing else is thrown on purpose.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PhysicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace icc
