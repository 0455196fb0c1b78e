#pragma once

#include <stdexcept>
#include <string>

namespace htcan {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter, option or configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: arguments outside the documented domain.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A user supplied function broke the contract it was called under.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Weight file missing, corrupt or incomplete.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// File system or codec failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace htcan
