// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception types shared by every dovforge module.
 */
#ifndef DOVFORGE_ERROR_HPP
#define DOVFORGE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dovforge {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image shapes do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// An operation received an empty dataset, probe set or index set.
class EmptyInputError : public Error {
public:
  using Error::Error;
};

/// A configuration value is out of its documented range.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string &what, long step)
      : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

/// A numerical kernel produced a non-finite value.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Statistical test got fewer samples than it needs.
class SampleSizeError : public Error {
public:
  using Error::Error;
};

/// Majority vote had no strict winner.
class AmbiguityError : public Error {
public:
  AmbiguityError(const std::string &what, int first, int second)
      : Error(what), first_(first), second_(second) {}
  int first() const noexcept { return first_; }
  int second() const noexcept { return second_; }

private:
  int first_;
  int second_;
};

/// Reading or writing an on-disk artifact failed.
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace dovforge

#endif // DOVFORGE_ERROR_HPP
