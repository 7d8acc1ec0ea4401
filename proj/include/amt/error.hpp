#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace amt {

// Base for every error the library raises on expected failure paths.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input. `offset` is a byte offset for binary formats and a
/// 1-based line number for text formats; `kNoPosition` when neither applies.
class ParseError : public Error {
public:
  static constexpr std::size_t kNoPosition = static_cast<std::size_t>(-1);

  ParseError(const std::string& what, std::size_t position = kNoPosition)
      : Error(what), position_(position) {}

  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

class SerializeError : public Error {
public:
  using Error::Error;
};

class OutOfRange : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class InvalidParam : public Error {
public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
public:
  using Error::Error;
};

class EmptyInput : public Error {
public:
  using Error::Error;
};

class WeightFormatError : public Error {
public:
  using Error::Error;
};

class WeightMismatch : public Error {
public:
  using Error::Error;
};

class EmptyManifest : public Error {
public:
  using Error::Error;
};

}  // namespace amt
