#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modn {

// Operand dimensions disagree with each other or with the owning ModelConfig.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation was called outside its contract (wrong variant, bad config).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : std::runtime_error(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace modn
