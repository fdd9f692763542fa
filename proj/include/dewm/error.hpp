#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dewm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSV ingestion failure. Row numbers count data rows from 1 (the header is
// row 0); column is the header name when known.
class LoadError : public Error {
 public:
  enum class Kind { Empty, Header, Malformed, Domain, Ragged, Bound };

  LoadError(Kind kind, std::size_t row, std::string column, const std::string& what)
      : Error(what), kind_(kind), row_(row), column_(std::move(column)) {}

  Kind kind() const { return kind_; }
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  Kind kind_;
  std::size_t row_;
  std::string column_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace dewm
