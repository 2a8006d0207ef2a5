#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sddr {

/// Invalid user input: formulas, configs, data files, arguments.
class UserError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Formula syntax error; `offset` is the byte offset into the formula text.
class ParseError : public UserError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : UserError(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Bad cell in a data file. Rows and columns are 1-based as a spreadsheet shows them
/// (row 1 is the header).
class DataError : public UserError {
public:
    DataError(const std::string& what, std::size_t row, std::size_t col)
        : UserError(what + " (row " + std::to_string(row) + ", column " + std::to_string(col) + ")"),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

/// Numerical failure: divergence, singular systems, overflow.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal invariant violated; indicates a bug rather than bad input.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace sddr
