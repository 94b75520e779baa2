#pragma once

#include <stdexcept>
#include <string>

namespace klite {

// Malformed input file content. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed input that violates a data contract (missing file, dangling id, shape mismatch...).
class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure during loss or gradient evaluation.
class NumericError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace klite
