#pragma once

#include <stdexcept>
#include <string>

namespace icafuse {

// Every failure raised by the library derives from Error. The CLI maps
// ValidationError (and its children) to exit code 1, everything else to 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input file. Carries the line (CSV) or byte offset (binary).
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t location)
        : ValidationError(what), location_(location) {}
    std::size_t location() const noexcept { return location_; }

private:
    std::size_t location_;
};

class AlignmentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Requested more components than the data supports.
class RankDeficiencyError : public NumericError {
public:
    RankDeficiencyError(const std::string& what, std::size_t component)
        : NumericError(what), component_(component) {}
    std::size_t component() const noexcept { return component_; }

private:
    std::size_t component_;
};

}  // namespace icafuse
