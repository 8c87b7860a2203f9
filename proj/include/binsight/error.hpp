#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace binsight {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class StratificationError : public Error {
public:
    StratificationError(const std::string& label, std::size_t count)
        : Error("class '" + label + "' has " + std::to_string(count) +
                " sample(s); stratification needs at least 2"),
          label_(label) {}

    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

/// Malformed CSV or key-value input. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NotApplicable : public Error {
public:
    using Error::Error;
};

class ModelFormatError : public Error {
public:
    using Error::Error;
};

/// A metric whose value does not exist for the given input (e.g. kappa when p_e = 1).
class Undefined : public Error {
public:
    using Error::Error;
};

}  // namespace binsight
