#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gp {

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (wrong grammar phase, masked target).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// The decoder was asked to apply a selection its own masks forbid.
class ConstraintViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class DuplicatePoint : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gp
