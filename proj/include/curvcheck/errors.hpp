#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace curvcheck {

// Common base so callers can catch everything from this library at once.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- expression layer ----

class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t offset)
        : Error("syntax error at offset " + std::to_string(offset) + ": " + what),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class UnknownFunction : public Error {
public:
    UnknownFunction(const std::string& name, std::size_t offset)
        : Error("unknown function or identifier '" + name + "' at offset " +
                std::to_string(offset)),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class VariableOutOfRange : public Error {
public:
    VariableOutOfRange(long long index, int n, std::size_t offset)
        : Error("variable x" + std::to_string(index) + " out of range at offset " +
                std::to_string(offset) + " (declared dimension n=" + std::to_string(n) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Evaluation left the domain of a subexpression (log of non-positive value,
// sqrt of negative, division by zero, ...). Carries the offending span.
class DomainError : public Error {
public:
    DomainError(const std::string& what, const std::string& subexpr, std::size_t offset)
        : Error("domain error at offset " + std::to_string(offset) + ": " + what +
                " in '" + subexpr + "'"),
          offset_(offset),
          subexpr_(subexpr) {}
    std::size_t offset() const { return offset_; }
    const std::string& subexpression() const { return subexpr_; }

private:
    std::size_t offset_;
    std::string subexpr_;
};

// ---- geometry / optimality layer ----

class DegeneratePoint : public Error {
public:
    using Error::Error;
};

class RankDeficientJacobian : public Error {
public:
    using Error::Error;
};

class NotTangent : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class FirstOrderViolated : public Error {
public:
    using Error::Error;
};

// ---- implicit-curve layer ----

class NewtonDivergence : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

}  // namespace curvcheck
