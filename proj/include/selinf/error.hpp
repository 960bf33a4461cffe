#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace selinf {

enum class ErrorKind {
    invalid_argument,
    dimension_mismatch,
    numeric_overflow,
    domain,
    insufficient_dof,
    unsupported_family,
    input_validation,
    infeasible,
    conditioning,
    singular,
    fold_degeneracy,
    replicate_failure,
    config,
    io,
    diverged,
};

// Base of every error raised by the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class NumericOverflow : public Error
{
public:
    NumericOverflow(std::ptrdiff_t index, const std::string& what)
        : Error(ErrorKind::numeric_overflow, what), index_(index) {}
    std::ptrdiff_t index() const noexcept { return index_; }

private:
    std::ptrdiff_t index_;
};

class ConditioningError : public Error
{
public:
    ConditioningError(double condition, const std::string& what)
        : Error(ErrorKind::conditioning, what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

class FoldDegeneracy : public Error
{
public:
    FoldDegeneracy(int fold, const std::string& what)
        : Error(ErrorKind::fold_degeneracy, what), fold_(fold) {}
    int fold() const noexcept { return fold_; }

private:
    int fold_;
};

class ReplicateFailure : public Error
{
public:
    ReplicateFailure(int replicate, const std::string& what)
        : Error(ErrorKind::replicate_failure, what), replicate_(replicate) {}
    int replicate() const noexcept { return replicate_; }

private:
    int replicate_;
};

// Parse failure in tabular input; row and column are 1-based as a user sees them.
class DataError : public Error
{
public:
    DataError(std::size_t row, std::string column, const std::string& what)
        : Error(ErrorKind::input_validation, what), row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

inline const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::numeric_overflow: return "numeric_overflow";
    case ErrorKind::domain: return "domain";
    case ErrorKind::insufficient_dof: return "insufficient_dof";
    case ErrorKind::unsupported_family: return "unsupported_family";
    case ErrorKind::input_validation: return "input_validation";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::conditioning: return "conditioning";
    case ErrorKind::singular: return "singular";
    case ErrorKind::fold_degeneracy: return "fold_degeneracy";
    case ErrorKind::replicate_failure: return "replicate_failure";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::diverged: return "diverged";
    }
    return "unknown";
}

} // namespace selinf
