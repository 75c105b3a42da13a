#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qphen {

// Error taxonomy mirrors the CLI exit codes: usage -> 2, data/schema -> 3,
// solver -> 4, anything else -> 5.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed input files, missing columns, bad rows.
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

// Unusable model setup: rank deficiency, too few rows, single-year groups.
class DesignError : public DataError {
public:
    using DataError::DataError;
};

// Optimizer failed to converge; carries the best iterate found so far.
class SolverError : public Error {
public:
    SolverError(const std::string& msg, std::vector<double> best_iterate, double best_objective)
        : Error(msg), best_iterate_(std::move(best_iterate)), best_objective_(best_objective) {}
    explicit SolverError(const std::string& msg) : Error(msg), best_objective_(0.0) {}

    const std::vector<double>& best_iterate() const { return best_iterate_; }
    double best_objective() const { return best_objective_; }

private:
    std::vector<double> best_iterate_;
    double best_objective_;
};

} // namespace qphen
