#pragma once

#include <stdexcept>
#include <string>

namespace copiv {

// Exit-code category used by the command line front end.
enum class ErrorKind { Config = 2, Assumption = 3, Numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, "config error: " + w) {}
};

// Argument outside the mathematical domain of a function.
struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::Config, "domain error: " + w) {}
};

struct InfeasibleError : Error {
    explicit InfeasibleError(const std::string& w) : Error(ErrorKind::Assumption, "infeasible: " + w) {}
};

struct WeakInstrumentError : Error {
    explicit WeakInstrumentError(const std::string& w)
        : Error(ErrorKind::Assumption, "weak instrument: " + w) {}
};

struct AssumptionError : Error {
    explicit AssumptionError(const std::string& w) : Error(ErrorKind::Assumption, "assumption failure: " + w) {}
};

struct SeparationError : Error {
    explicit SeparationError(const std::string& w) : Error(ErrorKind::Numerical, "separation: " + w) {}
};

struct RankDeficientError : Error {
    explicit RankDeficientError(const std::string& w) : Error(ErrorKind::Numerical, "rank deficient: " + w) {}
};

struct NonConvergenceError : Error {
    explicit NonConvergenceError(const std::string& w) : Error(ErrorKind::Numerical, "no convergence: " + w) {}
};

struct BoundaryError : Error {
    explicit BoundaryError(const std::string& w) : Error(ErrorKind::Numerical, "boundary: " + w) {}
};

struct BudgetError : Error {
    explicit BudgetError(const std::string& w) : Error(ErrorKind::Config, "budget exceeded: " + w) {}
};

}  // namespace copiv
