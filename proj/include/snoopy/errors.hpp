#ifndef SNOOPY_ERRORS_HPP
#define SNOOPY_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace snoopy {

// Raised when a sampling campaign would exceed the attacker's query budget.
// Carries the shortfall so callers can report how many queries were missing.
class BudgetExceededError : public std::runtime_error {
public:
    BudgetExceededError(std::int64_t requested, std::int64_t available)
        : std::runtime_error("query budget exceeded: requested " + std::to_string(requested) +
                             ", available " + std::to_string(available) + " (shortfall " +
                             std::to_string(requested - available) + ")"),
          requested_(requested),
          available_(available) {}

    std::int64_t requested() const { return requested_; }
    std::int64_t available() const { return available_; }
    std::int64_t shortfall() const { return requested_ - available_; }

private:
    std::int64_t requested_;
    std::int64_t available_;
};

// Raised when SiteSpec parameters cannot be satisfied
// (e.g. a sharing fraction that no integer assignment can realize).
class InfeasibleSpecError : public std::invalid_argument {
public:
    explicit InfeasibleSpecError(const std::string& what) : std::invalid_argument(what) {}
};

// Raised on malformed or truncated persisted artifacts.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a persisted artifact carries an unknown schema version.
class SchemaVersionError : public std::runtime_error {
public:
    explicit SchemaVersionError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace snoopy

#endif // SNOOPY_ERRORS_HPP
