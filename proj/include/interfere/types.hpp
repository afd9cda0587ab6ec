#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace interfere {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A treated and a control response in the same block are exactly equal.
class TiesError : public Error {
public:
    TiesError(std::string block_id, const std::string& what)
        : Error(what), block_id_(std::move(block_id)) {}
    const std::string& block_id() const noexcept { return block_id_; }

private:
    std::string block_id_;
};

/// A block with no treated or no control units.
class DegenerateBlockError : public Error {
public:
    using Error::Error;
};

/// Truncated HRF weights that sum to (numerically) zero.
class DegenerateTrialError : public Error {
public:
    using Error::Error;
};

/// Exact dynamic program would exceed its state budget.
class BudgetExceededError : public Error {
public:
    using Error::Error;
};

/// Design matrix does not have full column rank.
class RankDeficientError : public Error {
public:
    using Error::Error;
};

/// One experimental unit: a trial inside a block (session).
struct TrialRecord {
    std::string block_id;
    std::size_t index = 0;  // within-block temporal position
    int z = 0;              // 1 = treated (stop), 0 = control (go)
    double response = 0.0;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

}  // namespace interfere
