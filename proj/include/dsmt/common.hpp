#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsmt {

// Contract violations: bad shapes, broken preconditions. Programming or
// configuration errors, not data problems.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Problems with external inputs: missing files, malformed lines, bad
// checkpoint bytes.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or failed numeric procedures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Worker count used by parallel_for. 0 = hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Splits [0, n) into contiguous chunks, one worker per chunk. Safe for
// pure per-index work over shared read-only state; results must be
// written to disjoint slots so the outcome is schedule-independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace dsmt
