#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

class CheckpointVersionError : public DataError {
public:
    using DataError::DataError;
};

class CheckpointDigestError : public DataError {
public:
    using DataError::DataError;
};

class CheckpointTruncationError : public DataError {
public:
    using DataError::DataError;
};

// Serialized model state. Layout: magic "DSMT", version u32, payload
// length u64, then vocabulary digest, best validation MRR, epoch, the
// effective config text, and length-prefixed named parameter arrays
// (little-endian f64). save→load→save is byte-identical.
struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t vocab_digest = 0;
    double best_valid_mrr = 0.0;
    std::uint32_t epoch = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

Checkpoint load_checkpoint(const std::string& path);

// Verifies the stored digest before returning; no partial model escapes.
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest);

}  // namespace dsmt
