#pragma once

#include <cstddef>
#include <vector>

#include "dsmt/ops.hpp"

namespace dsmt {

// MHSA is the full mechanism; MHAA/MHPA are the replacement variants;
// Uniform is the without-attention sub-model (exact 1/3 weights).
enum class AttentionMode { MHSA, MHAA, MHPA, Uniform };

struct AttentionConfig {
    std::size_t embed_dim = 200;  // d
    std::size_t head_dim = 100;   // d_a
    std::size_t heads = 2;        // n_h
    AttentionMode mode = AttentionMode::MHSA;
};

// Parameters for one task (forward or backward), bound for the step.
// Only the vectors for the active mode are populated.
struct TaskAttentionVars {
    std::vector<Var> w_query;  // per head, (d, d_a)
    std::vector<Var> w_key;    // per head, (d, d_a)
    std::vector<Var> logits;   // per head, (3)
    std::vector<Var> proj;     // per head, (3d, 3)
};

// Direction weights for every entity at once: (n, 3), each row a convex
// combination over (forward, self, backward).
Var attention_weights_all(const Var& e_fwd, const Var& e_self, const Var& e_bwd,
                          const TaskAttentionVars& params, const AttentionConfig& cfg);

// Single entity: stacked (3, d) input in [e^f; e^l; e^b] row order -> (3).
Var attention_weights(const Var& stacked, const TaskAttentionVars& params,
                      const AttentionConfig& cfg);

// Weighted sum of the stacked rows; `weights` must sum to 1.
Var fuse(const Var& stacked, const Var& weights);

// Batched fusion: out[i] = Σ_m weights[i,m] · dir_m[i].
Var fuse_rows(const Var& weights, const Var& e_fwd, const Var& e_self, const Var& e_bwd);

}  // namespace dsmt
