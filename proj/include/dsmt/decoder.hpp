#pragma once

#include <cstdint>
#include <vector>

#include "dsmt/ops.hpp"

namespace dsmt {

struct DecoderConfig {
    std::size_t embed_dim = 200;  // d, must equal reshape_h*reshape_w
    std::size_t reshape_h = 10;
    std::size_t reshape_w = 20;
    std::size_t filters = 32;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t padding = 0;
    double dropout_input = 0.2;
    double dropout_feature = 0.2;
    double dropout_hidden = 0.3;

    std::size_t conv_out_h() const { return 2 * reshape_h + 2 * padding - kernel_h + 1; }
    std::size_t conv_out_w() const { return reshape_w + 2 * padding - kernel_w + 1; }
    std::size_t flat_dim() const { return filters * conv_out_h() * conv_out_w(); }
    void validate() const;
};

struct DecoderVars {
    Var filters;      // (F, 1, kh, kw)
    Var proj;         // (flat_dim, d)
    Var entity_bias;  // (|E|)
};

// Per-forward-pass runtime knobs; dropout seeds derive from `dropout_seed`.
struct ScoreContext {
    bool training = false;
    std::uint64_t dropout_seed = 0;
};

// Raw (pre-sigmoid) score of every candidate row for each query:
// reshape [subject; relation] into a (2r_h, r_w) image, convolve, project,
// then dot against the candidate table. subj/rel are (B,d), candidates
// (|E|,d); result (B,|E|).
Var conve_scores(const Var& subj, const Var& rel, const Var& candidates, const DecoderVars& dec,
                 const DecoderConfig& cfg, const ScoreContext& ctx);

struct LossConfig {
    double label_smoothing = 0.2;       // l
    double uncertainty_exponent = 0.2;  // k
    double lambda1 = 0.01;
    double lambda2 = 0.01;
};

// Uncertainty-smoothed BCE on raw scores, mean over all batch elements.
// labels is the 0/1 multi-hot matrix matching `raw_scores`; u holds the
// per-row distinct-answer counts (each >= 1).
Var tu_loss(const Var& raw_scores, const Tensor& labels, const std::vector<std::int32_t>& u,
            const LossConfig& cfg, std::size_t num_entities);

// Per-element loss values of the same objective (test/oracle helper).
Tensor tu_loss_elements(const Tensor& raw_scores, const Tensor& labels,
                        const std::vector<std::int32_t>& u, const LossConfig& cfg,
                        std::size_t num_entities);

// Effective soft target for one element.
double tu_target(bool positive, std::int32_t u, const LossConfig& cfg, std::size_t num_entities);

// λ1·dis(E^f,E^b) + λ2·(con(E^f)+con(E^b)); exact zero when both λ are 0.
Var gc_loss(const Var& e_forward, const Var& e_backward, const LossConfig& cfg);

Var total_loss(const Var& tu, const Var& gc);

}  // namespace dsmt
