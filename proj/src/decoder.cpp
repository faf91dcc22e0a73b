#include "dsmt/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "dsmt/encoder.hpp"
#include "dsmt/rng.hpp"

namespace dsmt {

void DecoderConfig::validate() const {
    if (reshape_h * reshape_w != embed_dim)
        throw ContractError("decoder: reshape " + std::to_string(reshape_h) + "x" +
                            std::to_string(reshape_w) + " does not cover embed_dim " +
                            std::to_string(embed_dim));
    if (filters == 0 || kernel_h == 0 || kernel_w == 0)
        throw ContractError("decoder: filters and kernel extents must be positive");
    if (2 * reshape_h + 2 * padding < kernel_h || reshape_w + 2 * padding < kernel_w)
        throw ContractError("decoder: kernel larger than stacked input image");
    for (double r : {dropout_input, dropout_feature, dropout_hidden})
        if (r < 0.0 || r >= 1.0)
            throw ContractError("decoder: dropout rates must lie in [0,1)");
}

Var conve_scores(const Var& subj, const Var& rel, const Var& candidates, const DecoderVars& dec,
                 const DecoderConfig& cfg, const ScoreContext& ctx) {
    const Tensor& S = subj.val();
    if (S.rank() != 2 || S.extent(1) != cfg.embed_dim || !S.same_shape(rel.val()))
        throw ContractError("conve_scores: subject " + shape_str(S.shape()) + " / relation " +
                            shape_str(rel.val().shape()) + " must both be (B," +
                            std::to_string(cfg.embed_dim) + ")");
    if (candidates.val().rank() != 2 || candidates.val().extent(1) != cfg.embed_dim)
        throw ContractError("conve_scores: candidate table " +
                            shape_str(candidates.val().shape()) + " must be (|E|," +
                            std::to_string(cfg.embed_dim) + ")");
    const std::size_t batch = S.extent(0);

    Var img_s = reshape(subj, Shape{batch, 1, cfg.reshape_h, cfg.reshape_w});
    Var img_r = reshape(rel, Shape{batch, 1, cfg.reshape_h, cfg.reshape_w});
    Var image = concat(img_s, img_r, 2);  // (B,1,2r_h,r_w)
    image = dropout(image, cfg.dropout_input, derive_seed(ctx.dropout_seed, 1), ctx.training);

    Var feat = relu(conv2d(image, dec.filters, cfg.padding));
    feat = dropout(feat, cfg.dropout_feature, derive_seed(ctx.dropout_seed, 2), ctx.training);

    Var hidden = matmul(reshape(feat, Shape{batch, cfg.flat_dim()}), dec.proj);
    hidden = dropout(hidden, cfg.dropout_hidden, derive_seed(ctx.dropout_seed, 3), ctx.training);
    hidden = relu(hidden);

    return add_bias_cols(matmul_nt(hidden, candidates), dec.entity_bias);
}

double tu_target(bool positive, std::int32_t u, const LossConfig& cfg, std::size_t num_entities) {
    if (u < 1) throw ContractError("tu_loss: uncertainty count must be >= 1, got " +
                                   std::to_string(u));
    const double shift = std::pow(static_cast<double>(u), cfg.uncertainty_exponent) /
                         static_cast<double>(num_entities);
    if (!positive) return shift;
    const double y = 1.0 - cfg.label_smoothing + shift;
    return std::clamp(y, 0.0, 1.0);
}

namespace {

Tensor tu_targets(const Tensor& labels, const std::vector<std::int32_t>& u, const LossConfig& cfg,
                  std::size_t num_entities) {
    if (labels.rank() != 2)
        throw ContractError("tu_loss: labels must be (B,|E|), got " + shape_str(labels.shape()));
    const std::size_t rows = labels.extent(0), cols = labels.extent(1);
    if (u.size() != rows)
        throw ContractError("tu_loss: " + std::to_string(u.size()) + " uncertainty counts for " +
                            std::to_string(rows) + " rows");
    Tensor targets(labels.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double pos = tu_target(true, u[i], cfg, num_entities);
        const double neg = tu_target(false, u[i], cfg, num_entities);
        for (std::size_t j = 0; j < cols; ++j)
            targets(i, j) = labels(i, j) != 0.0 ? pos : neg;
    }
    return targets;
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

Var tu_loss(const Var& raw_scores, const Tensor& labels, const std::vector<std::int32_t>& u,
            const LossConfig& cfg, std::size_t num_entities) {
    if (!raw_scores.val().same_shape(labels))
        throw ContractError("tu_loss: scores " + shape_str(raw_scores.val().shape()) +
                            " vs labels " + shape_str(labels.shape()));
    return soft_bce_mean(raw_scores, tu_targets(labels, u, cfg, num_entities));
}

Tensor tu_loss_elements(const Tensor& raw_scores, const Tensor& labels,
                        const std::vector<std::int32_t>& u, const LossConfig& cfg,
                        std::size_t num_entities) {
    const Tensor targets = tu_targets(labels, u, cfg, num_entities);
    Tensor out(raw_scores.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = raw_scores[i];
        const double y = targets[i];
        out[i] = y * softplus(-s) + (1.0 - y) * softplus(s);
    }
    return out;
}

Var gc_loss(const Var& e_forward, const Var& e_backward, const LossConfig& cfg) {
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
        throw ContractError("gc_loss: trade-off parameters must be >= 0");
    if (cfg.lambda1 == 0.0 && cfg.lambda2 == 0.0) return constant(Tensor::scalar(0.0));
    Var total;
    bool have = false;
    if (cfg.lambda1 != 0.0) {
        total = scale(distance_constraint(e_forward, e_backward), cfg.lambda1);
        have = true;
    }
    if (cfg.lambda2 != 0.0) {
        Var con = scale(add(conicity(e_forward), conicity(e_backward)), cfg.lambda2);
        total = have ? add(total, con) : con;
    }
    return total;
}

Var total_loss(const Var& tu, const Var& gc) {
    if (tu.val().size() != 1 || gc.val().size() != 1)
        throw ContractError("total_loss: both terms must be scalars");
    return add(tu, gc);
}

}  // namespace dsmt
