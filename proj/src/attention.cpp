#include "dsmt/attention.hpp"

#include <cmath>

namespace dsmt {

namespace {

void check_heads(std::size_t have, const AttentionConfig& cfg, const char* what) {
    if (cfg.heads == 0) throw ContractError("attention: head count must be >= 1");
    if (have != cfg.heads)
        throw ContractError(std::string("attention: expected ") + std::to_string(cfg.heads) + " " +
                            what + " parameter sets, got " + std::to_string(have));
}

}  // namespace

Var attention_weights_all(const Var& e_fwd, const Var& e_self, const Var& e_bwd,
                          const TaskAttentionVars& params, const AttentionConfig& cfg) {
    const Tensor& F = e_fwd.val();
    if (F.rank() != 2 || !F.same_shape(e_self.val()) || !F.same_shape(e_bwd.val()))
        throw ContractError("attention_weights_all: direction tables must share shape (n,d)");
    const std::size_t n = F.extent(0);

    switch (cfg.mode) {
        case AttentionMode::Uniform: {
            return constant(Tensor(Shape{n, 3}, 1.0 / 3.0));
        }
        case AttentionMode::MHSA: {
            check_heads(params.w_query.size(), cfg, "query");
            check_heads(params.w_key.size(), cfg, "key");
            Var acc;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                Var q = stack3(matmul(e_fwd, params.w_query[h]), matmul(e_self, params.w_query[h]),
                               matmul(e_bwd, params.w_query[h]));
                Var k = stack3(matmul(e_fwd, params.w_key[h]), matmul(e_self, params.w_key[h]),
                               matmul(e_bwd, params.w_key[h]));
                Var head = mean_axis(softmax_rows(scaled_dot(q, k)), 1);
                acc = h == 0 ? head : add(acc, head);
            }
            return scale(acc, 1.0 / static_cast<double>(cfg.heads));
        }
        case AttentionMode::MHAA: {
            check_heads(params.logits.size(), cfg, "logit");
            Var acc;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                Var head = repeat_row(softmax_rows(params.logits[h]), n);
                acc = h == 0 ? head : add(acc, head);
            }
            return scale(acc, 1.0 / static_cast<double>(cfg.heads));
        }
        case AttentionMode::MHPA: {
            check_heads(params.proj.size(), cfg, "projection");
            Var flat = concat(concat(e_fwd, e_self, 1), e_bwd, 1);  // (n, 3d)
            Var acc;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                Var head = softmax_rows(matmul(flat, params.proj[h]));
                acc = h == 0 ? head : add(acc, head);
            }
            return scale(acc, 1.0 / static_cast<double>(cfg.heads));
        }
    }
    throw ContractError("attention_weights_all: unknown mode");
}

Var attention_weights(const Var& stacked, const TaskAttentionVars& params,
                      const AttentionConfig& cfg) {
    const Tensor& S = stacked.val();
    if (S.rank() != 2 || S.extent(0) != 3)
        throw ContractError("attention_weights: expected stacked (3,d) input, got " +
                            shape_str(S.shape()));
    Var ef = slice(stacked, 0, 0, 1);
    Var el = slice(stacked, 0, 1, 2);
    Var eb = slice(stacked, 0, 2, 3);
    Var a = attention_weights_all(ef, el, eb, params, cfg);
    return reshape(a, Shape{3});
}

Var fuse(const Var& stacked, const Var& weights) {
    const Tensor& S = stacked.val();
    const Tensor& A = weights.val();
    if (S.rank() != 2 || S.extent(0) != 3 || A.rank() != 1 || A.size() != 3)
        throw ContractError("fuse: expected (3,d) stack and (3) weights, got " +
                            shape_str(S.shape()) + " and " + shape_str(A.shape()));
    const double sum = A[0] + A[1] + A[2];
    if (std::abs(sum - 1.0) > 1e-6)
        throw ContractError("fuse: weights sum to " + std::to_string(sum) + ", expected 1");
    return reshape(matmul(reshape(weights, Shape{1, 3}), stacked), Shape{S.extent(1)});
}

Var fuse_rows(const Var& weights, const Var& e_fwd, const Var& e_self, const Var& e_bwd) {
    const Tensor& A = weights.val();
    const std::size_t n = e_fwd.val().extent(0);
    if (A.rank() != 2 || A.extent(0) != n || A.extent(1) != 3)
        throw ContractError("fuse_rows: weights " + shape_str(A.shape()) + " for " +
                            std::to_string(n) + " entities");
    Var c0 = reshape(slice(weights, 1, 0, 1), Shape{n});
    Var c1 = reshape(slice(weights, 1, 1, 2), Shape{n});
    Var c2 = reshape(slice(weights, 1, 2, 3), Shape{n});
    return add(add(colscale(e_fwd, c0), colscale(e_self, c1)), colscale(e_bwd, c2));
}

}  // namespace dsmt
