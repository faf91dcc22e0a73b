#include <doctest.h>

#include <cmath>

#include "dsmt/attention.hpp"
#include "dsmt/grad_check.hpp"
#include "dsmt/rng.hpp"

using namespace dsmt;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

TaskAttentionVars mhsa_params(const std::vector<Tensor>& wq, const std::vector<Tensor>& wk) {
    TaskAttentionVars p;
    for (const Tensor& t : wq) p.w_query.push_back(constant(t));
    for (const Tensor& t : wk) p.w_key.push_back(constant(t));
    return p;
}

}  // namespace

TEST_CASE("zero projection weights give exactly uniform attention") {
    AttentionConfig cfg{4, 3, 1, AttentionMode::MHSA};
    Tensor zero(Shape{4, 3});
    TaskAttentionVars params = mhsa_params({zero}, {zero});
    Rng rng(1);
    Var ef = constant(random_tensor(Shape{5, 4}, rng));
    Var el = constant(random_tensor(Shape{5, 4}, rng));
    Var eb = constant(random_tensor(Shape{5, 4}, rng));
    Var a = attention_weights_all(ef, el, eb, params, cfg);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t m = 0; m < 3; ++m) CHECK(a.val()(i, m) == 1.0 / 3.0);
}

TEST_CASE("identical heads average to the single-head result") {
    Rng rng(2);
    Tensor wq = random_tensor(Shape{4, 3}, rng);
    Tensor wk = random_tensor(Shape{4, 3}, rng);
    Var ef = constant(random_tensor(Shape{6, 4}, rng));
    Var el = constant(random_tensor(Shape{6, 4}, rng));
    Var eb = constant(random_tensor(Shape{6, 4}, rng));

    AttentionConfig one{4, 3, 1, AttentionMode::MHSA};
    AttentionConfig three{4, 3, 3, AttentionMode::MHSA};
    Var a1 = attention_weights_all(ef, el, eb, mhsa_params({wq}, {wk}), one);
    Var a3 = attention_weights_all(ef, el, eb, mhsa_params({wq, wq, wq}, {wk, wk, wk}), three);
    for (std::size_t i = 0; i < a1.val().size(); ++i)
        CHECK(std::abs(a1.val()[i] - a3.val()[i]) < 1e-15);
}

TEST_CASE("scalar fixture matches an independent softmax evaluation") {
    // d = d_a = 1, stacked rows (1; 2; 3), W_Q = W_K = (1): S[j][m] = q_j·q_m.
    AttentionConfig cfg{1, 1, 1, AttentionMode::MHSA};
    Tensor one(Shape{1, 1}, 1.0);
    TaskAttentionVars params = mhsa_params({one}, {one});
    Var stacked = constant(Tensor::from(Shape{3, 1}, {1, 2, 3}));
    Var a = attention_weights(stacked, params, cfg);

    double expect[3] = {0, 0, 0};
    const double q[3] = {1, 2, 3};
    for (int j = 0; j < 3; ++j) {
        double row[3], sum = 0;
        for (int m = 0; m < 3; ++m) {
            row[m] = std::exp(q[j] * q[m]);
            sum += row[m];
        }
        for (int m = 0; m < 3; ++m) expect[m] += row[m] / sum / 3.0;
    }
    for (int m = 0; m < 3; ++m) CHECK(std::abs(a.val()[static_cast<std::size_t>(m)] - expect[m]) < 1e-12);
}

TEST_CASE("fuse picks vertices, centroids and convex combinations") {
    Var stacked = constant(Tensor::from(Shape{3, 2}, {1, 0, 0, 1, 1, 1}));
    Var vertex = fuse(stacked, constant(Tensor::from(Shape{3}, {1, 0, 0})));
    CHECK(vertex.val()[0] == 1.0);
    CHECK(vertex.val()[1] == 0.0);

    Var centroid = fuse(stacked, constant(Tensor::from(Shape{3}, {1.0 / 3, 1.0 / 3, 1.0 / 3})));
    CHECK(std::abs(centroid.val()[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(centroid.val()[1] - 2.0 / 3.0) < 1e-15);

    Var mix = fuse(stacked, constant(Tensor::from(Shape{3}, {0.5, 0.3, 0.2})));
    CHECK(std::abs(mix.val()[0] - 0.7) < 1e-15);
    CHECK(std::abs(mix.val()[1] - 0.5) < 1e-15);
}

TEST_CASE("fuse rejects non-normalized weights") {
    Var stacked = constant(Tensor(Shape{3, 2}, 1.0));
    CHECK_THROWS_AS(fuse(stacked, constant(Tensor::from(Shape{3}, {1, 1, 1}))), ContractError);
}

TEST_CASE("uniform mode fuses to the arithmetic mean of the three tables") {
    Rng rng(4);
    Tensor ef = random_tensor(Shape{7, 5}, rng);
    Tensor el = random_tensor(Shape{7, 5}, rng);
    Tensor eb = random_tensor(Shape{7, 5}, rng);
    AttentionConfig cfg{5, 2, 2, AttentionMode::Uniform};
    TaskAttentionVars params;
    Var a = attention_weights_all(constant(ef), constant(el), constant(eb), params, cfg);
    Var fused = fuse_rows(a, constant(ef), constant(el), constant(eb));
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(std::abs(fused.val()(i, j) - (ef(i, j) + el(i, j) + eb(i, j)) / 3.0) < 1e-12);
}

TEST_CASE("different stacks generally get different weight rows") {
    Rng rng(5);
    AttentionConfig cfg{3, 2, 1, AttentionMode::MHSA};
    TaskAttentionVars params =
        mhsa_params({random_tensor(Shape{3, 2}, rng)}, {random_tensor(Shape{3, 2}, rng)});
    // two entities with very different dot-product structure
    Tensor ef = Tensor::from(Shape{2, 3}, {3, 0, 0, /**/ 0, 0, 1});
    Tensor el = Tensor::from(Shape{2, 3}, {0, 2, 0, /**/ 0, 1, 0});
    Tensor eb = Tensor::from(Shape{2, 3}, {0, 0, 1, /**/ 2, 0, 0});
    Var a = attention_weights_all(constant(ef), constant(el), constant(eb), params, cfg);
    bool differs = false;
    for (std::size_t m = 0; m < 3; ++m)
        differs |= std::abs(a.val()(0, m) - a.val()(1, m)) > 1e-9;
    CHECK(differs);
}

TEST_CASE("task-specific weights give task-specific rows") {
    Rng rng(6);
    AttentionConfig cfg{3, 2, 1, AttentionMode::MHSA};
    Tensor wq_f = random_tensor(Shape{3, 2}, rng);
    Tensor wk_f = random_tensor(Shape{3, 2}, rng);
    Tensor wq_b(Shape{3, 2});
    for (std::size_t i = 0; i < wq_b.size(); ++i) wq_b[i] = -2.0 * wq_f[i] + 0.5;
    Var ef = constant(random_tensor(Shape{4, 3}, rng));
    Var el = constant(random_tensor(Shape{4, 3}, rng));
    Var eb = constant(random_tensor(Shape{4, 3}, rng));
    Var af = attention_weights_all(ef, el, eb, mhsa_params({wq_f}, {wk_f}), cfg);
    Var ab = attention_weights_all(ef, el, eb, mhsa_params({wq_b}, {wk_f}), cfg);
    bool differs = false;
    for (std::size_t i = 0; i < af.val().size(); ++i)
        differs |= std::abs(af.val()[i] - ab.val()[i]) > 1e-9;
    CHECK(differs);
}

TEST_CASE("adaptive-vector mode ignores entity content; projection mode does not") {
    Rng rng(12);
    const std::size_t d = 4;
    Var ef = constant(random_tensor(Shape{5, d}, rng));
    Var el = constant(random_tensor(Shape{5, d}, rng));
    Var eb = constant(random_tensor(Shape{5, d}, rng));

    AttentionConfig aa{d, 2, 2, AttentionMode::MHAA};
    TaskAttentionVars pa;
    pa.logits = {constant(random_tensor(Shape{3}, rng)), constant(random_tensor(Shape{3}, rng))};
    Var a = attention_weights_all(ef, el, eb, pa, aa);
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t m = 0; m < 3; ++m) CHECK(a.val()(i, m) == a.val()(0, m));

    AttentionConfig pp{d, 2, 1, AttentionMode::MHPA};
    TaskAttentionVars pm;
    pm.proj = {constant(random_tensor(Shape{3 * d, 3}, rng))};
    Var b = attention_weights_all(ef, el, eb, pm, pp);
    bool differs = false;
    for (std::size_t m = 0; m < 3; ++m) differs |= std::abs(b.val()(0, m) - b.val()(1, m)) > 1e-9;
    CHECK(differs);
}

TEST_CASE("weight rows are nonnegative and sum to one in every mode") {
    Rng rng(7);
    const std::size_t n = 6, d = 4;
    for (AttentionMode mode : {AttentionMode::MHSA, AttentionMode::MHAA, AttentionMode::MHPA,
                               AttentionMode::Uniform}) {
        AttentionConfig cfg{d, 3, 2, mode};
        for (int draw = 0; draw < 40; ++draw) {
            TaskAttentionVars params;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                params.w_query.push_back(constant(random_tensor(Shape{d, 3}, rng, -2, 2)));
                params.w_key.push_back(constant(random_tensor(Shape{d, 3}, rng, -2, 2)));
                params.logits.push_back(constant(random_tensor(Shape{3}, rng, -2, 2)));
                params.proj.push_back(constant(random_tensor(Shape{3 * d, 3}, rng, -2, 2)));
            }
            Var a = attention_weights_all(constant(random_tensor(Shape{n, d}, rng)),
                                          constant(random_tensor(Shape{n, d}, rng)),
                                          constant(random_tensor(Shape{n, d}, rng)), params, cfg);
            for (std::size_t i = 0; i < n; ++i) {
                double sum = 0.0;
                for (std::size_t m = 0; m < 3; ++m) {
                    CHECK(a.val()(i, m) >= 0.0);
                    sum += a.val()(i, m);
                }
                CHECK(std::abs(sum - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("scaling head width with compensated weights leaves A unchanged") {
    Rng rng(8);
    const std::size_t d = 5, da = 3;
    Tensor wq = random_tensor(Shape{d, da}, rng);
    Tensor wk = random_tensor(Shape{d, da}, rng);
    // 4x wider heads, each block scaled by 1/sqrt(2): QKᵀ/√d_a is unchanged.
    Tensor wq4(Shape{d, 4 * da});
    Tensor wk4(Shape{d, 4 * da});
    const double c = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t rep = 0; rep < 4; ++rep)
            for (std::size_t j = 0; j < da; ++j) {
                wq4(i, rep * da + j) = c * wq(i, j);
                wk4(i, rep * da + j) = c * wk(i, j);
            }
    Var ef = constant(random_tensor(Shape{6, d}, rng));
    Var el = constant(random_tensor(Shape{6, d}, rng));
    Var eb = constant(random_tensor(Shape{6, d}, rng));
    AttentionConfig narrow{d, da, 1, AttentionMode::MHSA};
    AttentionConfig wide{d, 4 * da, 1, AttentionMode::MHSA};
    Var a1 = attention_weights_all(ef, el, eb, mhsa_params({wq}, {wk}), narrow);
    Var a2 = attention_weights_all(ef, el, eb, mhsa_params({wq4}, {wk4}), wide);
    for (std::size_t i = 0; i < a1.val().size(); ++i)
        CHECK(std::abs(a1.val()[i] - a2.val()[i]) <= 1e-9);
}

TEST_CASE("swapping forward and backward rows permutes the weights") {
    Rng rng(9);
    const std::size_t d = 4;
    AttentionConfig cfg{d, 3, 2, AttentionMode::MHSA};
    TaskAttentionVars params = mhsa_params(
        {random_tensor(Shape{d, 3}, rng), random_tensor(Shape{d, 3}, rng)},
        {random_tensor(Shape{d, 3}, rng), random_tensor(Shape{d, 3}, rng)});
    Tensor stack = random_tensor(Shape{3, d}, rng);
    Tensor swapped(Shape{3, d});
    for (std::size_t j = 0; j < d; ++j) {
        swapped(0, j) = stack(2, j);
        swapped(1, j) = stack(1, j);
        swapped(2, j) = stack(0, j);
    }
    Var a = attention_weights(constant(stack), params, cfg);
    Var b = attention_weights(constant(swapped), params, cfg);
    CHECK(std::abs(a.val()[0] - b.val()[2]) < 1e-12);
    CHECK(std::abs(a.val()[1] - b.val()[1]) < 1e-12);
    CHECK(std::abs(a.val()[2] - b.val()[0]) < 1e-12);
}

TEST_CASE("attention and fusion pass end-to-end finite differences") {
    Rng rng(10);
    const std::size_t d = 3, da = 2;
    Tensor stack = random_tensor(Shape{3, d}, rng);
    Tensor wq = random_tensor(Shape{d, da}, rng);
    Tensor wk = random_tensor(Shape{d, da}, rng);
    AttentionConfig cfg{d, da, 1, AttentionMode::MHSA};

    auto build = [&](Tape& tape, Tensor& s, Tensor& q, Tensor& k) {
        Var vs = tape.leaf(s);
        TaskAttentionVars params;
        params.w_query.push_back(tape.leaf(q));
        params.w_key.push_back(tape.leaf(k));
        Var a = attention_weights(vs, params, cfg);
        Var fused = fuse(vs, a);
        Rng wrng(0xFEED);
        Tensor w(Shape{d});
        for (double& v : w.values()) v = wrng.uniform(0.5, 1.5);
        return sum_all(mul(fused, constant(std::move(w))));
    };

    auto eval = [&]() {
        Tape tape;
        return build(tape, stack, wq, wk).val().scalar_value();
    };
    Tape tape;
    Var vs = tape.leaf(stack);
    TaskAttentionVars params;
    params.w_query.push_back(tape.leaf(wq));
    params.w_key.push_back(tape.leaf(wk));
    Var a = attention_weights(vs, params, cfg);
    Var fused = fuse(vs, a);
    Rng wrng(0xFEED);
    Tensor w(Shape{d});
    for (double& v : w.values()) v = wrng.uniform(0.5, 1.5);
    Var loss = sum_all(mul(fused, constant(std::move(w))));
    tape.backward(loss);
    std::vector<Tensor*> ps{&stack, &wq, &wk};
    std::vector<const Tensor*> gs{&tape.grad(vs), &tape.grad(params.w_query[0]),
                                  &tape.grad(params.w_key[0])};
    CHECK(finite_diff_check(eval, ps, gs, 1e-5) <= 1e-4);
}
