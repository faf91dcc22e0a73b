#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsmt/encoder.hpp"
#include "dsmt/grad_check.hpp"
#include "dsmt/rng.hpp"

using namespace dsmt;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

kg::AugmentedGraph make_graph(std::size_t n_ent, std::size_t n_rel,
                              std::vector<kg::Triple> train) {
    kg::AugmentedGraph g;
    g.num_entities = n_ent;
    g.num_relations = n_rel;
    g.train = std::move(train);
    const auto nr = static_cast<kg::RelationId>(n_rel);
    g.augmented_train = g.train;
    for (const kg::Triple& t : g.train)
        g.augmented_train.push_back({t.tail, static_cast<kg::RelationId>(t.rel + nr), t.head});
    for (std::size_t e = 0; e < n_ent; ++e)
        g.augmented_train.push_back({static_cast<kg::EntityId>(e), g.self_loop_rel(),
                                     static_cast<kg::EntityId>(e)});
    return g;
}

Tensor identity_matrix(std::size_t d) {
    Tensor t(Shape{d, d});
    for (std::size_t i = 0; i < d; ++i) t(i, i) = 1.0;
    return t;
}

}  // namespace

TEST_CASE("compose identities") {
    Tensor ones(Shape{4}, 1.0);
    Tensor v = Tensor::from(Shape{4}, {0.3, -0.7, 1.1, 0.2});
    Var out = compose(Composition::Mult, constant(ones), constant(v));
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.val()[i] == v[i]);

    Tensor impulse(Shape{4});
    impulse[0] = 1.0;
    Var corr = compose(Composition::Corr, constant(impulse), constant(v));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(corr.val()[i] - v[i]) < 1e-15);
}

TEST_CASE("circular correlation hand value") {
    Var out = compose(Composition::Corr, constant(Tensor::from(Shape{2}, {1, 2})),
                      constant(Tensor::from(Shape{2}, {3, 4})));
    CHECK(out.val()[0] == 11.0);
    CHECK(out.val()[1] == 10.0);
}

TEST_CASE("compose rejects mismatched lengths") {
    CHECK_THROWS_AS(compose(Composition::Mult, constant(Tensor(Shape{3}, 1.0)),
                            constant(Tensor(Shape{4}, 1.0))),
                    ContractError);
    CHECK_THROWS_AS(compose(Composition::Corr, constant(Tensor(Shape{3}, 1.0)),
                            constant(Tensor(Shape{4}, 1.0))),
                    ContractError);
}

TEST_CASE("circular correlation matches the direct-summation oracle") {
    Rng rng(17);
    for (std::size_t d : {2u, 4u, 8u, 16u}) {
        for (int trial = 0; trial < 100; ++trial) {
            Tensor a = random_tensor(Shape{d}, rng);
            Tensor b = random_tensor(Shape{d}, rng);
            Var out = circular_correlation(constant(a), constant(b));
            for (std::size_t k = 0; k < d; ++k) {
                double expect = 0.0;
                for (std::size_t i = 0; i < d; ++i) expect += a[i] * b[(i + k) % d];
                CHECK(std::abs(out.val()[k] - expect) <= 1e-10);
            }
        }
    }
}

TEST_CASE("message passing: single triple with identity weights") {
    const std::size_t d = 3;
    kg::AugmentedGraph g = make_graph(2, 1, {{0, 0, 1}});
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);

    EncoderConfig cfg;
    cfg.input_dim = d;
    cfg.output_dim = d;
    cfg.composition = Composition::Mult;
    cfg.activation = EncoderActivation::Identity;

    Rng rng(5);
    Tensor V = random_tensor(Shape{2, d}, rng);
    Tensor R = random_tensor(Shape{3, d}, rng);
    Tensor eye = identity_matrix(d);
    std::vector<EncoderLayerVars> layers = {
        {constant(eye), constant(eye), constant(eye), constant(eye)}};
    DirectionalEmbeddings out = message_pass(constant(V), constant(R), edges, layers, cfg);

    // e^f of the head is v_r ∘ v_tail; the tail has no forward neighbors.
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(out.forward.val()(0, j) - R(0, j) * V(1, j)) < 1e-15);
        CHECK(out.forward.val()(1, j) == 0.0);
    }
    // backward mirror: e^b of the tail composes the inverse relation with the head.
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(out.backward.val()(1, j) - R(1, j) * V(0, j)) < 1e-15);
        CHECK(out.backward.val()(0, j) == 0.0);
    }
    // self loop: e^l_h = v_{r0} ∘ v_h
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(std::abs(out.self.val()(h, j) - R(2, j) * V(h, j)) < 1e-15);
    // relation output table is R · W_rel = R under identity
    for (std::size_t i = 0; i < R.size(); ++i) CHECK(out.relations.val()[i] == R[i]);
}

TEST_CASE("isolated entities get the activation of the zero vector") {
    kg::AugmentedGraph g = make_graph(3, 1, {{0, 0, 1}});
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);
    EncoderConfig cfg;
    cfg.input_dim = 2;
    cfg.output_dim = 2;
    cfg.composition = Composition::Mult;
    cfg.activation = EncoderActivation::Tanh;
    Rng rng(6);
    Tensor V = random_tensor(Shape{3, 2}, rng);
    Tensor R = random_tensor(Shape{3, 2}, rng);
    Tensor W = random_tensor(Shape{2, 2}, rng);
    std::vector<EncoderLayerVars> layers = {{constant(W), constant(W), constant(W), constant(W)}};
    DirectionalEmbeddings out = message_pass(constant(V), constant(R), edges, layers, cfg);
    // entity 2 has no edges in either direction; tanh(0) = 0
    CHECK(out.forward.val()(2, 0) == 0.0);
    CHECK(out.forward.val()(2, 1) == 0.0);
    CHECK(out.backward.val()(2, 0) == 0.0);
    CHECK(out.backward.val()(2, 1) == 0.0);
}

TEST_CASE("message passing agrees with a per-edge oracle over 20 random entities") {
    Rng rng(77);
    const std::size_t n = 20, nrel = 3, d_in = 4, d_out = 5;
    std::vector<kg::Triple> train;
    for (int e = 0; e < 60; ++e)
        train.push_back({static_cast<kg::EntityId>(rng.below(n)),
                         static_cast<kg::RelationId>(rng.below(nrel)),
                         static_cast<kg::EntityId>(rng.below(n))});
    std::sort(train.begin(), train.end());
    train.erase(std::unique(train.begin(), train.end()), train.end());
    kg::AugmentedGraph g = make_graph(n, nrel, train);
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);

    EncoderConfig cfg;
    cfg.input_dim = d_in;
    cfg.output_dim = d_out;
    cfg.composition = Composition::Mult;
    cfg.activation = EncoderActivation::Identity;
    Tensor V = random_tensor(Shape{n, d_in}, rng);
    Tensor R = random_tensor(Shape{g.num_aug_relations(), d_in}, rng);
    Tensor WF = random_tensor(Shape{d_in, d_out}, rng);
    Tensor WB = random_tensor(Shape{d_in, d_out}, rng);
    Tensor WL = random_tensor(Shape{d_in, d_out}, rng);
    Tensor WR = random_tensor(Shape{d_in, d_out}, rng);
    std::vector<EncoderLayerVars> layers = {
        {constant(WF), constant(WB), constant(WL), constant(WR)}};
    DirectionalEmbeddings out = message_pass(constant(V), constant(R), edges, layers, cfg);

    for (std::size_t h = 0; h < n; ++h) {
        std::vector<double> expect(d_out, 0.0);
        for (const auto& [rel, tail] : ix.forward[h]) {
            for (std::size_t o = 0; o < d_out; ++o) {
                double m = 0.0;
                for (std::size_t i = 0; i < d_in; ++i)
                    m += R(static_cast<std::size_t>(rel), i) *
                         V(static_cast<std::size_t>(tail), i) * WF(i, o);
                expect[o] += m;
            }
        }
        for (std::size_t o = 0; o < d_out; ++o)
            CHECK(std::abs(out.forward.val()(h, o) - expect[o]) < 1e-12);
    }
}

TEST_CASE("message passing is invariant to neighbor-list permutation") {
    Rng rng(88);
    const std::size_t n = 10, nrel = 2, d = 4;
    std::vector<kg::Triple> train;
    for (int e = 0; e < 30; ++e)
        train.push_back({static_cast<kg::EntityId>(rng.below(n)),
                         static_cast<kg::RelationId>(rng.below(nrel)),
                         static_cast<kg::EntityId>(rng.below(n))});
    std::sort(train.begin(), train.end());
    train.erase(std::unique(train.begin(), train.end()), train.end());
    kg::AugmentedGraph g = make_graph(n, nrel, train);
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);

    EncoderConfig cfg;
    cfg.input_dim = d;
    cfg.output_dim = d;
    cfg.composition = Composition::Corr;
    Tensor V = random_tensor(Shape{n, d}, rng);
    Tensor R = random_tensor(Shape{g.num_aug_relations(), d}, rng);
    Tensor W = random_tensor(Shape{d, d}, rng);
    std::vector<EncoderLayerVars> layers = {{constant(W), constant(W), constant(W), constant(W)}};
    DirectionalEmbeddings base = message_pass(constant(V), constant(R), edges, layers, cfg);

    EdgeLists shuffled = edges;
    std::vector<std::size_t> perm(edges.fwd_dst.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng prng(999);
    prng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.fwd_dst[i] = edges.fwd_dst[perm[i]];
        shuffled.fwd_rel[i] = edges.fwd_rel[perm[i]];
        shuffled.fwd_ent[i] = edges.fwd_ent[perm[i]];
    }
    DirectionalEmbeddings perm_out = message_pass(constant(V), constant(R), shuffled, layers, cfg);
    for (std::size_t i = 0; i < base.forward.val().size(); ++i)
        CHECK(std::abs(base.forward.val()[i] - perm_out.forward.val()[i]) < 1e-12);
}

TEST_CASE("mean aggregation divides each sum by the neighbor count") {
    // star: a has three forward neighbors via r
    kg::AugmentedGraph g = make_graph(4, 1, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);
    EncoderConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 3;
    cfg.composition = Composition::Mult;
    cfg.activation = EncoderActivation::Identity;
    Rng rng(7);
    Tensor V = random_tensor(Shape{4, 3}, rng);
    Tensor R = random_tensor(Shape{3, 3}, rng);
    Tensor eye = identity_matrix(3);
    std::vector<EncoderLayerVars> layers = {
        {constant(eye), constant(eye), constant(eye), constant(eye)}};
    DirectionalEmbeddings plain = message_pass(constant(V), constant(R), edges, layers, cfg);
    cfg.mean_aggregation = true;
    DirectionalEmbeddings mean = message_pass(constant(V), constant(R), edges, layers, cfg);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(mean.forward.val()(0, j) - plain.forward.val()(0, j) / 3.0) < 1e-15);
}

TEST_CASE("stacked layers keep shapes and stay differentiable") {
    Rng rng(31);
    kg::AugmentedGraph g = make_graph(5, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}});
    kg::NeighborIndex ix = kg::build_neighbor_index(g);
    EdgeLists edges = build_edge_lists(g, ix);
    EncoderConfig cfg;
    cfg.input_dim = 3;
    cfg.output_dim = 4;
    cfg.composition = Composition::Mult;
    cfg.layers = 2;

    Tensor V = random_tensor(Shape{5, 3}, rng);
    Tensor R = random_tensor(Shape{5, 3}, rng);
    Tensor W0 = random_tensor(Shape{3, 4}, rng);
    Tensor W1 = random_tensor(Shape{4, 4}, rng);

    auto build = [&](Tape* tape) {
        Var v = tape ? tape->leaf(V) : constant_view(V);
        Var r = tape ? tape->leaf(R) : constant_view(R);
        Var w0 = tape ? tape->leaf(W0) : constant_view(W0);
        Var w1 = tape ? tape->leaf(W1) : constant_view(W1);
        std::vector<EncoderLayerVars> layers = {{w0, w0, w0, w0}, {w1, w1, w1, w1}};
        DirectionalEmbeddings out = message_pass(v, r, edges, layers, cfg);
        return std::tuple{mean_all(add(add(out.forward, out.backward), out.self)), v, r, w0, w1,
                          out};
    };
    Tape tape;
    auto [loss, v, r, w0, w1, out] = build(&tape);
    CHECK(out.forward.val().shape() == Shape{5, 4});
    CHECK(out.relations.val().shape() == Shape{5, 4});
    tape.backward(loss);
    auto eval = [&]() {
        auto [l, a, b, c, d, o] = build(nullptr);
        (void)a;
        (void)b;
        (void)c;
        (void)d;
        (void)o;
        return l.val().scalar_value();
    };
    std::vector<Tensor*> ps{&V, &R, &W0, &W1};
    std::vector<const Tensor*> gs{&tape.grad(v), &tape.grad(r), &tape.grad(w0), &tape.grad(w1)};
    CHECK(finite_diff_check(eval, ps, gs, 1e-5) <= 1e-4);
}

TEST_CASE("distance constraint examples") {
    Tensor a = Tensor::from(Shape{1, 2}, {0, 0});
    Tensor b = Tensor::from(Shape{1, 2}, {3, 4});
    CHECK(distance_constraint(constant(a), constant(b)).val().scalar_value() == 5.0);

    Tensor c = Tensor::from(Shape{2, 2}, {0, 0, 0, 0});
    Tensor e = Tensor::from(Shape{2, 2}, {3, 4, 1, 0});
    CHECK(distance_constraint(constant(c), constant(e)).val().scalar_value() == 3.0);

    Rng rng(3);
    Tensor same = random_tensor(Shape{4, 3}, rng);
    CHECK(distance_constraint(constant(same), constant(same)).val().scalar_value() == 0.0);

    CHECK_THROWS_AS(
        distance_constraint(constant(Tensor(Shape{2, 2})), constant(Tensor(Shape{3, 2}))),
        ContractError);
}

TEST_CASE("distance constraint is nonnegative and zero only at equality") {
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor(Shape{5, 4}, rng);
        Tensor b = random_tensor(Shape{5, 4}, rng);
        const double dis = distance_constraint(constant(a), constant(b)).val().scalar_value();
        CHECK(dis >= 0.0);
        bool equal = true;
        for (std::size_t i = 0; i < a.size(); ++i) equal &= a[i] == b[i];
        if (!equal) CHECK(dis > 0.0);
    }
}

TEST_CASE("conicity examples") {
    Tensor same(Shape{3, 2});
    for (std::size_t i = 0; i < 3; ++i) {
        same(i, 0) = 0.6;
        same(i, 1) = -0.8;
    }
    CHECK(std::abs(conicity(constant(same)).val().scalar_value() - 1.0) < 1e-12);

    Tensor basis = Tensor::from(Shape{2, 2}, {1, 0, 0, 1});
    CHECK(std::abs(conicity(constant(basis)).val().scalar_value() - 1.0 / std::sqrt(2.0)) < 1e-12);

    Tensor antipodal = Tensor::from(Shape{2, 3}, {1, 2, 3, -1, -2, -3});
    CHECK(conicity(constant(antipodal)).val().scalar_value() == 0.0);

    CHECK_THROWS_AS(conicity(constant(Tensor(Shape{4}, 1.0))), ContractError);
}

TEST_CASE("conicity stays within [-1, 1]") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor e = random_tensor(Shape{1 + rng.below(8), 1 + rng.below(6)}, rng, -3.0, 3.0);
        const double con = conicity(constant(e)).val().scalar_value();
        CHECK(con >= -1.0);
        CHECK(con <= 1.0);
    }
}

TEST_CASE("constraint gradients pass finite differences") {
    Rng rng(23);
    Tensor a = random_tensor(Shape{4, 3}, rng);
    Tensor b = random_tensor(Shape{4, 3}, rng);
    auto eval = [&]() {
        Tape tape;
        Var va = tape.leaf(a);
        Var vb = tape.leaf(b);
        return add(distance_constraint(va, vb), add(conicity(va), conicity(vb)))
            .val()
            .scalar_value();
    };
    Tape tape;
    Var va = tape.leaf(a);
    Var vb = tape.leaf(b);
    Var loss = add(distance_constraint(va, vb), add(conicity(va), conicity(vb)));
    tape.backward(loss);
    std::vector<Tensor*> params{&a, &b};
    std::vector<const Tensor*> grads{&tape.grad(va), &tape.grad(vb)};
    CHECK(finite_diff_check(eval, params, grads, 1e-5) <= 1e-4);
}
