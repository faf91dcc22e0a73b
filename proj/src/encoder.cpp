#include "dsmt/encoder.hpp"

namespace dsmt {

EdgeLists build_edge_lists(const kg::AugmentedGraph& graph, const kg::NeighborIndex& index) {
    EdgeLists edges;
    edges.num_entities = graph.num_entities;
    const std::size_t n = graph.num_entities;
    edges.fwd_inv_degree.assign(n, 0.0);
    edges.bwd_inv_degree.assign(n, 0.0);
    for (std::size_t h = 0; h < n; ++h) {
        for (const auto& [rel, tail] : index.forward[h]) {
            edges.fwd_dst.push_back(static_cast<std::int64_t>(h));
            edges.fwd_rel.push_back(rel);
            edges.fwd_ent.push_back(tail);
        }
        for (const auto& [rel, other] : index.backward[h]) {
            edges.bwd_dst.push_back(static_cast<std::int64_t>(h));
            edges.bwd_rel.push_back(rel);
            edges.bwd_ent.push_back(other);
        }
        edges.fwd_inv_degree[h] =
            index.forward[h].empty() ? 0.0 : 1.0 / static_cast<double>(index.forward[h].size());
        edges.bwd_inv_degree[h] =
            index.backward[h].empty() ? 0.0 : 1.0 / static_cast<double>(index.backward[h].size());
        edges.self_rel.push_back(graph.self_loop_rel());
        edges.self_ent.push_back(static_cast<std::int64_t>(h));
    }
    return edges;
}

Var compose(Composition mode, const Var& rel_feat, const Var& ent_feat) {
    if (mode == Composition::Mult) {
        if (rel_feat.val().rank() != 1 || !rel_feat.val().same_shape(ent_feat.val()))
            throw ContractError("compose: length mismatch " + shape_str(rel_feat.val().shape()) +
                                " vs " + shape_str(ent_feat.val().shape()));
        return mul(rel_feat, ent_feat);
    }
    return circular_correlation(rel_feat, ent_feat);
}

namespace {

Var activate(const Var& x, EncoderActivation act) {
    return act == EncoderActivation::Tanh ? tanh_op(x) : x;
}

// Aggregate one direction: Σ φ(rel, ent) scattered onto dst, times W.
Var aggregate(const Var& ent_feats, const Var& rel_feats, const std::vector<std::int64_t>& dst,
              const std::vector<std::int64_t>& rel, const std::vector<std::int64_t>& ent,
              const std::vector<double>& inv_degree, const Var& weight, std::size_t n,
              const EncoderConfig& cfg) {
    if (dst.empty()) {
        // No edges at all: the sum is identically zero.
        return constant(Tensor(Shape{n, cfg.output_dim}));
    }
    Var messages = compose_edges(rel_feats, ent_feats, rel, ent, cfg.composition);
    Var summed = scatter_sum_rows(messages, dst, n);
    if (cfg.mean_aggregation) {
        Tensor deg(Shape{n});
        for (std::size_t i = 0; i < n; ++i) deg[i] = inv_degree[i];
        summed = colscale(summed, constant(std::move(deg)));
    }
    return matmul(summed, weight);
}

}  // namespace

DirectionalEmbeddings message_pass(const Var& entity_feats, const Var& rel_feats,
                                   const EdgeLists& edges,
                                   const std::vector<EncoderLayerVars>& layers,
                                   const EncoderConfig& cfg) {
    if (layers.empty()) throw ContractError("message_pass: no layers");
    const std::size_t n = edges.num_entities;
    Var ents = entity_feats;
    Var rels = rel_feats;
    DirectionalEmbeddings out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const EncoderLayerVars& w = layers[l];
        Var ef = activate(aggregate(ents, rels, edges.fwd_dst, edges.fwd_rel, edges.fwd_ent,
                                    edges.fwd_inv_degree, w.w_forward, n, cfg),
                          cfg.activation);
        Var eb = activate(aggregate(ents, rels, edges.bwd_dst, edges.bwd_rel, edges.bwd_ent,
                                    edges.bwd_inv_degree, w.w_backward, n, cfg),
                          cfg.activation);
        Var el = activate(
            matmul(compose_edges(rels, ents, edges.self_rel, edges.self_ent, cfg.composition),
                   w.w_self),
            cfg.activation);
        Var rout = matmul(rels, w.w_rel);
        if (l + 1 == layers.size()) {
            out.forward = ef;
            out.self = el;
            out.backward = eb;
            out.relations = rout;
        } else {
            // Intermediate layers merge the three directions uniformly and
            // feed the result forward.
            ents = scale(add(add(ef, el), eb), 1.0 / 3.0);
            rels = rout;
        }
    }
    return out;
}

Var distance_constraint(const Var& e_forward, const Var& e_backward) {
    return row_distance_mean(e_forward, e_backward);
}

Var conicity(const Var& table) { return conicity_op(table); }

}  // namespace dsmt
