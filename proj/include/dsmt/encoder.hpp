#pragma once

#include <cstdint>
#include <vector>

#include "dsmt/kg_data.hpp"
#include "dsmt/ops.hpp"

namespace dsmt {

enum class EncoderActivation { Tanh, Identity };

struct EncoderConfig {
    std::size_t input_dim = 100;   // d_i
    std::size_t output_dim = 200;  // d
    Composition composition = Composition::Corr;
    EncoderActivation activation = EncoderActivation::Tanh;
    bool mean_aggregation = false;  // directional aggregates are plain sums by default
    std::size_t layers = 1;
};

// Flattened edge lists in neighbor-index order, shared by every step.
// A message lands on `dst` and is composed from (rel, ent) features.
struct EdgeLists {
    std::vector<std::int64_t> fwd_dst, fwd_rel, fwd_ent;
    std::vector<std::int64_t> bwd_dst, bwd_rel, bwd_ent;
    std::vector<std::int64_t> self_rel, self_ent;  // entity id order
    std::vector<double> fwd_inv_degree, bwd_inv_degree;
    std::size_t num_entities = 0;
};

EdgeLists build_edge_lists(const kg::AugmentedGraph& graph, const kg::NeighborIndex& index);

// One layer's direction-specific weights, bound for the current step.
struct EncoderLayerVars {
    Var w_forward;   // W^F
    Var w_backward;  // W^B
    Var w_self;      // W^L
    Var w_rel;       // relation output transform
};

// Per-direction entity aggregates plus the relation output table.
struct DirectionalEmbeddings {
    Var forward;    // E^f, (|E|, d)
    Var self;       // E^l
    Var backward;   // E^b
    Var relations;  // R_out, (|R'|, d)
};

// Entity-relation composition on single vectors.
Var compose(Composition mode, const Var& rel_feat, const Var& ent_feat);

DirectionalEmbeddings message_pass(const Var& entity_feats, const Var& rel_feats,
                                   const EdgeLists& edges,
                                   const std::vector<EncoderLayerVars>& layers,
                                   const EncoderConfig& cfg);

// Mean Euclidean distance between paired rows of the two views.
Var distance_constraint(const Var& e_forward, const Var& e_backward);

// Mean cosine of each row against the mean row; 0 when the mean vanishes.
Var conicity(const Var& table);

}  // namespace dsmt
