#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsmt/common.hpp"

namespace dsmt::kg {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
    EntityId head;
    RelationId rel;
    EntityId tail;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Bijective name<->id maps for entities and relations. Ids are assigned
// contiguously from 0 in first-appearance order over train, valid, test.
class Vocabulary {
public:
    EntityId intern_entity(const std::string& name);
    RelationId intern_relation(const std::string& name);

    EntityId entity_id(const std::string& name) const;      // DataError if unknown
    RelationId relation_id(const std::string& name) const;  // DataError if unknown
    const std::string& entity_name(EntityId id) const;
    const std::string& relation_name(RelationId id) const;

    std::size_t num_entities() const { return entity_names_.size(); }
    std::size_t num_relations() const { return relation_names_.size(); }

    // 64-bit FNV-1a over sorted entity names then sorted relation names,
    // each name followed by '\n'. Pins checkpoints to their dataset.
    std::uint64_t digest() const;

private:
    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
};

// Train/valid/test splits plus the augmented train list:
// T' = T^train ∪ {(t, r+|R|, h)} ∪ {(h, 2|R|, h) for every entity}.
struct AugmentedGraph {
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
    std::vector<Triple> augmented_train;

    std::size_t num_entities = 0;
    std::size_t num_relations = 0;  // |R|, original only

    std::size_t num_aug_relations() const { return 2 * num_relations + 1; }
    RelationId self_loop_rel() const { return static_cast<RelationId>(2 * num_relations); }
    RelationId inverse_rel(RelationId r) const {
        const auto nr = static_cast<RelationId>(num_relations);
        return r < nr ? r + nr : r - nr;
    }
    bool is_forward(RelationId r) const { return r < static_cast<RelationId>(num_relations); }
};

struct Dataset {
    Vocabulary vocab;
    AugmentedGraph graph;
};

// Reads three tab-separated triple files (head\trel\ttail per line) and
// builds the augmented graph. Duplicate triples within a file are dropped
// with a warning on stderr.
Dataset load_dataset(const std::string& train_path, const std::string& valid_path,
                     const std::string& test_path);

// Per-entity neighbor lists from original-direction train edges, sorted by
// (relation, other entity). forward[h] holds (r, t); backward[t] holds
// (r+|R|, h).
struct NeighborIndex {
    std::vector<std::vector<std::pair<RelationId, EntityId>>> forward;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> backward;
};

NeighborIndex build_neighbor_index(const AugmentedGraph& graph);

// Count of distinct train answers per (subject, relation) query, both
// directions, self-loops excluded.
class UncertaintyTable {
public:
    void set(EntityId subject, RelationId rel, std::int32_t count);
    std::optional<std::int32_t> find(EntityId subject, RelationId rel) const;
    std::int32_t count(EntityId subject, RelationId rel) const;  // ContractError if absent
    std::size_t size() const { return counts_.size(); }

    template <typename F>
    void for_each(F&& fn) const {
        for (const auto& [key, c] : counts_)
            fn(static_cast<EntityId>(key >> 32), static_cast<RelationId>(key & 0xffffffffULL), c);
    }

private:
    static std::uint64_t key(EntityId e, RelationId r) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e)) << 32) |
               static_cast<std::uint32_t>(r);
    }
    std::unordered_map<std::uint64_t, std::int32_t> counts_;
};

UncertaintyTable uncertainty_counts(const AugmentedGraph& graph);

enum class RelationCategory { OneToOne, OneToMany, ManyToOne, ManyToMany };

const char* category_name(RelationCategory c);

struct RelationStats {
    double tails_per_head = 0.0;
    double heads_per_tail = 0.0;
    RelationCategory category = RelationCategory::OneToOne;
};

// Indexed by original relation id. DataError if a relation never occurs in
// the train split.
using RelationCategoryMap = std::vector<RelationStats>;

RelationCategoryMap categorize_relations(const AugmentedGraph& graph, double threshold = 1.5);

// Binary prepared-graph cache written by `prepare`; deterministic bytes.
void save_graph_cache(const std::string& path, const Dataset& ds);
Dataset load_graph_cache(const std::string& path);

}  // namespace dsmt::kg
