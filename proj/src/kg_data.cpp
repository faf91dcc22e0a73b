#include "dsmt/kg_data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "dsmt/binio.hpp"

namespace dsmt::kg {

EntityId Vocabulary::intern_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    const auto id = static_cast<EntityId>(entity_names_.size());
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

RelationId Vocabulary::intern_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const auto id = static_cast<RelationId>(relation_names_.size());
    relation_names_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

EntityId Vocabulary::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) throw DataError("unknown entity: " + name);
    return it->second;
}

RelationId Vocabulary::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) throw DataError("unknown relation: " + name);
    return it->second;
}

const std::string& Vocabulary::entity_name(EntityId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entity_names_.size())
        throw ContractError("entity id out of range: " + std::to_string(id));
    return entity_names_[static_cast<std::size_t>(id)];
}

const std::string& Vocabulary::relation_name(RelationId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= relation_names_.size())
        throw ContractError("relation id out of range: " + std::to_string(id));
    return relation_names_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::digest() const {
    std::vector<std::string> names = entity_names_;
    std::sort(names.begin(), names.end());
    std::vector<std::string> rels = relation_names_;
    std::sort(rels.begin(), rels.end());
    std::uint64_t h = 14695981039346656037ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 1099511628211ULL;
    };
    for (const auto& s : names) feed(s);
    for (const auto& s : rels) feed(s);
    return h;
}

namespace {

std::vector<Triple> read_triple_file(const std::string& path, Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open triple file: " + path);
    std::vector<Triple> triples;
    std::set<Triple> seen;
    std::size_t duplicates = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        const auto tab3 = tab2 == std::string::npos ? std::string::npos : line.find('\t', tab2 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos || tab3 != std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected 3 tab-separated fields");
        const std::string head = line.substr(0, tab1);
        const std::string rel = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string tail = line.substr(tab2 + 1);
        if (head.empty() || rel.empty() || tail.empty())
            throw DataError(path + ":" + std::to_string(lineno) + ": empty field");
        Triple t{vocab.intern_entity(head), vocab.intern_relation(rel),
                 vocab.intern_entity(tail)};
        if (!seen.insert(t).second) {
            ++duplicates;
            continue;
        }
        triples.push_back(t);
    }
    if (duplicates > 0)
        std::cerr << "warning: " << path << ": dropped " << duplicates << " duplicate triple(s)\n";
    return triples;
}

}  // namespace

Dataset load_dataset(const std::string& train_path, const std::string& valid_path,
                     const std::string& test_path) {
    Dataset ds;
    ds.graph.train = read_triple_file(train_path, ds.vocab);
    ds.graph.valid = read_triple_file(valid_path, ds.vocab);
    ds.graph.test = read_triple_file(test_path, ds.vocab);
    if (ds.graph.train.empty()) throw DataError(train_path + ": train split is empty");
    ds.graph.num_entities = ds.vocab.num_entities();
    ds.graph.num_relations = ds.vocab.num_relations();

    const auto nr = static_cast<RelationId>(ds.graph.num_relations);
    auto& aug = ds.graph.augmented_train;
    aug.reserve(2 * ds.graph.train.size() + ds.graph.num_entities);
    aug = ds.graph.train;
    for (const Triple& t : ds.graph.train)
        aug.push_back(Triple{t.tail, static_cast<RelationId>(t.rel + nr), t.head});
    const RelationId self_rel = ds.graph.self_loop_rel();
    for (std::size_t e = 0; e < ds.graph.num_entities; ++e)
        aug.push_back(Triple{static_cast<EntityId>(e), self_rel, static_cast<EntityId>(e)});
    return ds;
}

NeighborIndex build_neighbor_index(const AugmentedGraph& graph) {
    NeighborIndex index;
    index.forward.resize(graph.num_entities);
    index.backward.resize(graph.num_entities);
    const auto nr = static_cast<RelationId>(graph.num_relations);
    for (const Triple& t : graph.train) {
        index.forward[static_cast<std::size_t>(t.head)].emplace_back(t.rel, t.tail);
        index.backward[static_cast<std::size_t>(t.tail)].emplace_back(
            static_cast<RelationId>(t.rel + nr), t.head);
    }
    for (auto& v : index.forward) std::sort(v.begin(), v.end());
    for (auto& v : index.backward) std::sort(v.begin(), v.end());
    return index;
}

void UncertaintyTable::set(EntityId subject, RelationId rel, std::int32_t count) {
    counts_[key(subject, rel)] = count;
}

std::optional<std::int32_t> UncertaintyTable::find(EntityId subject, RelationId rel) const {
    auto it = counts_.find(key(subject, rel));
    if (it == counts_.end()) return std::nullopt;
    return it->second;
}

std::int32_t UncertaintyTable::count(EntityId subject, RelationId rel) const {
    auto v = find(subject, rel);
    if (!v)
        throw ContractError("uncertainty count missing for query (" + std::to_string(subject) +
                            ", " + std::to_string(rel) + ")");
    return *v;
}

UncertaintyTable uncertainty_counts(const AugmentedGraph& graph) {
    // Distinct answers per key; train triples are already deduplicated, and
    // the set keeps the semantics explicit.
    std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> answers;
    const auto nr = static_cast<RelationId>(graph.num_relations);
    for (const Triple& t : graph.train) {
        answers[{t.head, t.rel}].insert(t.tail);
        answers[{t.tail, static_cast<RelationId>(t.rel + nr)}].insert(t.head);
    }
    UncertaintyTable table;
    for (const auto& [k, v] : answers)
        table.set(k.first, k.second, static_cast<std::int32_t>(v.size()));
    return table;
}

const char* category_name(RelationCategory c) {
    switch (c) {
        case RelationCategory::OneToOne: return "1-1";
        case RelationCategory::OneToMany: return "1-N";
        case RelationCategory::ManyToOne: return "N-1";
        case RelationCategory::ManyToMany: return "N-N";
    }
    return "?";
}

RelationCategoryMap categorize_relations(const AugmentedGraph& graph, double threshold) {
    std::vector<std::size_t> triple_count(graph.num_relations, 0);
    std::vector<std::set<EntityId>> heads(graph.num_relations), tails(graph.num_relations);
    for (const Triple& t : graph.train) {
        const auto r = static_cast<std::size_t>(t.rel);
        ++triple_count[r];
        heads[r].insert(t.head);
        tails[r].insert(t.tail);
    }
    RelationCategoryMap map(graph.num_relations);
    for (std::size_t r = 0; r < graph.num_relations; ++r) {
        if (triple_count[r] == 0)
            throw DataError("relation id " + std::to_string(r) +
                            " has no train triples, cannot categorize");
        RelationStats& s = map[r];
        s.tails_per_head = static_cast<double>(triple_count[r]) / static_cast<double>(heads[r].size());
        s.heads_per_tail = static_cast<double>(triple_count[r]) / static_cast<double>(tails[r].size());
        const bool many_tails = s.tails_per_head >= threshold;
        const bool many_heads = s.heads_per_tail >= threshold;
        if (many_tails && many_heads)
            s.category = RelationCategory::ManyToMany;
        else if (many_tails)
            s.category = RelationCategory::OneToMany;
        else if (many_heads)
            s.category = RelationCategory::ManyToOne;
        else
            s.category = RelationCategory::OneToOne;
    }
    return map;
}

namespace {

constexpr char kCacheMagic[4] = {'D', 'S', 'M', 'G'};
constexpr std::uint32_t kCacheVersion = 1;

void write_triples(std::ostream& os, const std::vector<Triple>& ts) {
    write_u64(os, ts.size());
    for (const Triple& t : ts) {
        write_u32(os, static_cast<std::uint32_t>(t.head));
        write_u32(os, static_cast<std::uint32_t>(t.rel));
        write_u32(os, static_cast<std::uint32_t>(t.tail));
    }
}

std::vector<Triple> read_triples(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::vector<Triple> ts;
    ts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Triple t{};
        t.head = static_cast<EntityId>(read_u32(is));
        t.rel = static_cast<RelationId>(read_u32(is));
        t.tail = static_cast<EntityId>(read_u32(is));
        ts.push_back(t);
    }
    return ts;
}

}  // namespace

void save_graph_cache(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write graph cache: " + path);
    os.write(kCacheMagic, 4);
    write_u32(os, kCacheVersion);
    write_u64(os, ds.vocab.digest());
    write_u64(os, ds.vocab.num_entities());
    write_u64(os, ds.vocab.num_relations());
    for (std::size_t e = 0; e < ds.vocab.num_entities(); ++e)
        write_str(os, ds.vocab.entity_name(static_cast<EntityId>(e)));
    for (std::size_t r = 0; r < ds.vocab.num_relations(); ++r)
        write_str(os, ds.vocab.relation_name(static_cast<RelationId>(r)));
    write_triples(os, ds.graph.train);
    write_triples(os, ds.graph.valid);
    write_triples(os, ds.graph.test);
    if (!os) throw DataError("failed writing graph cache: " + path);
}

Dataset load_graph_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open graph cache: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw DataError(path + ": not a graph cache file");
    const std::uint32_t version = read_u32(is);
    if (version != kCacheVersion)
        throw DataError(path + ": unsupported cache version " + std::to_string(version));
    const std::uint64_t digest = read_u64(is);
    const std::uint64_t ne = read_u64(is);
    const std::uint64_t nrel = read_u64(is);
    Dataset ds;
    for (std::uint64_t e = 0; e < ne; ++e) ds.vocab.intern_entity(read_str(is));
    for (std::uint64_t r = 0; r < nrel; ++r) ds.vocab.intern_relation(read_str(is));
    if (ds.vocab.digest() != digest) throw DataError(path + ": cache digest mismatch");
    ds.graph.train = read_triples(is);
    ds.graph.valid = read_triples(is);
    ds.graph.test = read_triples(is);
    ds.graph.num_entities = ne;
    ds.graph.num_relations = nrel;
    const auto nr = static_cast<RelationId>(nrel);
    auto& aug = ds.graph.augmented_train;
    aug = ds.graph.train;
    for (const Triple& t : ds.graph.train)
        aug.push_back(Triple{t.tail, static_cast<RelationId>(t.rel + nr), t.head});
    for (std::uint64_t e = 0; e < ne; ++e)
        aug.push_back(Triple{static_cast<EntityId>(e), ds.graph.self_loop_rel(),
                             static_cast<EntityId>(e)});
    return ds;
}

}  // namespace dsmt::kg
