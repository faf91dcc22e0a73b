#include "dsmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "dsmt/adam.hpp"
#include "dsmt/common.hpp"

namespace dsmt {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ContractError("train: learning_rate must be > 0");
    if (batch_size == 0 || max_epochs == 0 || eval_interval == 0 || patience == 0)
        throw ContractError("train: batch_size, max_epochs, eval_interval, patience must be > 0");
}

Metrics compute_metrics(const std::vector<std::size_t>& ranks) {
    if (ranks.empty()) throw ContractError("compute_metrics: empty rank list");
    Metrics m;
    m.count = ranks.size();
    for (std::size_t r : ranks) {
        m.mrr += 1.0 / static_cast<double>(r);
        if (r <= 1) m.hits1 += 1.0;
        if (r <= 3) m.hits3 += 1.0;
        if (r <= 10) m.hits10 += 1.0;
    }
    const double n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    return m;
}

MetricsReport subtask_report(const std::vector<RankResult>& results) {
    if (results.empty()) throw ContractError("subtask_report: empty result list");
    std::vector<std::size_t> all;
    std::vector<std::size_t> by_cell[2][4];
    for (const RankResult& r : results) {
        all.push_back(r.rank);
        by_cell[r.forward ? 0 : 1][static_cast<int>(r.category)].push_back(r.rank);
    }
    MetricsReport report;
    report.overall = compute_metrics(all);
    for (int dir = 0; dir < 2; ++dir)
        for (int cat = 0; cat < 4; ++cat)
            if (!by_cell[dir][cat].empty())
                report.cells[dir][cat] = compute_metrics(by_cell[dir][cat]);
    return report;
}

std::size_t filtered_rank(std::span<const double> scores, kg::EntityId target,
                          const std::unordered_set<kg::EntityId>& known_positives, Rng& rng) {
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size())
        throw ContractError("filtered_rank: target id " + std::to_string(target) +
                            " out of range");
    if (known_positives.find(target) == known_positives.end())
        throw ContractError("filtered_rank: target was filtered out of contention");
    const double target_score = scores[static_cast<std::size_t>(target)];
    std::size_t greater = 0, ties = 0;
    for (std::size_t e = 0; e < scores.size(); ++e) {
        const auto id = static_cast<kg::EntityId>(e);
        if (id == target) continue;
        if (known_positives.find(id) != known_positives.end()) continue;
        if (scores[e] > target_score)
            ++greater;
        else if (scores[e] == target_score)
            ++ties;
    }
    return 1 + greater + static_cast<std::size_t>(rng.below(ties + 1));
}

std::vector<Query> build_train_queries(const kg::AugmentedGraph& graph) {
    const auto nr = static_cast<kg::RelationId>(graph.num_relations);
    std::map<std::pair<kg::EntityId, kg::RelationId>, std::vector<kg::EntityId>> grouped;
    for (const kg::Triple& t : graph.train) {
        grouped[{t.head, t.rel}].push_back(t.tail);
        grouped[{t.tail, static_cast<kg::RelationId>(t.rel + nr)}].push_back(t.head);
    }
    std::vector<Query> queries;
    queries.reserve(grouped.size());
    for (auto& [key, answers] : grouped) {
        std::sort(answers.begin(), answers.end());
        answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
        queries.push_back(Query{key.first, key.second, key.second < nr, std::move(answers)});
    }
    return queries;
}

const std::unordered_set<kg::EntityId> FilterSets::kEmpty;

namespace {

std::uint64_t pair_key(kg::EntityId e, kg::RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e)) << 32) |
           static_cast<std::uint32_t>(r);
}

}  // namespace

FilterSets::FilterSets(const kg::AugmentedGraph& graph) {
    const auto nr = static_cast<kg::RelationId>(graph.num_relations);
    auto feed = [&](const std::vector<kg::Triple>& split) {
        for (const kg::Triple& t : split) {
            map_[pair_key(t.head, t.rel)].insert(t.tail);
            map_[pair_key(t.tail, static_cast<kg::RelationId>(t.rel + nr))].insert(t.head);
        }
    };
    feed(graph.train);
    feed(graph.valid);
    feed(graph.test);
}

const std::unordered_set<kg::EntityId>& FilterSets::answers(kg::EntityId subject,
                                                            kg::RelationId rel) const {
    auto it = map_.find(pair_key(subject, rel));
    return it == map_.end() ? kEmpty : it->second;
}

std::vector<RankResult> evaluate_split(const Model& model, const EvalTables& tables,
                                       const std::vector<kg::Triple>& split,
                                       const FilterSets& filters,
                                       const kg::RelationCategoryMap& categories,
                                       std::uint64_t master_seed) {
    const auto nr = static_cast<kg::RelationId>(model.num_relations());
    struct PendingQuery {
        std::size_t index;  // global query index: 2i forward, 2i+1 backward
        kg::EntityId subject;
        kg::RelationId relation;
        kg::EntityId target;
        kg::RelationId original;
    };
    std::vector<PendingQuery> fwd, bwd;
    fwd.reserve(split.size());
    bwd.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
        const kg::Triple& t = split[i];
        fwd.push_back({2 * i, t.head, t.rel, t.tail, t.rel});
        bwd.push_back({2 * i + 1, t.tail, static_cast<kg::RelationId>(t.rel + nr), t.head, t.rel});
    }

    std::vector<RankResult> results(2 * split.size());
    constexpr std::size_t kChunk = 64;
    auto run = [&](const std::vector<PendingQuery>& queries, bool forward_task) {
        const std::size_t chunks = (queries.size() + kChunk - 1) / kChunk;
        parallel_for(chunks, [&](std::size_t clo, std::size_t chi) {
            for (std::size_t c = clo; c < chi; ++c) {
                const std::size_t lo = c * kChunk;
                const std::size_t hi = std::min(queries.size(), lo + kChunk);
                std::vector<kg::EntityId> subjects;
                std::vector<kg::RelationId> rels;
                for (std::size_t q = lo; q < hi; ++q) {
                    subjects.push_back(queries[q].subject);
                    rels.push_back(queries[q].relation);
                }
                const Tensor raw = model.eval_scores(tables, subjects, rels, forward_task);
                for (std::size_t q = lo; q < hi; ++q) {
                    const PendingQuery& pq = queries[q];
                    Rng rng(derive_seed(master_seed, pq.index));
                    std::span<const double> row(raw.data() + (q - lo) * model.num_entities(),
                                                model.num_entities());
                    const std::size_t rank =
                        filtered_rank(row, pq.target, filters.answers(pq.subject, pq.relation), rng);
                    results[pq.index] =
                        RankResult{rank, forward_task, pq.original,
                                   categories[static_cast<std::size_t>(pq.original)].category};
                }
            }
        });
    };
    run(fwd, true);
    run(bwd, false);
    return results;
}

TrainOutput train_model(Model& model, const kg::Dataset& ds, const TrainConfig& cfg,
                        const std::string& config_text, std::ostream* log) {
    cfg.validate();
    if (ds.graph.valid.empty()) throw DataError("train: validation split is empty");

    const kg::NeighborIndex index = kg::build_neighbor_index(ds.graph);
    const EdgeLists edges = build_edge_lists(ds.graph, index);
    const kg::UncertaintyTable uncertainty = kg::uncertainty_counts(ds.graph);
    const kg::RelationCategoryMap categories = kg::categorize_relations(ds.graph);
    const std::vector<Query> queries = build_train_queries(ds.graph);
    const FilterSets filters(ds.graph);

    std::vector<Tensor*> params = model.parameters();
    Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8}, params);

    TrainOutput out;
    double best_mrr = -1.0;
    std::uint32_t best_epoch = 0;
    std::vector<std::pair<std::string, Tensor>> best_params;
    std::size_t stale_evals = 0;
    std::uint64_t global_step = 0;

    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, 0xE90C), epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            Tape tape;
            BoundParams bound = model.bind(&tape);
            Model::Forward fwd = model.forward_tables(bound, edges);
            const std::uint64_t step_seed = derive_seed(derive_seed(cfg.seed, 0x57E9), global_step);
            Var loss = model.batch_loss(bound, fwd, queries, order, lo, hi, uncertainty, step_seed);
            const double loss_value = loss.val().scalar_value();
            if (!std::isfinite(loss_value))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batches));
            tape.backward(loss);
            std::vector<const Tensor*> grads;
            grads.reserve(model.parameter_names().size());
            for (const std::string& name : model.parameter_names())
                grads.push_back(&tape.grad(bound.at(name)));
            adam.step(grads);
            loss_sum += loss_value;
            ++batches;
            ++global_step;
        }
        const double epoch_loss = loss_sum / static_cast<double>(batches);

        const bool do_eval = epoch % cfg.eval_interval == 0 || epoch == cfg.max_epochs;
        if (!do_eval) continue;

        const EvalTables tables = model.eval_tables(edges);
        const std::vector<RankResult> ranks = evaluate_split(
            model, tables, ds.graph.valid, filters, categories, derive_seed(cfg.seed, 0xEA1));
        std::vector<std::size_t> plain;
        plain.reserve(ranks.size());
        for (const RankResult& r : ranks) plain.push_back(r.rank);
        const double valid_mrr = compute_metrics(plain).mrr;
        out.history.push_back(HistoryRecord{epoch, epoch_loss, valid_mrr});
        if (log)
            (*log) << "epoch " << epoch << "\tloss " << epoch_loss << "\tvalid_mrr " << valid_mrr
                   << "\n";

        if (valid_mrr > best_mrr) {
            best_mrr = valid_mrr;
            best_epoch = static_cast<std::uint32_t>(epoch);
            best_params.clear();
            for (const std::string& name : model.parameter_names())
                best_params.emplace_back(name, model.param(name));
            stale_evals = 0;
        } else if (++stale_evals >= cfg.patience) {
            if (log) (*log) << "early stop: no improvement in " << stale_evals << " evaluations\n";
            break;
        }
    }

    out.best.version = 1;
    out.best.vocab_digest = ds.vocab.digest();
    out.best.best_valid_mrr = best_mrr;
    out.best.epoch = best_epoch;
    out.best.config_text = config_text;
    out.best.params = std::move(best_params);
    return out;
}

}  // namespace dsmt
