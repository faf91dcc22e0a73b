#pragma once

#include <iosfwd>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dsmt/checkpoint.hpp"
#include "dsmt/model.hpp"
#include "dsmt/rng.hpp"

namespace dsmt {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 500;
    std::size_t eval_interval = 5;
    std::size_t patience = 10;  // evaluations without improvement
    std::uint64_t seed = 42;

    void validate() const;
};

struct HistoryRecord {
    std::size_t epoch;
    double train_loss;
    double valid_mrr;
};

struct RankResult {
    std::size_t rank;  // filtered rank, 1-based
    bool forward;
    kg::RelationId relation;  // original relation id
    kg::RelationCategory category;
};

struct Metrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    std::size_t count = 0;
};

Metrics compute_metrics(const std::vector<std::size_t>& ranks);

struct MetricsReport {
    Metrics overall;
    Metrics cells[2][4];  // [forward=0, backward=1][RelationCategory]
};

MetricsReport subtask_report(const std::vector<RankResult>& results);

// Filtered rank under the random protocol: known positives other than the
// target leave contention; ties with the target resolve uniformly.
std::size_t filtered_rank(std::span<const double> scores, kg::EntityId target,
                          const std::unordered_set<kg::EntityId>& known_positives, Rng& rng);

// Groups train triples into 1-N queries for both directions; deterministic
// (subject, relation)-sorted order.
std::vector<Query> build_train_queries(const kg::AugmentedGraph& graph);

// Known answers over train∪valid∪test per (subject, relation over R∪R⁻¹).
class FilterSets {
public:
    explicit FilterSets(const kg::AugmentedGraph& graph);
    const std::unordered_set<kg::EntityId>& answers(kg::EntityId subject,
                                                    kg::RelationId rel) const;

private:
    std::unordered_map<std::uint64_t, std::unordered_set<kg::EntityId>> map_;
    static const std::unordered_set<kg::EntityId> kEmpty;
};

// Every triple yields one forward and one backward query; result[2i] is the
// forward rank of triple i. Tie RNG derives from (master_seed, query index)
// so parallel evaluation order cannot change results.
std::vector<RankResult> evaluate_split(const Model& model, const EvalTables& tables,
                                       const std::vector<kg::Triple>& split,
                                       const FilterSets& filters,
                                       const kg::RelationCategoryMap& categories,
                                       std::uint64_t master_seed);

struct TrainOutput {
    Checkpoint best;
    std::vector<HistoryRecord> history;
};

// Full loop: shuffled 1-N batches, Adam, periodic validation MRR,
// best-checkpoint retention, early stop on patience.
TrainOutput train_model(Model& model, const kg::Dataset& ds, const TrainConfig& cfg,
                        const std::string& config_text, std::ostream* log);

}  // namespace dsmt
