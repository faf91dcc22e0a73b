#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dsmt/attention.hpp"
#include "dsmt/decoder.hpp"
#include "dsmt/encoder.hpp"
#include "dsmt/kg_data.hpp"

namespace dsmt {

struct ModelConfig {
    EncoderConfig encoder;
    AttentionConfig attention;
    DecoderConfig decoder;
    LossConfig loss;

    void validate() const;
};

// One 1-N training query; every entity is scored at once and `positives`
// lists the distinct train answers (the multi-hot label row).
struct Query {
    kg::EntityId subject;
    kg::RelationId relation;  // over R ∪ R⁻¹
    bool forward;
    std::vector<kg::EntityId> positives;
};

// All model parameters bound onto one tape (or as constants when null).
struct BoundParams {
    std::unordered_map<std::string, Var> by_name;
    const Var& at(const std::string& name) const;
};

struct TaskEmbeddingVars {
    Var task_forward;   // E^F
    Var task_backward;  // E^B
    Var attn_forward;   // A^F rows (n,3)
    Var attn_backward;  // A^B rows
};

// Evaluation-mode snapshot of every table needed for scoring and exports.
struct EvalTables {
    Tensor dir_forward, dir_self, dir_backward;
    Tensor task_forward, task_backward;
    Tensor attn_forward, attn_backward;
    Tensor relations;
};

class Model {
public:
    Model(ModelConfig cfg, std::size_t num_entities, std::size_t num_relations,
          std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::size_t num_entities() const { return num_entities_; }
    std::size_t num_relations() const { return num_relations_; }
    std::size_t num_aug_relations() const { return 2 * num_relations_ + 1; }

    const std::vector<std::string>& parameter_names() const { return names_; }
    std::vector<Tensor*> parameters();
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;

    // Replace parameters from (name, tensor) pairs; names and shapes must
    // match exactly.
    void load_parameters(const std::vector<std::pair<std::string, Tensor>>& params);

    BoundParams bind(Tape* tape) const;

    struct Forward {
        DirectionalEmbeddings dir;
        TaskEmbeddingVars tasks;
    };
    Forward forward_tables(const BoundParams& bound, const EdgeLists& edges) const;

    // Mean TU loss over queries[order[lo..hi)] plus the geometric
    // constraint term.
    Var batch_loss(const BoundParams& bound, const Forward& fwd, const std::vector<Query>& queries,
                   const std::vector<std::size_t>& order, std::size_t lo, std::size_t hi,
                   const kg::UncertaintyTable& uncertainty, std::uint64_t step_seed) const;

    EvalTables eval_tables(const EdgeLists& edges) const;

    // Raw scores for same-direction queries in evaluation mode: (B,|E|).
    Tensor eval_scores(const EvalTables& tables, const std::vector<kg::EntityId>& subjects,
                       const std::vector<kg::RelationId>& relations, bool forward_task) const;

    // Sigmoid probabilities for one query against its own task table.
    Tensor directional_score(const EvalTables& tables, kg::EntityId subject,
                             kg::RelationId relation, bool forward_task) const;

private:
    TaskAttentionVars task_attention(const BoundParams& bound, bool forward_task) const;
    DecoderVars decoder_vars(const BoundParams& bound) const;

    ModelConfig cfg_;
    std::size_t num_entities_;
    std::size_t num_relations_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> store_;
};

}  // namespace dsmt
