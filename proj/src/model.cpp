#include "dsmt/model.hpp"

#include <cmath>

#include "dsmt/rng.hpp"

namespace dsmt {

void ModelConfig::validate() const {
    if (encoder.input_dim == 0 || encoder.output_dim == 0)
        throw ContractError("model: encoder dims must be positive");
    if (encoder.layers == 0) throw ContractError("model: need at least one encoder layer");
    if (attention.embed_dim != encoder.output_dim || decoder.embed_dim != encoder.output_dim)
        throw ContractError("model: embed_dim mismatch across encoder/attention/decoder");
    if (attention.heads == 0 || attention.head_dim == 0)
        throw ContractError("model: attention heads and head_dim must be positive");
    decoder.validate();
}

const Var& BoundParams::at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("unbound parameter: " + name);
    return it->second;
}

namespace {

Tensor xavier(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    Tensor t(shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(-limit, limit);
    return t;
}

std::string layer_name(std::size_t l, const char* suffix) {
    return "encoder.l" + std::to_string(l) + "." + suffix;
}

std::string attn_name(bool forward_task, std::size_t head, const char* suffix) {
    return std::string("attention.") + (forward_task ? "F" : "B") + ".h" + std::to_string(head) +
           "." + suffix;
}

}  // namespace

Model::Model(ModelConfig cfg, std::size_t num_entities, std::size_t num_relations,
             std::uint64_t seed)
    : cfg_(cfg), num_entities_(num_entities), num_relations_(num_relations) {
    cfg_.validate();
    if (num_entities_ == 0 || num_relations_ == 0)
        throw ContractError("model: need at least one entity and one relation");

    const std::size_t di = cfg_.encoder.input_dim;
    const std::size_t d = cfg_.encoder.output_dim;
    const std::size_t nr_aug = num_aug_relations();

    auto put = [&](const std::string& name, Tensor t) {
        names_.push_back(name);
        store_.emplace(name, std::move(t));
    };
    std::size_t pix = 0;
    auto next_seed = [&] { return derive_seed(seed, pix++); };

    put("entity_features", xavier(Shape{num_entities_, di}, di, di, next_seed()));
    put("relation_features", xavier(Shape{nr_aug, di}, di, di, next_seed()));

    for (std::size_t l = 0; l < cfg_.encoder.layers; ++l) {
        const std::size_t din = l == 0 ? di : d;
        put(layer_name(l, "w_forward"), xavier(Shape{din, d}, din, d, next_seed()));
        put(layer_name(l, "w_backward"), xavier(Shape{din, d}, din, d, next_seed()));
        put(layer_name(l, "w_self"), xavier(Shape{din, d}, din, d, next_seed()));
        put(layer_name(l, "w_rel"), xavier(Shape{din, d}, din, d, next_seed()));
    }

    for (bool fwd : {true, false}) {
        for (std::size_t h = 0; h < cfg_.attention.heads; ++h) {
            switch (cfg_.attention.mode) {
                case AttentionMode::MHSA:
                    put(attn_name(fwd, h, "w_query"),
                        xavier(Shape{d, cfg_.attention.head_dim}, d, cfg_.attention.head_dim,
                               next_seed()));
                    put(attn_name(fwd, h, "w_key"),
                        xavier(Shape{d, cfg_.attention.head_dim}, d, cfg_.attention.head_dim,
                               next_seed()));
                    break;
                case AttentionMode::MHAA:
                    put(attn_name(fwd, h, "logits"), xavier(Shape{3}, 3, 3, next_seed()));
                    break;
                case AttentionMode::MHPA:
                    put(attn_name(fwd, h, "proj"), xavier(Shape{3 * d, 3}, 3 * d, 3, next_seed()));
                    break;
                case AttentionMode::Uniform:
                    break;
            }
        }
    }

    const std::size_t kin = cfg_.decoder.kernel_h * cfg_.decoder.kernel_w;
    put("decoder.filters",
        xavier(Shape{cfg_.decoder.filters, 1, cfg_.decoder.kernel_h, cfg_.decoder.kernel_w}, kin,
               cfg_.decoder.filters * kin, next_seed()));
    put("decoder.proj", xavier(Shape{cfg_.decoder.flat_dim(), d}, cfg_.decoder.flat_dim(), d,
                               next_seed()));
    put("decoder.entity_bias", Tensor(Shape{num_entities_}));
}

std::vector<Tensor*> Model::parameters() {
    std::vector<Tensor*> out;
    out.reserve(names_.size());
    for (const auto& n : names_) out.push_back(&store_.at(n));
    return out;
}

Tensor& Model::param(const std::string& name) {
    auto it = store_.find(name);
    if (it == store_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& Model::param(const std::string& name) const {
    auto it = store_.find(name);
    if (it == store_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

void Model::load_parameters(const std::vector<std::pair<std::string, Tensor>>& params) {
    if (params.size() != names_.size())
        throw DataError("parameter count mismatch: model has " + std::to_string(names_.size()) +
                        ", checkpoint has " + std::to_string(params.size()));
    for (const auto& [name, tensor] : params) {
        Tensor& dst = param(name);
        if (!dst.same_shape(tensor))
            throw DataError("parameter " + name + " shape " + shape_str(tensor.shape()) +
                            " does not match model " + shape_str(dst.shape()));
        dst = tensor;
    }
}

BoundParams Model::bind(Tape* tape) const {
    BoundParams bound;
    for (const auto& name : names_) {
        const Tensor& t = store_.at(name);
        bound.by_name.emplace(name, tape ? tape->leaf(t) : constant_view(t));
    }
    return bound;
}

TaskAttentionVars Model::task_attention(const BoundParams& bound, bool forward_task) const {
    TaskAttentionVars vars;
    for (std::size_t h = 0; h < cfg_.attention.heads; ++h) {
        switch (cfg_.attention.mode) {
            case AttentionMode::MHSA:
                vars.w_query.push_back(bound.at(attn_name(forward_task, h, "w_query")));
                vars.w_key.push_back(bound.at(attn_name(forward_task, h, "w_key")));
                break;
            case AttentionMode::MHAA:
                vars.logits.push_back(bound.at(attn_name(forward_task, h, "logits")));
                break;
            case AttentionMode::MHPA:
                vars.proj.push_back(bound.at(attn_name(forward_task, h, "proj")));
                break;
            case AttentionMode::Uniform:
                break;
        }
    }
    return vars;
}

DecoderVars Model::decoder_vars(const BoundParams& bound) const {
    return DecoderVars{bound.at("decoder.filters"), bound.at("decoder.proj"),
                       bound.at("decoder.entity_bias")};
}

Model::Forward Model::forward_tables(const BoundParams& bound, const EdgeLists& edges) const {
    std::vector<EncoderLayerVars> layers;
    for (std::size_t l = 0; l < cfg_.encoder.layers; ++l)
        layers.push_back(EncoderLayerVars{bound.at(layer_name(l, "w_forward")),
                                          bound.at(layer_name(l, "w_backward")),
                                          bound.at(layer_name(l, "w_self")),
                                          bound.at(layer_name(l, "w_rel"))});
    Forward fwd;
    fwd.dir = message_pass(bound.at("entity_features"), bound.at("relation_features"), edges,
                           layers, cfg_.encoder);

    for (bool task_fwd : {true, false}) {
        TaskAttentionVars attn = task_attention(bound, task_fwd);
        Var weights = attention_weights_all(fwd.dir.forward, fwd.dir.self, fwd.dir.backward, attn,
                                            cfg_.attention);
        Var fused = fuse_rows(weights, fwd.dir.forward, fwd.dir.self, fwd.dir.backward);
        if (task_fwd) {
            fwd.tasks.attn_forward = weights;
            fwd.tasks.task_forward = fused;
        } else {
            fwd.tasks.attn_backward = weights;
            fwd.tasks.task_backward = fused;
        }
    }
    return fwd;
}

Var Model::batch_loss(const BoundParams& bound, const Forward& fwd,
                      const std::vector<Query>& queries, const std::vector<std::size_t>& order,
                      std::size_t lo, std::size_t hi, const kg::UncertaintyTable& uncertainty,
                      std::uint64_t step_seed) const {
    if (lo >= hi || hi > order.size())
        throw ContractError("batch_loss: bad query range [" + std::to_string(lo) + "," +
                            std::to_string(hi) + ")");
    std::vector<std::size_t> fwd_ix, bwd_ix;
    for (std::size_t i = lo; i < hi; ++i)
        (queries[order[i]].forward ? fwd_ix : bwd_ix).push_back(order[i]);

    const DecoderVars dec = decoder_vars(bound);
    auto subset_loss = [&](const std::vector<std::size_t>& ix, bool task_fwd,
                           std::uint64_t salt) -> Var {
        std::vector<std::int64_t> subj_idx, rel_idx;
        Tensor labels(Shape{ix.size(), num_entities_});
        std::vector<std::int32_t> u;
        for (std::size_t row = 0; row < ix.size(); ++row) {
            const Query& q = queries[ix[row]];
            if (q.positives.empty())
                throw ContractError("batch_loss: train query without positives");
            subj_idx.push_back(q.subject);
            rel_idx.push_back(q.relation);
            for (kg::EntityId t : q.positives) labels(row, static_cast<std::size_t>(t)) = 1.0;
            u.push_back(uncertainty.count(q.subject, q.relation));
        }
        const Var& table = task_fwd ? fwd.tasks.task_forward : fwd.tasks.task_backward;
        Var subj = gather_rows(table, subj_idx);
        Var rel = gather_rows(fwd.dir.relations, rel_idx);
        ScoreContext ctx{true, derive_seed(step_seed, salt)};
        Var raw = conve_scores(subj, rel, table, dec, cfg_.decoder, ctx);
        return tu_loss(raw, labels, u, cfg_.loss, num_entities_);
    };

    Var tu;
    if (!fwd_ix.empty() && !bwd_ix.empty()) {
        const double nf = static_cast<double>(fwd_ix.size());
        const double nb = static_cast<double>(bwd_ix.size());
        tu = add(scale(subset_loss(fwd_ix, true, 1), nf / (nf + nb)),
                 scale(subset_loss(bwd_ix, false, 2), nb / (nf + nb)));
    } else if (!fwd_ix.empty()) {
        tu = subset_loss(fwd_ix, true, 1);
    } else {
        tu = subset_loss(bwd_ix, false, 2);
    }
    Var gc = gc_loss(fwd.dir.forward, fwd.dir.backward, cfg_.loss);
    return total_loss(tu, gc);
}

EvalTables Model::eval_tables(const EdgeLists& edges) const {
    BoundParams bound = bind(nullptr);
    Forward fwd = forward_tables(bound, edges);
    EvalTables t;
    t.dir_forward = fwd.dir.forward.val();
    t.dir_self = fwd.dir.self.val();
    t.dir_backward = fwd.dir.backward.val();
    t.task_forward = fwd.tasks.task_forward.val();
    t.task_backward = fwd.tasks.task_backward.val();
    t.attn_forward = fwd.tasks.attn_forward.val();
    t.attn_backward = fwd.tasks.attn_backward.val();
    t.relations = fwd.dir.relations.val();
    return t;
}

Tensor Model::eval_scores(const EvalTables& tables, const std::vector<kg::EntityId>& subjects,
                          const std::vector<kg::RelationId>& relations, bool forward_task) const {
    if (subjects.size() != relations.size())
        throw ContractError("eval_scores: subject/relation count mismatch");
    const Tensor& table = forward_task ? tables.task_forward : tables.task_backward;
    std::vector<std::int64_t> subj_idx(subjects.begin(), subjects.end());
    std::vector<std::int64_t> rel_idx(relations.begin(), relations.end());
    Var tv = constant_view(table);
    Var subj = gather_rows(tv, subj_idx);
    Var rel = gather_rows(constant_view(tables.relations), rel_idx);
    DecoderVars dec{constant_view(param("decoder.filters")), constant_view(param("decoder.proj")),
                    constant_view(param("decoder.entity_bias"))};
    ScoreContext ctx{false, 0};
    return conve_scores(subj, rel, tv, dec, cfg_.decoder, ctx).val();
}

Tensor Model::directional_score(const EvalTables& tables, kg::EntityId subject,
                                kg::RelationId relation, bool forward_task) const {
    if (subject < 0 || static_cast<std::size_t>(subject) >= num_entities_)
        throw ContractError("directional_score: unknown entity id " + std::to_string(subject));
    if (relation < 0 || static_cast<std::size_t>(relation) >= num_aug_relations())
        throw ContractError("directional_score: unknown relation id " + std::to_string(relation));
    Tensor raw = eval_scores(tables, {subject}, {relation}, forward_task);
    Tensor probs(Shape{num_entities_});
    for (std::size_t i = 0; i < num_entities_; ++i) {
        const double s = raw(0, i);
        probs[i] = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
    }
    return probs;
}

}  // namespace dsmt
