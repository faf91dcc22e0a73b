#include "dsmt/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dsmt/analysis.hpp"
#include "dsmt/train.hpp"

namespace dsmt {

namespace {

namespace fs = std::filesystem;

void ensure_out_dir(const RunConfig& cfg) {
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
}

kg::Dataset load_from_config(const RunConfig& cfg) {
    if (cfg.train_path.empty() || cfg.valid_path.empty() || cfg.test_path.empty())
        throw ConfigError("train_path, valid_path and test_path must all be set");
    return kg::load_dataset(cfg.train_path, cfg.valid_path, cfg.test_path);
}

std::string metric_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write file: " + path);
    os << content;
}

std::string metrics_text(const MetricsReport& report) {
    std::ostringstream os;
    os << "MRR\tH@1\tH@3\tH@10\n";
    os << metric_str(report.overall.mrr) << "\t" << metric_str(report.overall.hits1) << "\t"
       << metric_str(report.overall.hits3) << "\t" << metric_str(report.overall.hits10) << "\n";
    return os.str();
}

std::string subtasks_text(const MetricsReport& report) {
    std::ostringstream os;
    os << "direction\tcategory\tMRR\tH@10\tqueries\n";
    for (int dir = 0; dir < 2; ++dir)
        for (int cat = 0; cat < 4; ++cat) {
            const Metrics& m = report.cells[dir][cat];
            os << (dir == 0 ? "forward" : "backward") << "\t"
               << kg::category_name(static_cast<kg::RelationCategory>(cat)) << "\t"
               << metric_str(m.mrr) << "\t" << metric_str(m.hits10) << "\t" << m.count << "\n";
        }
    return os.str();
}

// Rebuild the model a checkpoint was trained with; dataset paths and output
// locations come from the live config, everything structural from the
// checkpoint's own config snapshot.
struct LoadedModel {
    RunConfig run;
    Model model;
};

LoadedModel model_from_checkpoint(const Checkpoint& ckpt, const kg::Dataset& ds) {
    RunConfig stored = parse_config_text(ckpt.config_text, "<checkpoint config>");
    Model model(model_config(stored), ds.graph.num_entities, ds.graph.num_relations, stored.seed);
    model.load_parameters(ckpt.params);
    return LoadedModel{std::move(stored), std::move(model)};
}

}  // namespace

void cmd_prepare(const RunConfig& cfg, std::ostream& out) {
    const kg::Dataset ds = load_from_config(cfg);
    std::ostringstream report;
    report << "statistic\tvalue\n";
    report << "entities\t" << ds.graph.num_entities << "\n";
    report << "relations\t" << ds.graph.num_relations << "\n";
    report << "train_triples\t" << ds.graph.train.size() << "\n";
    report << "valid_triples\t" << ds.graph.valid.size() << "\n";
    report << "test_triples\t" << ds.graph.test.size() << "\n";
    out << report.str();
    ensure_out_dir(cfg);
    kg::save_graph_cache(cfg.out_dir + "/graph.cache", ds);
    write_file(cfg.out_dir + "/prepare_stats.tsv", report.str());
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    const kg::Dataset ds = load_from_config(cfg);
    set_thread_count(cfg.threads);
    const std::string effective = config_text(cfg);
    ensure_out_dir(cfg);
    write_file(cfg.out_dir + "/config.effective", effective);

    Model model(model_config(cfg), ds.graph.num_entities, ds.graph.num_relations, cfg.seed);
    TrainOutput result = train_model(model, ds, train_config(cfg), effective, &out);

    save_checkpoint(resolved_checkpoint_path(cfg), result.best);
    std::ostringstream history;
    for (const HistoryRecord& h : result.history)
        history << h.epoch << "\t" << format_double(h.train_loss) << "\t"
                << format_double(h.valid_mrr) << "\n";
    write_file(cfg.out_dir + "/history.tsv", history.str());
    out << "best_valid_mrr\t" << metric_str(result.best.best_valid_mrr) << "\tepoch\t"
        << result.best.epoch << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const kg::Dataset ds = load_from_config(cfg);
    set_thread_count(cfg.threads);
    const Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg), ds.vocab.digest());
    LoadedModel lm = model_from_checkpoint(ckpt, ds);

    const kg::NeighborIndex index = kg::build_neighbor_index(ds.graph);
    const EdgeLists edges = build_edge_lists(ds.graph, index);
    const FilterSets filters(ds.graph);
    const kg::RelationCategoryMap categories = kg::categorize_relations(ds.graph);
    const EvalTables tables = lm.model.eval_tables(edges);
    const std::vector<RankResult> ranks = evaluate_split(lm.model, tables, ds.graph.test, filters,
                                                         categories, derive_seed(cfg.seed, 0xEA1));
    const MetricsReport report = subtask_report(ranks);

    const std::string metrics = metrics_text(report);
    const std::string subtasks = subtasks_text(report);
    out << metrics << subtasks;
    ensure_out_dir(cfg);
    write_file(cfg.out_dir + "/eval_metrics.tsv", metrics);
    write_file(cfg.out_dir + "/eval_subtasks.tsv", subtasks);
}

void cmd_geometry(const RunConfig& cfg, std::ostream& out) {
    const kg::Dataset ds = load_from_config(cfg);
    set_thread_count(cfg.threads);
    const Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg), ds.vocab.digest());
    LoadedModel lm = model_from_checkpoint(ckpt, ds);
    const kg::NeighborIndex index = kg::build_neighbor_index(ds.graph);
    const EvalTables tables = lm.model.eval_tables(build_edge_lists(ds.graph, index));

    ensure_out_dir(cfg);
    const struct {
        const char* name;
        const Tensor* table;
    } jobs[] = {{"ef", &tables.dir_forward}, {"eb", &tables.dir_backward}};
    for (const auto& job : jobs) {
        const GeometryExport g = geometry_export(*job.table);
        if (g.rank_deficient)
            std::cerr << "warning: " << job.name
                      << " covariance has rank < 2; missing projection axes are zero\n";
        std::ostringstream body;
        write_geometry(body, g);
        write_file(cfg.out_dir + std::string("/geometry_") + job.name + ".tsv", body.str());
        out << job.name << "_conicity\t" << format_double(g.conicity) << "\n";
    }
}

void cmd_attention(const RunConfig& cfg, std::ostream& out) {
    if (cfg.attention_query_path.empty())
        throw ConfigError("attention_query_path must point at a file of entity\\trelation pairs");
    const kg::Dataset ds = load_from_config(cfg);
    set_thread_count(cfg.threads);
    const Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg), ds.vocab.digest());
    LoadedModel lm = model_from_checkpoint(ckpt, ds);
    const kg::NeighborIndex index = kg::build_neighbor_index(ds.graph);
    const EvalTables tables = lm.model.eval_tables(build_edge_lists(ds.graph, index));

    std::ifstream qf(cfg.attention_query_path);
    if (!qf) throw DataError("cannot open query file: " + cfg.attention_query_path);
    std::ostringstream body;
    body << "entity\ttask\ta_forward\ta_self\ta_backward\trenorm_forward\trenorm_backward\n";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(qf, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(cfg.attention_query_path + ":" + std::to_string(lineno) +
                            ": expected entity\\trelation");
        const std::string entity = line.substr(0, tab);
        std::string relation = line.substr(tab + 1);
        bool forward_task = true;
        if (relation.size() > 3 && relation.substr(relation.size() - 3) == "^-1") {
            forward_task = false;
            relation = relation.substr(0, relation.size() - 3);
        }
        const kg::EntityId eid = ds.vocab.entity_id(entity);
        ds.vocab.relation_id(relation);  // existence check, error names the relation
        const Tensor& rows = forward_task ? tables.attn_forward : tables.attn_backward;
        const double af = rows(static_cast<std::size_t>(eid), 0);
        const double al = rows(static_cast<std::size_t>(eid), 1);
        const double ab = rows(static_cast<std::size_t>(eid), 2);
        const auto two = two_way_renormalize(af, ab);
        body << entity << "\t" << (forward_task ? "F" : "B") << "\t" << format_double(af) << "\t"
             << format_double(al) << "\t" << format_double(ab) << "\t" << format_double(two[0])
             << "\t" << format_double(two[1]) << "\n";
    }
    out << body.str();
    ensure_out_dir(cfg);
    write_file(cfg.out_dir + "/attention_rows.tsv", body.str());
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"DsMtGCN knowledge graph completion toolkit"};
    app.require_subcommand(1);

    struct SubArgs {
        std::string config_path;
        std::string ablation;
        std::int64_t seed = -1;
        bool seed_set = false;
    };
    struct SubCmd {
        const char* name;
        const char* desc;
        void (*fn)(const RunConfig&, std::ostream&);
    };
    const SubCmd commands[] = {
        {"prepare", "load triple files, print statistics, write the graph cache", cmd_prepare},
        {"train", "train a model and write checkpoint + history", cmd_train},
        {"eval", "filtered-rank evaluation of a checkpoint on the test split", cmd_eval},
        {"geometry", "export conicity/cosine/PCA data for E^f and E^b", cmd_geometry},
        {"attention", "export attention weight rows for (entity, relation) queries",
         cmd_attention},
    };

    std::vector<SubArgs> args(std::size(commands));
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].name, commands[i].desc);
        sub->add_option("--config", args[i].config_path, "run configuration file")->required();
        sub->add_option("--ablation", args[i].ablation, "no-gc | no-mhsa | no-tu");
        sub->add_option("--seed", args[i].seed, "override the run seed")
            ->check(CLI::NonNegativeNumber);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        try {
            RunConfig cfg = parse_config_file(args[i].config_path);
            if (subs[i]->count("--seed") > 0) cfg.seed = static_cast<std::uint64_t>(args[i].seed);
            if (!args[i].ablation.empty()) apply_ablation(cfg, args[i].ablation);
            commands[i].fn(cfg, std::cout);
            return 0;
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 1;
        } catch (const DataError& e) {
            std::cerr << "data error: " << e.what() << "\n";
            return 2;
        } catch (const NumericError& e) {
            std::cerr << "numeric error: " << e.what() << "\n";
            return 3;
        } catch (const ContractError& e) {
            std::cerr << "internal error: " << e.what() << "\n";
            return 3;
        }
    }
    std::cerr << "no subcommand given\n";
    return 1;
}

}  // namespace dsmt
