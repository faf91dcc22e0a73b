#include "dsmt/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace dsmt {

namespace {

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError(key + ": cannot parse number '" + value + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError(key + ": cannot parse integer '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

struct KeyDef {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define STR_KEY(field)                                                     \
    KeyDef{#field, [](RunConfig& c, const std::string& v) { c.field = v; }, \
           [](const RunConfig& c) { return c.field; }}
#define SIZE_KEY(field)                                            \
    KeyDef{#field,                                                 \
           [](RunConfig& c, const std::string& v) {                \
               c.field = static_cast<std::size_t>(parse_u64(#field, v)); \
           },                                                      \
           [](const RunConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(field)                                                            \
    KeyDef{#field, [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
           [](const RunConfig& c) { return format_double(c.field); }}

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> keys = {
        STR_KEY(train_path),
        STR_KEY(valid_path),
        STR_KEY(test_path),
        STR_KEY(out_dir),
        STR_KEY(checkpoint_path),
        STR_KEY(attention_query_path),
        KeyDef{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
               [](const RunConfig& c) { return std::to_string(c.seed); }},
        SIZE_KEY(threads),
        SIZE_KEY(embed_init_dim),
        SIZE_KEY(embed_dim),
        STR_KEY(composition),
        STR_KEY(encoder_activation),
        KeyDef{"mean_aggregation",
               [](RunConfig& c, const std::string& v) {
                   c.mean_aggregation = parse_bool("mean_aggregation", v);
               },
               [](const RunConfig& c) { return c.mean_aggregation ? "true" : "false"; }},
        SIZE_KEY(gcn_layers),
        STR_KEY(attention_mode),
        SIZE_KEY(attention_heads),
        SIZE_KEY(attention_dim),
        SIZE_KEY(reshape_h),
        SIZE_KEY(reshape_w),
        SIZE_KEY(conv_filters),
        SIZE_KEY(conv_kernel_h),
        SIZE_KEY(conv_kernel_w),
        SIZE_KEY(conv_padding),
        DOUBLE_KEY(dropout_input),
        DOUBLE_KEY(dropout_feature),
        DOUBLE_KEY(dropout_hidden),
        DOUBLE_KEY(label_smoothing),
        DOUBLE_KEY(uncertainty_k),
        DOUBLE_KEY(lambda1),
        DOUBLE_KEY(lambda2),
        DOUBLE_KEY(learning_rate),
        SIZE_KEY(batch_size),
        SIZE_KEY(max_epochs),
        SIZE_KEY(eval_interval),
        SIZE_KEY(patience),
    };
    return keys;
}

#undef STR_KEY
#undef SIZE_KEY
#undef DOUBLE_KEY

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const KeyDef& def : key_table()) {
        if (key == def.name) {
            def.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key: " + key);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string config_text(const RunConfig& cfg) {
    std::ostringstream os;
    for (const KeyDef& def : key_table()) os << def.name << " = " << def.get(cfg) << "\n";
    return os.str();
}

void apply_ablation(RunConfig& cfg, const std::string& name) {
    if (name == "no-gc") {
        cfg.lambda1 = 0.0;
        cfg.lambda2 = 0.0;
    } else if (name == "no-mhsa") {
        cfg.attention_mode = "uniform";
    } else if (name == "no-tu") {
        cfg.uncertainty_k = 0.0;
    } else {
        throw ConfigError("unknown ablation: " + name + " (expected no-gc, no-mhsa or no-tu)");
    }
}

ModelConfig model_config(const RunConfig& cfg) {
    ModelConfig mc;
    mc.encoder.input_dim = cfg.embed_init_dim;
    mc.encoder.output_dim = cfg.embed_dim;
    if (cfg.composition == "corr")
        mc.encoder.composition = Composition::Corr;
    else if (cfg.composition == "mult")
        mc.encoder.composition = Composition::Mult;
    else
        throw ConfigError("composition: expected corr or mult, got '" + cfg.composition + "'");
    if (cfg.encoder_activation == "tanh")
        mc.encoder.activation = EncoderActivation::Tanh;
    else if (cfg.encoder_activation == "identity")
        mc.encoder.activation = EncoderActivation::Identity;
    else
        throw ConfigError("encoder_activation: expected tanh or identity, got '" +
                          cfg.encoder_activation + "'");
    mc.encoder.mean_aggregation = cfg.mean_aggregation;
    mc.encoder.layers = cfg.gcn_layers;

    mc.attention.embed_dim = cfg.embed_dim;
    mc.attention.head_dim = cfg.attention_dim;
    mc.attention.heads = cfg.attention_heads;
    if (cfg.attention_mode == "mhsa")
        mc.attention.mode = AttentionMode::MHSA;
    else if (cfg.attention_mode == "mhaa")
        mc.attention.mode = AttentionMode::MHAA;
    else if (cfg.attention_mode == "mhpa")
        mc.attention.mode = AttentionMode::MHPA;
    else if (cfg.attention_mode == "uniform")
        mc.attention.mode = AttentionMode::Uniform;
    else
        throw ConfigError("attention_mode: expected mhsa/mhaa/mhpa/uniform, got '" +
                          cfg.attention_mode + "'");

    mc.decoder.embed_dim = cfg.embed_dim;
    mc.decoder.reshape_h = cfg.reshape_h;
    mc.decoder.reshape_w = cfg.reshape_w;
    mc.decoder.filters = cfg.conv_filters;
    mc.decoder.kernel_h = cfg.conv_kernel_h;
    mc.decoder.kernel_w = cfg.conv_kernel_w;
    mc.decoder.padding = cfg.conv_padding;
    mc.decoder.dropout_input = cfg.dropout_input;
    mc.decoder.dropout_feature = cfg.dropout_feature;
    mc.decoder.dropout_hidden = cfg.dropout_hidden;

    mc.loss.label_smoothing = cfg.label_smoothing;
    mc.loss.uncertainty_exponent = cfg.uncertainty_k;
    mc.loss.lambda1 = cfg.lambda1;
    mc.loss.lambda2 = cfg.lambda2;

    if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 1.0)
        throw ConfigError("label_smoothing must lie in [0,1)");
    if (cfg.uncertainty_k < 0.0 || cfg.uncertainty_k > 1.0)
        throw ConfigError("uncertainty_k must lie in [0,1]");
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw ConfigError("lambda1/lambda2 must be >= 0");
    try {
        mc.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    return mc;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.eval_interval = cfg.eval_interval;
    tc.patience = cfg.patience;
    tc.seed = cfg.seed;
    try {
        tc.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    return tc;
}

std::string resolved_checkpoint_path(const RunConfig& cfg) {
    return cfg.checkpoint_path.empty() ? cfg.out_dir + "/model.ckpt" : cfg.checkpoint_path;
}

}  // namespace dsmt
