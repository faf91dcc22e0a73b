#pragma once

#include <stdexcept>
#include <string>

#include "dsmt/model.hpp"
#include "dsmt/train.hpp"

namespace dsmt {

// Bad keys or values in a run configuration (maps to the usage exit code).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every tunable of the pipeline; one `key = value` line each, `#` comments.
struct RunConfig {
    // data
    std::string train_path;
    std::string valid_path;
    std::string test_path;
    std::string out_dir = "out";
    std::string checkpoint_path;  // empty -> <out_dir>/model.ckpt
    std::string attention_query_path;
    // run
    std::uint64_t seed = 42;
    std::size_t threads = 0;  // 0 = hardware concurrency
    // encoder
    std::size_t embed_init_dim = 100;  // d_i
    std::size_t embed_dim = 200;       // d
    std::string composition = "corr";
    std::string encoder_activation = "tanh";
    bool mean_aggregation = false;
    std::size_t gcn_layers = 1;
    // attention
    std::string attention_mode = "mhsa";
    std::size_t attention_heads = 2;
    std::size_t attention_dim = 100;  // d_a
    // decoder
    std::size_t reshape_h = 10;
    std::size_t reshape_w = 20;
    std::size_t conv_filters = 32;
    std::size_t conv_kernel_h = 3;
    std::size_t conv_kernel_w = 3;
    std::size_t conv_padding = 0;
    double dropout_input = 0.2;
    double dropout_feature = 0.2;
    double dropout_hidden = 0.3;
    // loss
    double label_smoothing = 0.2;
    double uncertainty_k = 0.2;
    double lambda1 = 0.01;
    double lambda2 = 0.01;
    // training
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 500;
    std::size_t eval_interval = 5;
    std::size_t patience = 10;
};

// ConfigError on unknown keys or unparsable values.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Canonical echo; parsing it back reproduces the config exactly.
std::string config_text(const RunConfig& cfg);

// no-gc | no-mhsa | no-tu
void apply_ablation(RunConfig& cfg, const std::string& name);

ModelConfig model_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
std::string resolved_checkpoint_path(const RunConfig& cfg);

}  // namespace dsmt
