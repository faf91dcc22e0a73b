#pragma once

#include <cstdint>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter group.
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<Tensor*>& params);

    // One update; grads aligned with the registered parameters.
    void step(const std::vector<const Tensor*>& grads);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t t_ = 0;
};

}  // namespace dsmt
