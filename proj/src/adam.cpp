#include "dsmt/adam.hpp"

#include <cmath>

#include "dsmt/common.hpp"

namespace dsmt {

Adam::Adam(AdamConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg), params_(params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params_) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void Adam::step(const std::vector<const Tensor*>& grads) {
    if (grads.size() != params_.size())
        throw ContractError("adam: got " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(params_.size()) + " parameters");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& theta = *params_[p];
        const Tensor& g = *grads[p];
        if (!theta.same_shape(g))
            throw ContractError("adam: gradient shape " + shape_str(g.shape()) +
                                " does not match parameter " + shape_str(theta.shape()));
        double* pm = m_[p].data();
        double* pv = v_[p].data();
        double* pt = theta.data();
        const double* pg = g.data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            pm[i] = cfg_.beta1 * pm[i] + (1.0 - cfg_.beta1) * pg[i];
            pv[i] = cfg_.beta2 * pv[i] + (1.0 - cfg_.beta2) * pg[i] * pg[i];
            const double mhat = pm[i] / bc1;
            const double vhat = pv[i] / bc2;
            pt[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace dsmt
