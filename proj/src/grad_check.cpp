#include "dsmt/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dsmt/common.hpp"

namespace dsmt {

double finite_diff_check(const std::function<double()>& f, const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic, double h) {
    if (h <= 0.0) throw ContractError("finite_diff_check: step h must be > 0");
    if (params.size() != analytic.size())
        throw ContractError("finite_diff_check: parameter/gradient count mismatch");
    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        const Tensor& grad = *analytic[p];
        if (!theta.same_shape(grad))
            throw ContractError("finite_diff_check: gradient shape " + shape_str(grad.shape()) +
                                " does not match parameter " + shape_str(theta.shape()));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + h;
            const double fp = f();
            theta[i] = saved - h;
            const double fm = f();
            theta[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_diff_check: non-finite function value");
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(grad[i] - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace dsmt
