#pragma once

#include <functional>
#include <vector>

#include "dsmt/tensor.hpp"

namespace dsmt {

// Central finite-difference verification of analytic gradients.
//
// `f` re-evaluates the scalar function from the current contents of the
// parameter tensors. For each coordinate the numeric gradient is
// (f(x+h)-f(x-h))/2h and the relative error uses denominator
// max(|analytic|, |numeric|, 1e-8). Returns the max relative error over
// all coordinates of all parameters.
double finite_diff_check(const std::function<double()>& f, const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic, double h);

}  // namespace dsmt
