#pragma once

#include <functional>

#include "ctxmeter/tensor.hpp"

namespace ctxmeter::autodiff {

// Central-difference Jacobian of f at x. Row i is d f_i / d x, flattened
// row-major over both tensors, so the result is numel(f(x)) x numel(x).
// f must be deterministic; step must be > 0. Non-finite outputs are reported
// with the coordinate index that produced them.
Tensor finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step);

}  // namespace ctxmeter::autodiff
