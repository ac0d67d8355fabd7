#pragma once

#include <functional>
#include <vector>

#include "vreg/tape.hpp"

namespace vreg {

// Scalar-valued differentiable function of several tensor inputs.
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares the analytic gradient of f at `points` against central finite
// differences, coordinate by coordinate. Returns the worst relative error
// with denominator max(|analytic|, |numeric|, 1e-8). f must be deterministic
// (checked by evaluating twice) and eps must lie in [1e-6, 1e-4].
double grad_check(const TapeFn& f, const std::vector<Tensor>& points, double eps);

// Single-input convenience overload.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double eps);

} // namespace vreg
