#pragma once

#include <functional>

#include "vlmech/autograd.hpp"
#include "vlmech/tensor.hpp"

namespace vlmech {

/// A scalar-valued function recorded on a tape, with `x` bound as a leaf.
using ScalarFn = std::function<Var(Tape&, Var x)>;

/// Compares the tape gradient of `f` at `x` against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h and returns
///   max_i |analytic_i - central_i| / (|analytic_i| + |central_i| + 1e-12).
///
/// Throws ConfigError when h lies outside [1e-7, 1e-3] and ValidationError
/// when any evaluation produces a non-finite value.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Analytic gradient of `f` at `x`.
Tensor tape_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace vlmech
