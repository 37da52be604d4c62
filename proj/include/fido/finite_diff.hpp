#pragma once

#include <functional>

#include "fido/autodiff.hpp"
#include "fido/tensor.hpp"

namespace fido {

// A scalar-valued differentiable function expressed as a graph builder: it
// receives a graph and the input node and returns the scalar root node.
using ScalarFn = std::function<ag::Node*(ag::Graph&, ag::Node*)>;

// Evaluates f at x (values only, no gradients involved).
double eval_scalar_fn(const ScalarFn& f, const Tensor& x);

// Checks the reverse-mode gradient of f at x against central finite
// differences with the given step. The numeric side only ever runs forward
// evaluations, so it is independent of the backward implementation.
// Returns max over coordinates of |analytic - numeric| / max(|analytic|, 1e-8).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double step);

}  // namespace fido
