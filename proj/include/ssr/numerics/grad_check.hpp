#pragma once

#include "ssr/numerics/tensor.hpp"

#include <functional>
#include <span>
#include <string>

namespace ssr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckOptions {
  Scalar step = 1e-6;
  Scalar tolerance = 1e-5;
  // Lower bound of the error denominator: entries smaller than this are
  // compared as |a - n| / floor.
  Scalar floor = 1e-8;
  // Raises the floor to this fraction of the largest analytic entry. Composite
  // losses have gradient entries many decades below their largest one, where
  // central differences only resolve noise.
  Scalar relative_floor = 0;
};

struct GradCheckReport {
  Scalar max_error = 0;
  std::string worst_param;
  Index worst_index = -1;
  Scalar worst_analytic = 0;
  Scalar worst_numeric = 0;
  Scalar effective_floor = 0;
  std::size_t coordinates = 0;
  bool passed = true;
};

// |a - n| / max(|a|, |n|, floor)
Scalar gradient_error(Scalar analytic, Scalar numeric, Scalar floor);

// Compares reverse-mode gradients of the scalar `loss_fn` against central
// differences (f(p+h) - f(p-h)) / 2h for every coordinate of every tensor in
// `params`. `loss_fn` must be deterministic; it is called once under a tape
// and twice per coordinate with recording disabled. Parameter values are
// restored exactly after each probe.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::span<const NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace ssr
