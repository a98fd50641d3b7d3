#include "ssr/numerics/grad_check.hpp"

#include "ssr/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ssr {

Scalar gradient_error(Scalar analytic, Scalar numeric, Scalar floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::span<const NamedTensor> params,
                           const GradCheckOptions& options) {
  std::vector<Vector> analytic;
  {
    for (const auto& p : params) {
      Tensor t = p.tensor;
      t.zero_grad();
      t.set_requires_grad(true);
    }
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = loss_fn();
    tape.backward(loss);
    for (const auto& p : params) analytic.push_back(p.tensor.grad());
  }

  GradCheckReport report;
  NoGradScope no_grad;
  const Scalar h = options.step;
  Scalar largest = 0;
  for (const auto& a : analytic) largest = std::max(largest, a.size() ? a.cwiseAbs().maxCoeff() : 0.0);
  report.effective_floor = std::max(options.floor, options.relative_floor * largest);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    Vector& values = t.mutable_value();
    for (Index i = 0; i < values.size(); ++i) {
      const Scalar original = values[i];
      values[i] = original + h;
      const Scalar up = loss_fn().item();
      values[i] = original - h;
      const Scalar down = loss_fn().item();
      values[i] = original;
      const Scalar numeric = (up - down) / (2 * h);
      const Scalar err = gradient_error(analytic[pi][i], numeric, report.effective_floor);
      ++report.coordinates;
      if (err > report.max_error || report.worst_index < 0) {
        report.max_error = err;
        report.worst_param = params[pi].name;
        report.worst_index = i;
        report.worst_analytic = analytic[pi][i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_error <= options.tolerance;
  return report;
}

}  // namespace ssr
