#pragma once

// Central-difference gradient checking against the tape.

#include <functional>
#include <span>
#include <string>

#include "consor/autodiff.hpp"

namespace consor::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "<name>[index]" of the worst component
  std::size_t components = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximised over components.
double relative_error(double analytic, double numeric, double floor);

/// `loss` builds a scalar from the current parameter values on a fresh tape.
GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                                        double step = 1e-4, double floor = 1e-7);

/// Single-input form: fn(tape, x) -> scalar, checked at `point`.
GradCheckResult finite_difference_check(const std::function<Var(Tape&, const Var&)>& fn, const Tensor& point,
                                        double step = 1e-4, double floor = 1e-7);

}  // namespace consor::ad
