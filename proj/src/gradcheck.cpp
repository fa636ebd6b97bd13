#include "consor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace consor::ad {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                                        double step, double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };

  GradCheckResult result;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = evaluate();
      p->value[i] = saved - step;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(p->grad[i], numeric, floor);
      ++result.components;
      if (err > result.max_relative_error || result.worst.empty()) {
        result.max_relative_error = err;
        result.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

GradCheckResult finite_difference_check(const std::function<Var(Tape&, const Var&)>& fn, const Tensor& point,
                                        double step, double floor) {
  Parameter x("x", point);
  Parameter* params[] = {&x};
  return finite_difference_check([&](Tape& t) { return fn(t, t.parameter(x)); }, params, step, floor);
}

}  // namespace consor::ad
