#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace losh {

// Central finite difference through a mutable slot. The slot is restored
// before returning, so the surrounding state is unchanged.
template <typename Eval>
double central_difference(double& slot, Eval&& eval, double step = 1e-6) {
  const double saved = slot;
  slot = saved + step;
  const double fp = eval();
  slot = saved - step;
  const double fm = eval();
  slot = saved;
  return (fp - fm) / (2.0 * step);
}

// Relative disagreement with a floor on the denominator so near-zero
// gradient pairs compare absolutely.
inline double gradient_rel_err(double analytic, double numeric) {
  const double denom =
      std::max(std::max(std::fabs(analytic), std::fabs(numeric)), 1e-6);
  return std::fabs(analytic - numeric) / denom;
}

// Running worst-offender tracker for a gradient sweep.
struct GradReport {
  double worst = 0.0;
  std::string worst_name;
  long checked = 0;

  void record(const std::string& name, double analytic, double numeric) {
    ++checked;
    const double err = gradient_rel_err(analytic, numeric);
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }

  bool ok(double tol = 1e-4) const { return worst <= tol; }
};

}  // namespace losh
