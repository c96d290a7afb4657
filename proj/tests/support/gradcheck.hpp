#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "lvnc/tensor.hpp"

namespace lvnc::testing {

// Outcome of comparing an analytic gradient with central differences.
// Elements where the one-sided slopes disagree sit on a kink (relu at 0,
// maxpool ties, a swap in the Lovász sort order). There the analytic value
// only has to lie between the two one-sided slopes.
struct GradCheck {
  std::size_t checked = 0;
  std::size_t kinks = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;
  std::string first_failure;
};

inline bool grad_close(double a, double b, double rel_tol, double abs_tol) {
  const double diff = std::abs(a - b);
  return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(a), std::abs(b));
}

inline void check_gradient(GradCheck& out, const std::string& label, const std::function<double()>& f,
                           tensor::Tensor& x, std::span<const double> analytic, double h = 1e-5,
                           double rel_tol = 1e-3, double abs_tol = 1e-8) {
  auto xd = x.data();
  const double f0 = f();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + h;
    const double fp = f();
    xd[i] = orig - h;
    const double fm = f();
    xd[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    ++out.checked;
    if (grad_close(a, central, rel_tol, abs_tol)) {
      if (std::abs(a - central) > abs_tol) {
        out.worst_rel = std::max(out.worst_rel, std::abs(a - central) / std::max(std::abs(a), std::abs(central)));
      }
      continue;
    }
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    const bool kink = !grad_close(fwd, bwd, rel_tol, abs_tol);
    const double lo = std::min(fwd, bwd), hi = std::max(fwd, bwd);
    const double slack = rel_tol * std::max(std::abs(lo), std::abs(hi)) + abs_tol;
    if (kink && a >= lo - slack && a <= hi + slack) {
      ++out.kinks;
      continue;
    }
    if (out.failures++ == 0) {
      out.first_failure = label + "[" + std::to_string(i) + "]: analytic " + std::to_string(a) + " vs numeric " +
                          std::to_string(central);
    }
  }
}

}  // namespace lvnc::testing
