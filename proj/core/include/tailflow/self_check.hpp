#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailflow/flow_model.hpp"
#include "tailflow/matrix.hpp"
#include "tailflow/tail_transform.hpp"

namespace tailflow {

// Adds N(0, scale^2) noise to every raw parameter so that no layer is at its
// identity initialisation.
void randomize_parameters(FlowModel& model, std::uint64_t seed, double scale = 0.3);

// Random tail parameters: mu in [-1, 1], sigma in [0.2, 3], lambdas in
// [0.05, 1] (GPD only) or [-0.9, 1] excluding |lambda| < 0.01 (extended).
TailParams random_tail_params(Rng& rng, TailMode mode);

// Two-sided difference slope at z = 0, Richardson-extrapolated over steps h
// and h/2. R'' jumps at the origin when the two tail indices differ, so a
// plain central difference carries an O(h) bias that this cancels.
template <class F>
double origin_slope(F&& f, double h = 1e-5) {
  const double coarse = (f(h) - f(-h)) / (2.0 * h);
  const double fine = (f(0.5 * h) - f(-0.5 * h)) / h;
  return 2.0 * fine - coarse;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares the tape gradient of sum_i log q(x_i) against central finite
// differences for every parameter; the relative error of component k is
// |g - fd| / max(|g|, |fd|, floor).
GradientCheck check_log_prob_gradient(const FlowModel& model, const Matrix& batch,
                                      double step = 1e-6, double floor = 1e-6);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Numerical verification suite behind `tailflow check`: special-function and
// transform round trips, derivative checks, flow invertibility and gradient
// checks for every variant.
std::vector<CheckResult> run_self_checks(std::uint64_t seed = 1);

}  // namespace tailflow
