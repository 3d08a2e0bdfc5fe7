#include "tailflow/self_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "tailflow/autodiff.hpp"
#include "tailflow/special_fn.hpp"
#include "tailflow/trainer.hpp"

namespace tailflow {

namespace {

std::string describe(const char* what, double value, double tolerance) {
  std::ostringstream os;
  os << what << " = " << value << " (tolerance " << tolerance << ")";
  return os.str();
}

CheckResult check_max(std::string name, const char* what, double value, double tolerance) {
  return {std::move(name), value <= tolerance, describe(what, value, tolerance)};
}

Matrix random_rows(std::size_t rows, std::size_t dim, Rng& rng, double scale) {
  std::student_t_distribution<double> t(4.0);
  Matrix x(rows, dim);
  for (double& v : x.data()) v = scale * t(rng);
  return x;
}

}  // namespace

void randomize_parameters(FlowModel& model, std::uint64_t seed, double scale) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x7a4du};
  Rng rng(seq);
  std::normal_distribution<double> noise(0.0, scale);
  for (double& v : model.parameters().values()) v += noise(rng);
}

TailParams random_tail_params(Rng& rng, TailMode mode) {
  std::uniform_real_distribution<double> mu(-1.0, 1.0);
  std::uniform_real_distribution<double> sigma(0.2, 3.0);
  auto lambda = [&] {
    if (mode == TailMode::kGpdOnly) return std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    std::uniform_real_distribution<double> u(-0.9, 1.0);
    double v = 0.0;
    do {
      v = u(rng);
    } while (std::abs(v) < 0.01);
    return v;
  };
  TailParams p;
  p.mu = mu(rng);
  p.sigma = sigma(rng);
  p.lambda_plus = lambda();
  p.lambda_minus = lambda();
  return p;
}

GradientCheck check_log_prob_gradient(const FlowModel& model, const Matrix& batch, double step,
                                      double floor) {
  std::vector<std::size_t> rows(batch.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  ad::Tape tape;
  const NllGradient analytic = nll_with_gradient(model, batch, rows, tape);

  std::vector<double> theta(model.parameters().values().begin(),
                            model.parameters().values().end());
  GradientCheck out;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double original = theta[k];
    const double h = step * std::max(1.0, std::abs(original));
    theta[k] = original + h;
    const double up = nll_sum(model, theta, batch);
    theta[k] = original - h;
    const double down = nll_sum(model, theta, batch);
    theta[k] = original;
    const double fd = (up - down) / (2.0 * h);
    const double g = analytic.gradient[k];
    const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
    if (rel > out.max_relative_error || !std::isfinite(rel)) {
      out.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      out.worst_index = k;
    }
    ++out.checked;
  }
  return out;
}

std::vector<CheckResult> run_self_checks(std::uint64_t seed) {
  std::vector<CheckResult> results;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), 0xc4ecu};
  Rng rng(seq);

  {
    double worst = 0.0;
    for (int i = 1; i < 2000; ++i) {
      const double x = 2.0 * i / 2000.0;
      worst = std::max(worst, std::abs(erfc(erfc_inv(x)) - x) / x);
    }
    results.push_back(check_max("erfc(erfc_inv(x)) = x on (0, 2)", "max relative error", worst,
                                1e-10));
  }
  {
    double worst = 0.0;
    for (int i = -500; i <= 500; ++i) {
      const double z = i / 100.0;
      const double p = normal_cdf(z);
      // Conditioning of the quantile near p = 1 limits attainable accuracy.
      const double tol = 1e-9 + 2.0 * std::numeric_limits<double>::epsilon() / normal_pdf(z);
      worst = std::max(worst, std::abs(normal_quantile(p) - z) / tol);
    }
    results.push_back(
        check_max("normal_quantile(normal_cdf(z)) = z, |z| <= 5", "max error / tolerance", worst,
                  1.0));
  }
  for (TailMode mode : {TailMode::kGpdOnly, TailMode::kExtended}) {
    std::uniform_real_distribution<double> zdist(-8.0, 8.0);
    double round_trip = 0.0;
    double derivative = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const TailParams p = random_tail_params(rng, mode);
      const double z = zdist(rng);
      const double x = tail_forward_ext(z, p, mode);
      round_trip = std::max(round_trip, std::abs(tail_inverse_ext(x, p, mode) - z));
      const double h = 1e-5;
      const double fd = (tail_forward_ext(z + h, p, mode) - tail_forward_ext(z - h, p, mode)) /
                        (2.0 * h);
      const double an = tail_forward_ext_dz(z, p, mode);
      derivative = std::max(derivative, std::abs(fd - an) / std::max(std::abs(an), 1e-9));
    }
    const std::string tag = mode == TailMode::kGpdOnly ? " (GPD only)" : " (extended)";
    results.push_back(check_max("tail inverse(forward(z)) = z" + tag, "max |error|", round_trip,
                                1e-6));
    results.push_back(check_max("tail dR/dz matches finite differences" + tag,
                                "max relative error", derivative, 1e-6));
  }
  {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const TailParams p = random_tail_params(rng, TailMode::kGpdOnly);
      const double slope = origin_slope([&](double z) { return tail_forward(z, p); });
      worst = std::max(worst, std::abs(slope - p.sigma * kSqrt2OverPi));
    }
    results.push_back(check_max("tail slope at the origin is sigma sqrt(2/pi)", "max |error|",
                                worst, 1e-8));
  }
  for (FlowVariant variant : all_variants()) {
    FlowModel model = FlowModel::build(variant, 3, seed);
    randomize_parameters(model, seed + 17);
    const Matrix x = random_rows(16, 3, rng, 1.0);
    double round_trip = 0.0;
    double log_det = 0.0;
    std::vector<double> z(3);
    std::vector<double> back(3);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double inv = model.inverse(x.row(r), z);
      const double fwd = model.forward(z, back);
      log_det = std::max(log_det, std::abs(inv + fwd));
      for (std::size_t c = 0; c < 3; ++c) {
        round_trip = std::max(round_trip, std::abs(back[c] - x(r, c)) / (1.0 + std::abs(x(r, c))));
      }
    }
    results.push_back(check_max(to_string(variant) + ": forward(inverse(x)) = x",
                                "max relative error", round_trip, 1e-8));
    results.push_back(check_max(to_string(variant) + ": log-determinants cancel",
                                "max |sum|", log_det, 1e-8));

    FlowModel small = FlowModel::build(variant, 2, seed);
    randomize_parameters(small, seed + 29);
    const GradientCheck g = check_log_prob_gradient(small, random_rows(8, 2, rng, 1.0));
    results.push_back(check_max(to_string(variant) + ": log_prob gradient matches finite "
                                                     "differences",
                                "max relative error", g.max_relative_error, 1e-4));
  }
  return results;
}

}  // namespace tailflow
