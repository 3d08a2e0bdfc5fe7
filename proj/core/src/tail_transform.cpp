#include "tailflow/tail_transform.hpp"

#include <string>

namespace tailflow {
namespace detail {

double log_erfc_cap() {
  static const double cap = tailflow::log_erfc(kTailZCap / kSqrt2);
  return cap;
}

}  // namespace detail

double gpd_quantile(double u, double lambda) {
  if (!(u >= 0.0 && u < 1.0)) {
    throw DomainError("gpd_quantile: u must lie in [0, 1), got " + std::to_string(u));
  }
  if (lambda == 0.0 || std::isnan(lambda)) {
    throw DomainError("gpd_quantile: lambda must be nonzero");
  }
  return std::expm1(-lambda * std::log1p(-u)) / lambda;
}

double two_tailed(double u, double lambda_plus, double lambda_minus) {
  if (!(std::fabs(u) < 1.0)) {
    throw DomainError("two_tailed: |u| must be < 1, got " + std::to_string(u));
  }
  if (!(lambda_plus > 0.0 && lambda_minus > 0.0)) {
    throw DomainError("two_tailed: tail indices must be positive");
  }
  const double s = detail::sign_of(u);
  return s * gpd_quantile(std::fabs(u), s > 0.0 ? lambda_plus : lambda_minus);
}

double power_tail(double z, double xi) {
  if (!(z >= 0.0)) throw DomainError("power_tail: z must be >= 0, got " + std::to_string(z));
  if (!(xi > 0.0)) throw DomainError("power_tail: xi must be > 0, got " + std::to_string(xi));
  return kSqrt2OverPi * std::expm1(xi * std::log1p(z / xi));
}

void validate(const TailParams& p, TailMode mode) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
    throw DomainError("tail transform: sigma must be positive, got " + std::to_string(p.sigma));
  }
  if (!std::isfinite(p.mu)) throw DomainError("tail transform: mu must be finite");
  for (double lambda : {p.lambda_plus, p.lambda_minus}) {
    if (!std::isfinite(lambda)) throw DomainError("tail transform: non-finite tail index");
    if (mode == TailMode::kGpdOnly && !(lambda > 0.0)) {
      throw DomainError("tail transform: GPD-only mode needs lambda > 0, got " +
                        std::to_string(lambda));
    }
    if (lambda == 0.0) throw DomainError("tail transform: lambda = 0 is not admissible");
    if (lambda < -1.0) {
      throw DomainError("tail transform: lambda must be >= -1, got " + std::to_string(lambda));
    }
  }
}

double encode_sigma(double sigma) { return softplus_inverse(sigma - kSigmaFloor); }

double encode_lambda(double lambda, TailMode mode) {
  if (mode == TailMode::kGpdOnly) return softplus_inverse(lambda - kLambdaFloor);
  return softplus_inverse(lambda + 1.0);
}

double tail_forward_ext(double z, const TailParams& p, TailMode mode) {
  validate(p, mode);
  return tail_forward_ext<double>(z, p, mode);
}

double tail_forward_ext_dz(double z, const TailParams& p, TailMode mode) {
  validate(p, mode);
  return std::exp(tail_log_dz_ext<double>(z, p, mode));
}

double tail_inverse_ext(double x, const TailParams& p, TailMode mode) {
  validate(p, mode);
  return tail_inverse_with_log_dx<double>(x, p, mode).first;
}

double tail_inverse_ext_dx(double x, const TailParams& p, TailMode mode) {
  validate(p, mode);
  return std::exp(tail_inverse_with_log_dx<double>(x, p, mode).second);
}

double tail_forward(double z, const TailParams& p) {
  return tail_forward_ext(z, p, TailMode::kGpdOnly);
}

double tail_forward_dz(double z, const TailParams& p) {
  return tail_forward_ext_dz(z, p, TailMode::kGpdOnly);
}

double tail_inverse(double x, const TailParams& p) {
  return tail_inverse_ext(x, p, TailMode::kGpdOnly);
}

double tail_inverse_dx(double x, const TailParams& p) {
  return tail_inverse_ext_dx(x, p, TailMode::kGpdOnly);
}

double tail_log_det(std::span<const double> z, std::span<const TailParams> params,
                    TailMode mode) {
  if (z.size() != params.size()) {
    throw DomainError("tail_log_det: one parameter set per coordinate required");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    validate(params[i], mode);
    total += tail_log_dz_ext<double>(z[i], params[i], mode);
  }
  return total;
}

}  // namespace tailflow
