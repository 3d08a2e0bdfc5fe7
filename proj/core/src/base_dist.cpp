#include "tailflow/base_dist.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

namespace tailflow {

BaseDistribution BaseDistribution::std_normal(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("BaseDistribution: dim must be positive");
  BaseDistribution base;
  base.kind_ = BaseKind::kStdNormal;
  base.dim_ = dim;
  return base;
}

BaseDistribution BaseDistribution::student_t(ParameterSet& params, const std::string& name,
                                             std::size_t dim, double initial_nu) {
  if (dim == 0) throw std::invalid_argument("BaseDistribution: dim must be positive");
  if (!(initial_nu > kNuFloor)) throw DomainError("student_t: initial nu must exceed 1e-3");
  BaseDistribution base;
  base.kind_ = BaseKind::kStudentT;
  base.dim_ = dim;
  base.nu_offset_ = params.allocate(name + ".nu", dim, softplus_inverse(initial_nu - kNuFloor));
  return base;
}

void BaseDistribution::set_nu(std::span<double> theta, std::span<const double> nu) const {
  if (kind_ != BaseKind::kStudentT) throw std::logic_error("set_nu: base is not Student's T");
  if (nu.size() != dim_) throw std::invalid_argument("set_nu: size mismatch");
  for (std::size_t i = 0; i < dim_; ++i) {
    if (!(nu[i] > kNuFloor)) throw DomainError("set_nu: nu must exceed 1e-3");
    theta[nu_offset_ + i] = softplus_inverse(nu[i] - kNuFloor);
  }
}

void BaseDistribution::sample(std::span<const double> theta, Rng& rng,
                              std::span<double> out) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double g = normal(rng);
    if (kind_ == BaseKind::kStdNormal) {
      out[i] = g;
      continue;
    }
    const double v = nu<double>(theta, i);
    // chi^2_v = 2 Gamma(v / 2, 1)
    std::gamma_distribution<double> gamma(0.5 * v, 2.0);
    out[i] = g / std::sqrt(gamma(rng) / v);
  }
}

Matrix BaseDistribution::sample(std::span<const double> theta, std::size_t count,
                                std::uint64_t seed) const {
  Rng rng(seed);
  Matrix out(count, dim_);
  for (std::size_t r = 0; r < count; ++r) sample(theta, rng, out.row(r));
  return out;
}

double BaseDistribution::marginal_cdf(std::span<const double> theta, std::size_t i,
                                      double z) const {
  if (i >= dim_) throw std::out_of_range("marginal_cdf: coordinate out of range");
  if (kind_ == BaseKind::kStdNormal) return normal_cdf(z);
  const boost::math::students_t_distribution<double> dist(nu<double>(theta, i));
  return boost::math::cdf(dist, z);
}

}  // namespace tailflow
