#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tailflow/autodiff.hpp"
#include "tailflow/flow_layers.hpp"
#include "tailflow/matrix.hpp"
#include "tailflow/parameters.hpp"

namespace tailflow {

enum class BaseKind { kStdNormal, kStudentT };

inline constexpr double kNuFloor = 1e-3;

// Base density q_z: N(0, I), or independent Student's T marginals with
// per-dimension degrees of freedom nu_i = softplus(raw_i) + 1e-3.
class BaseDistribution {
 public:
  BaseDistribution() = default;

  static BaseDistribution std_normal(std::size_t dim);
  static BaseDistribution student_t(ParameterSet& params, const std::string& name,
                                    std::size_t dim, double initial_nu = 30.0);

  BaseKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }

  template <Scalar T>
  T nu(std::span<const T> theta, std::size_t i) const {
    return softplus(theta[nu_offset_ + i]) + kNuFloor;
  }

  void set_nu(std::span<double> theta, std::span<const double> nu) const;

  template <Scalar T>
  T log_prob(std::span<const T> theta, std::span<const T> z) const {
    if (kind_ == BaseKind::kStdNormal) {
      T sq(0.0);
      for (std::size_t i = 0; i < dim_; ++i) sq = sq + z[i] * z[i];
      return -static_cast<double>(dim_) * kLogSqrt2Pi - 0.5 * sq;
    }
    static const double kHalfLogPi = 0.5 * std::log(kPi);
    T total(0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      const T v = nu(theta, i);
      total = total + log_gamma(0.5 * (v + 1.0)) - log_gamma(0.5 * v) - 0.5 * log(v) -
              kHalfLogPi - 0.5 * (v + 1.0) * log1p(z[i] * z[i] / v);
    }
    return total;
  }

  // One draw into `out`.
  void sample(std::span<const double> theta, Rng& rng, std::span<double> out) const;
  Matrix sample(std::span<const double> theta, std::size_t count, std::uint64_t seed) const;

  // CDF of coordinate i.
  double marginal_cdf(std::span<const double> theta, std::size_t i, double z) const;

 private:
  BaseKind kind_ = BaseKind::kStdNormal;
  std::size_t dim_ = 0;
  std::size_t nu_offset_ = 0;
};

}  // namespace tailflow
