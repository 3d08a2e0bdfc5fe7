#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tailflow/base_dist.hpp"
#include "tailflow/errors.hpp"
#include "tailflow/flow_layers.hpp"
#include "tailflow/matrix.hpp"
#include "tailflow/parameters.hpp"

namespace tailflow {

enum class FlowVariant { kRQS, kGTAF, kTTF, kTTFMarginal, kEXF };

std::string to_string(FlowVariant variant);
// Accepts rqs, gtaf, ttf, ttf_m, exf (case-insensitive).
FlowVariant parse_variant(std::string_view name);
std::vector<FlowVariant> all_variants();

struct ModelOptions {
  // Tail variants: add an autoregressive affine layer below the LU layer.
  bool tail_affine = false;
  // Tail variants: put the LU layer next to the base instead of directly
  // before the tail layer.
  bool lu_first = false;
  double initial_nu = 30.0;
  TailParams tail_init{0.0, 1.0, 0.1, 0.1};
  SplineConfig spline{};

  bool operator==(const ModelOptions&) const = default;
};

// Base distribution plus an ordered stack of invertible layers, z side
// first. Owns the parameter values of every layer.
class FlowModel {
 public:
  FlowModel(std::size_t dim, BaseKind base, std::uint64_t init_seed = 0,
            double initial_nu = 30.0);

  // RQS:   N(0,I)     + [LU, RQS, affine]
  // gTAF:  Student-T  + [LU, RQS, affine]
  // TTF:   N(0,I)     + [RQS, LU, tail(autoregressive, extended)]
  // TTF_m: N(0,I)     + [RQS, LU, tail(marginal, extended)]
  // EXF:   N(0,I)     + [RQS, LU, tail(autoregressive, GPD only)]
  static FlowModel build(FlowVariant variant, std::size_t dim, std::uint64_t init_seed,
                         const ModelOptions& options = {});

  void add_lu(Permutation permutation = Permutation::kReverse);
  void add_rqs(const SplineConfig& cfg = {});
  void add_affine();
  void add_tail(TailMode mode, bool autoregressive, const TailParams& init = {});

  std::optional<FlowVariant> variant() const noexcept { return variant_; }
  const ModelOptions& options() const noexcept { return options_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }
  std::size_t dim() const noexcept { return dim_; }
  const BaseDistribution& base() const noexcept { return base_; }
  const std::vector<FlowLayer>& layers() const noexcept { return layers_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  // log q_x(x) = log q_z(T^{-1}(x)) + sum_k log|det J_k^{-1}|, against
  // explicit parameter values. Throws EvaluationFault on a non-finite
  // intermediate.
  template <Scalar T>
  T log_prob(std::span<const T> theta, std::span<const double> x) const {
    std::vector<T> current(x.begin(), x.end());
    std::vector<T> next(dim_);
    T total(0.0);
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const T log_det = std::visit(
          [&](const auto& layer) {
            return layer.template inverse<T>(theta, std::span<const T>(current), next);
          },
          layers_[k]);
      check_finite<T>(static_cast<int>(k), log_det, next);
      total = total + log_det;
      current.swap(next);
    }
    const T base_lp = base_.log_prob<T>(theta, current);
    check_finite<T>(-1, base_lp, {});
    return total + base_lp;
  }

  double log_prob(std::span<const double> x) const;
  std::vector<double> log_prob(const Matrix& x) const;

  // z -> x; returns log|det dx/dz|.
  double forward(std::span<const double> z, std::span<double> x) const;
  // x -> z; returns log|det dz/dx|.
  double inverse(std::span<const double> x, std::span<double> z) const;

  Matrix sample(std::size_t count, std::uint64_t seed) const;

  // Model CDF for d = 1 (every layer is then increasing).
  double cdf(double x) const;

 private:
  template <Scalar T>
  static void check_finite(int stage, const T& log_det, std::span<const T> values) {
    bool ok = std::isfinite(value_of(log_det));
    for (const T& v : values) ok = ok && std::isfinite(value_of(v));
    if (!ok) {
      throw EvaluationFault(stage, stage < 0 ? "non-finite base log density"
                                             : "non-finite value in layer " +
                                                   std::to_string(stage));
    }
  }

  std::string next_layer_name(const char* kind) const;

  std::size_t dim_;
  std::uint64_t init_seed_;
  Rng init_rng_;
  ParameterSet params_;
  BaseDistribution base_;
  std::vector<FlowLayer> layers_;
  std::optional<FlowVariant> variant_;
  ModelOptions options_;
};

}  // namespace tailflow
