#pragma once

// Invertible layers. Every layer maps z (base side) to x (data side) in
// forward() and x to z in inverse(). Autoregressive layers read their
// per-dimension parameters h_i = c_i(x_{<i}) from a masked network applied
// to the data-side vector, so inverse() is a single network pass and
// forward() is d sequential passes.
//
// Layers do not own parameter values: they hold offsets into a
// ParameterSet and evaluate against a span `theta` of either doubles or
// ad::Var. inverse() returns log|det dz/dx|, forward() returns log|det dx/dz|.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tailflow/autodiff.hpp"
#include "tailflow/parameters.hpp"
#include "tailflow/tail_transform.hpp"

namespace tailflow {

using Rng = std::mt19937_64;

inline constexpr double kPositiveFloor = 1e-3;

// softplus(raw) + kPositiveFloor; the decoding for scales and slopes.
template <Scalar T>
T decode_positive(const T& raw) {
  return softplus(raw) + kPositiveFloor;
}
double encode_positive(double value);

// Dense layer restricted to the connections allowed by integer degrees:
// output o sees input k iff in_degree[k] <= out_degree[o] (or < when strict).
class MaskedLinear {
 public:
  MaskedLinear() = default;
  MaskedLinear(ParameterSet& params, const std::string& name, std::span<const int> in_degrees,
               std::span<const int> out_degrees, bool strict);

  std::size_t inputs() const noexcept { return inputs_; }
  std::size_t outputs() const noexcept { return row_begin_.empty() ? 0 : row_begin_.size() - 1; }
  std::size_t connections() const noexcept { return columns_.size(); }
  bool connected(std::size_t out, std::size_t in) const;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  void init_uniform(std::span<double> theta, Rng& rng) const;
  void set_bias(std::span<double> theta, std::size_t out, double value) const;

  template <Scalar T>
  void apply(std::span<const T> theta, std::span<const T> in, std::span<T> out) const {
    for (std::size_t o = 0; o < outputs(); ++o) out[o] = unit(theta, in, o);
  }

  template <Scalar T>
  T unit(std::span<const T> theta, std::span<const T> in, std::size_t o) const {
    const std::uint32_t begin = row_begin_[o];
    const std::uint32_t count = row_begin_[o + 1] - begin;
    return dot_gather(theta.subspan(weight_offset_ + begin, count), in,
                      std::span<const std::uint32_t>(columns_).subspan(begin, count),
                      theta[bias_offset_ + o]);
  }

 private:
  std::size_t inputs_ = 0;
  std::vector<std::uint32_t> row_begin_;
  std::vector<std::uint32_t> columns_;
  std::size_t weight_offset_ = 0;
  std::size_t bias_offset_ = 0;
};

// Masked feed-forward network with two tanh hidden layers emitting
// `params_per_dim` raw values per dimension; head i sees only x_{<i}.
class MaskedConditioner {
 public:
  MaskedConditioner() = default;
  // `head_bias` (size params_per_dim) initialises the output biases; output
  // weights start at zero so the initial outputs equal these biases.
  MaskedConditioner(ParameterSet& params, const std::string& name, std::size_t dim,
                    std::size_t params_per_dim, std::size_t hidden_width,
                    std::span<const double> head_bias, Rng& rng);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t params_per_dim() const noexcept { return params_per_dim_; }
  std::size_t hidden_width() const noexcept { return hidden_width_; }

  // h has dim * params_per_dim entries; head i occupies [i*P, (i+1)*P).
  template <Scalar T>
  void evaluate(std::span<const T> theta, std::span<const T> x, std::span<T> h) const {
    std::vector<T> h1(hidden_width_), h2(hidden_width_);
    hidden<T>(theta, x, h1, h2);
    output_.apply<T>(theta, h2, h);
  }

  // Only head i.
  template <Scalar T>
  void evaluate_head(std::span<const T> theta, std::span<const T> x, std::size_t i,
                     std::span<T> head) const {
    std::vector<T> h1(hidden_width_), h2(hidden_width_);
    hidden<T>(theta, x, h1, h2);
    for (std::size_t j = 0; j < params_per_dim_; ++j) {
      head[j] = output_.unit<T>(theta, h2, i * params_per_dim_ + j);
    }
  }

  const MaskedLinear& output_layer() const noexcept { return output_; }

 private:
  template <Scalar T>
  void hidden(std::span<const T> theta, std::span<const T> x, std::span<T> h1,
              std::span<T> h2) const {
    first_.apply<T>(theta, x, h1);
    for (auto& v : h1) v = tanh(v);
    second_.apply<T>(theta, h1, h2);
    for (auto& v : h2) v = tanh(v);
  }

  std::size_t dim_ = 0;
  std::size_t params_per_dim_ = 0;
  std::size_t hidden_width_ = 0;
  MaskedLinear first_;
  MaskedLinear second_;
  MaskedLinear output_;
};

// ---------------------------------------------------------------------------
// Rational-quadratic spline (monotone, identity outside [-bound, bound]).

struct SplineConfig {
  std::size_t bins = 8;
  double bound = 2.5;
  double min_bin_width = 1e-3;
  double min_bin_height = 1e-3;
  double min_derivative = 1e-3;

  // widths, heights, interior derivatives
  std::size_t raw_size() const noexcept { return 3 * bins - 1; }
};

template <Scalar T>
struct SplineKnots {
  std::vector<T> x;      // bins + 1 knot abscissae, x[0] = -bound, x[K] = bound
  std::vector<T> y;      // bins + 1 knot ordinates
  std::vector<T> slope;  // bins + 1 derivatives, 1 at both ends
};

// Raw layout: [0, K) widths, [K, 2K) heights, [2K, 3K-1) interior slopes.
// Widths and heights go through a softmax with a minimum bin size, slopes
// through decode_positive-style softplus with floor min_derivative.
template <Scalar T>
SplineKnots<T> decode_spline(std::span<const T> raw, const SplineConfig& cfg) {
  const std::size_t k = cfg.bins;
  SplineKnots<T> knots;
  auto cumulative = [&](std::span<const T> logits, double min_size, std::vector<T>& out) {
    double peak = value_of(logits[0]);
    for (const T& l : logits) peak = std::max(peak, value_of(l));
    std::vector<T> e(k);
    for (std::size_t j = 0; j < k; ++j) e[j] = exp(logits[j] - peak);
    const T total = sum(std::span<const T>(e));
    out.assign(k + 1, T(0.0));
    out[0] = T(-cfg.bound);
    T acc(0.0);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      acc = acc + (min_size + (1.0 - min_size * static_cast<double>(k)) * e[j] / total);
      out[j + 1] = 2.0 * cfg.bound * acc - cfg.bound;
    }
    out[k] = T(cfg.bound);
  };
  cumulative(raw.subspan(0, k), cfg.min_bin_width, knots.x);
  cumulative(raw.subspan(k, k), cfg.min_bin_height, knots.y);
  knots.slope.assign(k + 1, T(1.0));
  for (std::size_t j = 1; j < k; ++j) {
    knots.slope[j] = softplus(raw[2 * k + j - 1]) + cfg.min_derivative;
  }
  return knots;
}

// Raw slope value that decodes to a unit derivative.
double spline_identity_slope_raw(const SplineConfig& cfg);

namespace detail {
template <Scalar T>
std::size_t find_bin(const std::vector<T>& knots, double v) {
  std::size_t lo = 0, hi = knots.size() - 1;  // v in [knots[lo], knots[hi]]
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (v >= value_of(knots[mid])) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}
}  // namespace detail

// z -> (x, log dx/dz).
template <Scalar T>
std::pair<T, T> rqs_forward(const T& z, const SplineKnots<T>& knots, const SplineConfig& cfg) {
  const double v = value_of(z);
  if (v < -cfg.bound || v > cfg.bound) return {z, T(0.0)};
  const std::size_t b = detail::find_bin(knots.x, v);
  const T width = knots.x[b + 1] - knots.x[b];
  const T height = knots.y[b + 1] - knots.y[b];
  const T s = height / width;
  const T& d0 = knots.slope[b];
  const T& d1 = knots.slope[b + 1];
  const T xi = (z - knots.x[b]) / width;
  const T xi1m = 1.0 - xi;
  const T t = xi * xi1m;
  const T numerator = height * (s * xi * xi + d0 * t);
  const T denominator = s + (d1 + d0 - 2.0 * s) * t;
  const T x = knots.y[b] + numerator / denominator;
  const T deriv_num = s * s * (d1 * xi * xi + 2.0 * s * t + d0 * xi1m * xi1m);
  const T log_dx = log(deriv_num) - 2.0 * log(denominator);
  return {x, log_dx};
}

// x -> (z, log dz/dx) by the closed-form root of the bin's quadratic.
template <Scalar T>
std::pair<T, T> rqs_inverse(const T& x, const SplineKnots<T>& knots, const SplineConfig& cfg) {
  const double v = value_of(x);
  if (v < -cfg.bound || v > cfg.bound) return {x, T(0.0)};
  const std::size_t b = detail::find_bin(knots.y, v);
  const T width = knots.x[b + 1] - knots.x[b];
  const T height = knots.y[b + 1] - knots.y[b];
  const T s = height / width;
  const T& d0 = knots.slope[b];
  const T& d1 = knots.slope[b + 1];
  const T dy = x - knots.y[b];
  const T curvature = d1 + d0 - 2.0 * s;
  const T a = height * (s - d0) + dy * curvature;
  const T bq = height * d0 - dy * curvature;
  const T c = -s * dy;
  const T disc = bq * bq - 4.0 * a * c;
  const T root = sqrt(max(disc, T(0.0)));
  const T xi = (2.0 * c) / (-bq - root);
  const T z = xi * width + knots.x[b];
  const T xi1m = 1.0 - xi;
  const T t = xi * xi1m;
  const T denominator = s + curvature * t;
  const T deriv_num = s * s * (d1 * xi * xi + 2.0 * s * t + d0 * xi1m * xi1m);
  const T log_dz = 2.0 * log(denominator) - log(deriv_num);
  return {z, log_dz};
}

// ---------------------------------------------------------------------------

enum class Permutation { kIdentity, kReverse };

// x = P L U z, L unit lower triangular, U upper triangular with
// decode_positive diagonal, P a fixed permutation (x_i = (LUz)_{perm[i]}).
class LULinearLayer {
 public:
  LULinearLayer() = default;
  LULinearLayer(ParameterSet& params, const std::string& name, std::size_t dim,
                Permutation permutation = Permutation::kReverse);

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }

  // Sets raw parameters so that U has the given diagonal.
  void set_diagonal(std::span<double> theta, std::span<const double> diagonal) const;
  std::size_t lower_offset() const noexcept { return lower_; }
  std::size_t upper_offset() const noexcept { return upper_; }

  template <Scalar T>
  T forward(std::span<const T> theta, std::span<const T> z, std::span<T> x) const {
    const std::size_t d = dim_;
    std::vector<T> u(d), diag(d);
    T log_det(0.0);
    for (std::size_t i = 0; i < d; ++i) {
      diag[i] = decode_positive(theta[diag_ + i]);
      log_det = log_det + log(diag[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
      T acc = diag[i] * z[i];
      for (std::size_t j = i + 1; j < d; ++j) acc = acc + theta[upper_ + upper_index(i, j)] * z[j];
      u[i] = acc;
    }
    for (std::size_t i = 0; i < d; ++i) {
      T acc = u[i];
      for (std::size_t j = 0; j < i; ++j) acc = acc + theta[lower_ + lower_index(i, j)] * u[j];
      x[inverse_perm_[i]] = acc;
    }
    return log_det;
  }

  template <Scalar T>
  T inverse(std::span<const T> theta, std::span<const T> x, std::span<T> z) const {
    const std::size_t d = dim_;
    std::vector<T> v(d), diag(d);
    T log_det(0.0);
    for (std::size_t i = 0; i < d; ++i) {
      diag[i] = decode_positive(theta[diag_ + i]);
      log_det = log_det - log(diag[i]);
    }
    // L v = P^T x
    for (std::size_t i = 0; i < d; ++i) {
      T acc = x[inverse_perm_[i]];
      for (std::size_t j = 0; j < i; ++j) acc = acc - theta[lower_ + lower_index(i, j)] * v[j];
      v[i] = acc;
    }
    // U z = v
    for (std::size_t i = d; i-- > 0;) {
      T acc = v[i];
      for (std::size_t j = i + 1; j < d; ++j) acc = acc - theta[upper_ + upper_index(i, j)] * z[j];
      z[i] = acc / diag[i];
    }
    return log_det;
  }

 private:
  std::size_t lower_index(std::size_t i, std::size_t j) const { return i * (i - 1) / 2 + j; }
  std::size_t upper_index(std::size_t i, std::size_t j) const {
    // row i holds columns i+1..d-1
    return i * (2 * dim_ - i - 1) / 2 + (j - i - 1);
  }

  std::size_t dim_ = 0;
  std::size_t lower_ = 0;
  std::size_t upper_ = 0;
  std::size_t diag_ = 0;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inverse_perm_;  // position in x of (LUz)_i
};

// ---------------------------------------------------------------------------

// Elementwise autoregressive rational-quadratic spline.
class RQSLayer {
 public:
  RQSLayer() = default;
  RQSLayer(ParameterSet& params, const std::string& name, std::size_t dim, Rng& rng,
           SplineConfig cfg = {});

  std::size_t dim() const noexcept { return conditioner_.dim(); }
  const SplineConfig& config() const noexcept { return cfg_; }
  const MaskedConditioner& conditioner() const noexcept { return conditioner_; }

  template <Scalar T>
  T inverse(std::span<const T> theta, std::span<const T> x, std::span<T> z) const {
    const std::size_t p = cfg_.raw_size();
    std::vector<T> h(dim() * p);
    conditioner_.evaluate<T>(theta, x, h);
    T log_det(0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      const auto knots = decode_spline<T>(std::span<const T>(h).subspan(i * p, p), cfg_);
      auto [zi, ld] = rqs_inverse<T>(x[i], knots, cfg_);
      z[i] = zi;
      log_det = log_det + ld;
    }
    return log_det;
  }

  template <Scalar T>
  T forward(std::span<const T> theta, std::span<const T> z, std::span<T> x) const {
    const std::size_t p = cfg_.raw_size();
    std::vector<T> head(p);
    std::fill(x.begin(), x.end(), T(0.0));
    T log_det(0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      conditioner_.evaluate_head<T>(theta, std::span<const T>(x.data(), x.size()), i, head);
      const auto knots = decode_spline<T>(std::span<const T>(head), cfg_);
      auto [xi, ld] = rqs_forward<T>(z[i], knots, cfg_);
      x[i] = xi;
      log_det = log_det + ld;
    }
    return log_det;
  }

 private:
  SplineConfig cfg_;
  MaskedConditioner conditioner_;
};

// Elementwise autoregressive affine map x_i = shift_i + scale_i z_i.
class AffineLayer {
 public:
  AffineLayer() = default;
  AffineLayer(ParameterSet& params, const std::string& name, std::size_t dim, Rng& rng);

  std::size_t dim() const noexcept { return conditioner_.dim(); }
  const MaskedConditioner& conditioner() const noexcept { return conditioner_; }

  template <Scalar T>
  T inverse(std::span<const T> theta, std::span<const T> x, std::span<T> z) const {
    std::vector<T> h(dim() * 2);
    conditioner_.evaluate<T>(theta, x, h);
    T log_det(0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      const T scale = decode_positive(h[2 * i + 1]);
      z[i] = (x[i] - h[2 * i]) / scale;
      log_det = log_det - log(scale);
    }
    return log_det;
  }

  template <Scalar T>
  T forward(std::span<const T> theta, std::span<const T> z, std::span<T> x) const {
    std::vector<T> head(2);
    std::fill(x.begin(), x.end(), T(0.0));
    T log_det(0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      conditioner_.evaluate_head<T>(theta, std::span<const T>(x.data(), x.size()), i, head);
      const T scale = decode_positive(head[1]);
      x[i] = head[0] + scale * z[i];
      log_det = log_det + log(scale);
    }
    return log_det;
  }

 private:
  MaskedConditioner conditioner_;
};

// Final tail layer x_i = R(z_i; mu_i, sigma_i, lambda+_i, lambda-_i).
// Autoregressive: the four raw values per dimension come from a masked
// conditioner over x_{<i}. Marginal: they are free parameters.
class TailLayer {
 public:
  static constexpr std::size_t kParamsPerDim = 4;

  TailLayer() = default;
  TailLayer(ParameterSet& params, const std::string& name, std::size_t dim, TailMode mode,
            bool autoregressive, Rng& rng, const TailParams& init = {});

  std::size_t dim() const noexcept { return dim_; }
  TailMode mode() const noexcept { return mode_; }
  bool autoregressive() const noexcept { return autoregressive_; }
  const MaskedConditioner& conditioner() const noexcept { return conditioner_; }

  template <Scalar T>
  BasicTailParams<T> decode(std::span<const T> raw) const {
    return BasicTailParams<T>{raw[0], decode_sigma(raw[1]), decode_lambda(raw[2], mode_),
                              decode_lambda(raw[3], mode_)};
  }

  // Raw values for every dimension given the data-side vector x.
  template <Scalar T>
  void raw_params(std::span<const T> theta, std::span<const T> x, std::span<T> raw) const {
    if (autoregressive_) {
      conditioner_.evaluate<T>(theta, x, raw);
    } else {
      for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = theta[marginal_ + k];
    }
  }

  template <Scalar T>
  T inverse(std::span<const T> theta, std::span<const T> x, std::span<T> z) const {
    std::vector<T> raw(dim_ * kParamsPerDim);
    raw_params<T>(theta, x, raw);
    T log_det(0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      const auto p =
          decode<T>(std::span<const T>(raw).subspan(i * kParamsPerDim, kParamsPerDim));
      auto [zi, ld] = tail_inverse_with_log_dx<T>(x[i], p, mode_);
      z[i] = zi;
      log_det = log_det + ld;
    }
    return log_det;
  }

  template <Scalar T>
  T forward(std::span<const T> theta, std::span<const T> z, std::span<T> x) const {
    std::vector<T> head(kParamsPerDim);
    std::fill(x.begin(), x.end(), T(0.0));
    T log_det(0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      if (autoregressive_) {
        conditioner_.evaluate_head<T>(theta, std::span<const T>(x.data(), x.size()), i, head);
      } else {
        for (std::size_t k = 0; k < kParamsPerDim; ++k) {
          head[k] = theta[marginal_ + i * kParamsPerDim + k];
        }
      }
      const auto p = decode<T>(std::span<const T>(head));
      x[i] = tail_forward_ext<T>(z[i], p, mode_);
      log_det = log_det + tail_log_dz_ext<T>(z[i], p, mode_);
    }
    return log_det;
  }

 private:
  std::size_t dim_ = 0;
  TailMode mode_ = TailMode::kGpdOnly;
  bool autoregressive_ = true;
  MaskedConditioner conditioner_;
  std::size_t marginal_ = 0;
};

using FlowLayer = std::variant<LULinearLayer, RQSLayer, AffineLayer, TailLayer>;

std::string layer_kind(const FlowLayer& layer);

}  // namespace tailflow
