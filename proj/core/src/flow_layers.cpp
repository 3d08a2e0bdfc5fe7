#include "tailflow/flow_layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tailflow {

double encode_positive(double value) { return softplus_inverse(value - kPositiveFloor); }

double spline_identity_slope_raw(const SplineConfig& cfg) {
  return softplus_inverse(1.0 - cfg.min_derivative);
}

MaskedLinear::MaskedLinear(ParameterSet& params, const std::string& name,
                           std::span<const int> in_degrees, std::span<const int> out_degrees,
                           bool strict)
    : inputs_(in_degrees.size()) {
  row_begin_.reserve(out_degrees.size() + 1);
  row_begin_.push_back(0);
  for (int out : out_degrees) {
    for (std::size_t k = 0; k < in_degrees.size(); ++k) {
      const bool allowed = strict ? in_degrees[k] < out : in_degrees[k] <= out;
      if (allowed) columns_.push_back(static_cast<std::uint32_t>(k));
    }
    row_begin_.push_back(static_cast<std::uint32_t>(columns_.size()));
  }
  weight_offset_ = params.allocate(name + ".weight", columns_.size());
  bias_offset_ = params.allocate(name + ".bias", out_degrees.size());
}

bool MaskedLinear::connected(std::size_t out, std::size_t in) const {
  const auto first = columns_.begin() + row_begin_.at(out);
  const auto last = columns_.begin() + row_begin_.at(out + 1);
  return std::find(first, last, static_cast<std::uint32_t>(in)) != last;
}

void MaskedLinear::init_uniform(std::span<double> theta, Rng& rng) const {
  for (std::size_t o = 0; o < outputs(); ++o) {
    const std::uint32_t begin = row_begin_[o];
    const std::uint32_t count = row_begin_[o + 1] - begin;
    if (count == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(count));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::uint32_t k = 0; k < count; ++k) theta[weight_offset_ + begin + k] = dist(rng);
  }
}

void MaskedLinear::set_bias(std::span<double> theta, std::size_t out, double value) const {
  theta[bias_offset_ + out] = value;
}

MaskedConditioner::MaskedConditioner(ParameterSet& params, const std::string& name,
                                     std::size_t dim, std::size_t params_per_dim,
                                     std::size_t hidden_width, std::span<const double> head_bias,
                                     Rng& rng)
    : dim_(dim), params_per_dim_(params_per_dim), hidden_width_(hidden_width) {
  if (dim == 0 || params_per_dim == 0 || hidden_width == 0) {
    throw std::invalid_argument("MaskedConditioner: sizes must be positive");
  }
  if (head_bias.size() != params_per_dim) {
    throw std::invalid_argument("MaskedConditioner: one head bias per parameter required");
  }
  // Sequential degrees: input k has degree k+1, hidden units cycle through
  // 1..d-1, head i has degree i+1 and connects strictly below it.
  std::vector<int> in_deg(dim), hid_deg(hidden_width), out_deg(dim * params_per_dim);
  for (std::size_t k = 0; k < dim; ++k) in_deg[k] = static_cast<int>(k) + 1;
  const std::size_t cycle = std::max<std::size_t>(1, dim - 1);
  for (std::size_t j = 0; j < hidden_width; ++j) hid_deg[j] = static_cast<int>(j % cycle) + 1;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < params_per_dim; ++j) {
      out_deg[i * params_per_dim + j] = static_cast<int>(i) + 1;
    }
  }
  first_ = MaskedLinear(params, name + ".hidden1", in_deg, hid_deg, false);
  second_ = MaskedLinear(params, name + ".hidden2", hid_deg, hid_deg, false);
  output_ = MaskedLinear(params, name + ".output", hid_deg, out_deg, true);

  auto theta = params.values();
  first_.init_uniform(theta, rng);
  second_.init_uniform(theta, rng);
  for (std::size_t o = 0; o < output_.outputs(); ++o) {
    output_.set_bias(theta, o, head_bias[o % params_per_dim]);
  }
}

LULinearLayer::LULinearLayer(ParameterSet& params, const std::string& name, std::size_t dim,
                             Permutation permutation)
    : dim_(dim), perm_(dim), inverse_perm_(dim) {
  if (dim == 0) throw std::invalid_argument("LULinearLayer: dim must be positive");
  const std::size_t tri = dim * (dim - 1) / 2;
  lower_ = params.allocate(name + ".lower", tri);
  upper_ = params.allocate(name + ".upper", tri);
  diag_ = params.allocate(name + ".diag", dim, encode_positive(1.0));
  for (std::size_t i = 0; i < dim; ++i) {
    perm_[i] = permutation == Permutation::kReverse ? dim - 1 - i : i;
  }
  for (std::size_t i = 0; i < dim; ++i) inverse_perm_[perm_[i]] = i;
}

void LULinearLayer::set_diagonal(std::span<double> theta, std::span<const double> diagonal) const {
  if (diagonal.size() != dim_) throw std::invalid_argument("set_diagonal: size mismatch");
  for (std::size_t i = 0; i < dim_; ++i) theta[diag_ + i] = encode_positive(diagonal[i]);
}

RQSLayer::RQSLayer(ParameterSet& params, const std::string& name, std::size_t dim, Rng& rng,
                   SplineConfig cfg)
    : cfg_(cfg) {
  std::vector<double> head_bias(cfg.raw_size(), 0.0);
  for (std::size_t j = 2 * cfg.bins; j < head_bias.size(); ++j) {
    head_bias[j] = spline_identity_slope_raw(cfg);
  }
  conditioner_ = MaskedConditioner(params, name + ".cond", dim, cfg.raw_size(), dim + 10,
                                   head_bias, rng);
}

AffineLayer::AffineLayer(ParameterSet& params, const std::string& name, std::size_t dim,
                         Rng& rng) {
  const double head_bias[2] = {0.0, encode_positive(1.0)};
  conditioner_ = MaskedConditioner(params, name + ".cond", dim, 2, dim + 10, head_bias, rng);
}

TailLayer::TailLayer(ParameterSet& params, const std::string& name, std::size_t dim,
                     TailMode mode, bool autoregressive, Rng& rng, const TailParams& init)
    : dim_(dim), mode_(mode), autoregressive_(autoregressive) {
  validate(init, mode);
  const double head_bias[kParamsPerDim] = {init.mu, encode_sigma(init.sigma),
                                           encode_lambda(init.lambda_plus, mode),
                                           encode_lambda(init.lambda_minus, mode)};
  if (autoregressive) {
    conditioner_ =
        MaskedConditioner(params, name + ".cond", dim, kParamsPerDim, dim + 10, head_bias, rng);
  } else {
    marginal_ = params.allocate(name + ".marginal", dim * kParamsPerDim);
    auto theta = params.values();
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k < kParamsPerDim; ++k) {
        theta[marginal_ + i * kParamsPerDim + k] = head_bias[k];
      }
    }
  }
}

std::string layer_kind(const FlowLayer& layer) {
  struct Visitor {
    std::string operator()(const LULinearLayer&) const { return "lu_linear"; }
    std::string operator()(const RQSLayer&) const { return "rqs"; }
    std::string operator()(const AffineLayer&) const { return "affine"; }
    std::string operator()(const TailLayer& t) const {
      std::string kind = t.autoregressive() ? "tail_autoregressive" : "tail_marginal";
      return kind + (t.mode() == TailMode::kGpdOnly ? "_gpd" : "_extended");
    }
  };
  return std::visit(Visitor{}, layer);
}

}  // namespace tailflow
