#include "tailflow/flow_model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace tailflow {

std::string to_string(FlowVariant variant) {
  switch (variant) {
    case FlowVariant::kRQS:
      return "rqs";
    case FlowVariant::kGTAF:
      return "gtaf";
    case FlowVariant::kTTF:
      return "ttf";
    case FlowVariant::kTTFMarginal:
      return "ttf_m";
    case FlowVariant::kEXF:
      return "exf";
  }
  return "unknown";
}

FlowVariant parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (FlowVariant v : all_variants()) {
    if (to_string(v) == lower) return v;
  }
  throw std::invalid_argument("unknown flow variant: " + std::string(name));
}

std::vector<FlowVariant> all_variants() {
  return {FlowVariant::kEXF, FlowVariant::kTTFMarginal, FlowVariant::kGTAF, FlowVariant::kTTF,
          FlowVariant::kRQS};
}

FlowModel::FlowModel(std::size_t dim, BaseKind base, std::uint64_t init_seed, double initial_nu)
    : dim_(dim), init_seed_(init_seed), init_rng_(init_seed) {
  if (dim == 0) throw std::invalid_argument("FlowModel: dimension must be >= 1");
  base_ = base == BaseKind::kStdNormal ? BaseDistribution::std_normal(dim)
                                       : BaseDistribution::student_t(params_, "base", dim,
                                                                     initial_nu);
}

FlowModel FlowModel::build(FlowVariant variant, std::size_t dim, std::uint64_t init_seed,
                           const ModelOptions& options) {
  const BaseKind base =
      variant == FlowVariant::kGTAF ? BaseKind::kStudentT : BaseKind::kStdNormal;
  FlowModel model(dim, base, init_seed, options.initial_nu);
  model.options_ = options;
  switch (variant) {
    case FlowVariant::kRQS:
    case FlowVariant::kGTAF:
      model.add_lu();
      model.add_rqs(options.spline);
      model.add_affine();
      break;
    case FlowVariant::kTTF:
    case FlowVariant::kTTFMarginal:
    case FlowVariant::kEXF: {
      const TailMode mode =
          variant == FlowVariant::kEXF ? TailMode::kGpdOnly : TailMode::kExtended;
      if (options.lu_first) model.add_lu();
      model.add_rqs(options.spline);
      if (options.tail_affine) model.add_affine();
      if (!options.lu_first) model.add_lu();
      model.add_tail(mode, variant != FlowVariant::kTTFMarginal, options.tail_init);
      break;
    }
  }
  model.variant_ = variant;
  return model;
}

std::string FlowModel::next_layer_name(const char* kind) const {
  return "layer" + std::to_string(layers_.size()) + "." + kind;
}

void FlowModel::add_lu(Permutation permutation) {
  layers_.emplace_back(LULinearLayer(params_, next_layer_name("lu"), dim_, permutation));
}

void FlowModel::add_rqs(const SplineConfig& cfg) {
  layers_.emplace_back(RQSLayer(params_, next_layer_name("rqs"), dim_, init_rng_, cfg));
}

void FlowModel::add_affine() {
  layers_.emplace_back(AffineLayer(params_, next_layer_name("affine"), dim_, init_rng_));
}

void FlowModel::add_tail(TailMode mode, bool autoregressive, const TailParams& init) {
  layers_.emplace_back(
      TailLayer(params_, next_layer_name("tail"), dim_, mode, autoregressive, init_rng_, init));
}

double FlowModel::log_prob(std::span<const double> x) const {
  if (x.size() != dim_) throw std::invalid_argument("log_prob: dimension mismatch");
  return log_prob<double>(params_.values(), x);
}

std::vector<double> FlowModel::log_prob(const Matrix& x) const {
  if (x.cols() != dim_) throw std::invalid_argument("log_prob: dimension mismatch");
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = log_prob<double>(params_.values(), x.row(r));
  return out;
}

double FlowModel::forward(std::span<const double> z, std::span<double> x) const {
  if (z.size() != dim_ || x.size() != dim_) {
    throw std::invalid_argument("forward: dimension mismatch");
  }
  const auto theta = params_.values();
  std::vector<double> current(z.begin(), z.end()), next(dim_);
  double total = 0.0;
  for (const auto& layer : layers_) {
    total += std::visit(
        [&](const auto& l) {
          return l.template forward<double>(theta, std::span<const double>(current), next);
        },
        layer);
    current.swap(next);
  }
  std::copy(current.begin(), current.end(), x.begin());
  return total;
}

double FlowModel::inverse(std::span<const double> x, std::span<double> z) const {
  if (z.size() != dim_ || x.size() != dim_) {
    throw std::invalid_argument("inverse: dimension mismatch");
  }
  const auto theta = params_.values();
  std::vector<double> current(x.begin(), x.end()), next(dim_);
  double total = 0.0;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    total += std::visit(
        [&](const auto& l) {
          return l.template inverse<double>(theta, std::span<const double>(current), next);
        },
        layers_[k]);
    current.swap(next);
  }
  std::copy(current.begin(), current.end(), z.begin());
  return total;
}

Matrix FlowModel::sample(std::size_t count, std::uint64_t seed) const {
  Rng rng(seed);
  Matrix out(count, dim_);
  std::vector<double> z(dim_);
  for (std::size_t r = 0; r < count; ++r) {
    base_.sample(params_.values(), rng, z);
    forward(z, out.row(r));
  }
  return out;
}

double FlowModel::cdf(double x) const {
  if (dim_ != 1) throw std::logic_error("cdf: only defined for one-dimensional models");
  double z = 0.0;
  inverse(std::span<const double>(&x, 1), std::span<double>(&z, 1));
  return base_.marginal_cdf(params_.values(), 0, z);
}

}  // namespace tailflow
