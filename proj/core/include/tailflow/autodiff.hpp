#pragma once

// Reverse-mode differentiation over a scalar tape.
//
// A Tape records every operation whose inputs include at least one
// non-constant Var; constants (Vars built from a plain double) never touch
// the tape. Operations record onto the tape made active on the calling
// thread via ActiveTape. Tapes are single-threaded and reusable: clear()
// keeps the arena capacity and invalidates every Var handed out so far.
//
// Generic numeric code in this library is written once over a scalar type
// T that is either double or ad::Var. The double overloads live in
// namespace tailflow (see the bottom of this header); the Var overloads
// below are found by argument-dependent lookup.

#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "tailflow/errors.hpp"
#include "tailflow/special_fn.hpp"

namespace tailflow::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kLog1p,
  kExpm1,
  kSqrt,
  kPow,
  kTanh,
  kSoftplus,
  kErfc,
  kLogErfc,
  kInvLogErfc,
  kErfcInv,
  kNormalCdf,
  kNormalQuantile,
  kLogGamma,
  kAbs,
  kMax,
  kMin,
  kClamp,
  kDot,
  kSum,
  kCustom,
};

class Tape;

class Var {
 public:
  static constexpr std::uint32_t kConstant = 0xffffffffu;

  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  double value() const noexcept { return value_; }
  bool is_constant() const noexcept { return index_ == kConstant; }
  std::uint32_t index() const noexcept { return index_; }
  std::uint32_t tape_id() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(double value, std::uint32_t index, std::uint32_t tape)
      : value_(value), index_(index), tape_(tape) {}

  double value_ = 0.0;
  std::uint32_t index_ = kConstant;
  std::uint32_t tape_ = 0;
};

// Adjoints of every node of one tape after a backward pass.
class Gradient {
 public:
  Gradient() = default;
  Gradient(std::vector<double> adjoints, std::uint32_t tape_id)
      : adjoints_(std::move(adjoints)), tape_(tape_id) {}

  // d(loss)/d(v). Constants have zero gradient.
  double operator[](const Var& v) const;

 private:
  std::vector<double> adjoints_;
  std::uint32_t tape_ = 0;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Thread's active tape, or nullptr.
  static Tape* active() noexcept;

  // New independent variable (a trainable parameter, an input...).
  Var variable(double value);

  // Generic node: backward accumulates inputs[k].grad += out.grad * partials[k].
  Var record(Op op, std::span<const Var> inputs, double value, std::span<const double> partials);

  Var unary(Op op, const Var& a, double value, double da);
  Var binary(Op op, const Var& a, const Var& b, double value, double da, double db);

  // Fused bias + sum_k weights[k] * inputs[k].
  Var dot(std::span<const Var> weights, std::span<const Var> inputs, const Var& bias);
  // As dot() with inputs gathered as inputs[index[k]].
  Var dot_gather(std::span<const Var> weights, std::span<const Var> inputs,
                 std::span<const std::uint32_t> index, const Var& bias);
  Var sum(std::span<const Var> terms);

  // Reverse sweep from `loss`. The tape may be backpropagated once; clear()
  // makes it reusable.
  Gradient backward(const Var& loss);

  // Drops all nodes, keeps capacity, and invalidates existing Vars.
  void clear();

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::uint32_t id() const noexcept { return id_; }
  bool consumed() const noexcept { return consumed_; }
  Op op_at(std::size_t node) const { return nodes_.at(node).op; }

 private:
  struct Node {
    std::uint32_t first;
    std::uint32_t count;
    Op op;
  };

  void check(const Var& v) const;
  Var push(Op op, double value, std::uint32_t first);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
  std::uint32_t id_;
  bool consumed_ = false;
};

// Makes a tape active on this thread for the guard's lifetime.
class ActiveTape {
 public:
  explicit ActiveTape(Tape& tape);
  ~ActiveTape();
  ActiveTape(const ActiveTape&) = delete;
  ActiveTape& operator=(const ActiveTape&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

Tape& require_tape(const Var& v);

inline Var unary(Op op, const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  return require_tape(a).unary(op, a, value, da);
}

inline Var binary(Op op, const Var& a, const Var& b, double value, double da, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  return require_tape(a.is_constant() ? b : a).binary(op, a, b, value, da, db);
}

}  // namespace detail

inline double value_of(const Var& v) noexcept { return v.value(); }

inline Var operator+(const Var& a, const Var& b) {
  return detail::binary(Op::kAdd, a, b, a.value() + b.value(), 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::binary(Op::kSub, a, b, a.value() - b.value(), 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(Op::kMul, a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double out = a.value() * inv;
  return detail::binary(Op::kDiv, a, b, out, inv, -out * inv);
}
inline Var operator-(const Var& a) { return detail::unary(Op::kNeg, a, -a.value(), -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var operator+(const Var& a, double b) {
  return detail::unary(Op::kAdd, a, a.value() + b, 1.0);
}
inline Var operator+(double a, const Var& b) { return b + a; }
inline Var operator-(const Var& a, double b) {
  return detail::unary(Op::kSub, a, a.value() - b, 1.0);
}
inline Var operator-(double a, const Var& b) {
  return detail::unary(Op::kSub, b, a - b.value(), -1.0);
}
inline Var operator*(const Var& a, double b) {
  return detail::unary(Op::kMul, a, a.value() * b, b);
}
inline Var operator*(double a, const Var& b) { return b * a; }
inline Var operator/(const Var& a, double b) {
  return detail::unary(Op::kDiv, a, a.value() / b, 1.0 / b);
}
inline Var operator/(double a, const Var& b) {
  const double out = a / b.value();
  return detail::unary(Op::kDiv, b, out, -out / b.value());
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons act on values; they drive branch selection, never gradients.
inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::unary(Op::kExp, a, e, e);
}
inline Var log(const Var& a) {
  return detail::unary(Op::kLog, a, std::log(a.value()), 1.0 / a.value());
}
inline Var log1p(const Var& a) {
  return detail::unary(Op::kLog1p, a, std::log1p(a.value()), 1.0 / (1.0 + a.value()));
}
inline Var expm1(const Var& a) {
  return detail::unary(Op::kExpm1, a, std::expm1(a.value()), std::exp(a.value()));
}
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return detail::unary(Op::kSqrt, a, s, 0.5 / s);
}
inline Var square(const Var& a) { return a * a; }
inline Var pow(const Var& a, double b) {
  const double out = std::pow(a.value(), b);
  return detail::unary(Op::kPow, a, out, b * std::pow(a.value(), b - 1.0));
}
inline Var pow(const Var& a, const Var& b) {
  const double out = std::pow(a.value(), b.value());
  return detail::binary(Op::kPow, a, b, out, b.value() * std::pow(a.value(), b.value() - 1.0),
                        out * std::log(a.value()));
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return detail::unary(Op::kTanh, a, t, 1.0 - t * t);
}
inline Var softplus(const Var& a) {
  return detail::unary(Op::kSoftplus, a, tailflow::softplus(a.value()),
                       tailflow::sigmoid(a.value()));
}
inline Var erfc(const Var& a) {
  const double x = a.value();
  return detail::unary(Op::kErfc, a, tailflow::erfc(x), -2.0 / kSqrtPi * std::exp(-x * x));
}
inline Var log_erfc(const Var& a) {
  return detail::unary(Op::kLogErfc, a, tailflow::log_erfc(a.value()),
                       tailflow::log_erfc_derivative(a.value()));
}
inline Var inv_log_erfc(const Var& a) {
  const double v = tailflow::inv_log_erfc(a.value());
  return detail::unary(Op::kInvLogErfc, a, v, 1.0 / tailflow::log_erfc_derivative(v));
}
inline Var erfc_inv(const Var& a) {
  const double v = tailflow::erfc_inv(a.value());
  return detail::unary(Op::kErfcInv, a, v, -0.5 * kSqrtPi * std::exp(v * v));
}
inline Var normal_cdf(const Var& a) {
  return detail::unary(Op::kNormalCdf, a, tailflow::normal_cdf(a.value()),
                       tailflow::normal_pdf(a.value()));
}
inline Var normal_quantile(const Var& a) {
  const double q = tailflow::normal_quantile(a.value());
  return detail::unary(Op::kNormalQuantile, a, q, 1.0 / tailflow::normal_pdf(q));
}
inline Var log_gamma(const Var& a) {
  return detail::unary(Op::kLogGamma, a, tailflow::log_gamma(a.value()),
                       tailflow::digamma(a.value()));
}
// Subgradient 0 at the kink.
inline Var abs(const Var& a) {
  const double x = a.value();
  return detail::unary(Op::kAbs, a, std::fabs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
}
inline Var max(const Var& a, const Var& b) {
  const bool left = a.value() >= b.value();
  return detail::binary(Op::kMax, a, b, left ? a.value() : b.value(), left ? 1.0 : 0.0,
                        left ? 0.0 : 1.0);
}
inline Var min(const Var& a, const Var& b) {
  const bool left = a.value() <= b.value();
  return detail::binary(Op::kMin, a, b, left ? a.value() : b.value(), left ? 1.0 : 0.0,
                        left ? 0.0 : 1.0);
}
// Saturating: zero gradient once the bound is active.
inline Var clamp(const Var& a, double lo, double hi) {
  const double x = a.value();
  if (x < lo) return detail::unary(Op::kClamp, a, lo, 0.0);
  if (x > hi) return detail::unary(Op::kClamp, a, hi, 0.0);
  return a;
}

}  // namespace tailflow::ad

namespace tailflow {

// Double-precision counterparts of the Var overloads, so generic code can
// be written once over T in {double, ad::Var}.
using std::abs;
using std::exp;
using std::expm1;
using std::log;
using std::log1p;
using std::max;
using std::min;
using std::pow;
using std::sqrt;
using std::tanh;

inline double value_of(double x) noexcept { return x; }
inline double square(double x) noexcept { return x * x; }
inline double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

template <class T>
concept Scalar = std::is_same_v<T, double> || std::is_same_v<T, ad::Var>;

// Fused bias + sum_k w[k] * x[index[k]].
inline double dot_gather(std::span<const double> w, std::span<const double> x,
                         std::span<const std::uint32_t> index, double bias) {
  double acc = bias;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * x[index[k]];
  return acc;
}
ad::Var dot_gather(std::span<const ad::Var> w, std::span<const ad::Var> x,
                   std::span<const std::uint32_t> index, const ad::Var& bias);

inline double sum(std::span<const double> terms) {
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}
ad::Var sum(std::span<const ad::Var> terms);

}  // namespace tailflow
