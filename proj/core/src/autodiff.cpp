#include "tailflow/autodiff.hpp"

#include <atomic>
#include <limits>

namespace tailflow::ad {
namespace {

thread_local Tape* g_active = nullptr;

std::uint32_t next_tape_id() {
  // 0 is reserved for constants.
  static std::atomic<std::uint32_t> counter{0};
  std::uint32_t id = ++counter;
  while (id == 0) id = ++counter;
  return id;
}

}  // namespace

double Gradient::operator[](const Var& v) const {
  if (v.is_constant()) return 0.0;
  if (v.tape_id() != tape_ || v.index() >= adjoints_.size()) {
    throw TapeError("gradient requested for a Var from a different tape");
  }
  return adjoints_[v.index()];
}

Tape::Tape() : id_(next_tape_id()) {}

Tape::~Tape() {
  if (g_active == this) g_active = nullptr;
}

Tape* Tape::active() noexcept { return g_active; }

void Tape::check(const Var& v) const {
  if (v.is_constant()) return;
  if (v.tape_id() != id_) throw TapeError("Var belongs to a different or cleared tape");
  if (consumed_) throw TapeError("tape already consumed by backward()");
}

Var Tape::push(Op op, double value, std::uint32_t first) {
  const auto count = static_cast<std::uint32_t>(parents_.size()) - first;
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max() - 1) {
    throw TapeError("tape node capacity exhausted");
  }
  nodes_.push_back(Node{first, count, op});
  return Var(value, static_cast<std::uint32_t>(nodes_.size() - 1), id_);
}

Var Tape::variable(double value) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  return push(Op::kLeaf, value, static_cast<std::uint32_t>(parents_.size()));
}

Var Tape::record(Op op, std::span<const Var> inputs, double value,
                 std::span<const double> partials) {
  if (inputs.size() != partials.size()) {
    throw TapeError("record: inputs and partials differ in length");
  }
  const auto first = static_cast<std::uint32_t>(parents_.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].is_constant()) continue;
    check(inputs[k]);
    parents_.push_back(inputs[k].index());
    partials_.push_back(partials[k]);
  }
  if (parents_.size() == first) return Var(value);
  return push(op, value, first);
}

Var Tape::unary(Op op, const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  check(a);
  const auto first = static_cast<std::uint32_t>(parents_.size());
  parents_.push_back(a.index());
  partials_.push_back(da);
  return push(op, value, first);
}

Var Tape::binary(Op op, const Var& a, const Var& b, double value, double da, double db) {
  const auto first = static_cast<std::uint32_t>(parents_.size());
  if (!a.is_constant()) {
    check(a);
    parents_.push_back(a.index());
    partials_.push_back(da);
  }
  if (!b.is_constant()) {
    check(b);
    parents_.push_back(b.index());
    partials_.push_back(db);
  }
  if (parents_.size() == first) return Var(value);
  return push(op, value, first);
}

Var Tape::dot(std::span<const Var> weights, std::span<const Var> inputs, const Var& bias) {
  if (weights.size() != inputs.size()) throw TapeError("dot: length mismatch");
  const auto first = static_cast<std::uint32_t>(parents_.size());
  double acc = bias.value();
  if (!bias.is_constant()) {
    check(bias);
    parents_.push_back(bias.index());
    partials_.push_back(1.0);
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const Var& w = weights[k];
    const Var& x = inputs[k];
    acc += w.value() * x.value();
    if (!w.is_constant()) {
      check(w);
      parents_.push_back(w.index());
      partials_.push_back(x.value());
    }
    if (!x.is_constant()) {
      check(x);
      parents_.push_back(x.index());
      partials_.push_back(w.value());
    }
  }
  if (parents_.size() == first) return Var(acc);
  return push(Op::kDot, acc, first);
}

Var Tape::dot_gather(std::span<const Var> weights, std::span<const Var> inputs,
                     std::span<const std::uint32_t> index, const Var& bias) {
  if (weights.size() != index.size()) throw TapeError("dot_gather: length mismatch");
  const auto first = static_cast<std::uint32_t>(parents_.size());
  double acc = bias.value();
  if (!bias.is_constant()) {
    check(bias);
    parents_.push_back(bias.index());
    partials_.push_back(1.0);
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const Var& w = weights[k];
    const Var& x = inputs[index[k]];
    acc += w.value() * x.value();
    if (!w.is_constant()) {
      check(w);
      parents_.push_back(w.index());
      partials_.push_back(x.value());
    }
    if (!x.is_constant()) {
      check(x);
      parents_.push_back(x.index());
      partials_.push_back(w.value());
    }
  }
  if (parents_.size() == first) return Var(acc);
  return push(Op::kDot, acc, first);
}

Var Tape::sum(std::span<const Var> terms) {
  const auto first = static_cast<std::uint32_t>(parents_.size());
  double acc = 0.0;
  for (const Var& t : terms) {
    acc += t.value();
    if (t.is_constant()) continue;
    check(t);
    parents_.push_back(t.index());
    partials_.push_back(1.0);
  }
  if (parents_.size() == first) return Var(acc);
  return push(Op::kSum, acc, first);
}

Gradient Tape::backward(const Var& loss) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  std::vector<double> adjoints(nodes_.size(), 0.0);
  consumed_ = true;
  if (loss.is_constant()) return Gradient(std::move(adjoints), id_);
  if (loss.tape_id() != id_) throw TapeError("loss belongs to a different or cleared tape");

  adjoints[loss.index()] = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    const double g = adjoints[i];
    if (g == 0.0) continue;
    const Node& node = nodes_[i];
    const std::uint32_t end = node.first + node.count;
    for (std::uint32_t k = node.first; k < end; ++k) {
      adjoints[parents_[k]] += g * partials_[k];
    }
  }
  return Gradient(std::move(adjoints), id_);
}

void Tape::clear() {
  nodes_.clear();
  parents_.clear();
  partials_.clear();
  consumed_ = false;
  id_ = next_tape_id();
}

ActiveTape::ActiveTape(Tape& tape) : previous_(g_active) { g_active = &tape; }

ActiveTape::~ActiveTape() { g_active = previous_; }

namespace detail {

Tape& require_tape(const Var& v) {
  Tape* tape = g_active;
  if (tape == nullptr) throw TapeError("operation on a tape variable with no active tape");
  if (tape->id() != v.tape_id()) throw TapeError("Var belongs to a different or cleared tape");
  return *tape;
}

}  // namespace detail
}  // namespace tailflow::ad

namespace tailflow {

ad::Var dot_gather(std::span<const ad::Var> w, std::span<const ad::Var> x,
                   std::span<const std::uint32_t> index, const ad::Var& bias) {
  ad::Tape* tape = ad::Tape::active();
  if (tape == nullptr) {
    double acc = bias.value();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!w[k].is_constant() || !x[index[k]].is_constant()) {
        throw TapeError("operation on a tape variable with no active tape");
      }
      acc += w[k].value() * x[index[k]].value();
    }
    if (!bias.is_constant()) throw TapeError("operation on a tape variable with no active tape");
    return ad::Var(acc);
  }
  return tape->dot_gather(w, x, index, bias);
}

ad::Var sum(std::span<const ad::Var> terms) {
  ad::Tape* tape = ad::Tape::active();
  if (tape == nullptr) {
    double acc = 0.0;
    for (const auto& t : terms) {
      if (!t.is_constant()) throw TapeError("operation on a tape variable with no active tape");
      acc += t.value();
    }
    return ad::Var(acc);
  }
  return tape->sum(terms);
}

}  // namespace tailflow
