#include "tailflow/parameters.hpp"

#include <stdexcept>

namespace tailflow {

std::size_t ParameterSet::allocate(std::string name, std::size_t size, double fill) {
  for (const auto& b : blocks_) {
    if (b.name == name) throw std::invalid_argument("duplicate parameter block: " + name);
  }
  const std::size_t offset = values_.size();
  values_.resize(offset + size, fill);
  blocks_.push_back(ParamBlock{std::move(name), offset, size});
  return offset;
}

const ParamBlock& ParameterSet::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("unknown parameter block: " + name);
}

std::span<double> ParameterSet::block_values(const std::string& name) {
  const auto& b = block(name);
  return std::span<double>(values_).subspan(b.offset, b.size);
}

std::span<const double> ParameterSet::block_values(const std::string& name) const {
  const auto& b = block(name);
  return std::span<const double>(values_).subspan(b.offset, b.size);
}

}  // namespace tailflow
