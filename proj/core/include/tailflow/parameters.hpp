#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tailflow {

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat storage of every trainable real in a model, partitioned into named
// blocks. Block order is allocation order and is stable across save/load.
class ParameterSet {
 public:
  // Reserves `size` reals initialised to `fill`; returns the block offset.
  std::size_t allocate(std::string name, std::size_t size, double fill = 0.0);

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  std::span<double> block_values(const std::string& name);
  std::span<const double> block_values(const std::string& name) const;

 private:
  std::vector<double> values_;
  std::vector<ParamBlock> blocks_;
};

}  // namespace tailflow
