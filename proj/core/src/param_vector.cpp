#include "fpflow/param_vector.hpp"

#include <stdexcept>

namespace fpflow {

void ParameterLayout::add_group(std::string name, Eigen::Index size) {
  if (size < 0) throw std::invalid_argument("parameter group size must be non-negative");
  if (has_group(name)) throw std::invalid_argument("duplicate parameter group: " + name);
  groups_.emplace_back(std::move(name), ParamRange{total_, size});
  total_ += size;
}

bool ParameterLayout::has_group(std::string_view name) const {
  for (const auto& [n, r] : groups_) {
    if (n == name) return true;
  }
  return false;
}

const ParamRange& ParameterLayout::range(std::string_view name) const {
  for (const auto& [n, r] : groups_) {
    if (n == name) return r;
  }
  throw std::out_of_range("unknown parameter group: " + std::string(name));
}

}  // namespace fpflow
