#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fpflow {

struct ParamRange {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Registry mapping named parameter groups to disjoint index ranges that
/// cover [0, total_size) exactly, in registration order.
class ParameterLayout {
 public:
  void add_group(std::string name, Eigen::Index size);
  bool has_group(std::string_view name) const;
  const ParamRange& range(std::string_view name) const;
  Eigen::Index total_size() const { return total_; }
  const std::vector<std::pair<std::string, ParamRange>>& groups() const { return groups_; }

 private:
  std::vector<std::pair<std::string, ParamRange>> groups_;
  Eigen::Index total_ = 0;
};

/// Flat parameter vector plus its group layout.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(ParameterLayout layout)
      : layout_(std::move(layout)), values_(Eigen::VectorXd::Zero(layout_.total_size())) {}

  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  Eigen::Ref<Eigen::VectorXd> group(std::string_view name) {
    const ParamRange& r = layout_.range(name);
    return values_.segment(r.offset, r.size);
  }
  Eigen::Ref<const Eigen::VectorXd> group(std::string_view name) const {
    const ParamRange& r = layout_.range(name);
    return values_.segment(r.offset, r.size);
  }

  const ParameterLayout& layout() const { return layout_; }
  bool all_finite() const { return values_.allFinite(); }

 private:
  ParameterLayout layout_;
  Eigen::VectorXd values_;
};

}  // namespace fpflow
