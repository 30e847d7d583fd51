#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace fpflow {

/// n x d array of sample points together with the seed that produced them.
struct ParticleEnsemble {
  Eigen::MatrixXd points;       // one sample per row
  std::uint64_t seed = 0;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

}  // namespace fpflow
