#include <doctest.h>

#include "fpflow/param_vector.hpp"

using namespace fpflow;

TEST_CASE("layout ranges are disjoint and cover the total") {
  ParameterLayout layout;
  layout.add_group("latent.mu", 3);
  layout.add_group("latent.cov_factor", 9);
  layout.add_group("block[0].s1", 5);
  CHECK(layout.total_size() == 17);

  Eigen::Index covered = 0;
  Eigen::Index expected_offset = 0;
  for (const auto& [name, range] : layout.groups()) {
    CHECK(range.offset == expected_offset);
    expected_offset += range.size;
    covered += range.size;
  }
  CHECK(covered == layout.total_size());
}

TEST_CASE("duplicate and unknown groups are rejected") {
  ParameterLayout layout;
  layout.add_group("a", 2);
  CHECK_THROWS(layout.add_group("a", 3));
  CHECK_THROWS(layout.range("missing"));
  CHECK(layout.has_group("a"));
  CHECK_FALSE(layout.has_group("b"));
}

TEST_CASE("group views write through to the flat vector") {
  ParameterLayout layout;
  layout.add_group("a", 2);
  layout.add_group("b", 3);
  ParameterVector params(std::move(layout));
  CHECK(params.size() == 5);
  CHECK(params.all_finite());

  params.group("b")(1) = 7.5;
  CHECK(params.values()(3) == 7.5);
  params.values()(0) = -1.0;
  CHECK(params.group("a")(0) == -1.0);

  params.values()(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(params.all_finite());
}
