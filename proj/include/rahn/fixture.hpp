#pragma once

#include <cstdint>

#include "rahn/data.hpp"

namespace rahn::fixture {

struct FixtureSpec {
  std::size_t n_users = 50;
  std::size_t n_services = 100;
  std::size_t rank = 3;
  double noise_sigma = 0.05;
  double observed_fraction = 1.0;  // fraction of cells carrying an observation
  std::size_t n_user_regions = 4;
  std::size_t n_service_regions = 6;
  std::uint64_t seed = 7;
};

struct Fixture {
  data::QosMatrix matrix;
  data::MetadataTable user_meta;
  data::MetadataTable service_meta;
};

// Seeded low-rank nonnegative matrix plus round-robin region assignments.
// Values are sums of rank-many nonnegative factor products with Gaussian
// noise, clamped at zero.
Fixture generate(const FixtureSpec& spec);

}  // namespace rahn::fixture
