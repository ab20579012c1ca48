#include "rahn/fixture.hpp"

#include <cmath>
#include <numbers>

#include "rahn/errors.hpp"
#include "rahn/prng.hpp"

namespace rahn::fixture {

namespace {

// Box-Muller; consumes two uniforms per call.
double next_gaussian(Prng& rng) {
  const double u1 = 1.0 - rng.next_double();  // avoid log(0)
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

data::MetadataTable round_robin_regions(std::size_t n, std::size_t n_regions,
                                        data::EntityKind kind,
                                        const char* prefix) {
  data::MetadataTable table;
  table.region_vocab.push_back("<unknown>");
  for (std::size_t r = 0; r < n_regions; ++r)
    table.region_vocab.push_back(std::string(prefix) + std::to_string(r));
  for (std::size_t i = 0; i < n; ++i)
    table.entities.push_back({i, 1 + i % n_regions, kind});
  return table;
}

}  // namespace

Fixture generate(const FixtureSpec& spec) {
  if (spec.n_users == 0 || spec.n_services == 0 || spec.rank == 0)
    throw ConfigError("fixture: dimensions and rank must be positive");
  if (!(spec.observed_fraction > 0.0) || spec.observed_fraction > 1.0)
    throw ConfigError("fixture: observed_fraction must be in (0, 1]");

  Prng rng(spec.seed);
  std::vector<double> u(spec.n_users * spec.rank);
  std::vector<double> s(spec.n_services * spec.rank);
  for (double& x : u) x = rng.uniform(0.0, 1.0);
  for (double& x : s) x = rng.uniform(0.0, 1.0);

  std::vector<data::Entry> entries;
  entries.reserve(static_cast<std::size_t>(
      spec.observed_fraction *
      static_cast<double>(spec.n_users * spec.n_services)));
  for (std::size_t i = 0; i < spec.n_users; ++i)
    for (std::size_t j = 0; j < spec.n_services; ++j) {
      const bool observed =
          spec.observed_fraction >= 1.0 ||
          rng.next_double() < spec.observed_fraction;
      double dot = 0.0;
      for (std::size_t r = 0; r < spec.rank; ++r)
        dot += u[i * spec.rank + r] * s[j * spec.rank + r];
      const double noise = spec.noise_sigma * next_gaussian(rng);
      if (observed)
        entries.push_back({i, j, std::max(0.0, dot + noise)});
    }

  Fixture fx{data::QosMatrix(spec.n_users, spec.n_services, std::move(entries)),
             round_robin_regions(spec.n_users, spec.n_user_regions,
                                 data::EntityKind::user, "UR"),
             round_robin_regions(spec.n_services, spec.n_service_regions,
                                 data::EntityKind::service, "SR")};
  return fx;
}

}  // namespace rahn::fixture
