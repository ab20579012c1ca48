// Compares the OpenMP kernels against their serial references and reports
// timings plus a max-difference check. Exit code 1 if any outputs diverge.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "rahn/fixture.hpp"
#include "rahn/model.hpp"
#include "rahn/prng.hpp"
#include "rahn/rcm.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

int main() {
  int failures = 0;

  // --- batch prediction ---
  rahn::fixture::FixtureSpec spec;
  spec.n_users = 100;
  spec.n_services = 200;
  spec.observed_fraction = 0.5;
  const auto fx = rahn::fixture::generate(spec);

  rahn::model::RahnConfig config;
  config.d = 16;
  config.n_stack = 2;
  config.seed = 11;
  rahn::model::RahnModel net(config, fx.matrix.n_users(), fx.matrix.n_services(),
                             fx.user_meta.region_vocab.size(),
                             fx.service_meta.region_vocab.size());
  rahn::model::ReputationLookup reputations;  // neutral 0.5 everywhere
  const auto samples = rahn::model::make_samples(fx.matrix, reputations,
                                                 fx.user_meta, fx.service_meta);

  auto t0 = Clock::now();
  const auto serial = rahn::model::predict_entries_serial(net, samples);
  const double t_serial = seconds_since(t0);
  t0 = Clock::now();
  const auto parallel = rahn::model::predict_entries(net, samples);
  const double t_parallel = seconds_since(t0);

  double max_diff = 0.0;
  for (std::size_t i = 0; i < serial.size(); ++i)
    max_diff = std::max(max_diff, std::abs(serial[i] - parallel[i]));
  std::printf("predict  %8zu entries  serial %.3fs  omp %.3fs  speedup %.2fx  max_diff %g\n",
              samples.size(), t_serial, t_parallel, t_serial / t_parallel,
              max_diff);
  if (max_diff != 0.0) {
    std::printf("FAIL: parallel prediction differs from serial\n");
    ++failures;
  }

  // --- k-means assignment ---
  rahn::Prng rng(3);
  std::vector<rahn::rcm::Feature> points(200000);
  for (auto& p : points) p = {rng.uniform(-1, 1), rng.uniform(-1, 1)};

  t0 = Clock::now();
  const auto a_serial = rahn::rcm::kmeans_serial(points, 15, 5, 25);
  const double k_serial = seconds_since(t0);
  t0 = Clock::now();
  const auto a_parallel = rahn::rcm::kmeans(points, 15, 5, 25);
  const double k_parallel = seconds_since(t0);

  std::printf("kmeans   %8zu points   serial %.3fs  omp %.3fs  speedup %.2fx  labels %s\n",
              points.size(), k_serial, k_parallel, k_serial / k_parallel,
              a_serial.labels == a_parallel.labels ? "identical" : "DIFFER");
  if (a_serial.labels != a_parallel.labels) ++failures;

  return failures == 0 ? 0 : 1;
}
