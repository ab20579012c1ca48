#include <doctest.h>

#include <cmath>

#include "rahn/errors.hpp"
#include "rahn/eval.hpp"
#include "rahn/fixture.hpp"
#include "rahn/prng.hpp"
#include "rahn/rcm.hpp"

using namespace rahn;
using namespace rahn::eval;
using rahn::data::Entry;
using rahn::data::QosMatrix;

TEST_CASE("mae_rmse") {
  SUBCASE("identity gives (0,0)") {
    const auto [mae, rmse] = mae_rmse({1, 2, 3}, {1, 2, 3});
    CHECK(mae == 0.0);
    CHECK(rmse == 0.0);
  }
  SUBCASE("unit residuals") {
    const auto [mae, rmse] = mae_rmse({0, 1}, {1, 0});
    CHECK(mae == 1.0);
    CHECK(rmse == 1.0);
  }
  SUBCASE("hand arithmetic for residuals {1,2,3}") {
    const auto [mae, rmse] = mae_rmse({1, 2, 3}, {0, 0, 0});
    CHECK(mae == doctest::Approx(2.0));
    CHECK(rmse == doctest::Approx(std::sqrt(14.0 / 3.0)));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(mae_rmse({1}, {1, 2}), ValidationError);
    CHECK_THROWS_AS(mae_rmse({}, {}), ValidationError);
  }
}

TEST_CASE("mae_rmse matches brute force and rmse >= mae") {
  Prng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(40);
    std::vector<double> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.uniform(0, 5);
      pred[i] = rng.uniform(0, 5);
    }
    const auto [mae, rmse] = mae_rmse(truth, pred);
    double abs_sum = 0, sq_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      abs_sum += std::abs(truth[i] - pred[i]);
      sq_sum += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    CHECK(std::abs(mae - abs_sum / static_cast<double>(n)) < 1e-12);
    CHECK(std::abs(rmse - std::sqrt(sq_sum / static_cast<double>(n))) < 1e-12);
    CHECK(rmse >= mae - 1e-15);
  }
}

TEST_CASE("baselines") {
  const QosMatrix train(3, 2, {{0, 0, 1.0}, {1, 0, 3.0}});
  SUBCASE("global mean") {
    const BaselinePredictor b(train, BaselineKind::global_mean);
    CHECK(b.predict(2, 1) == doctest::Approx(2.0));
  }
  SUBCASE("unseen user falls back to the global mean") {
    const BaselinePredictor b(train, BaselineKind::user_mean);
    CHECK(b.predict(0, 0) == doctest::Approx(1.0));
    CHECK(b.predict(2, 0) == doctest::Approx(2.0));
  }
  SUBCASE("user mean beats global mean under strong per-user offsets") {
    // user u observes value u everywhere
    std::vector<Entry> train_e, test_e;
    for (std::size_t u = 0; u < 5; ++u)
      for (std::size_t s = 0; s < 10; ++s)
        ((s % 2 == 0) ? train_e : test_e).push_back({u, s, static_cast<double>(u)});
    const QosMatrix tr(5, 10, train_e), te(5, 10, test_e);
    const BaselinePredictor user_b(tr, BaselineKind::user_mean);
    const BaselinePredictor global_b(tr, BaselineKind::global_mean);
    std::vector<double> truth;
    for (const Entry& e : te.entries()) truth.push_back(e.value);
    const auto [user_mae, r1] = mae_rmse(truth, user_b.predict_all(te));
    const auto [global_mae, r2] = mae_rmse(truth, global_b.predict_all(te));
    CHECK(user_mae <= global_mae);
    CHECK(user_mae == doctest::Approx(0.0));
  }
}

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.rcm.n_user_clusters = 2;
  config.rcm.n_service_clusters = 3;
  config.model.d = 4;
  config.model.n_stack = 0;
  config.model.epochs = 2;
  config.model.batch_size = 64;
  config.model.learning_rate = 0.005;
  config.protocol.seed = 9;
  return config;
}

}  // namespace

TEST_CASE("run_experiment is deterministic and reports consistent metrics") {
  fixture::FixtureSpec spec;
  spec.n_users = 20;
  spec.n_services = 30;
  spec.observed_fraction = 0.5;
  const auto fx = fixture::generate(spec);
  const auto config = small_config();

  const MetricReport a =
      run_experiment(fx.matrix, fx.user_meta, fx.service_meta, config, 0.3);
  const MetricReport b =
      run_experiment(fx.matrix, fx.user_meta, fx.service_meta, config, 0.3);
  CHECK(a.mae == b.mae);
  CHECK(a.rmse == b.rmse);
  CHECK(a.n_test == b.n_test);
  CHECK(a.rmse >= a.mae);
  CHECK(a.npe_label == "0004");
  CHECK(a.n_removed_outliers ==
        static_cast<std::size_t>(
            std::ceil(0.1 * static_cast<double>(a.n_test + a.n_removed_outliers))));
}

TEST_CASE("reputations depend only on the training matrix") {
  fixture::FixtureSpec spec;
  spec.n_users = 15;
  spec.n_services = 20;
  spec.observed_fraction = 0.6;
  const auto fx = fixture::generate(spec);

  const data::SplitSpec split_spec{0.4, 33};
  const auto split_a = data::split_by_density(fx.matrix, split_spec);

  // perturb every test-only entry value and re-split with the same seed
  std::vector<Entry> perturbed = split_a.train.entries();
  for (Entry e : split_a.test.entries()) {
    e.value += 10.0;
    perturbed.push_back(e);
  }
  const QosMatrix modified(fx.matrix.n_users(), fx.matrix.n_services(), perturbed);
  const auto split_b = data::split_by_density(modified, split_spec);
  REQUIRE(split_a.train.entries() == split_b.train.entries());

  const auto rep_a = rcm::compute_reputations(split_a.train,
                                              data::EntityKind::user, 3, 0.05, 7);
  const auto rep_b = rcm::compute_reputations(split_b.train,
                                              data::EntityKind::user, 3, 0.05, 7);
  CHECK(rep_a.reputations == rep_b.reputations);
}

TEST_CASE("sweep produces one report per cell with distinct labels") {
  fixture::FixtureSpec spec;
  spec.n_users = 15;
  spec.n_services = 20;
  spec.observed_fraction = 0.5;
  const auto fx = fixture::generate(spec);

  ExperimentConfig base = small_config();
  base.model.epochs = 1;
  std::vector<SweepCell> cells;
  for (std::size_t n : {0u, 1u})
    for (int pe : {0, 1})
      for (double md : {0.3, 0.5})
        cells.push_back({n, pe != 0, 4, md});

  const SweepResult result =
      sweep(fx.matrix, fx.user_meta, fx.service_meta, base, cells);
  CHECK(result.failures.empty());
  REQUIRE(result.reports.size() == 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j)
      CHECK((result.reports[i].npe_label != result.reports[j].npe_label ||
             result.reports[i].density != result.reports[j].density));

  const std::string csv = "/tmp/rahn_test_sweep.csv";
  write_sweep_csv(result, csv);

  CHECK_THROWS_AS(sweep(fx.matrix, fx.user_meta, fx.service_meta, base, {}),
                  ConfigError);
}
