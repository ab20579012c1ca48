// Acceptance suite: one pass/fail line per criterion. Criteria that need the
// real WS-DREAM response-time matrix are skipped (not failed) when the
// dataset is absent; point RAHN_WSDREAM_RT at rtMatrix.txt to enable them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rahn/data.hpp"
#include "rahn/eval.hpp"
#include "rahn/experiment.hpp"
#include "rahn/fixture.hpp"
#include "rahn/model.hpp"
#include "rahn/prng.hpp"
#include "rahn/rcm.hpp"
#include "rahn/tensor.hpp"

using namespace rahn;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

enum class Outcome { pass, fail, skip, report_only };

void run_criterion(int number, const std::string& name,
                   const std::function<std::pair<Outcome, std::string>()>& fn) {
  const auto t0 = Clock::now();
  Outcome outcome = Outcome::fail;
  std::string detail;
  try {
    std::tie(outcome, detail) = fn();
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const char* tag = outcome == Outcome::pass          ? "PASS"
                    : outcome == Outcome::skip        ? "SKIP"
                    : outcome == Outcome::report_only ? "INFO"
                                                      : "FAIL";
  std::printf("[%s] criterion %d: %-38s (%.1fs) %s\n", tag, number, name.c_str(),
              secs, detail.c_str());
  std::fflush(stdout);
  if (outcome == Outcome::fail) ++g_failures;
}

model::RahnModel tiny_model(std::size_t d, std::size_t n_stack, bool use_pe,
                            std::uint64_t seed) {
  model::RahnConfig config;
  config.d = d;
  config.n_stack = n_stack;
  config.use_pe = use_pe;
  config.seed = seed;
  return model::RahnModel(config, 3, 4, 2, 3);
}

std::optional<std::string> wsdream_path() {
  if (const char* env = std::getenv("RAHN_WSDREAM_RT")) return std::string(env);
  for (const char* candidate : {"data/rtMatrix.txt", "../data/rtMatrix.txt"})
    if (std::ifstream(candidate).good()) return std::string(candidate);
  return std::nullopt;
}

// 1. Gradient soundness
std::pair<Outcome, std::string> gradient_soundness() {
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t n_stack : {0u, 1u}) {
    for (bool use_pe : {false, true}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto net = tiny_model(4, n_stack, use_pe, seed);
        Prng rng(seed * 100);
        std::vector<model::TrainSample> batch;
        for (int i = 0; i < 2; ++i)
          batch.push_back({rng.next_below(3), rng.next_below(4),
                           rng.next_below(2), rng.next_below(3),
                           rng.next_double(), rng.next_double(),
                           rng.uniform(0, 2)});
        auto j = model::loss(net, batch, 1e-3);
        tensor::backward(j);
        for (const auto& p : net.parameters()) {
          for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double saved = p.value->values()[i];
            p.value->values()[i] = saved + h;
            const double up = model::loss(net, batch, 1e-3)->item();
            p.value->values()[i] = saved - h;
            const double down = model::loss(net, batch, 1e-3)->item();
            p.value->values()[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p.value->grad()[i];
            const double denom =
                std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
          }
        }
      }
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err %.2e", worst);
  return {worst < 1e-4 ? Outcome::pass : Outcome::fail, buf};
}

// 2. Reputation identities
std::pair<Outcome, std::string> reputation_identities() {
  Prng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t po = rng.next_below(200);
    const std::uint64_t ne = rng.next_below(200);
    const double beta = 0.001 + rng.next_double();
    const double re = rcm::reputation({po, ne}, beta).value;
    const double re_swapped = rcm::reputation({ne, po}, beta).value;
    // p1 + p2 = 1 by construction; check via the two evaluations
    if (std::abs(re + re_swapped - 1.0) > 1e-12)
      return {Outcome::fail, "p1 + p2 identity violated"};
    const double re_up = rcm::reputation({po + 1, ne}, beta).value;
    // strict increase is only representable before the sigmoid saturates
    const double margin =
        beta * (static_cast<double>(po) - static_cast<double>(ne));
    if (std::abs(margin) < 30.0 ? !(re_up > re) : !(re_up >= re))
      return {Outcome::fail, "monotonicity in po violated"};
    if (rcm::reputation({po, po}, beta).value != 0.5)
      return {Outcome::fail, "Re(po, po) != 0.5"};
  }
  const double saturated = rcm::reputation({1000000000ULL, 0}, 1.0).value;
  if (!std::isfinite(saturated) || std::abs(saturated - 1.0) > 1e-12)
    return {Outcome::fail, "overflow at po = 1e9"};
  return {Outcome::pass, "1000 triples"};
}

// 3. Dimension arithmetic
std::pair<Outcome, std::string> dimension_arithmetic() {
  for (std::size_t d : {4u, 8u, 16u, 32u}) {
    auto net = tiny_model(d, 1, false, 3);
    const model::TrainSample s{1, 2, 1, 1, 0.7, 0.3, 1.0};
    const auto l0 = model::lfem_forward(net, s);
    if (l0->cols() != 2 * d) return {Outcome::fail, "L(0) width"};
    const auto& stack = net.stacks[0];
    const std::size_t widths[5] = {2 * d, d, d / 2, d, 2 * d};
    for (int g = 0; g < 4; ++g)
      if (stack.g_w[g]->rows() != widths[g] || stack.g_w[g]->cols() != widths[g + 1])
        return {Outcome::fail, "hourglass widths"};
    if (stack.out_w->rows() != 13 * d / 2)
      return {Outcome::fail, "E(t) width != 13d/2"};
    const auto l1 = model::qphn_layer(stack, l0, net.config());
    if (l1->cols() != 2 * d) return {Outcome::fail, "qphn output width"};
    if (!model::forward(net, s)->is_scalar())
      return {Outcome::fail, "head output not scalar"};
  }
  return {Outcome::pass, "d in {4,8,16,32}"};
}

// 4. Metric oracle
std::pair<Outcome, std::string> metric_oracle() {
  Prng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(50);
    std::vector<double> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.uniform(0, 10);
      pred[i] = rng.uniform(0, 10);
    }
    const auto [mae, rmse] = eval::mae_rmse(truth, pred);
    double abs_sum = 0, sq_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      abs_sum += std::abs(truth[i] - pred[i]);
      sq_sum += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    if (std::abs(mae - abs_sum / static_cast<double>(n)) > 1e-12 ||
        std::abs(rmse - std::sqrt(sq_sum / static_cast<double>(n))) > 1e-12)
      return {Outcome::fail, "brute-force mismatch"};
    if (rmse < mae - 1e-15) return {Outcome::fail, "rmse < mae"};
  }
  return {Outcome::pass, "100 residual sets"};
}

// 5. Protocol conservation
std::pair<Outcome, std::string> protocol_conservation() {
  fixture::FixtureSpec spec;
  spec.n_users = 25;
  spec.n_services = 40;
  spec.observed_fraction = 0.5;
  const auto fx = fixture::generate(spec);

  Prng rng(66);
  for (int trial = 0; trial < 10; ++trial) {
    const double density = 0.05 + 0.9 * rng.next_double();
    const auto split = data::split_by_density(fx.matrix, {density, rng.next_u64()});
    if (split.train.n_entries() + split.test.n_entries() != fx.matrix.n_entries())
      return {Outcome::fail, "split is not a partition"};
    std::vector<data::Entry> merged = split.train.entries();
    merged.insert(merged.end(), split.test.entries().begin(),
                  split.test.entries().end());
    if (data::QosMatrix(fx.matrix.n_users(), fx.matrix.n_services(), merged)
            .entries() != fx.matrix.entries())
      return {Outcome::fail, "split loses or invents entries"};

    const rcm::ReliableClusterStats stats{0, 1.0, 0.3};
    const auto fu = rcm::classify_feedback(split.train, stats,
                                           data::EntityKind::user);
    const auto fs = rcm::classify_feedback(split.train, stats,
                                           data::EntityKind::service);
    std::uint64_t total_u = 0, total_s = 0;
    for (const auto& f : fu) total_u += f.po + f.ne;
    for (const auto& f : fs) total_s += f.po + f.ne;
    if (total_u != split.train.n_entries() || total_s != split.train.n_entries())
      return {Outcome::fail, "feedback counts not conserved"};
  }

  // reputations invariant to test-entry perturbation
  const data::SplitSpec split_spec{0.3, 77};
  const auto split = data::split_by_density(fx.matrix, split_spec);
  std::vector<data::Entry> perturbed = split.train.entries();
  for (data::Entry e : split.test.entries()) {
    e.value += 5.0;
    perturbed.push_back(e);
  }
  const data::QosMatrix modified(fx.matrix.n_users(), fx.matrix.n_services(),
                                 perturbed);
  const auto split2 = data::split_by_density(modified, split_spec);
  const auto rep_a =
      rcm::compute_reputations(split.train, data::EntityKind::user, 3, 0.05, 5);
  const auto rep_b =
      rcm::compute_reputations(split2.train, data::EntityKind::user, 3, 0.05, 5);
  if (rep_a.reputations != rep_b.reputations)
    return {Outcome::fail, "reputations depend on test entries"};
  return {Outcome::pass, ""};
}

// 6. Synthetic end-to-end
std::pair<Outcome, std::string> synthetic_end_to_end() {
  fixture::FixtureSpec spec;  // 50 x 100, rank 3, sigma 0.05, fully observed
  const auto fx = fixture::generate(spec);

  const auto split = data::split_by_density(fx.matrix, {0.2, 123});

  model::ReputationLookup reputations;
  reputations.user = rcm::compute_reputations(split.train, data::EntityKind::user,
                                              3, 0.05, 1)
                         .reputations;
  reputations.service = rcm::compute_reputations(
                            split.train, data::EntityKind::service, 5, 0.05, 2)
                            .reputations;

  model::RahnConfig config;
  config.d = 8;
  config.n_stack = 1;
  config.lambda_reg = 1e-5;
  config.seed = 3;
  model::RahnModel net(config, fx.matrix.n_users(), fx.matrix.n_services(),
                       fx.user_meta.region_vocab.size(),
                       fx.service_meta.region_vocab.size());

  const auto train_samples = model::make_samples(split.train, reputations,
                                                 fx.user_meta, fx.service_meta);
  model::TrainOptions options;
  options.epochs = 50;
  options.batch_size = 64;
  options.learning_rate = 0.005;
  options.seed = 3;
  model::train(net, train_samples, options);

  const auto test_samples = model::make_samples(split.test, reputations,
                                                fx.user_meta, fx.service_meta);
  const auto preds = model::predict_entries(net, test_samples);
  std::vector<double> truth;
  for (const auto& s : test_samples) truth.push_back(s.target_qos);
  const auto [model_mae, model_rmse] = eval::mae_rmse(truth, preds);
  (void)model_rmse;

  const eval::BaselinePredictor baseline(split.train,
                                         eval::BaselineKind::global_mean);
  const auto [baseline_mae, r] = eval::mae_rmse(truth, baseline.predict_all(split.test));
  (void)r;

  char buf[96];
  std::snprintf(buf, sizeof buf, "model MAE %.4f vs baseline %.4f (need <= %.4f)",
                model_mae, baseline_mae, 0.5 * baseline_mae);
  return {model_mae <= 0.5 * baseline_mae ? Outcome::pass : Outcome::fail, buf};
}

// 7. WS-DREAM reproduction (gated only when the dataset is present)
std::pair<Outcome, std::string> wsdream_reproduction() {
  const auto path = wsdream_path();
  if (!path)
    return {Outcome::skip, "WS-DREAM rtMatrix not found (set RAHN_WSDREAM_RT)"};

  const auto matrix = data::load_matrix(*path, data::MatrixFormat::matrix_text);
  if (matrix.n_users() != 339 || matrix.n_services() != 5825)
    return {Outcome::fail, "unexpected WS-DREAM dimensions"};

  data::MetadataTable user_meta, service_meta;
  user_meta.region_vocab.push_back("<unknown>");
  service_meta.region_vocab.push_back("<unknown>");

  ExperimentConfig config;  // reference settings: N_u=5 N_s=15 N=2 PE=0 d=16
  config.model.epochs = 30;
  config.protocol.seed = 2024;
  const auto report =
      eval::run_experiment(matrix, user_meta, service_meta, config, 0.10);

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "MAE %.4f RMSE %.4f (gate MAE<=0.35 RMSE<=0.60; baseline MAE "
                "%.4f, need >=30%% better; stretch 0.115/0.335)",
                report.mae, report.rmse, report.baseline_global_mean_mae);
  const bool gate = report.mae <= 0.35 && report.rmse <= 0.60 &&
                    report.mae <= 0.7 * report.baseline_global_mean_mae;
  return {gate ? Outcome::pass : Outcome::fail, buf};
}

// 8. Sweep trend (reported, never gated)
std::pair<Outcome, std::string> sweep_trend() {
  const auto path = wsdream_path();
  if (!path)
    return {Outcome::skip, "WS-DREAM rtMatrix not found (set RAHN_WSDREAM_RT)"};

  const auto matrix = data::load_matrix(*path, data::MatrixFormat::matrix_text);
  data::MetadataTable user_meta, service_meta;
  user_meta.region_vocab.push_back("<unknown>");
  service_meta.region_vocab.push_back("<unknown>");

  ExperimentConfig base;
  base.model.d = 8;
  base.model.epochs = 15;
  base.protocol.seed = 2024;
  const auto result = eval::sweep(matrix, user_meta, service_meta, base,
                                  {{0, false, 8, 0.02}, {2, false, 8, 0.02}});
  if (result.reports.size() != 2)
    return {Outcome::report_only, "sweep cells failed"};
  char buf[96];
  std::snprintf(buf, sizeof buf, "MAE N=0: %.4f, N=2: %.4f (%s)",
                result.reports[0].mae, result.reports[1].mae,
                result.reports[1].mae <= result.reports[0].mae
                    ? "trend holds"
                    : "trend does not hold");
  return {Outcome::report_only, buf};
}

// 9. Determinism of a full training run
std::pair<Outcome, std::string> training_determinism() {
  auto run_once = [](const std::string& ckpt) {
    fixture::FixtureSpec spec;
    spec.n_users = 15;
    spec.n_services = 25;
    spec.observed_fraction = 0.5;
    const auto fx = fixture::generate(spec);
    const auto split = data::split_by_density(fx.matrix, {0.4, 8});
    model::ReputationLookup reputations;
    reputations.user = rcm::compute_reputations(split.train,
                                                data::EntityKind::user, 2, 0.05, 1)
                           .reputations;
    reputations.service = rcm::compute_reputations(
                              split.train, data::EntityKind::service, 3, 0.05, 2)
                              .reputations;
    model::RahnConfig config;
    config.d = 8;
    config.n_stack = 1;
    config.seed = 17;
    model::RahnModel net(config, 15, 25, fx.user_meta.region_vocab.size(),
                         fx.service_meta.region_vocab.size());
    const auto samples = model::make_samples(split.train, reputations,
                                             fx.user_meta, fx.service_meta);
    model::TrainOptions options;
    options.epochs = 5;
    options.batch_size = 32;
    options.learning_rate = 0.005;
    options.seed = 17;
    const auto report = model::train(net, samples, options);
    model::save_checkpoint(net, ckpt);
    std::ostringstream summary;
    summary.precision(17);
    for (double l : report.epoch_loss) summary << l << ',';
    return summary.str();
  };

  const std::string report_a = run_once("/tmp/rahn_acc_a.ckpt");
  const std::string report_b = run_once("/tmp/rahn_acc_b.ckpt");
  if (report_a != report_b) return {Outcome::fail, "loss curves differ"};

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const bool identical = slurp("/tmp/rahn_acc_a.ckpt") == slurp("/tmp/rahn_acc_b.ckpt");
  return {identical ? Outcome::pass : Outcome::fail,
          identical ? "byte-identical checkpoints" : "checkpoints differ"};
}

}  // namespace

int main() {
  run_criterion(1, "gradient soundness", gradient_soundness);
  run_criterion(2, "reputation identities", reputation_identities);
  run_criterion(3, "dimension arithmetic", dimension_arithmetic);
  run_criterion(4, "metric oracle", metric_oracle);
  run_criterion(5, "protocol conservation", protocol_conservation);
  run_criterion(6, "synthetic end-to-end", synthetic_end_to_end);
  run_criterion(7, "WS-DREAM reproduction", wsdream_reproduction);
  run_criterion(8, "sweep trend (reported)", sweep_trend);
  run_criterion(9, "training determinism", training_determinism);
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all gated criteria passed\n");
  return 0;
}
