#include "rahn/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rahn/errors.hpp"
#include "rahn/prng.hpp"
#include "rahn/rcm.hpp"

namespace rahn::eval {

nlohmann::json MetricReport::to_json() const {
  return {{"mae", mae},
          {"rmse", rmse},
          {"n_test", n_test},
          {"n_removed_outliers", n_removed_outliers},
          {"npe_label", npe_label},
          {"density", density},
          {"seed", seed},
          {"wall_seconds", wall_seconds},
          {"baseline_global_mean_mae", baseline_global_mean_mae},
          {"config", config_echo}};
}

std::pair<double, double> mae_rmse(const std::vector<double>& truth,
                                   const std::vector<double>& pred) {
  if (truth.size() != pred.size())
    throw ValidationError("mae_rmse: entry sets differ in size");
  if (truth.empty()) throw ValidationError("mae_rmse: empty entry set");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - pred[i];
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const double n = static_cast<double>(truth.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

BaselinePredictor::BaselinePredictor(const data::QosMatrix& train,
                                     BaselineKind kind)
    : kind_(kind) {
  if (train.n_entries() == 0)
    throw ValidationError("baseline: empty training matrix");
  double total = 0.0;
  for (const data::Entry& e : train.entries()) total += e.value;
  global_mean_ = total / static_cast<double>(train.n_entries());
  if (kind == BaselineKind::global_mean) return;

  const std::size_t n = kind == BaselineKind::user_mean ? train.n_users()
                                                        : train.n_services();
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const data::Entry& e : train.entries()) {
    const std::size_t i = kind == BaselineKind::user_mean ? e.user : e.service;
    sum[i] += e.value;
    ++count[i];
  }
  scope_mean_.assign(n, global_mean_);
  scope_seen_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i)
    if (count[i] > 0) {
      scope_mean_[i] = sum[i] / static_cast<double>(count[i]);
      scope_seen_[i] = true;
    }
}

double BaselinePredictor::predict(std::size_t user, std::size_t service) const {
  switch (kind_) {
    case BaselineKind::global_mean:
      return global_mean_;
    case BaselineKind::user_mean:
      return user < scope_mean_.size() ? scope_mean_[user] : global_mean_;
    case BaselineKind::service_mean:
      return service < scope_mean_.size() ? scope_mean_[service] : global_mean_;
  }
  return global_mean_;
}

std::vector<double> BaselinePredictor::predict_all(
    const data::QosMatrix& test) const {
  std::vector<double> out;
  out.reserve(test.n_entries());
  for (const data::Entry& e : test.entries())
    out.push_back(predict(e.user, e.service));
  return out;
}

MetricReport run_experiment(const data::QosMatrix& matrix,
                            const data::MetadataTable& user_meta,
                            const data::MetadataTable& service_meta,
                            const ExperimentConfig& config, double density,
                            std::optional<model::RahnModel>* trained_out) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const data::Split split =
      data::split_by_density(matrix, {density, config.protocol.seed});

  // reputations from the train matrix only
  model::ReputationLookup reputations;
  reputations.user = rcm::compute_reputations(
                         split.train, data::EntityKind::user,
                         config.rcm.n_user_clusters, config.rcm.beta,
                         derive_seed(config.protocol.seed, 1),
                         config.rcm.kmeans_max_iter)
                         .reputations;
  reputations.service = rcm::compute_reputations(
                            split.train, data::EntityKind::service,
                            config.rcm.n_service_clusters, config.rcm.beta,
                            derive_seed(config.protocol.seed, 2),
                            config.rcm.kmeans_max_iter)
                            .reputations;

  model::RahnConfig model_config;
  model_config.d = config.model.d;
  model_config.n_stack = config.model.n_stack;
  model_config.use_pe = config.model.use_pe;
  model_config.lambda_reg = config.model.lambda_reg;
  model_config.beta = config.rcm.beta;
  model_config.seed = config.protocol.seed;
  model::RahnModel net(model_config, matrix.n_users(), matrix.n_services(),
                       std::max<std::size_t>(1, user_meta.region_vocab.size()),
                       std::max<std::size_t>(1, service_meta.region_vocab.size()));

  const auto train_samples =
      model::make_samples(split.train, reputations, user_meta, service_meta);
  model::TrainOptions options;
  options.epochs = config.model.epochs;
  options.batch_size = config.model.batch_size;
  options.learning_rate = config.model.learning_rate;
  options.seed = config.protocol.seed;
  model::train(net, train_samples, options);

  std::size_t n_removed = 0;
  const data::QosMatrix filtered_test = data::filter_outliers(
      split.test, split.train, config.protocol.outlier_fraction, &n_removed);

  const auto test_samples =
      model::make_samples(filtered_test, reputations, user_meta, service_meta);
  const auto preds = model::predict_entries(net, test_samples);
  std::vector<double> truth;
  truth.reserve(test_samples.size());
  for (const auto& s : test_samples) truth.push_back(s.target_qos);

  MetricReport report;
  std::tie(report.mae, report.rmse) = mae_rmse(truth, preds);
  report.n_test = truth.size();
  report.n_removed_outliers = n_removed;
  report.npe_label = model_config.npe_label();
  report.density = density;
  report.seed = config.protocol.seed;
  report.config_echo = config.to_json();

  const BaselinePredictor baseline(split.train, BaselineKind::global_mean);
  const auto [bmae, brmse] = mae_rmse(truth, baseline.predict_all(filtered_test));
  (void)brmse;
  report.baseline_global_mean_mae = bmae;

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (trained_out) trained_out->emplace(std::move(net));
  return report;
}

SweepResult sweep(const data::QosMatrix& matrix,
                  const data::MetadataTable& user_meta,
                  const data::MetadataTable& service_meta,
                  const ExperimentConfig& base,
                  const std::vector<SweepCell>& cells) {
  if (cells.empty()) throw ConfigError("sweep: empty grid");
  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SweepCell& cell = cells[i];
    ExperimentConfig config = base;
    config.model.n_stack = cell.n_stack;
    config.model.use_pe = cell.use_pe;
    config.model.d = cell.d;
    config.protocol.seed = derive_seed(base.protocol.seed, i);
    try {
      result.reports.push_back(run_experiment(matrix, user_meta, service_meta,
                                              config, cell.density));
    } catch (const std::exception& e) {
      char label[8];
      std::snprintf(label, sizeof label, "%1zu%1d%02zu", cell.n_stack,
                    cell.use_pe ? 1 : 0, cell.d);
      result.failures.push_back(std::string(label) + "@" +
                                std::to_string(cell.density) + ": " + e.what());
    }
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write sweep csv: " + path);
  out << "npe_label,density,mae,rmse,n_test,n_removed,seed,wall_seconds\n";
  out.precision(12);
  for (const MetricReport& r : result.reports)
    out << r.npe_label << ',' << r.density << ',' << r.mae << ',' << r.rmse
        << ',' << r.n_test << ',' << r.n_removed_outliers << ',' << r.seed
        << ',' << r.wall_seconds << '\n';
}

}  // namespace rahn::eval
