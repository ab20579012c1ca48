#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rahn/data.hpp"
#include "rahn/errors.hpp"
#include "rahn/eval.hpp"
#include "rahn/experiment.hpp"
#include "rahn/fixture.hpp"
#include "rahn/model.hpp"
#include "rahn/prng.hpp"
#include "rahn/rcm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCheckpoint = 5;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag;
};

rahn::ExperimentConfig resolve_config(const CommonArgs& args) {
  rahn::ExperimentConfig config = args.config_path.empty()
                                      ? rahn::ExperimentConfig{}
                                      : rahn::ExperimentConfig::load(args.config_path);
  // precedence: config < RAHN_SEED < --seed / --set
  if (const char* env = std::getenv("RAHN_SEED"))
    config.protocol.seed = std::strtoull(env, nullptr, 10);
  for (const std::string& o : args.overrides) config.apply_override(o);
  if (args.seed_flag) config.protocol.seed = *args.seed_flag;
  config.validate();
  return config;
}

// write-to-temp then atomic rename
void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw rahn::StateError("cannot write: " + path);
    out << content;
  }
  fs::rename(tmp, path);
}

void write_json_atomic(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

struct LoadedData {
  rahn::data::QosMatrix matrix;
  rahn::data::MetadataTable user_meta;
  rahn::data::MetadataTable service_meta;
};

LoadedData load_inputs(const rahn::ExperimentConfig& config) {
  if (config.paths.matrix.empty())
    throw rahn::ConfigError("paths.matrix is required");
  const auto format = config.paths.matrix_format == "csv"
                          ? rahn::data::MatrixFormat::csv
                          : rahn::data::MatrixFormat::matrix_text;
  LoadedData d{rahn::data::load_matrix(config.paths.matrix, format), {}, {}};
  if (!config.paths.user_meta.empty())
    d.user_meta = rahn::data::load_metadata(config.paths.user_meta,
                                            rahn::data::EntityKind::user);
  else
    d.user_meta.region_vocab.push_back("<unknown>");
  if (!config.paths.service_meta.empty())
    d.service_meta = rahn::data::load_metadata(config.paths.service_meta,
                                               rahn::data::EntityKind::service);
  else
    d.service_meta.region_vocab.push_back("<unknown>");
  return d;
}

std::string render12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int cmd_reputation(const CommonArgs& args) {
  const auto config = resolve_config(args);
  const auto inputs = load_inputs(config);
  fs::create_directories(config.paths.out_dir);

  const auto user_report = rahn::rcm::compute_reputations(
      inputs.matrix, rahn::data::EntityKind::user, config.rcm.n_user_clusters,
      config.rcm.beta, rahn::derive_seed(config.protocol.seed, 1),
      config.rcm.kmeans_max_iter);
  const auto service_report = rahn::rcm::compute_reputations(
      inputs.matrix, rahn::data::EntityKind::service,
      config.rcm.n_service_clusters, config.rcm.beta,
      rahn::derive_seed(config.protocol.seed, 2), config.rcm.kmeans_max_iter);

  std::string csv = "kind,index,po,ne,reputation\n";
  for (std::size_t i = 0; i < user_report.reputations.size(); ++i)
    csv += "user," + std::to_string(i) + ',' +
           std::to_string(user_report.feedback[i].po) + ',' +
           std::to_string(user_report.feedback[i].ne) + ',' +
           render12(user_report.reputations[i]) + '\n';
  for (std::size_t i = 0; i < service_report.reputations.size(); ++i)
    csv += "service," + std::to_string(i) + ',' +
           std::to_string(service_report.feedback[i].po) + ',' +
           std::to_string(service_report.feedback[i].ne) + ',' +
           render12(service_report.reputations[i]) + '\n';
  const std::string csv_path =
      (fs::path(config.paths.out_dir) / "reputations.csv").string();
  write_file_atomic(csv_path, csv);

  json summary = {
      {"config", config.to_json()},
      {"user",
       {{"cluster_sizes", user_report.cluster_sizes},
        {"reliable_cluster", user_report.stats.reliable_cluster_index},
        {"mu_r", user_report.stats.mu_r},
        {"sigma_r", user_report.stats.sigma_r}}},
      {"service",
       {{"cluster_sizes", service_report.cluster_sizes},
        {"reliable_cluster", service_report.stats.reliable_cluster_index},
        {"mu_r", service_report.stats.mu_r},
        {"sigma_r", service_report.stats.sigma_r}}}};
  write_json_atomic(
      (fs::path(config.paths.out_dir) / "reputation_summary.json").string(),
      summary);
  std::cout << "wrote " << csv_path << " ("
            << user_report.reputations.size() << " users, "
            << service_report.reputations.size() << " services)\n";
  return 0;
}

rahn::model::ReputationLookup reputations_from_matrix(
    const rahn::data::QosMatrix& m, const rahn::ExperimentConfig& config) {
  rahn::model::ReputationLookup lookup;
  lookup.user = rahn::rcm::compute_reputations(
                    m, rahn::data::EntityKind::user, config.rcm.n_user_clusters,
                    config.rcm.beta, rahn::derive_seed(config.protocol.seed, 1),
                    config.rcm.kmeans_max_iter)
                    .reputations;
  lookup.service = rahn::rcm::compute_reputations(
                       m, rahn::data::EntityKind::service,
                       config.rcm.n_service_clusters, config.rcm.beta,
                       rahn::derive_seed(config.protocol.seed, 2),
                       config.rcm.kmeans_max_iter)
                       .reputations;
  return lookup;
}

int cmd_train(const CommonArgs& args) {
  const auto config = resolve_config(args);
  const auto inputs = load_inputs(config);
  fs::create_directories(config.paths.out_dir);

  const double density = config.protocol.densities.front();
  const auto split = rahn::data::split_by_density(
      inputs.matrix, {density, config.protocol.seed});
  const auto reputations = reputations_from_matrix(split.train, config);

  rahn::model::RahnConfig model_config;
  model_config.d = config.model.d;
  model_config.n_stack = config.model.n_stack;
  model_config.use_pe = config.model.use_pe;
  model_config.lambda_reg = config.model.lambda_reg;
  model_config.beta = config.rcm.beta;
  model_config.seed = config.protocol.seed;
  rahn::model::RahnModel net(
      model_config, inputs.matrix.n_users(), inputs.matrix.n_services(),
      std::max<std::size_t>(1, inputs.user_meta.region_vocab.size()),
      std::max<std::size_t>(1, inputs.service_meta.region_vocab.size()));

  const auto train_samples = rahn::model::make_samples(
      split.train, reputations, inputs.user_meta, inputs.service_meta);
  const auto val_samples = rahn::model::make_samples(
      split.test, reputations, inputs.user_meta, inputs.service_meta);

  rahn::model::TrainOptions options;
  options.epochs = config.model.epochs;
  options.batch_size = config.model.batch_size;
  options.learning_rate = config.model.learning_rate;
  options.seed = config.protocol.seed;

  rahn::model::TrainReport train_report;
  try {
    train_report = rahn::model::train(net, train_samples, options,
                                      val_samples.empty() ? nullptr : &val_samples);
  } catch (const rahn::StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  }

  const std::string ckpt_path =
      (fs::path(config.paths.out_dir) / "model.ckpt").string();
  rahn::model::save_checkpoint(net, ckpt_path);

  json report = {{"config", config.to_json()},
                 {"npe_label", model_config.npe_label()},
                 {"density", density},
                 {"epoch_loss", train_report.epoch_loss},
                 {"epoch_val_mae", train_report.epoch_val_mae},
                 {"parameter_count", train_report.parameter_count},
                 {"wall_seconds", train_report.wall_seconds},
                 {"n_train", train_samples.size()},
                 {"n_validation", val_samples.size()}};
  write_json_atomic((fs::path(config.paths.out_dir) / "report.json").string(),
                    report);
  std::cout << "trained " << model_config.npe_label() << ": "
            << train_samples.size() << " samples, "
            << train_report.parameter_count << " parameters, final loss "
            << (train_report.epoch_loss.empty() ? 0.0
                                                : train_report.epoch_loss.back())
            << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint_path) {
  const auto config = resolve_config(args);
  const auto inputs = load_inputs(config);
  fs::create_directories(config.paths.out_dir);

  rahn::model::RahnModel net = rahn::model::load_checkpoint(checkpoint_path);
  if (net.config().d != config.model.d ||
      net.config().n_stack != config.model.n_stack ||
      net.config().use_pe != config.model.use_pe)
    throw rahn::StateError(
        "checkpoint incompatible with config: checkpoint " +
        net.config().npe_label() + " vs config d=" +
        std::to_string(config.model.d) + " N=" +
        std::to_string(config.model.n_stack) +
        " PE=" + std::to_string(config.model.use_pe ? 1 : 0));

  const double density = config.protocol.densities.front();
  const auto split = rahn::data::split_by_density(
      inputs.matrix, {density, config.protocol.seed});
  const auto reputations = reputations_from_matrix(split.train, config);

  std::size_t n_removed = 0;
  const auto filtered = rahn::data::filter_outliers(
      split.test, split.train, config.protocol.outlier_fraction, &n_removed);
  const auto samples = rahn::model::make_samples(
      filtered, reputations, inputs.user_meta, inputs.service_meta);
  const auto preds = rahn::model::predict_entries(net, samples);
  std::vector<double> truth;
  truth.reserve(samples.size());
  for (const auto& s : samples) truth.push_back(s.target_qos);
  const auto [mae, rmse] = rahn::eval::mae_rmse(truth, preds);

  json report = {{"config", config.to_json()},
                 {"npe_label", net.config().npe_label()},
                 {"density", density},
                 {"mae", mae},
                 {"rmse", rmse},
                 {"n_test", truth.size()},
                 {"n_removed_outliers", n_removed}};
  write_json_atomic((fs::path(config.paths.out_dir) / "eval_report.json").string(),
                    report);
  std::printf("%-8s MD=%.0f%%  MAE=%.4f  RMSE=%.4f  (n=%zu, removed=%zu)\n",
              net.config().npe_label().c_str(), 100.0 * density, mae, rmse,
              truth.size(), n_removed);
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<std::size_t>& n_list,
              const std::vector<int>& pe_list,
              const std::vector<std::size_t>& d_list) {
  const auto config = resolve_config(args);
  const auto inputs = load_inputs(config);
  fs::create_directories(config.paths.out_dir);

  std::vector<rahn::eval::SweepCell> cells;
  for (std::size_t n : n_list)
    for (int pe : pe_list)
      for (std::size_t d : d_list)
        for (double md : config.protocol.densities)
          cells.push_back({n, pe != 0, d, md});
  if (cells.empty()) throw rahn::ConfigError("sweep grid is empty");

  const auto result = rahn::eval::sweep(inputs.matrix, inputs.user_meta,
                                        inputs.service_meta, config, cells);
  const std::string csv_path =
      (fs::path(config.paths.out_dir) / "sweep.csv").string();
  rahn::eval::write_sweep_csv(result, csv_path);

  json summary = {{"config", config.to_json()},
                  {"n_cells", cells.size()},
                  {"n_ok", result.reports.size()},
                  {"failures", result.failures}};
  write_json_atomic((fs::path(config.paths.out_dir) / "sweep_summary.json").string(),
                    summary);
  for (const std::string& f : result.failures)
    std::cerr << "cell failed: " << f << "\n";
  std::cout << "wrote " << csv_path << " (" << result.reports.size() << "/"
            << cells.size() << " cells)\n";
  return result.reports.empty() ? 1 : 0;
}

int cmd_gen_fixture(const std::string& out_dir, std::size_t n_users,
                    std::size_t n_services, std::size_t rank, double sigma,
                    double observed_fraction, std::uint64_t seed) {
  rahn::fixture::FixtureSpec spec;
  spec.n_users = n_users;
  spec.n_services = n_services;
  spec.rank = rank;
  spec.noise_sigma = sigma;
  spec.observed_fraction = observed_fraction;
  spec.seed = seed;
  const auto fx = rahn::fixture::generate(spec);

  fs::create_directories(out_dir);
  rahn::data::save_matrix_csv(fx.matrix,
                              (fs::path(out_dir) / "matrix.csv").string());
  auto write_meta = [&](const rahn::data::MetadataTable& meta,
                        const std::string& name) {
    std::string csv = "index,region\n";
    for (const auto& e : meta.entities)
      csv += std::to_string(e.entity_index) + ',' +
             meta.region_vocab[e.region_index] + '\n';
    write_file_atomic((fs::path(out_dir) / name).string(), csv);
  };
  write_meta(fx.user_meta, "users.csv");
  write_meta(fx.service_meta, "services.csv");

  json sidecar = {{"n_users", n_users},       {"n_services", n_services},
                  {"rank", rank},             {"noise_sigma", sigma},
                  {"observed_fraction", observed_fraction},
                  {"seed", seed},             {"n_entries", fx.matrix.n_entries()}};
  write_json_atomic((fs::path(out_dir) / "fixture.json").string(), sidecar);
  std::cout << "wrote fixture to " << out_dir << " ("
            << fx.matrix.n_entries() << " entries)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAHN QoS prediction toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON config file");
    sub->add_option("--set", common.overrides,
                    "override config key, e.g. --set model.d=8");
    sub->add_option("--seed", common.seed_flag, "override protocol seed");
  };

  auto* rep = app.add_subcommand("reputation", "compute user/service reputations");
  add_common(rep);
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train);
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval_cmd);
  std::string checkpoint_path;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  auto* sweep_cmd = app.add_subcommand("sweep", "grid sweep over N, PE, d");
  add_common(sweep_cmd);
  std::vector<std::size_t> n_list{0, 1, 2};
  std::vector<int> pe_list{0};
  std::vector<std::size_t> d_list{8};
  sweep_cmd->add_option("--N", n_list, "stack counts");
  sweep_cmd->add_option("--PE", pe_list, "position embedding flags (0/1)");
  sweep_cmd->add_option("--d", d_list, "latent dimensions");

  auto* gen = app.add_subcommand("gen-fixture", "write a synthetic dataset");
  std::string fixture_dir = "fixture";
  std::size_t fx_users = 50, fx_services = 100, fx_rank = 3;
  double fx_sigma = 0.05, fx_observed = 1.0;
  std::uint64_t fx_seed = 7;
  gen->add_option("-o,--out", fixture_dir, "output directory");
  gen->add_option("--users", fx_users);
  gen->add_option("--services", fx_services);
  gen->add_option("--rank", fx_rank);
  gen->add_option("--sigma", fx_sigma);
  gen->add_option("--observed", fx_observed, "observed cell fraction");
  gen->add_option("--seed", fx_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) return cmd_reputation(common);
    if (train->parsed()) return cmd_train(common);
    if (eval_cmd->parsed()) return cmd_evaluate(common, checkpoint_path);
    if (sweep_cmd->parsed()) return cmd_sweep(common, n_list, pe_list, d_list);
    if (gen->parsed())
      return cmd_gen_fixture(fixture_dir, fx_users, fx_services, fx_rank,
                             fx_sigma, fx_observed, fx_seed);
  } catch (const rahn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const rahn::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const rahn::ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const rahn::StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
