#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rahn/data.hpp"
#include "rahn/experiment.hpp"
#include "rahn/model.hpp"

namespace rahn::eval {

struct MetricReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n_test = 0;
  std::size_t n_removed_outliers = 0;
  std::string npe_label;
  double density = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  double baseline_global_mean_mae = 0.0;  // sanity floor, same filtered test set
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
};

// MAE / RMSE over exactly the provided aligned entries.
std::pair<double, double> mae_rmse(const std::vector<double>& truth,
                                   const std::vector<double>& pred);

enum class BaselineKind { global_mean, user_mean, service_mean };

// Constant-per-scope mean predictor; user/service means fall back to the
// global training mean for unseen entities.
class BaselinePredictor {
 public:
  BaselinePredictor(const data::QosMatrix& train, BaselineKind kind);
  double predict(std::size_t user, std::size_t service) const;
  std::vector<double> predict_all(const data::QosMatrix& test) const;

 private:
  BaselineKind kind_;
  double global_mean_;
  std::vector<double> scope_mean_;
  std::vector<bool> scope_seen_;
};

// Full protocol for one density: split, reputations from the train matrix
// only, train, predict test entries, outlier filter, metrics.
MetricReport run_experiment(const data::QosMatrix& matrix,
                            const data::MetadataTable& user_meta,
                            const data::MetadataTable& service_meta,
                            const ExperimentConfig& config, double density,
                            std::optional<model::RahnModel>* trained_out = nullptr);

struct SweepCell {
  std::size_t n_stack;
  bool use_pe;
  std::size_t d;
  double density;
};

struct SweepResult {
  std::vector<MetricReport> reports;
  std::vector<std::string> failures;  // "label@density: message"
};

// Cartesian grid of run_experiment calls; per-cell seeds derive from the
// base seed so cells are independent. Failures are recorded, not fatal.
SweepResult sweep(const data::QosMatrix& matrix,
                  const data::MetadataTable& user_meta,
                  const data::MetadataTable& service_meta,
                  const ExperimentConfig& base,
                  const std::vector<SweepCell>& cells);

void write_sweep_csv(const SweepResult& result, const std::string& path);

}  // namespace rahn::eval
