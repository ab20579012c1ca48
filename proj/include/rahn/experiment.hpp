#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rahn {

// Every run parameter in one validated record. Defaults follow the
// reference experiment setup (N_u=5, N_s=15, N=2, PE=0, d=16, eta=0.0005).
struct ExperimentConfig {
  struct Paths {
    std::string matrix;
    std::string matrix_format = "matrix-text";  // matrix-text | csv
    std::string user_meta;      // optional; empty -> all regions unknown
    std::string service_meta;   // optional
    std::string out_dir = ".";
  } paths;

  struct Rcm {
    std::size_t n_user_clusters = 5;
    std::size_t n_service_clusters = 15;
    double beta = 0.05;
    std::size_t kmeans_max_iter = 100;
  } rcm;

  struct Model {
    std::size_t d = 16;
    std::size_t n_stack = 2;
    bool use_pe = false;
    double lambda_reg = 1e-4;
    std::size_t batch_size = 256;
    std::size_t epochs = 50;
    double learning_rate = 0.0005;
  } model;

  struct Protocol {
    std::vector<double> densities = {0.1};
    double outlier_fraction = 0.1;
    std::uint64_t seed = 42;
  } protocol;

  void validate() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  // dotted-path override, e.g. "model.d=8" or "protocol.densities=[0.02,0.04]"
  void apply_override(const std::string& key_eq_value);
};

}  // namespace rahn
