#include "rahn/experiment.hpp"

#include <fstream>

#include "rahn/errors.hpp"

namespace rahn {

void ExperimentConfig::validate() const {
  if (paths.matrix_format != "matrix-text" && paths.matrix_format != "csv")
    throw ConfigError("paths.matrix_format must be matrix-text or csv");
  if (rcm.n_user_clusters == 0 || rcm.n_service_clusters == 0)
    throw ConfigError("cluster counts must be >= 1");
  if (!(rcm.beta > 0.0)) throw ConfigError("rcm.beta must be > 0");
  if (model.d == 0 || model.d % 4 != 0)
    throw ConfigError("model.d must be a positive multiple of 4");
  if (model.batch_size == 0) throw ConfigError("model.batch_size must be > 0");
  if (!(model.learning_rate > 0.0) && model.epochs > 0)
    throw ConfigError("model.learning_rate must be > 0");
  if (protocol.densities.empty())
    throw ConfigError("protocol.densities must be non-empty");
  for (double md : protocol.densities)
    if (!(md > 0.0) || md > 1.0)
      throw ConfigError("densities must be in (0, 1]");
  if (protocol.outlier_fraction < 0.0 || protocol.outlier_fraction >= 1.0)
    throw ConfigError("outlier_fraction must be in [0, 1)");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"paths",
       {{"matrix", paths.matrix},
        {"matrix_format", paths.matrix_format},
        {"user_meta", paths.user_meta},
        {"service_meta", paths.service_meta},
        {"out_dir", paths.out_dir}}},
      {"rcm",
       {{"n_user_clusters", rcm.n_user_clusters},
        {"n_service_clusters", rcm.n_service_clusters},
        {"beta", rcm.beta},
        {"kmeans_max_iter", rcm.kmeans_max_iter}}},
      {"model",
       {{"d", model.d},
        {"n_stack", model.n_stack},
        {"use_pe", model.use_pe},
        {"lambda_reg", model.lambda_reg},
        {"batch_size", model.batch_size},
        {"epochs", model.epochs},
        {"learning_rate", model.learning_rate}}},
      {"protocol",
       {{"densities", protocol.densities},
        {"outlier_fraction", protocol.outlier_fraction},
        {"seed", protocol.seed}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.matrix = p.value("matrix", c.paths.matrix);
      c.paths.matrix_format = p.value("matrix_format", c.paths.matrix_format);
      c.paths.user_meta = p.value("user_meta", c.paths.user_meta);
      c.paths.service_meta = p.value("service_meta", c.paths.service_meta);
      c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
    }
    if (j.contains("rcm")) {
      const auto& p = j["rcm"];
      c.rcm.n_user_clusters = p.value("n_user_clusters", c.rcm.n_user_clusters);
      c.rcm.n_service_clusters =
          p.value("n_service_clusters", c.rcm.n_service_clusters);
      c.rcm.beta = p.value("beta", c.rcm.beta);
      c.rcm.kmeans_max_iter = p.value("kmeans_max_iter", c.rcm.kmeans_max_iter);
    }
    if (j.contains("model")) {
      const auto& p = j["model"];
      c.model.d = p.value("d", c.model.d);
      c.model.n_stack = p.value("n_stack", c.model.n_stack);
      c.model.use_pe = p.value("use_pe", c.model.use_pe);
      c.model.lambda_reg = p.value("lambda_reg", c.model.lambda_reg);
      c.model.batch_size = p.value("batch_size", c.model.batch_size);
      c.model.epochs = p.value("epochs", c.model.epochs);
      c.model.learning_rate = p.value("learning_rate", c.model.learning_rate);
    }
    if (j.contains("protocol")) {
      const auto& p = j["protocol"];
      if (p.contains("densities"))
        c.protocol.densities = p["densities"].get<std::vector<double>>();
      c.protocol.outlier_fraction =
          p.value("outlier_fraction", c.protocol.outlier_fraction);
      c.protocol.seed = p.value("seed", c.protocol.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::apply_override(const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be key=value: " + key_eq_value);
  const std::string key = key_eq_value.substr(0, eq);
  const std::string value = key_eq_value.substr(eq + 1);

  nlohmann::json j = to_json();
  nlohmann::json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part =
        key.substr(start, dot == std::string::npos ? std::string::npos
                                                   : dot - start);
    if (!node->contains(part))
      throw ConfigError("unknown config key: " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // parse value as JSON when possible, else treat as string
  try {
    *node = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    *node = value;
  }
  *this = from_json(j);
}

}  // namespace rahn
