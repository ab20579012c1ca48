#include "rahn/model.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rahn/errors.hpp"
#include "rahn/prng.hpp"

namespace rahn::model {

using tensor::Tensor;
using tensor::TensorPtr;

void RahnConfig::validate() const {
  if (d == 0 || d % 4 != 0)
    throw ConfigError("d must be a positive multiple of 4, got " +
                      std::to_string(d));
  const std::size_t td = resolved_token_dim();
  // token width must divide every hourglass scale; d/2 is the narrowest
  if (td == 0 || (d / 2) % td != 0)
    throw ConfigError("token_dim " + std::to_string(td) +
                      " must divide d/2 = " + std::to_string(d / 2));
  if (!(lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be >= 0");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (n_stack > 9) throw ConfigError("n_stack must be a single digit");
}

std::string RahnConfig::npe_label() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%1zu%1d%02zu", n_stack, use_pe ? 1 : 0, d);
  return buf;
}

namespace {

// hourglass scale widths (2d, d, d/2, d, 2d)
std::size_t scale_width(std::size_t d, std::size_t i) {
  const std::size_t w[5] = {2 * d, d, d / 2, d, 2 * d};
  return w[i];
}

TensorPtr init_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      Prng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::leaf(rows, cols, std::move(v), true);
}

TensorPtr init_embedding(std::size_t rows, std::size_t cols, Prng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-0.01, 0.01);
  return Tensor::leaf(rows, cols, std::move(v), true);
}

}  // namespace

RahnModel::RahnModel(const RahnConfig& config, std::size_t n_users,
                     std::size_t n_services, std::size_t user_region_vocab,
                     std::size_t service_region_vocab)
    : config_(config),
      n_users_(n_users),
      n_services_(n_services),
      user_region_vocab_(user_region_vocab),
      service_region_vocab_(service_region_vocab) {
  config_.validate();
  if (n_users == 0 || n_services == 0 || user_region_vocab == 0 ||
      service_region_vocab == 0)
    throw ConfigError("vocabulary sizes must be positive");

  const std::size_t d = config_.d;
  const std::size_t td = config_.resolved_token_dim();
  Prng rng(config_.seed);

  user_re_w = init_matrix(1, d / 4, 1, rng);
  user_re_b = init_matrix(1, d / 4, 1, rng);
  service_re_w = init_matrix(1, d / 4, 1, rng);
  service_re_b = init_matrix(1, d / 4, 1, rng);
  user_id_emb = init_embedding(n_users, d / 4, rng);
  service_id_emb = init_embedding(n_services, d / 4, rng);
  user_rg_emb = init_embedding(user_region_vocab, d / 2, rng);
  service_rg_emb = init_embedding(service_region_vocab, d / 2, rng);

  register_param("user_re_w", user_re_w, false);
  register_param("user_re_b", user_re_b, true);
  register_param("service_re_w", service_re_w, false);
  register_param("service_re_b", service_re_b, true);
  register_param("user_id_emb", user_id_emb, false);
  register_param("service_id_emb", service_id_emb, false);
  register_param("user_rg_emb", user_rg_emb, false);
  register_param("service_rg_emb", service_rg_emb, false);

  stacks.resize(config_.n_stack);
  for (std::size_t t = 0; t < config_.n_stack; ++t) {
    StackParams& s = stacks[t];
    const std::string prefix = "stack" + std::to_string(t) + ".";
    for (std::size_t g = 0; g < 4; ++g) {
      const std::size_t in = scale_width(d, g);
      const std::size_t out = scale_width(d, g + 1);
      s.g_w[g] = init_matrix(in, out, in, rng);
      s.g_b[g] = init_matrix(1, out, in, rng);
      register_param(prefix + "g" + std::to_string(g + 1) + "_w", s.g_w[g], false);
      register_param(prefix + "g" + std::to_string(g + 1) + "_b", s.g_b[g], true);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      EncoderParams& e = s.enc[i];
      const std::string ep = prefix + "enc" + std::to_string(i + 1) + ".";
      e.wq = init_matrix(td, td, td, rng);
      e.wk = init_matrix(td, td, td, rng);
      e.wv = init_matrix(td, td, td, rng);
      register_param(ep + "wq", e.wq, false);
      register_param(ep + "wk", e.wk, false);
      register_param(ep + "wv", e.wv, false);
      if (config_.use_pe) {
        e.pos = init_embedding(scale_width(d, i) / td, td, rng);
        register_param(ep + "pos", e.pos, false);
      }
    }
    const std::size_t e_width = 13 * d / 2;
    s.out_w = init_matrix(e_width, 2 * d, e_width, rng);
    s.out_b = init_matrix(1, 2 * d, e_width, rng);
    register_param(prefix + "out_w", s.out_w, false);
    register_param(prefix + "out_b", s.out_b, true);
  }

  const std::size_t head_in[3] = {2 * d, d, d / 2};
  const std::size_t head_out[3] = {d, d / 2, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    head_w[i] = init_matrix(head_in[i], head_out[i], head_in[i], rng);
    head_b[i] = init_matrix(1, head_out[i], head_in[i], rng);
    register_param("head" + std::to_string(i) + "_w", head_w[i], false);
    register_param("head" + std::to_string(i) + "_b", head_b[i], true);
  }
}

void RahnModel::register_param(const std::string& name, TensorPtr p,
                               bool is_bias) {
  params_.push_back({name, std::move(p), is_bias});
}

std::size_t RahnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value->size();
  return n;
}

TensorPtr lfem_forward(const RahnModel& model, const TrainSample& sample) {
  const auto u_re = Tensor::scalar(sample.user_reputation);
  const auto s_re = Tensor::scalar(sample.service_reputation);
  return tensor::concat({
      tensor::linear(u_re, model.user_re_w, model.user_re_b),
      tensor::embedding_row(model.user_id_emb, sample.user_index),
      tensor::embedding_row(model.user_rg_emb, sample.user_region),
      tensor::linear(s_re, model.service_re_w, model.service_re_b),
      tensor::embedding_row(model.service_id_emb, sample.service_index),
      tensor::embedding_row(model.service_rg_emb, sample.service_region),
  });
}

TensorPtr encoder_forward(const EncoderParams& enc, const TensorPtr& x,
                          bool use_pe, std::size_t token_dim) {
  if (x->cols() % token_dim != 0)
    throw ShapeError("encoder: token_dim " + std::to_string(token_dim) +
                     " does not divide width " + std::to_string(x->cols()));
  const std::size_t n_tokens = x->cols() / token_dim;
  auto tokens = tensor::reshape(x, n_tokens, token_dim);
  if (use_pe) tokens = tensor::add(tokens, enc.pos);
  const auto q = tensor::matmul(tokens, enc.wq);
  const auto k = tensor::matmul(tokens, enc.wk);
  const auto v = tensor::matmul(tokens, enc.wv);
  const auto logits = tensor::scale(tensor::matmul(q, tensor::transpose(k)),
                                    1.0 / std::sqrt(static_cast<double>(token_dim)));
  const auto attended = tensor::matmul(tensor::softmax_rows(logits), v);
  return tensor::reshape(tensor::add(tokens, attended), 1, x->cols());
}

TensorPtr qphn_layer(const StackParams& stack, const TensorPtr& l_prev,
                     const RahnConfig& config) {
  const std::size_t d = config.d;
  if (l_prev->cols() != 2 * d)
    throw ShapeError("qphn_layer expects width " + std::to_string(2 * d) +
                     ", got " + l_prev->shape_str());
  const std::size_t td = config.resolved_token_dim();

  TensorPtr scales[5];
  scales[0] = l_prev;
  for (std::size_t k = 1; k < 5; ++k)
    scales[k] = tensor::relu(
        tensor::linear(scales[k - 1], stack.g_w[k - 1], stack.g_b[k - 1]));

  std::vector<TensorPtr> encoded(5);
  for (std::size_t i = 0; i < 5; ++i)
    encoded[i] = encoder_forward(stack.enc[i], scales[i], config.use_pe, td);

  return tensor::linear(tensor::concat(encoded), stack.out_w, stack.out_b);
}

TensorPtr forward(const RahnModel& model, const TrainSample& sample) {
  auto l = lfem_forward(model, sample);
  for (const StackParams& stack : model.stacks)
    l = qphn_layer(stack, l, model.config());
  for (std::size_t i = 0; i < 3; ++i) {
    l = tensor::linear(l, model.head_w[i], model.head_b[i]);
    if (i < 2) l = tensor::relu(l);
  }
  return l;  // 1x1
}

TensorPtr loss(const RahnModel& model, const std::vector<TrainSample>& batch,
               double lambda_reg) {
  if (batch.empty()) throw ConfigError("loss: empty batch");
  std::vector<TensorPtr> residuals;
  residuals.reserve(batch.size());
  for (const TrainSample& s : batch)
    residuals.push_back(tensor::abs(
        tensor::sub(forward(model, s), Tensor::scalar(s.target_qos))));
  auto j = tensor::scale(tensor::sum(tensor::concat(residuals)),
                         1.0 / static_cast<double>(batch.size()));
  if (lambda_reg > 0.0) {
    TensorPtr reg;
    for (const auto& p : model.parameters()) {
      if (p.is_bias) continue;
      auto term = tensor::sum_squares(p.value);
      reg = reg ? tensor::add(reg, term) : term;
    }
    j = tensor::add(j, tensor::scale(reg, lambda_reg));
  }
  return j;
}

std::vector<TrainSample> make_samples(const data::QosMatrix& m,
                                      const ReputationLookup& reputations,
                                      const data::MetadataTable& user_meta,
                                      const data::MetadataTable& service_meta) {
  auto region_of = [](const data::MetadataTable& meta, std::size_t index) {
    // metadata is sorted by entity index; direct lookup when dense
    if (index < meta.entities.size() &&
        meta.entities[index].entity_index == index)
      return meta.entities[index].region_index;
    for (const auto& e : meta.entities)
      if (e.entity_index == index) return e.region_index;
    return std::size_t{0};
  };
  std::vector<TrainSample> samples;
  samples.reserve(m.n_entries());
  for (const data::Entry& e : m.entries()) {
    samples.push_back({e.user, e.service, region_of(user_meta, e.user),
                       region_of(service_meta, e.service),
                       reputations.user_of(e.user),
                       reputations.service_of(e.service), e.value});
  }
  return samples;
}

TrainReport train(RahnModel& model, const std::vector<TrainSample>& samples,
                  const TrainOptions& options,
                  const std::vector<TrainSample>* validation) {
  if (samples.empty()) throw ConfigError("train: no samples");
  if (options.batch_size == 0) throw ConfigError("train: batch_size must be > 0");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TensorPtr> params;
  for (const auto& p : model.parameters()) params.push_back(p.value);
  tensor::AdamConfig adam_config;
  adam_config.learning_rate = options.learning_rate;
  tensor::Adam optimizer(std::move(params), adam_config);

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainReport report;
  report.parameter_count = model.parameter_count();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Prng rng(derive_seed(options.seed, epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<TrainSample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

      auto j = loss(model, batch, model.config().lambda_reg);
      if (!std::isfinite(j->item()))
        throw StateError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch) + " (last finite loss " +
                         std::to_string(n_batches || epoch
                                            ? epoch_loss /
                                                  std::max<std::size_t>(1, n_batches)
                                            : 0.0) +
                         ")");
      tensor::backward(j);
      optimizer.step();
      epoch_loss += j->item();
      ++n_batches;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));

    if (validation && !validation->empty()) {
      const auto preds = predict_entries(model, *validation);
      double mae = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i)
        mae += std::abs(preds[i] - (*validation)[i].target_qos);
      report.epoch_val_mae.push_back(mae / static_cast<double>(preds.size()));
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<double> predict_entries_serial(const RahnModel& model,
                                           const std::vector<TrainSample>& samples) {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out[i] = forward(model, samples[i])->item();
  return out;
}

std::vector<double> predict_entries(const RahnModel& model,
                                    const std::vector<TrainSample>& samples) {
  std::vector<double> out(samples.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (long long i = 0; i < static_cast<long long>(samples.size()); ++i)
    out[i] = forward(model, samples[i])->item();
  return out;
}

// --- checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'A', 'H', 'N', 'C', 'K', 'P', 'T'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_doubles_le(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_le(out, bits);
  }
}

void read_doubles_le(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    const std::uint64_t bits = read_u64_le(in);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const RahnModel& model, const std::string& path) {
  nlohmann::json header;
  header["config"] = {{"d", model.config().d},
                      {"n_stack", model.config().n_stack},
                      {"use_pe", model.config().use_pe},
                      {"token_dim", model.config().resolved_token_dim()},
                      {"lambda_reg", model.config().lambda_reg},
                      {"beta", model.config().beta},
                      {"seed", model.config().seed}};
  header["vocab"] = {{"n_users", model.n_users()},
                     {"n_services", model.n_services()},
                     {"user_regions", model.user_region_vocab()},
                     {"service_regions", model.service_region_vocab()}};
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.parameters())
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value->rows(), p.value->cols()}}});
  const std::string header_str = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw StateError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u64_le(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& p : model.parameters())
      write_doubles_le(out, p.value->values());
    if (!out) throw StateError("short write on checkpoint: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw StateError("cannot finalize checkpoint: " + path);
}

RahnModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw StateError("not a checkpoint file: " + path);
  const std::uint64_t header_len = read_u64_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw StateError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw StateError(std::string("bad checkpoint header: ") + e.what());
  }

  RahnConfig config;
  config.d = header["config"]["d"];
  config.n_stack = header["config"]["n_stack"];
  config.use_pe = header["config"]["use_pe"];
  config.token_dim = header["config"]["token_dim"];
  config.lambda_reg = header["config"]["lambda_reg"];
  config.beta = header["config"]["beta"];
  config.seed = header["config"]["seed"];

  RahnModel model(config, header["vocab"]["n_users"],
                  header["vocab"]["n_services"],
                  header["vocab"]["user_regions"],
                  header["vocab"]["service_regions"]);

  const auto& tensors = header["tensors"];
  if (tensors.size() != model.parameters().size())
    throw StateError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& p = model.parameters()[i];
    if (tensors[i]["name"] != p.name ||
        tensors[i]["shape"][0] != p.value->rows() ||
        tensors[i]["shape"][1] != p.value->cols())
      throw StateError("checkpoint tensor mismatch at " + p.name);
    read_doubles_le(in, p.value->values());
  }
  if (!in) throw StateError("truncated checkpoint data: " + path);
  return model;
}

}  // namespace rahn::model
