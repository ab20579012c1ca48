#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rahn/data.hpp"
#include "rahn/tensor.hpp"

namespace rahn::model {

struct RahnConfig {
  std::size_t d = 16;        // latent dimension, divisible by 4
  std::size_t n_stack = 2;   // number of stacked hourglass blocks (N)
  bool use_pe = false;       // learned position embeddings in the encoders (PE)
  std::size_t token_dim = 0; // attention token width; 0 means d/4
  double lambda_reg = 1e-4;
  double beta = 0.05;        // reputation coefficient, echoed into reports
  std::uint64_t seed = 42;

  std::size_t resolved_token_dim() const { return token_dim ? token_dim : d / 4; }
  void validate() const;

  // "NPEd" run label: N (1 digit), PE (1 digit), d (2 digits).
  std::string npe_label() const;
};

struct TrainSample {
  std::size_t user_index;
  std::size_t service_index;
  std::size_t user_region;
  std::size_t service_region;
  double user_reputation;
  double service_reputation;
  double target_qos;
};

// Width-preserving attention encoder over (L / token_dim) tokens.
struct EncoderParams {
  tensor::TensorPtr wq, wk, wv;        // token_dim x token_dim
  tensor::TensorPtr pos;               // tokens x token_dim, only when use_pe
};

// One hourglass block: four scale-changing maps, five encoders, output map.
struct StackParams {
  tensor::TensorPtr g_w[4], g_b[4];    // (2d,d) (d,d/2) (d/2,d) (d,2d)
  EncoderParams enc[5];                // scales 2d, d, d/2, d, 2d
  tensor::TensorPtr out_w, out_b;      // 13d/2 -> 2d
};

class RahnModel {
 public:
  RahnModel(const RahnConfig& config, std::size_t n_users,
            std::size_t n_services, std::size_t user_region_vocab,
            std::size_t service_region_vocab);

  const RahnConfig& config() const { return config_; }
  std::size_t n_users() const { return n_users_; }
  std::size_t n_services() const { return n_services_; }
  std::size_t user_region_vocab() const { return user_region_vocab_; }
  std::size_t service_region_vocab() const { return service_region_vocab_; }

  // Named parameter list in a stable order (checkpoint and Adam order).
  struct NamedParam {
    std::string name;
    tensor::TensorPtr value;
    bool is_bias;  // biases are excluded from the regularizer
  };
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  // user/service reputation maps (1 -> d/4)
  tensor::TensorPtr user_re_w, user_re_b, service_re_w, service_re_b;
  // embedding tables
  tensor::TensorPtr user_id_emb, service_id_emb;     // n x d/4
  tensor::TensorPtr user_rg_emb, service_rg_emb;     // vocab x d/2
  std::vector<StackParams> stacks;
  // prediction head
  tensor::TensorPtr head_w[3], head_b[3];            // (2d,d) (d,d/2) (d/2,1)

 private:
  void register_param(const std::string& name, tensor::TensorPtr p, bool is_bias);

  RahnConfig config_;
  std::size_t n_users_, n_services_, user_region_vocab_, service_region_vocab_;
  std::vector<NamedParam> params_;
};

// L(0) = L_uRE + L_uID + L_uRG + L_sRE + L_sID + L_sRG concatenated,
// widths (d/4, d/4, d/2, d/4, d/4, d/2) -> 1 x 2d.
tensor::TensorPtr lfem_forward(const RahnModel& model, const TrainSample& sample);

// Token-wise single-head scaled dot-product self-attention with residual;
// output width equals input width.
tensor::TensorPtr encoder_forward(const EncoderParams& enc,
                                  const tensor::TensorPtr& x, bool use_pe,
                                  std::size_t token_dim);

// One hourglass block: 1 x 2d -> 1 x 2d through scales (2d, d, d/2, d, 2d)
// and a 13d/2 -> 2d projection of the concatenated encoder outputs.
tensor::TensorPtr qphn_layer(const StackParams& stack,
                             const tensor::TensorPtr& l_prev,
                             const RahnConfig& config);

// Full network: LFEM, n_stack hourglass blocks, three-layer head -> scalar.
tensor::TensorPtr forward(const RahnModel& model, const TrainSample& sample);

// J = mean |pred - target| over the batch + lambda * sum of squared weights
// (embedding tables included, biases excluded).
tensor::TensorPtr loss(const RahnModel& model,
                       const std::vector<TrainSample>& batch, double lambda_reg);

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double learning_rate = 0.0005;
  std::uint64_t seed = 42;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_mae;  // empty when no validation split given
  double wall_seconds = 0.0;
  std::size_t parameter_count = 0;
};

// Per-entity reputations with neutral 0.5 fallback for uncovered entities.
struct ReputationLookup {
  std::vector<double> user;     // may be shorter than n_users
  std::vector<double> service;

  double user_of(std::size_t i) const { return i < user.size() ? user[i] : 0.5; }
  double service_of(std::size_t i) const {
    return i < service.size() ? service[i] : 0.5;
  }
};

std::vector<TrainSample> make_samples(const data::QosMatrix& m,
                                      const ReputationLookup& reputations,
                                      const data::MetadataTable& user_meta,
                                      const data::MetadataTable& service_meta);

TrainReport train(RahnModel& model, const std::vector<TrainSample>& samples,
                  const TrainOptions& options,
                  const std::vector<TrainSample>* validation = nullptr);

// Batch prediction. The OpenMP version builds independent per-entry graphs
// and is bit-identical to the serial reference.
std::vector<double> predict_entries(const RahnModel& model,
                                    const std::vector<TrainSample>& samples);
std::vector<double> predict_entries_serial(const RahnModel& model,
                                           const std::vector<TrainSample>& samples);

// Checkpoint: JSON header (names, shapes, config echo) then raw
// little-endian 64-bit value blocks in header order.
void save_checkpoint(const RahnModel& model, const std::string& path);
RahnModel load_checkpoint(const std::string& path);

}  // namespace rahn::model
