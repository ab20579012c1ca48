#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rahn::data {

// One observed QoS value (response time in seconds).
struct Entry {
  std::size_t user;
  std::size_t service;
  double value;

  friend bool operator==(const Entry&, const Entry&) = default;
};

// Sparse user x service observation matrix. Entries are kept sorted
// row-major (user, then service); missing entries are simply absent.
class QosMatrix {
 public:
  QosMatrix() = default;
  QosMatrix(std::size_t n_users, std::size_t n_services,
            std::vector<Entry> entries);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_services() const { return n_services_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t n_entries() const { return entries_.size(); }

 private:
  std::size_t n_users_ = 0;
  std::size_t n_services_ = 0;
  std::vector<Entry> entries_;
};

enum class EntityKind { user, service };

struct EntityMeta {
  std::size_t entity_index;
  std::size_t region_index;  // 0 is reserved for unknown/blank
  EntityKind kind;
};

// Region strings interned in first-appearance order; index 0 reserved.
struct MetadataTable {
  std::vector<EntityMeta> entities;
  std::vector<std::string> region_vocab;  // region_vocab[0] == "<unknown>"
};

struct SplitSpec {
  double density;      // fraction of observed entries kept for training
  std::uint64_t seed;
};

struct Split {
  QosMatrix train;
  QosMatrix test;
};

enum class MatrixFormat { matrix_text, csv };

// WS-DREAM dense layout: one row per user, whitespace-separated, -1 missing.
// CSV layout: header then user,service,value rows.
QosMatrix load_matrix(const std::string& path, MatrixFormat format);
void save_matrix_csv(const QosMatrix& m, const std::string& path);
QosMatrix load_matrix_csv(const std::string& path);

MetadataTable load_metadata(const std::string& path, EntityKind kind);

// Deterministic density split: train gets round(density * |entries|) entries.
Split split_by_density(const QosMatrix& m, const SplitSpec& spec);

// Removes ceil(fraction * |test|) entries ranked most anomalous by the
// per-service robust score |q - median_s| / (IQR_s + 1e-9), statistics taken
// over the training matrix. Ties broken by (user, service) ascending.
QosMatrix filter_outliers(const QosMatrix& test, const QosMatrix& train,
                          double fraction, std::size_t* n_removed = nullptr);

}  // namespace rahn::data
