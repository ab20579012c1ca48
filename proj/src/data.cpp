#include "rahn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rahn/errors.hpp"
#include "rahn/prng.hpp"

namespace rahn::data {

namespace {

bool entry_pos_less(const Entry& a, const Entry& b) {
  return a.user != b.user ? a.user < b.user : a.service < b.service;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

QosMatrix::QosMatrix(std::size_t n_users, std::size_t n_services,
                     std::vector<Entry> entries)
    : n_users_(n_users), n_services_(n_services), entries_(std::move(entries)) {
  for (const Entry& e : entries_) {
    if (e.user >= n_users_ || e.service >= n_services_)
      throw ValidationError("QosMatrix entry index out of range");
    if (!std::isfinite(e.value) || e.value < 0)
      throw ValidationError("QosMatrix value must be finite and >= 0");
  }
  std::sort(entries_.begin(), entries_.end(), entry_pos_less);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i - 1].user == entries_[i].user &&
        entries_[i - 1].service == entries_[i].service)
      throw ValidationError("QosMatrix duplicate entry");
  }
}

QosMatrix load_matrix(const std::string& path, MatrixFormat format) {
  if (format == MatrixFormat::csv) return load_matrix_csv(path);

  std::ifstream in(path);
  if (!in) throw ParseError("cannot open matrix file: " + path);

  std::vector<Entry> entries;
  std::size_t n_cols = 0;
  std::size_t row = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    double v;
    std::size_t col = 0;
    while (ls >> v) {
      if (v != -1.0) {
        if (v < 0)
          throw ValidationError("negative non-sentinel value at line " +
                                std::to_string(line_no));
        entries.push_back({row, col, v});
      }
      ++col;
    }
    if (!ls.eof())
      throw ParseError("malformed value at line " + std::to_string(line_no));
    if (n_cols == 0) {
      n_cols = col;
    } else if (col != n_cols) {
      throw ParseError("row length mismatch at line " + std::to_string(line_no) +
                       ": expected " + std::to_string(n_cols) + " values, got " +
                       std::to_string(col));
    }
    ++row;
  }
  if (row == 0) throw ParseError("empty matrix file: " + path);
  return QosMatrix(row, n_cols, std::move(entries));
}

void save_matrix_csv(const QosMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write: " + path);
  out << "user,service,value\n";
  out.precision(17);
  for (const Entry& e : m.entries())
    out << e.user << ',' << e.service << ',' << e.value << '\n';
  // dimensions on a trailing comment row so the round trip is lossless
  out << "# dims," << m.n_users() << ',' << m.n_services() << '\n';
}

QosMatrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open matrix file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty matrix file: " + path);

  std::vector<Entry> entries;
  std::size_t n_users = 0, n_services = 0;
  bool dims_seen = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("# dims,", 0) == 0) {
      std::istringstream ls(line.substr(7));
      char comma;
      if (!(ls >> n_users >> comma >> n_services))
        throw ParseError("bad dims row at line " + std::to_string(line_no));
      dims_seen = true;
      continue;
    }
    std::istringstream ls(line);
    Entry e;
    char c1, c2;
    if (!(ls >> e.user >> c1 >> e.service >> c2 >> e.value) || c1 != ',' ||
        c2 != ',')
      throw ParseError("malformed csv row at line " + std::to_string(line_no));
    entries.push_back(e);
  }
  if (!dims_seen) {
    for (const Entry& e : entries) {
      n_users = std::max(n_users, e.user + 1);
      n_services = std::max(n_services, e.service + 1);
    }
  }
  return QosMatrix(n_users, n_services, std::move(entries));
}

MetadataTable load_metadata(const std::string& path, EntityKind kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open metadata file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty metadata file: " + path);

  MetadataTable table;
  table.region_vocab.push_back("<unknown>");
  std::set<std::size_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("malformed metadata row at line " + std::to_string(line_no));
    std::size_t index;
    try {
      index = std::stoul(line.substr(0, comma));
    } catch (const std::exception&) {
      throw ParseError("bad entity index at line " + std::to_string(line_no));
    }
    if (!seen.insert(index).second)
      throw ValidationError("duplicate entity index " + std::to_string(index) +
                            " at line " + std::to_string(line_no));
    const std::string region = trim(line.substr(comma + 1));
    std::size_t region_index = 0;
    if (!region.empty()) {
      auto it = std::find(table.region_vocab.begin(), table.region_vocab.end(),
                          region);
      if (it == table.region_vocab.end()) {
        region_index = table.region_vocab.size();
        table.region_vocab.push_back(region);
      } else {
        region_index = static_cast<std::size_t>(it - table.region_vocab.begin());
      }
    }
    table.entities.push_back({index, region_index, kind});
  }
  std::sort(table.entities.begin(), table.entities.end(),
            [](const EntityMeta& a, const EntityMeta& b) {
              return a.entity_index < b.entity_index;
            });
  return table;
}

Split split_by_density(const QosMatrix& m, const SplitSpec& spec) {
  if (!(spec.density > 0.0) || spec.density > 1.0)
    throw ConfigError("density must be in (0, 1]");
  if (m.n_entries() == 0) throw ValidationError("cannot split an empty matrix");

  std::vector<std::size_t> order(m.n_entries());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Prng rng(spec.seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.density * static_cast<double>(m.n_entries())));
  std::vector<Entry> train, test;
  train.reserve(n_train);
  test.reserve(m.n_entries() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : test).push_back(m.entries()[order[i]]);

  return {QosMatrix(m.n_users(), m.n_services(), std::move(train)),
          QosMatrix(m.n_users(), m.n_services(), std::move(test))};
}

QosMatrix filter_outliers(const QosMatrix& test, const QosMatrix& train,
                          double fraction, std::size_t* n_removed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw ConfigError("outlier fraction must be in [0, 1)");
  if (n_removed) *n_removed = 0;
  if (fraction == 0.0 || test.n_entries() == 0) return test;

  // Per-service median and IQR over training observations; services with no
  // training data fall back to the global statistics.
  std::vector<std::vector<double>> by_service(train.n_services());
  std::vector<double> all_values;
  all_values.reserve(train.n_entries());
  for (const Entry& e : train.entries()) {
    by_service[e.service].push_back(e.value);
    all_values.push_back(e.value);
  }

  auto quantile = [](std::vector<double>& v, double q) {
    // v sorted; linear interpolation between order statistics
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };

  std::sort(all_values.begin(), all_values.end());
  if (all_values.empty())
    throw ValidationError("filter_outliers: empty training matrix");
  const double global_median = quantile(all_values, 0.5);
  const double global_iqr =
      quantile(all_values, 0.75) - quantile(all_values, 0.25);

  std::vector<double> median(train.n_services(), global_median);
  std::vector<double> iqr(train.n_services(), global_iqr);
  for (std::size_t s = 0; s < by_service.size(); ++s) {
    auto& v = by_service[s];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    median[s] = quantile(v, 0.5);
    iqr[s] = quantile(v, 0.75) - quantile(v, 0.25);
  }

  constexpr double kIqrEps = 1e-9;
  struct Scored {
    double score;
    std::size_t idx;
  };
  std::vector<Scored> scored(test.n_entries());
  for (std::size_t i = 0; i < test.n_entries(); ++i) {
    const Entry& e = test.entries()[i];
    scored[i] = {std::abs(e.value - median[e.service]) / (iqr[e.service] + kIqrEps),
                 i};
  }
  // Most anomalous first; ties by (user, service) ascending. Entries are
  // already row-major sorted, so the index is the tie key.
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.idx < b.idx;
  });

  const auto n_drop = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(test.n_entries())));
  std::vector<bool> drop(test.n_entries(), false);
  for (std::size_t i = 0; i < n_drop; ++i) drop[scored[i].idx] = true;

  std::vector<Entry> kept;
  kept.reserve(test.n_entries() - n_drop);
  for (std::size_t i = 0; i < test.n_entries(); ++i)
    if (!drop[i]) kept.push_back(test.entries()[i]);

  if (n_removed) *n_removed = n_drop;
  return QosMatrix(test.n_users(), test.n_services(), std::move(kept));
}

}  // namespace rahn::data
