#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "rahn/data.hpp"
#include "rahn/errors.hpp"
#include "rahn/prng.hpp"

using namespace rahn;
using namespace rahn::data;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/rahn_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_matrix parses the dense text layout with -1 sentinel") {
  const auto path = write_temp("m1.txt", "1.0 -1\n0.5 2.0\n");
  const QosMatrix m = load_matrix(path, MatrixFormat::matrix_text);
  CHECK(m.n_users() == 2);
  CHECK(m.n_services() == 2);
  REQUIRE(m.n_entries() == 3);
  CHECK(m.entries()[0] == Entry{0, 0, 1.0});
  CHECK(m.entries()[1] == Entry{1, 0, 0.5});
  CHECK(m.entries()[2] == Entry{1, 1, 2.0});
}

TEST_CASE("load_matrix rejects bad input") {
  CHECK_THROWS_AS(load_matrix(write_temp("m2.txt", ""), MatrixFormat::matrix_text),
                  ParseError);
  CHECK_THROWS_AS(
      load_matrix(write_temp("m3.txt", "1 2 3\n1 2\n"), MatrixFormat::matrix_text),
      ParseError);
  CHECK_THROWS_AS(
      load_matrix(write_temp("m4.txt", "1 -0.5\n1 1\n"), MatrixFormat::matrix_text),
      ValidationError);
  CHECK_THROWS(load_matrix("/nonexistent/matrix.txt", MatrixFormat::matrix_text));
}

TEST_CASE("csv save/load round trip is the identity") {
  QosMatrix m(3, 4, {{0, 1, 0.25}, {2, 0, 1.5}, {2, 3, 0.0}});
  const std::string path = "/tmp/rahn_test_roundtrip.csv";
  save_matrix_csv(m, path);
  const QosMatrix back = load_matrix(path, MatrixFormat::csv);
  CHECK(back.n_users() == m.n_users());
  CHECK(back.n_services() == m.n_services());
  CHECK(back.entries() == m.entries());
}

TEST_CASE("load_metadata interns regions in first-appearance order") {
  const auto path = write_temp("meta1.csv", "index,region\n0,US\n1,DE\n2,US\n");
  const MetadataTable t = load_metadata(path, EntityKind::user);
  REQUIRE(t.entities.size() == 3);
  CHECK(t.entities[0].region_index == 1);
  CHECK(t.entities[1].region_index == 2);
  CHECK(t.entities[2].region_index == 1);
  CHECK(t.region_vocab.size() == 3);  // <unknown>, US, DE
}

TEST_CASE("load_metadata maps blank regions to index 0") {
  const auto path = write_temp("meta2.csv", "index,region\n0,\n1,FR\n");
  const MetadataTable t = load_metadata(path, EntityKind::service);
  CHECK(t.entities[0].region_index == 0);
  CHECK(t.entities[1].region_index == 1);
}

TEST_CASE("load_metadata rejects duplicate indices") {
  const auto path = write_temp("meta3.csv", "index,region\n0,US\n0,DE\n");
  CHECK_THROWS_AS(load_metadata(path, EntityKind::user), ValidationError);
}

TEST_CASE("split_by_density sizes and determinism") {
  std::vector<Entry> entries;
  for (std::size_t u = 0; u < 2; ++u)
    for (std::size_t s = 0; s < 5; ++s)
      entries.push_back({u, s, static_cast<double>(u + s)});
  const QosMatrix m(2, 5, entries);

  SUBCASE("rounding") {
    const Split sp = split_by_density(m, {0.2, 1});
    CHECK(sp.train.n_entries() == 2);
    CHECK(sp.test.n_entries() == 8);
  }
  SUBCASE("density 1 leaves test empty") {
    const Split sp = split_by_density(m, {1.0, 1});
    CHECK(sp.train.n_entries() == 10);
    CHECK(sp.test.n_entries() == 0);
  }
  SUBCASE("same seed gives identical partitions") {
    const Split a = split_by_density(m, {0.4, 99});
    const Split b = split_by_density(m, {0.4, 99});
    CHECK(a.train.entries() == b.train.entries());
    CHECK(a.test.entries() == b.test.entries());
  }
  SUBCASE("invalid density") {
    CHECK_THROWS_AS(split_by_density(m, {0.0, 1}), ConfigError);
    CHECK_THROWS_AS(split_by_density(m, {1.5, 1}), ConfigError);
  }
}

TEST_CASE("split is an exact partition for random seeds and densities") {
  std::vector<Entry> entries;
  for (std::size_t u = 0; u < 7; ++u)
    for (std::size_t s = 0; s < 11; ++s)
      if ((u * 11 + s) % 3 != 0)
        entries.push_back({u, s, static_cast<double>(u * s % 5)});
  const QosMatrix m(7, 11, entries);

  Prng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double density = 0.05 + 0.95 * rng.next_double();
    const Split sp = split_by_density(m, {density, rng.next_u64()});
    CHECK(sp.train.n_entries() + sp.test.n_entries() == m.n_entries());
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Entry& e : sp.train.entries()) seen.insert({e.user, e.service});
    for (const Entry& e : sp.test.entries())
      CHECK(!seen.contains({e.user, e.service}));
    std::vector<Entry> merged = sp.train.entries();
    merged.insert(merged.end(), sp.test.entries().begin(), sp.test.entries().end());
    CHECK(QosMatrix(7, 11, merged).entries() == m.entries());
  }
}

TEST_CASE("filter_outliers") {
  // train gives service 0 a tight distribution around 1
  const QosMatrix train(5, 1, {{0, 0, 1.0}, {1, 0, 1.0}, {2, 0, 1.0}});
  const QosMatrix test(10, 1,
                       {{5, 0, 1.0}, {6, 0, 1.0}, {7, 0, 1.0}, {8, 0, 1.0},
                        {9, 0, 100.0}});

  SUBCASE("fraction 0 is the identity") {
    std::size_t removed = 99;
    const QosMatrix out = filter_outliers(test, train, 0.0, &removed);
    CHECK(out.entries() == test.entries());
    CHECK(removed == 0);
  }
  SUBCASE("the extreme value is removed first") {
    // scores: |q - 1| / (0 + 1e-9); entry valued 100 dominates
    std::size_t removed = 0;
    const QosMatrix out = filter_outliers(test, train, 0.2, &removed);
    CHECK(removed == 1);
    REQUIRE(out.n_entries() == 4);
    for (const Entry& e : out.entries()) CHECK(e.value == 1.0);
  }
  SUBCASE("ceiling rule removes exactly one entry from 8 at fraction 0.1") {
    std::vector<Entry> eight;
    for (std::size_t u = 0; u < 8; ++u) eight.push_back({u, 0, 1.0 + 0.01 * u});
    std::size_t removed = 0;
    filter_outliers(QosMatrix(8, 1, eight), train, 0.1, &removed);
    CHECK(removed == 1);
  }
  SUBCASE("fraction >= 1 rejected") {
    CHECK_THROWS_AS(filter_outliers(test, train, 1.0, nullptr), ConfigError);
  }
  SUBCASE("determinism") {
    const QosMatrix a = filter_outliers(test, train, 0.4, nullptr);
    const QosMatrix b = filter_outliers(test, train, 0.4, nullptr);
    CHECK(a.entries() == b.entries());
  }
}

TEST_CASE("QosMatrix validation") {
  CHECK_THROWS_AS(QosMatrix(1, 1, {{0, 0, -0.5}}), ValidationError);
  CHECK_THROWS_AS(QosMatrix(1, 1, {{0, 1, 0.5}}), ValidationError);
  CHECK_THROWS_AS(QosMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), ValidationError);
}
