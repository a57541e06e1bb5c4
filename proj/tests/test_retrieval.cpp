#include <cmath>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "support.hpp"
#include "vdnapr/error.hpp"
#include "vdnapr/retrieval.hpp"

using namespace vdnapr;
using namespace vdnapr::retrieval;

namespace {

world::SequenceRecord at(const std::string& id, const std::string& traversal, double x) {
  world::SequenceRecord r;
  r.seq_id = id;
  r.traversal_id = traversal;
  r.frame_ids = {id + "_f"};
  r.x = x;
  return r;
}

DescriptorDb one_d(const std::vector<std::pair<double, double>>& pose_and_value, const std::string& traversal) {
  DescriptorDb db;
  for (std::size_t i = 0; i < pose_and_value.size(); ++i) {
    const double v[] = {pose_and_value[i].second};
    db.add(at(traversal + std::to_string(i), traversal, pose_and_value[i].first), v);
  }
  return db;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::ConfigError;
}

}  // namespace

TEST_CASE("hand-enumerated three-query recall") {
  // Database places every 100 m, descriptor = place / 10.
  const auto db = one_d({{0, 0}, {100, 10}, {200, 20}, {300, 30}}, "d");
  // q0 and q1 land next to their own place. q2 sits at 200 m but looks like
  // place 0, so its true match (db2) is only third. q3 has no place within
  // 25 m and is excluded.
  const auto queries = one_d({{0, 1}, {100, 11}, {200, 1}, {1000, 30}}, "q");
  const std::size_t ns[] = {1, 2, 3, 5};
  const auto r = recall_at_n(db, queries, ns, world::Threshold::parse("25m"));
  CHECK(r.evaluated == 3);
  CHECK(r.excluded == 1);
  CHECK(r.at(1) == 200.0 / 3.0);
  CHECK(r.at(2) == 200.0 / 3.0);
  CHECK(r.at(3) == 100.0);
  CHECK(r.at(5) == 100.0);
  CHECK(r.to_text().find("R@1 66.666667\n") != std::string::npos);
}

TEST_CASE("self retrieval") {
  testing::Rng rng(1);
  DescriptorDb db;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = testing::uniform(rng, -1, 1);
    db.add(at("s" + std::to_string(i), "t", 100.0 * i), v);
  }
  const std::size_t ns[] = {1};
  CHECK(recall_at_n(db, db, ns, world::Threshold::parse("1m")).at(1) == 100.0);
}

TEST_CASE("knn basics") {
  const auto db = one_d({{0, 0.0}, {0, 2.0}, {0, -2.0}, {0, 5.0}}, "d");
  const float q0[] = {2.0f};
  auto nn = knn(db, q0, 1);
  CHECK(nn == std::vector<Neighbor>{{1, 0.0}});
  const float q1[] = {0.0f};
  nn = knn(db, q1, 10);
  REQUIRE(nn.size() == 4);
  CHECK(nn[1].index == 1);  // tie between rows 1 and 2 goes to the lower index
  CHECK(nn[2].index == 2);
  CHECK(kind_of([&] { knn(DescriptorDb{}, q1, 1); }) == ErrorKind::EmptyDatabase);
  const float q2[] = {0.0f, 1.0f};
  CHECK(kind_of([&] { knn(db, q2, 1); }) == ErrorKind::ShapeError);
}

TEST_CASE("knn matches a full sort on random databases") {
  testing::Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    DescriptorDb db;
    const std::size_t dim = 16;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> v(dim);
      // Coarse values force exact distance ties.
      for (auto& x : v) x = static_cast<double>(testing::uniform_index(rng, 0, 3));
      db.add(at("r" + std::to_string(i), "t", i), v);
    }
    std::vector<float> q(dim);
    for (auto& x : q) x = static_cast<float>(testing::uniform_index(rng, 0, 3));
    const auto got = knn(db, q, 10);
    const auto want = testing::full_sort_knn(db.matrix, dim, q, 10);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == want[i].index);
      CHECK(got[i].distance == want[i].distance);
    }
  }
}

TEST_CASE("database add, round trip and slicing") {
  const auto dir = testing::scratch_dir("vpdb");
  DescriptorDb empty;
  CHECK(empty.size() == 0);
  empty.save(dir / "empty.vpdb");
  CHECK(DescriptorDb::load(dir / "empty.vpdb") == empty);

  DescriptorDb db;
  const double a[] = {1.0, 2.0, 3.0, 4.0};
  db.add(at("a", "t", 0), a);
  db.add(at("b", "t", 1), a);  // duplicates are allowed
  const double wrong[] = {1.0};
  CHECK(kind_of([&] { db.add(at("c", "t", 2), wrong); }) == ErrorKind::ShapeError);
  const float q[] = {1, 2, 3, 4};
  const auto nn = knn(db, q, 2);
  CHECK(nn[0].distance == 0.0);
  CHECK(nn[1].distance == 0.0);

  db.records[0].first_index = 7;
  db.records[1].frame_ids = {"x", "y", "z"};
  db.save(dir / "db.vpdb");
  const auto back = DescriptorDb::load(dir / "db.vpdb");
  CHECK(back == db);

  const std::uint32_t second[] = {1};
  const auto s = slice_db(db, second, 2, "neurons:1");
  CHECK(s.dim == 2);
  CHECK(s.matrix == std::vector<float>{3, 4, 3, 4});

  {
    std::ifstream in(dir / "db.vpdb", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "junk.vpdb", std::ios::binary) << bytes << "!";
    std::ofstream(dir / "short.vpdb", std::ios::binary) << bytes.substr(0, bytes.size() - 2);
  }
  CHECK(kind_of([&] { DescriptorDb::load(dir / "junk.vpdb"); }) == ErrorKind::FormatError);
  CHECK(kind_of([&] { DescriptorDb::load(dir / "short.vpdb"); }) == ErrorKind::FormatError);
}

TEST_CASE("layer sweep on a single-layer spec") {
  testing::Rng rng(3);
  const auto spec = testing::uniform_spec(1, 2, 8);
  DescriptorDb db;
  db.selection = "all";
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = testing::uniform(rng, -1, 1);
    db.add(at("s" + std::to_string(i), "t", 100.0 * i), v);
  }
  const std::size_t ns[] = {1, 5};
  const auto sweep = layer_sweep(spec, 4, db, db, {}, ns, world::Threshold::parse("25m"));
  REQUIRE(sweep.size() == 1);
  CHECK(sweep[0].label == "L1");
  CHECK(sweep[0].length == 8);
  CHECK(sweep[0].report.at(1) == 100.0);
  CHECK(sweep_table(sweep).rfind("# vdnapr layer sweep v1\n", 0) == 0);
  CHECK(sweep_svg(sweep, "t").find("<svg") != std::string::npos);
}

TEST_CASE("recall errors") {
  const auto db = one_d({{0, 0}}, "d");
  const std::size_t ns[] = {1};
  CHECK(kind_of([&] { recall_at_n(DescriptorDb{}, db, ns, {}); }) == ErrorKind::EmptyDatabase);
  const std::size_t zero[] = {0};
  CHECK(kind_of([&] { recall_at_n(db, db, zero, {}); }) == ErrorKind::ConfigError);
}
