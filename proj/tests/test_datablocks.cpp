#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "oblivion/datablocks.hpp"
#include "test_support.hpp"

using namespace oblivion;
using oblivion::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

Dataset grid_dataset(std::size_t n, std::size_t classes) {
  std::vector<DataPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({static_cast<PointId>(i), Eigen::VectorXd::Constant(2, static_cast<double>(i)),
                   static_cast<int>(i % classes)});
  }
  return Dataset(std::move(pts), classes);
}

void check_partition_invariants(const Dataset& ds, const BlockPartition& part) {
  std::set<PointId> all;
  std::size_t lo = SIZE_MAX, hi = 0;
  std::map<int, std::pair<std::size_t, std::size_t>> class_range;
  for (const auto& b : part.blocks()) {
    lo = std::min(lo, b.size());
    hi = std::max(hi, b.size());
    std::map<int, std::size_t> per_class;
    for (PointId id : b) {
      CHECK(all.insert(id).second);
      ++per_class[ds.at(id).label];
    }
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
      const std::size_t n = per_class[static_cast<int>(c)];
      auto& r = class_range.try_emplace(static_cast<int>(c), SIZE_MAX, 0).first->second;
      r.first = std::min(r.first, n);
      r.second = std::max(r.second, n);
    }
  }
  CHECK(all.size() == ds.size());
  CHECK(hi - lo <= 1);
  for (const auto& [c, r] : class_range) CHECK(r.second - r.first <= 1);
}

}  // namespace

TEST_CASE("load_csv parses rows with and without header") {
  TempDir dir("csv");
  write_text(dir / "a.csv", "id,label,x,y\n1,0,0.5,1.5\n2,1,-2,3e-1\n3,0,4,5\n");
  const Dataset ds = load_csv(dir / "a.csv");
  CHECK(ds.size() == 3);
  CHECK(ds.feature_dim() == 2);
  CHECK(ds.num_classes() == 2);
  CHECK(ds.at(2).features[1] == 0.3);

  write_text(dir / "b.csv", "10,2,1\n11,0,2\n");
  CHECK(load_csv(dir / "b.csv").size() == 2);
}

TEST_CASE("load_csv error paths") {
  TempDir dir("csv_err");
  write_text(dir / "dup.csv", "1,0,1,2\n1,1,3,4\n");
  CHECK_THROWS_WITH(load_csv(dir / "dup.csv"), doctest::Contains("duplicate id 1"));

  write_text(dir / "empty.csv", "");
  CHECK_THROWS_WITH(load_csv(dir / "empty.csv"), doctest::Contains("empty dataset"));

  write_text(dir / "dim.csv", "1,0,1,2\n2,0,1\n");
  CHECK_THROWS_WITH(load_csv(dir / "dim.csv"), doctest::Contains("line 2"));

  write_text(dir / "bad.csv", "1,0,1,abc\n");
  CHECK_THROWS_WITH(load_csv(dir / "bad.csv"), doctest::Contains("line 1"));

  write_text(dir / "label.csv", "1,5,1,2\n");
  CHECK_THROWS_WITH(load_csv(dir / "label.csv", 3), doctest::Contains("out of range"));

  CHECK_THROWS_WITH(load_csv(dir / "missing.csv"), doctest::Contains("missing.csv"));
}

TEST_CASE("save_csv round trips exactly") {
  TempDir dir("csv_rt");
  const Dataset ds = oblivion::testing::clusters(30, 3, 4, 2);
  save_csv(ds, dir / "ds.csv");
  const Dataset back = load_csv(dir / "ds.csv", 3);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.points()[i].id == ds.points()[i].id);
    CHECK(back.points()[i].label == ds.points()[i].label);
    CHECK(back.points()[i].features == ds.points()[i].features);
  }
}

TEST_CASE("partition examples") {
  const Dataset ten = grid_dataset(10, 2);
  const auto five = partition(ten, 5, 3);
  for (const auto& b : five.blocks()) {
    REQUIRE(b.size() == 2);
    CHECK(ten.at(b[0]).label != ten.at(b[1]).label);
  }
  const auto one = partition(ten, 1, 3);
  CHECK(one.block(1).size() == 10);

  const auto three = partition(ten, 3, 3);
  std::vector<std::size_t> sizes;
  for (const auto& b : three.blocks()) sizes.push_back(b.size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{3, 3, 4});

  CHECK_THROWS(partition(ten, 0, 1));
  CHECK_THROWS(partition(ten, 11, 1));
  CHECK(partition(ten, 3, 9) == partition(ten, 3, 9));
}

TEST_CASE("property: partition invariants over sizes, block counts and seeds") {
  Rng rng(123);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(300));
    const std::size_t classes = 1 + static_cast<std::size_t>(rng.below(std::min<std::size_t>(n, 7)));
    std::vector<DataPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // Ids deliberately scrambled and labels uneven.
      pts.push_back({static_cast<PointId>(i * 7919 % 100003), Eigen::VectorXd::Zero(1),
                     static_cast<int>(rng.below(classes))});
    }
    const Dataset ds(std::move(pts), classes);
    const std::size_t blocks = 1 + static_cast<std::size_t>(rng.below(n));
    check_partition_invariants(ds, partition(ds, blocks, rng.next_u64()));
  }
}

TEST_CASE("locate groups ids by block") {
  const Dataset ds = grid_dataset(40, 4);
  const auto part = partition(ds, 8, 1);
  const PointId a = part.block(2)[0];
  const PointId b = part.block(7)[1];
  const PointId c = part.block(2)[3];

  const auto single = locate(part, {{a}});
  REQUIRE(single.size() == 1);
  CHECK(single[0].block == 2);

  const auto both = locate(part, {{b, a, c}});
  REQUIRE(both.size() == 2);
  CHECK(both[0].block == 2);
  CHECK(both[0].ids == std::vector<PointId>{std::min(a, c), std::max(a, c)});
  CHECK(both[1].block == 7);
  CHECK_THROWS(locate(part, {{999}}));
}

TEST_CASE("delete_from_block touches only block d") {
  const Dataset ds = grid_dataset(40, 2);
  const auto part = partition(ds, 4, 0);
  const PointId victim = part.block(3)[4];
  const auto edited = delete_from_block(part, 3, {victim});
  CHECK(edited.block(3).size() == part.block(3).size() - 1);
  for (std::size_t d : {1u, 2u, 4u}) CHECK(edited.block(d) == part.block(d));
  auto expected = part.block(3);
  expected.erase(std::find(expected.begin(), expected.end(), victim));
  CHECK(edited.block(3) == expected);
  CHECK(edited.total_points() == ds.size() - 1);
  CHECK_FALSE(edited.find(victim).has_value());

  const auto emptied = delete_from_block(part, 2, part.block(2));
  CHECK(emptied.block(2).empty());
  CHECK(block_data(ds, emptied, 2).empty());

  CHECK_THROWS(delete_from_block(part, 1, {victim}));
}

TEST_CASE("partition file round trip") {
  TempDir dir("part");
  const Dataset ds = grid_dataset(23, 3);
  auto part = partition(ds, 5, 2);
  part = delete_from_block(part, 4, part.block(4));
  save_partition(part, dir / "p.txt");
  CHECK(load_partition(dir / "p.txt") == part);
}

TEST_CASE("inject_backdoor appends triggered copies") {
  const Dataset ds = oblivion::testing::clusters(100, 3, 5, 8);
  BackdoorSpec spec{{0, 1}, 1.0, 2, 0};
  const auto none = inject_backdoor(ds, spec, 1);
  CHECK(none.poisoned_ids.empty());
  CHECK(none.dataset.size() == ds.size());

  spec.count = 10;
  const auto poisoned = inject_backdoor(ds, spec, 1);
  CHECK(poisoned.dataset.size() == 110);
  REQUIRE(poisoned.poisoned_ids.size() == 10);
  for (PointId id : poisoned.poisoned_ids) {
    CHECK(id > ds.max_id());
    const auto& p = poisoned.dataset.at(id);
    CHECK(p.features[0] == 1.0);
    CHECK(p.features[1] == 1.0);
    CHECK(p.label == 2);
  }
  for (const auto& p : ds.points()) {
    const auto& q = poisoned.dataset.at(p.id);
    CHECK(q.label == p.label);
    CHECK(q.features == p.features);
  }
  spec.count = 101;
  CHECK_THROWS(inject_backdoor(ds, spec, 1));
  spec.count = 1;
  spec.trigger_mask = {5};
  CHECK_THROWS(inject_backdoor(ds, spec, 1));
}
