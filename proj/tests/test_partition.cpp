#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <vector>

#include "gmdiff/partition.hpp"

using namespace gmdiff;

TEST_CASE("partition counts follow the Bell numbers", "[partition]") {
  REQUIRE(enumerate_partitions(1).size() == 1);
  REQUIRE(enumerate_partitions(2).size() == 2);
  REQUIRE(enumerate_partitions(3).size() == 5);
  REQUIRE(enumerate_partitions(4).size() == 15);
  REQUIRE(enumerate_partitions(5).size() == 52);
  REQUIRE_THROWS_AS(enumerate_partitions(0), std::invalid_argument);
}

TEST_CASE("every partition is a disjoint cover with block 0 holding index 0", "[partition]") {
  for (int k = 1; k <= 5; ++k) {
    auto parts = enumerate_partitions(k);
    std::set<std::vector<std::vector<int>>> seen;
    for (const auto& p : parts) {
      std::set<int> all;
      for (const auto& block : p) {
        REQUIRE_FALSE(block.empty());
        for (int i : block) {
          REQUIRE(i >= 0);
          REQUIRE(i < k);
          REQUIRE(all.insert(i).second);  // no repeats across blocks
        }
      }
      REQUIRE(static_cast<int>(all.size()) == k);
      REQUIRE(p[0][0] == 0);
      REQUIRE(seen.insert(p).second);  // all partitions distinct
    }
  }
}

TEST_CASE("the enumeration starts with one block and ends with singletons", "[partition]") {
  auto parts = enumerate_partitions(3);
  REQUIRE(parts.front() == Partition{{0, 1, 2}});
  REQUIRE(parts.back() == Partition{{0}, {1}, {2}});
}

TEST_CASE("partition pairs form the full cross product", "[partition]") {
  REQUIRE(enumerate_partition_pairs(3).size() == 25);
  REQUIRE(enumerate_partition_pairs(4).size() == 225);
  REQUIRE_THROWS_WITH(enumerate_partition_pairs(6),
                      Catch::Matchers::ContainsSubstring("k <= 5"));
  auto pairs = enumerate_partition_pairs(2);
  REQUIRE(pairs.size() == 4);
  REQUIRE(pairs[0].mean_partition == Partition{{0, 1}});
  REQUIRE(pairs[0].cov_partition == Partition{{0, 1}});
  REQUIRE(pairs[3].mean_partition == Partition{{0}, {1}});
  REQUIRE(pairs[3].cov_partition == Partition{{0}, {1}});
}

TEST_CASE("refinement intersects the two partitions in (a, b) order", "[partition]") {
  PartitionPair pair;
  pair.mean_partition = {{0, 1}, {2}};
  pair.cov_partition = {{0}, {1, 2}};
  Refinement r = make_refinement(pair, 3);
  REQUIRE(r.pieces.size() == 3);
  REQUIRE(r.pieces[0] == std::vector<int>{0});
  REQUIRE(r.pieces[1] == std::vector<int>{1});
  REQUIRE(r.pieces[2] == std::vector<int>{2});
  REQUIRE(r.lookup.at({0, 0}) == 1);
  REQUIRE(r.lookup.at({0, 1}) == 2);
  REQUIRE(r.lookup.at({1, 1}) == 3);
  REQUIRE(r.lookup.find({1, 0}) == r.lookup.end());
}

TEST_CASE("refining a partition with itself returns its own blocks", "[partition]") {
  PartitionPair pair;
  pair.mean_partition = {{0, 2}, {1}};
  pair.cov_partition = {{0, 2}, {1}};
  Refinement r = make_refinement(pair, 3);
  REQUIRE(r.pieces.size() == 2);
  REQUIRE(r.pieces[0] == std::vector<int>{0, 2});
  REQUIRE(r.pieces[1] == std::vector<int>{1});
}

TEST_CASE("refinement rejects a pair that does not cover every index", "[partition]") {
  PartitionPair pair;
  pair.mean_partition = {{0}};
  pair.cov_partition = {{0}, {1}};
  REQUIRE_THROWS_WITH(make_refinement(pair, 2),
                      Catch::Matchers::ContainsSubstring("cover"));
}
