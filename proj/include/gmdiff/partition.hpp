#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gmdiff {

using Partition = std::vector<std::vector<int>>;  // disjoint blocks covering [k]

struct PartitionPair {
  Partition mean_partition;   // S
  Partition cov_partition;    // T
};

// Set partitions of {0..k-1} as restricted-growth strings, lexicographic.
// Block order follows first occurrence, so block 0 always contains index 0.
inline std::vector<Partition> enumerate_partitions(int k) {
  if (k < 1) throw std::invalid_argument("enumerate_partitions needs k >= 1");
  std::vector<Partition> out;
  std::vector<int> rgs(static_cast<std::size_t>(k), 0);
  for (;;) {
    int blocks = 0;
    for (int v : rgs) blocks = std::max(blocks, v + 1);
    Partition p(static_cast<std::size_t>(blocks));
    for (int i = 0; i < k; ++i)
      p[static_cast<std::size_t>(rgs[static_cast<std::size_t>(i)])].push_back(i);
    out.push_back(std::move(p));

    int j = k - 1;
    for (; j >= 1; --j) {
      int prefix_max = 0;
      for (int i = 0; i < j; ++i)
        prefix_max = std::max(prefix_max, rgs[static_cast<std::size_t>(i)]);
      if (rgs[static_cast<std::size_t>(j)] <= prefix_max) break;
    }
    if (j < 1) break;
    ++rgs[static_cast<std::size_t>(j)];
    for (int i = j + 1; i < k; ++i) rgs[static_cast<std::size_t>(i)] = 0;
  }
  return out;
}

inline std::vector<PartitionPair> enumerate_partition_pairs(int k) {
  if (k > 5)
    throw std::invalid_argument(
        "enumerate_partition_pairs is guarded at k <= 5");
  std::vector<Partition> parts = enumerate_partitions(k);
  std::vector<PartitionPair> out;
  out.reserve(parts.size() * parts.size());
  for (const auto& s : parts)
    for (const auto& t : parts) out.push_back({s, t});
  return out;
}

struct Refinement {
  std::vector<std::vector<int>> pieces;       // nonempty S_a cap T_b, (a,b) order
  std::map<std::pair<int, int>, int> lookup;  // (a, b) -> 1-based piece index
};

inline Refinement make_refinement(const PartitionPair& pair, int k) {
  std::vector<int> s_of(static_cast<std::size_t>(k), -1);
  std::vector<int> t_of(static_cast<std::size_t>(k), -1);
  for (std::size_t a = 0; a < pair.mean_partition.size(); ++a)
    for (int i : pair.mean_partition[a]) s_of[static_cast<std::size_t>(i)] = static_cast<int>(a);
  for (std::size_t b = 0; b < pair.cov_partition.size(); ++b)
    for (int i : pair.cov_partition[b]) t_of[static_cast<std::size_t>(i)] = static_cast<int>(b);
  for (int i = 0; i < k; ++i)
    if (s_of[static_cast<std::size_t>(i)] < 0 || t_of[static_cast<std::size_t>(i)] < 0)
      throw std::invalid_argument("partition pair does not cover every index");

  Refinement out;
  for (std::size_t a = 0; a < pair.mean_partition.size(); ++a) {
    for (std::size_t b = 0; b < pair.cov_partition.size(); ++b) {
      std::vector<int> piece;
      for (int i : pair.mean_partition[a])
        if (t_of[static_cast<std::size_t>(i)] == static_cast<int>(b))
          piece.push_back(i);
      if (!piece.empty()) {
        out.pieces.push_back(piece);
        out.lookup[{static_cast<int>(a), static_cast<int>(b)}] =
            static_cast<int>(out.pieces.size());
      }
    }
  }
  return out;
}

}  // namespace gmdiff
