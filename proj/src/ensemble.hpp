#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "graph.hpp"
#include "numerics.hpp"
#include "regions.hpp"

namespace rgcn {

/// Topology of the spatial graph with co-assignment counts as edge weights.
/// Zero counts are stored explicitly so the topology is unchanged.
struct SimilarityGraph {
  SparseMatrix weights;
  std::size_t schemes = 0;

  std::size_t size() const noexcept { return weights.n(); }
};

SimilarityGraph co_assignment_graph(const SpatialGraph& g, std::span<const Allocation> schemes);

/// Total weight of edges whose endpoints are in different regions.
double cut_weight(const SimilarityGraph& gs, const Allocation& alloc);

/// ⌈(1 + u/1000)·n/R⌉
std::size_t balance_cap(std::size_t n, std::size_t regions, double u);

struct PartitionOptions {
  std::size_t trials = 8;
  std::size_t refine_passes = 8;
  std::uint64_t seed = 0;
};

struct PartitionResult {
  Allocation allocation;
  double cut = 0.0;
  std::size_t cap = 0;
  std::size_t max_size_before_repair = 0;
  std::size_t max_size_after_repair = 0;
  std::size_t fragments_merged = 0;
};

/// Multilevel k-way partition (heavy-edge coarsening, greedy growing, FM
/// refinement under the balance cap) followed by connectivity repair.
PartitionResult partition_kway(const SimilarityGraph& gs, std::size_t regions, double u,
                               const PartitionOptions& options = {});

/// Merges every region fragment except the largest into the adjacent region
/// with the heaviest connection, until every nonempty region is connected.
Allocation repair_connectivity(const SimilarityGraph& gs, Allocation alloc,
                               std::size_t* merged = nullptr);

/// Normalized mutual information with natural logs. Empty regions are
/// ignored; two single-region partitions score 1.
double nmi(const Allocation& a, const Allocation& b);
double anmi(std::span<const Allocation> schemes, const Allocation& ensemble);

struct RSelection {
  std::size_t best_r = 0;
  std::vector<std::pair<std::size_t, double>> table;
  std::vector<PartitionResult> partitions;
};

/// Partitions for every candidate R and keeps the first with the highest ANMI.
RSelection select_r(const SimilarityGraph& gs, std::span<const std::size_t> candidates, double u,
                    std::span<const Allocation> schemes, const PartitionOptions& options = {});

}  // namespace rgcn
