#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "graph.hpp"
#include "numerics.hpp"

namespace rgcn {

/// Assignment of n nodes to p regions. Labels are zero-based here; files use
/// one-based region numbers.
struct Allocation {
  std::vector<std::size_t> labels;
  std::size_t regions = 0;

  Allocation() = default;
  Allocation(std::vector<std::size_t> l, std::size_t p);

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t operator[](std::size_t i) const noexcept { return labels[i]; }
  std::vector<std::size_t> region_sizes() const;
  std::size_t nonempty_regions() const;
  std::vector<std::vector<std::size_t>> members() const;

  friend bool operator==(const Allocation&, const Allocation&) = default;
};

/// Random seeds, then rounds in which every region (in index order) absorbs
/// its unassigned frontier (in node order) until all nodes are assigned.
/// `seeds`, when given, receives the seed node of each region.
Allocation grow_regions(const SpatialGraph& g, std::size_t p, Prng& rng,
                        std::vector<std::size_t>* seeds = nullptr);

/// Nodes with at least one neighbour in a different region.
std::vector<std::size_t> boundary_nodes(const SpatialGraph& g, const Allocation& alloc);
bool is_boundary(const SpatialGraph& g, const Allocation& alloc, std::size_t node);

/// True if every nonempty region induces a connected subgraph.
bool regions_connected(const SpatialGraph& g, const Allocation& alloc);

/// Loss oracle for the zoning loop. Implementations own the current
/// allocation; `apply` commits a move after the caller accepted it.
class MoveEvaluator {
 public:
  virtual ~MoveEvaluator() = default;
  virtual double loss() const = 0;
  /// Loss if every node in `nodes` were relabelled to `region`.
  virtual double loss_if_moved(std::span<const std::size_t> nodes, std::size_t region) = 0;
  virtual void apply(std::span<const std::size_t> nodes, std::size_t region) = 0;
};

struct ZoningOptions {
  /// Skip moves that would split the source region; single-neighbour
  /// dependents move together with the node they hang off.
  bool contiguous = false;
  /// After a sweep with no moves, flag every node once more and sweep again
  /// before stopping, so termination implies a full sweep found nothing.
  bool confirm_full_sweep = true;
};

struct ZoningStats {
  std::size_t sweeps = 0;
  std::size_t moves = 0;
  std::size_t evaluations = 0;
  std::size_t emptied_regions = 0;
  std::size_t skipped_for_contiguity = 0;
  double initial_loss = 0.0;
  /// Loss after each accepted move.
  std::vector<double> loss_trace;
};

/// Boundary-node reallocation: sweep nodes in index order, try every
/// neighbouring region, keep the strict argmin, re-flag neighbours of moved
/// nodes (for the next sweep), and stop when a sweep moves nothing.
Allocation optimize_allocation(MoveEvaluator& evaluator, const SpatialGraph& g,
                               Allocation alloc, const ZoningOptions& options = {},
                               ZoningStats* stats = nullptr);

/// Convenience form driven by a whole-allocation loss.
Allocation optimize_allocation(const std::function<double(const Allocation&)>& loss_eval,
                               const SpatialGraph& g, Allocation alloc,
                               const ZoningOptions& options = {}, ZoningStats* stats = nullptr);

struct KMeansResult {
  Allocation allocation;
  Matrix centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeding (cap 300, centroid tolerance 1e-6).
KMeansResult kmeans(const Matrix& features, std::size_t p, Prng& rng);
Allocation kmeans_allocate(const Matrix& features, std::size_t p, Prng& rng);

}  // namespace rgcn
