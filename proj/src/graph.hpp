#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace rgcn {

struct Edge {
  std::size_t src;
  std::size_t dst;
  std::optional<double> weight;
};

struct WeightedArc {
  std::size_t src;
  std::size_t dst;
  double weight;
};

/// Undirected spatial graph over n nodes. The adjacency is symmetric, has no
/// self-loops, and stores weight 1 for unweighted edges.
class SpatialGraph {
 public:
  SpatialGraph() = default;

  std::size_t size() const noexcept { return adjacency_.n(); }
  bool weighted() const noexcept { return weighted_; }
  const SparseMatrix& adjacency() const noexcept { return adjacency_; }
  const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }

  std::span<const std::size_t> neighbors(std::size_t i) const noexcept {
    return adjacency_.row_columns(i);
  }
  std::span<const double> neighbor_weights(std::size_t i) const noexcept {
    return adjacency_.row_values(i);
  }
  std::size_t degree(std::size_t i) const noexcept { return neighbors(i).size(); }
  double weighted_degree(std::size_t i) const noexcept;
  std::size_t edge_count() const noexcept { return adjacency_.nonzeros() / 2; }

  /// Each undirected edge once, with src < dst, in row-major order.
  std::vector<WeightedArc> edges() const;

  /// Replaces the external identifiers; must be n unique strings.
  void set_node_ids(std::vector<std::string> ids);

  friend SpatialGraph from_edge_list(std::size_t n, std::span<const Edge> edges);

 private:
  SparseMatrix adjacency_;
  bool weighted_ = false;
  std::vector<std::string> node_ids_;
};

/// Rejects self-loops, duplicate undirected pairs, out-of-range indices and
/// non-positive weights. The graph is weighted iff any edge carries a weight.
SpatialGraph from_edge_list(std::size_t n, std::span<const Edge> edges);

/// D⁻¹A using (weighted) degrees. Throws naming the first isolated node.
SparseMatrix row_normalize(const SpatialGraph& g);

/// D̃^(-1/2)(A + I)D̃^(-1/2).
SparseMatrix renormalized_laplacian(const SpatialGraph& g);

/// Dense component labels numbered in order of first appearance.
std::vector<std::size_t> connected_components(const SpatialGraph& g);
std::size_t component_count(std::span<const std::size_t> labels);

/// True if the nodes in `members` induce a connected subgraph (vacuously true
/// when empty).
bool induces_connected(const SpatialGraph& g, std::span<const std::size_t> members);

/// Averages both directions of a flow matrix, w'ij = (wij + wji) / 2 with a
/// missing direction counted as 0. Zero results are dropped.
SpatialGraph symmetrize_flows(std::size_t n, std::span<const WeightedArc> arcs);

}  // namespace rgcn
