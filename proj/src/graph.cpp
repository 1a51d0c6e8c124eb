#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <unordered_set>
#include <utility>

#include "error.hpp"

namespace rgcn {

double SpatialGraph::weighted_degree(std::size_t i) const noexcept {
  double s = 0.0;
  for (double w : neighbor_weights(i)) s += w;
  return s;
}

std::vector<WeightedArc> SpatialGraph::edges() const {
  std::vector<WeightedArc> out;
  out.reserve(edge_count());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto nbrs = neighbors(i);
    const auto ws = neighbor_weights(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      if (nbrs[k] > i) out.push_back({i, nbrs[k], ws[k]});
  }
  return out;
}

void SpatialGraph::set_node_ids(std::vector<std::string> ids) {
  if (ids.size() != size()) {
    throw invalid_argument("expected " + std::to_string(size()) + " node ids, got " +
                           std::to_string(ids.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw invalid_argument("duplicate node id '" + id + "'");
  }
  node_ids_ = std::move(ids);
}

SpatialGraph from_edge_list(std::size_t n, std::span<const Edge> edges) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(2 * edges.size());
  bool weighted = false;
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw invalid_argument("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                             ") out of range for " + std::to_string(n) + " nodes");
    }
    if (e.src == e.dst) throw invalid_argument("self-loop on node " + std::to_string(e.src));
    const auto key = std::minmax(e.src, e.dst);
    if (!seen.insert(key).second) {
      throw invalid_argument("duplicate edge between " + std::to_string(key.first) + " and " +
                             std::to_string(key.second));
    }
    double w = 1.0;
    if (e.weight) {
      weighted = true;
      w = *e.weight;
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw invalid_argument("edge weight must be positive and finite");
      }
    }
    entries.push_back({e.src, e.dst, w});
    entries.push_back({e.dst, e.src, w});
  }
  SpatialGraph g;
  g.adjacency_ = SparseMatrix::from_triplets(n, std::move(entries));
  g.weighted_ = weighted;
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  g.node_ids_ = std::move(ids);
  return g;
}

SparseMatrix row_normalize(const SpatialGraph& g) {
  const SparseMatrix& a = g.adjacency();
  std::vector<double> values = a.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.weighted_degree(i);
    if (!(d > 0.0)) {
      const std::string id = g.node_ids().empty() ? std::to_string(i) : g.node_ids()[i];
      throw invalid_argument("isolated node '" + id + "' has no neighbors to average over");
    }
    for (std::size_t k = a.offsets()[i]; k < a.offsets()[i + 1]; ++k) values[k] /= d;
  }
  return SparseMatrix(a.n(), a.offsets(), a.columns(), std::move(values));
}

SparseMatrix renormalized_laplacian(const SpatialGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(g.weighted_degree(i) + 1.0);
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(g.adjacency().nonzeros() + n);
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
    const auto nbrs = g.neighbors(i);
    const auto ws = g.neighbor_weights(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      entries.push_back({i, nbrs[k], inv_sqrt[i] * ws[k] * inv_sqrt[nbrs[k]]});
  }
  return SparseMatrix::from_triplets(n, std::move(entries));
}

std::vector<std::size_t> connected_components(const SpatialGraph& g) {
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(g.size(), unset);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < g.size(); ++s) {
    if (label[s] != unset) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t u : g.neighbors(v)) {
        if (label[u] == unset) {
          label[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
  return label;
}

std::size_t component_count(std::span<const std::size_t> labels) {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

bool induces_connected(const SpatialGraph& g, std::span<const std::size_t> members) {
  if (members.size() <= 1) return true;
  std::vector<char> inside(g.size(), 0);
  for (std::size_t v : members) inside[v] = 1;
  std::vector<std::size_t> stack{members.front()};
  inside[members.front()] = 2;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t u : g.neighbors(v)) {
      if (inside[u] == 1) {
        inside[u] = 2;
        ++reached;
        stack.push_back(u);
      }
    }
  }
  return reached == members.size();
}

SpatialGraph symmetrize_flows(std::size_t n, std::span<const WeightedArc> arcs) {
  std::map<std::pair<std::size_t, std::size_t>, double> totals;
  for (const WeightedArc& a : arcs) {
    if (a.src >= n || a.dst >= n) throw invalid_argument("flow endpoint out of range");
    if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) {
      throw invalid_argument("flow weights must be finite and non-negative");
    }
    if (a.src == a.dst) continue;  // intra-unit flow has no edge
    totals[std::minmax(a.src, a.dst)] += a.weight;
  }
  std::vector<Edge> edges;
  for (const auto& [key, total] : totals) {
    const double w = total / 2.0;
    if (w > 0.0) edges.push_back({key.first, key.second, w});
  }
  return from_edge_list(n, edges);
}

}  // namespace rgcn
