#include "regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"

namespace rgcn {

Allocation::Allocation(std::vector<std::size_t> l, std::size_t p)
    : labels(std::move(l)), regions(p) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= regions) {
      throw invalid_argument("region label " + std::to_string(labels[i] + 1) + " of node " +
                             std::to_string(i) + " outside [1, " + std::to_string(regions) + "]");
    }
  }
}

std::vector<std::size_t> Allocation::region_sizes() const {
  std::vector<std::size_t> sizes(regions, 0);
  for (std::size_t r : labels) ++sizes[r];
  return sizes;
}

std::size_t Allocation::nonempty_regions() const {
  const auto sizes = region_sizes();
  return static_cast<std::size_t>(
      std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
}

std::vector<std::vector<std::size_t>> Allocation::members() const {
  std::vector<std::vector<std::size_t>> out(regions);
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
  return out;
}

Allocation grow_regions(const SpatialGraph& g, std::size_t p, Prng& rng,
                        std::vector<std::size_t>* seeds) {
  const std::size_t n = g.size();
  if (p == 0) throw invalid_argument("region count must be at least 1");
  if (p > n) {
    throw invalid_argument("cannot grow " + std::to_string(p) + " regions on " +
                           std::to_string(n) + " nodes");
  }
  if (component_count(connected_components(g)) > 1) {
    throw invalid_argument("region growth requires a connected graph");
  }

  // partial Fisher-Yates: the first p entries are distinct uniform seeds
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t j = 0; j < p; ++j) std::swap(order[j], order[j + rng.below(n - j)]);
  if (seeds) seeds->assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p));

  constexpr std::size_t unassigned = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> labels(n, unassigned);
  std::vector<std::vector<std::size_t>> members(p);
  for (std::size_t j = 0; j < p; ++j) {
    labels[order[j]] = j;
    members[j].push_back(order[j]);
  }

  std::size_t assigned = p;
  std::vector<std::size_t> frontier;
  while (assigned < n) {
    for (std::size_t j = 0; j < p && assigned < n; ++j) {
      frontier.clear();
      for (std::size_t v : members[j])
        for (std::size_t u : g.neighbors(v))
          if (labels[u] == unassigned) frontier.push_back(u);
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      for (std::size_t u : frontier) {
        labels[u] = j;
        members[j].push_back(u);
        ++assigned;
      }
    }
  }
  return Allocation(std::move(labels), p);
}

bool is_boundary(const SpatialGraph& g, const Allocation& alloc, std::size_t node) {
  for (std::size_t u : g.neighbors(node))
    if (alloc[u] != alloc[node]) return true;
  return false;
}

std::vector<std::size_t> boundary_nodes(const SpatialGraph& g, const Allocation& alloc) {
  if (alloc.size() != g.size()) throw dimension_mismatch("allocation size differs from graph");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (is_boundary(g, alloc, i)) out.push_back(i);
  return out;
}

bool regions_connected(const SpatialGraph& g, const Allocation& alloc) {
  for (const auto& m : alloc.members())
    if (!induces_connected(g, m)) return false;
  return true;
}

namespace {

/// Node plus its single-neighbour dependents in the same region.
std::vector<std::size_t> move_group(const SpatialGraph& g, const Allocation& alloc,
                                    std::size_t node) {
  std::vector<std::size_t> group{node};
  for (std::size_t u : g.neighbors(node))
    if (g.degree(u) == 1 && alloc[u] == alloc[node]) group.push_back(u);
  return group;
}

bool source_stays_connected(const SpatialGraph& g, const Allocation& alloc,
                            std::span<const std::size_t> group) {
  const std::size_t source = alloc[group.front()];
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    if (alloc[i] != source) continue;
    if (std::find(group.begin(), group.end(), i) != group.end()) continue;
    rest.push_back(i);
  }
  return induces_connected(g, rest);
}

class FunctionEvaluator final : public MoveEvaluator {
 public:
  FunctionEvaluator(const std::function<double(const Allocation&)>& f, Allocation alloc)
      : f_(f), alloc_(std::move(alloc)), loss_(f_(alloc_)) {}

  double loss() const override { return loss_; }

  double loss_if_moved(std::span<const std::size_t> nodes, std::size_t region) override {
    Allocation trial = alloc_;
    for (std::size_t v : nodes) trial.labels[v] = region;
    return f_(trial);
  }

  void apply(std::span<const std::size_t> nodes, std::size_t region) override {
    for (std::size_t v : nodes) alloc_.labels[v] = region;
    loss_ = f_(alloc_);
  }

 private:
  const std::function<double(const Allocation&)>& f_;
  Allocation alloc_;
  double loss_;
};

}  // namespace

Allocation optimize_allocation(MoveEvaluator& evaluator, const SpatialGraph& g,
                               Allocation alloc, const ZoningOptions& options,
                               ZoningStats* stats) {
  const std::size_t n = g.size();
  if (alloc.size() != n) throw dimension_mismatch("allocation size differs from graph");
  ZoningStats local;
  ZoningStats& st = stats ? *stats : local;
  st = ZoningStats{};
  st.initial_loss = evaluator.loss();

  std::vector<std::size_t> sizes = alloc.region_sizes();
  std::vector<char> check_now(n, 1);
  std::vector<char> check_next(n, 0);
  std::vector<std::size_t> candidates;
  bool sweep_was_full = true;

  while (true) {
    ++st.sweeps;
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!check_now[i] || !is_boundary(g, alloc, i)) continue;
      check_now[i] = 0;

      std::vector<std::size_t> group{i};
      if (options.contiguous) {
        group = move_group(g, alloc, i);
        if (!source_stays_connected(g, alloc, group)) {
          ++st.skipped_for_contiguity;
          continue;
        }
      }

      const std::size_t current = alloc[i];
      candidates.clear();
      for (std::size_t u : g.neighbors(i)) {
        const std::size_t r = alloc[u];
        if (r != current && std::find(candidates.begin(), candidates.end(), r) == candidates.end())
          candidates.push_back(r);
      }

      double best_loss = evaluator.loss();
      std::size_t best_region = current;
      for (std::size_t r : candidates) {
        const double l = evaluator.loss_if_moved(group, r);
        ++st.evaluations;
        if (l < best_loss) {
          best_loss = l;
          best_region = r;
        }
      }
      if (best_region == current) continue;

      evaluator.apply(group, best_region);
      for (std::size_t v : group) alloc.labels[v] = best_region;
      sizes[current] -= group.size();
      sizes[best_region] += group.size();
      if (sizes[current] == 0) ++st.emptied_regions;
      ++st.moves;
      st.loss_trace.push_back(evaluator.loss());
      moved = true;
      for (std::size_t v : group)
        for (std::size_t u : g.neighbors(v)) check_next[u] = 1;
    }

    for (std::size_t k = 0; k < n; ++k) {
      if (check_next[k]) {
        check_now[k] = 1;
        check_next[k] = 0;
      }
    }
    if (moved) {
      sweep_was_full = false;
      continue;
    }
    if (sweep_was_full || !options.confirm_full_sweep) break;
    std::fill(check_now.begin(), check_now.end(), 1);
    sweep_was_full = true;
  }
  return alloc;
}

Allocation optimize_allocation(const std::function<double(const Allocation&)>& loss_eval,
                               const SpatialGraph& g, Allocation alloc,
                               const ZoningOptions& options, ZoningStats* stats) {
  FunctionEvaluator evaluator(loss_eval, alloc);
  return optimize_allocation(evaluator, g, std::move(alloc), options, stats);
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

}  // namespace

KMeansResult kmeans(const Matrix& features, std::size_t p, Prng& rng) {
  constexpr std::size_t max_iterations = 300;
  constexpr double tolerance = 1e-6;
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (p == 0) throw invalid_argument("cluster count must be at least 1");
  if (p > n) {
    throw invalid_argument("cannot form " + std::to_string(p) + " clusters from " +
                           std::to_string(n) + " points");
  }

  // k-means++ seeding
  Matrix centroids(p, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  std::copy(features.row(first).begin(), features.row(first).end(), centroids.row(0).begin());
  for (std::size_t c = 1; c < p; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features.row(i), centroids.row(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy(features.row(pick).begin(), features.row(pick).end(), centroids.row(c).begin());
  }

  std::vector<std::size_t> labels(n, 0);
  std::size_t iteration = 0;
  for (; iteration < max_iterations; ++iteration) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < p; ++c) {
        const double dist = squared_distance(features.row(i), centroids.row(c));
        if (dist < best) {
          best = dist;
          labels[i] = c;
        }
      }
    }
    std::vector<std::size_t> counts(p, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[labels[i]];
    for (std::size_t c = 0; c < p; ++c) {
      if (counts[c] > 0) continue;
      // reseed an empty cluster with the point farthest from its centroid
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double dist = squared_distance(features.row(i), centroids.row(labels[i]));
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      --counts[labels[far]];
      labels[far] = c;
      counts[c] = 1;
    }
    Matrix next(p, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(labels[i]);
      const auto src = features.row(i);
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
    for (std::size_t c = 0; c < p; ++c)
      for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
    double shift = 0.0;
    for (std::size_t c = 0; c < p; ++c)
      shift = std::max(shift, std::sqrt(squared_distance(next.row(c), centroids.row(c))));
    centroids = std::move(next);
    if (shift <= tolerance) {
      ++iteration;
      break;
    }
  }

  // final assignment against the converged centroids
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < p; ++c) {
      const double dist = squared_distance(features.row(i), centroids.row(c));
      if (dist < best) {
        best = dist;
        labels[i] = c;
      }
    }
    inertia += best;
  }
  return {Allocation(std::move(labels), p), std::move(centroids), inertia, iteration};
}

Allocation kmeans_allocate(const Matrix& features, std::size_t p, Prng& rng) {
  return kmeans(features, p, rng).allocation;
}

}  // namespace rgcn
