#include "ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <tuple>

#include "error.hpp"

namespace rgcn {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// one level of the multilevel hierarchy; vertex weights count fine nodes
struct Level {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> adj;
  std::vector<double> ew;
  std::vector<std::size_t> vw;

  std::size_t size() const { return vw.size(); }
};

Level base_level(const SimilarityGraph& gs) {
  Level l;
  l.offsets = gs.weights.offsets();
  l.adj = gs.weights.columns();
  l.ew = gs.weights.values();
  l.vw.assign(gs.size(), 1);
  return l;
}

Level coarsen(const Level& fine, std::size_t cap, Prng& rng, std::vector<std::size_t>& map) {
  const std::size_t n = fine.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  // heavy-edge matching; zero-weight edges never match
  std::vector<std::size_t> match(n, kNone);
  for (std::size_t v : order) {
    if (match[v] != kNone) continue;
    std::size_t best = kNone;
    double best_w = 0.0;
    for (std::size_t k = fine.offsets[v]; k < fine.offsets[v + 1]; ++k) {
      const std::size_t u = fine.adj[k];
      if (match[u] != kNone || fine.ew[k] <= 0.0) continue;
      if (fine.vw[v] + fine.vw[u] > cap) continue;
      if (fine.ew[k] > best_w || (fine.ew[k] == best_w && u < best)) {
        best = u;
        best_w = fine.ew[k];
      }
    }
    if (best == kNone) {
      match[v] = v;
    } else {
      match[v] = best;
      match[best] = v;
    }
  }

  map.assign(n, kNone);
  std::size_t nc = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (map[v] != kNone) continue;
    map[v] = nc;
    map[match[v]] = nc;
    ++nc;
  }

  Level c;
  c.vw.assign(nc, 0);
  std::vector<std::vector<std::size_t>> members(nc);
  for (std::size_t v = 0; v < n; ++v) {
    c.vw[map[v]] += fine.vw[v];
    members[map[v]].push_back(v);
  }
  std::vector<double> acc(nc, 0.0);
  std::vector<char> touched(nc, 0);
  std::vector<std::size_t> list;
  for (std::size_t cv = 0; cv < nc; ++cv) {
    list.clear();
    for (std::size_t v : members[cv]) {
      for (std::size_t k = fine.offsets[v]; k < fine.offsets[v + 1]; ++k) {
        const std::size_t cu = map[fine.adj[k]];
        if (cu == cv) continue;
        if (!touched[cu]) {
          touched[cu] = 1;
          acc[cu] = 0.0;
          list.push_back(cu);
        }
        acc[cu] += fine.ew[k];
      }
    }
    std::sort(list.begin(), list.end());
    for (std::size_t cu : list) {
      c.adj.push_back(cu);
      c.ew.push_back(acc[cu]);
      touched[cu] = 0;
    }
    c.offsets.push_back(c.adj.size());
  }
  return c;
}

double level_cut(const Level& g, const std::vector<std::size_t>& label) {
  double cut = 0.0;
  for (std::size_t v = 0; v < g.size(); ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k)
      if (g.adj[k] > v && label[g.adj[k]] != label[v]) cut += g.ew[k];
  return cut;
}

struct Partition {
  const Level& g;
  std::size_t parts;
  std::size_t cap;
  std::vector<std::size_t> label;
  std::vector<std::size_t> weight;
  std::vector<std::size_t> count;
  // scratch for connection sums
  std::vector<double> conn;
  std::vector<char> adjacent;
  std::vector<std::size_t> touched;
  // random order among equal-gain moves
  std::vector<std::size_t> rank;

  Partition(const Level& level, std::size_t k, std::size_t c, std::vector<std::size_t> l, Prng& rng)
      : g(level), parts(k), cap(c), label(std::move(l)), weight(k, 0), count(k, 0),
        conn(k, 0.0), adjacent(k, 0), rank(level.size()) {
    for (std::size_t v = 0; v < rank.size(); ++v) rank[v] = v;
    rng.shuffle(rank);
    for (std::size_t v = 0; v < g.size(); ++v) {
      weight[label[v]] += g.vw[v];
      ++count[label[v]];
    }
  }

  // fills conn/adjacent for the parts touching v; returns them in `touched`
  void connections(std::size_t v) {
    for (std::size_t p : touched) {
      conn[p] = 0.0;
      adjacent[p] = 0;
    }
    touched.clear();
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const std::size_t p = label[g.adj[k]];
      if (!adjacent[p]) {
        adjacent[p] = 1;
        touched.push_back(p);
      }
      conn[p] += g.ew[k];
    }
  }

  void move(std::size_t v, std::size_t to) {
    const std::size_t from = label[v];
    weight[from] -= g.vw[v];
    --count[from];
    weight[to] += g.vw[v];
    ++count[to];
    label[v] = to;
  }

  // best feasible move of v to an adjacent part: (gain, part)
  std::optional<std::pair<double, std::size_t>> best_move(std::size_t v) {
    const std::size_t from = label[v];
    if (count[from] <= 1) return std::nullopt;
    connections(v);
    const double own = adjacent[from] ? conn[from] : 0.0;
    std::optional<std::pair<double, std::size_t>> best;
    for (std::size_t p : touched) {
      if (p == from || weight[p] + g.vw[v] > cap) continue;
      const double gain = conn[p] - own;
      if (!best || gain > best->first || (gain == best->first && p < best->second))
        best = std::make_pair(gain, p);
    }
    return best;
  }

  void rebalance() {
    while (true) {
      std::size_t heavy = 0;
      for (std::size_t p = 1; p < parts; ++p)
        if (weight[p] > weight[heavy]) heavy = p;
      if (weight[heavy] <= cap || count[heavy] <= 1) return;
      std::size_t best_v = kNone, best_p = kNone;
      std::tuple<int, double> best_key{-1, 0.0};
      for (std::size_t v = 0; v < g.size(); ++v) {
        if (label[v] != heavy) continue;
        connections(v);
        const double own = adjacent[heavy] ? conn[heavy] : 0.0;
        for (std::size_t p = 0; p < parts; ++p) {
          if (p == heavy || weight[p] + g.vw[v] > cap) continue;
          const std::tuple<int, double> key{adjacent[p] ? 1 : 0,
                                            (adjacent[p] ? conn[p] : 0.0) - own};
          if (best_v == kNone || key > best_key) {
            best_key = key;
            best_v = v;
            best_p = p;
          }
        }
      }
      if (best_v == kNone) return;
      move(best_v, best_p);
    }
  }

  // one FM pass with rollback to the best prefix; true if the cut dropped
  bool fm_pass(std::size_t limit) {
    const std::size_t n = g.size();
    using Key = std::tuple<double, std::size_t, std::size_t, std::size_t>;  // (-gain, rank, v, to)
    std::set<Key> queue;
    std::vector<std::optional<Key>> entry(n);
    std::vector<char> locked(n, 0);

    auto push = [&](std::size_t v) {
      if (const auto m = best_move(v)) {
        const Key key{-m->first, rank[v], v, m->second};
        queue.insert(key);
        entry[v] = key;
      }
    };
    for (std::size_t v = 0; v < n; ++v) {
      bool boundary = false;
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1] && !boundary; ++k)
        boundary = label[g.adj[k]] != label[v];
      if (boundary) push(v);
    }

    double cut = level_cut(g, label);
    double best_cut = cut;
    std::vector<std::pair<std::size_t, std::size_t>> log;
    std::size_t best_len = 0;
    std::size_t since_best = 0;
    while (!queue.empty() && since_best < limit) {
      const Key top = *queue.begin();
      queue.erase(queue.begin());
      const std::size_t v = std::get<2>(top);
      entry[v].reset();
      if (locked[v]) continue;
      const auto fresh = best_move(v);
      if (!fresh) continue;
      if (-fresh->first != std::get<0>(top) || fresh->second != std::get<3>(top)) {
        push(v);
        continue;
      }
      log.emplace_back(v, label[v]);
      move(v, fresh->second);
      cut -= fresh->first;
      locked[v] = 1;
      if (cut < best_cut - 1e-9) {
        best_cut = cut;
        best_len = log.size();
        since_best = 0;
      } else {
        ++since_best;
      }
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
        const std::size_t u = g.adj[k];
        if (locked[u]) continue;
        if (entry[u]) {
          queue.erase(*entry[u]);
          entry[u].reset();
        }
        push(u);
      }
    }
    for (std::size_t i = log.size(); i > best_len; --i) move(log[i - 1].first, log[i - 1].second);
    return best_len > 0;
  }

  void refine(std::size_t passes) {
    rebalance();
    const std::size_t limit = std::max<std::size_t>(50, g.size() / 20);
    for (std::size_t p = 0; p < passes; ++p)
      if (!fm_pass(limit)) break;
  }
};

// sequential greedy growing; leftovers go where they connect best
std::vector<std::size_t> grow_initial(const Level& g, std::size_t parts, std::size_t cap,
                                      Prng& rng) {
  const std::size_t n = g.size();
  std::size_t total = 0;
  for (std::size_t w : g.vw) total += w;
  const double target = static_cast<double>(total) / static_cast<double>(parts);

  std::vector<std::size_t> label(n, kNone);
  std::vector<std::size_t> weight(parts, 0);
  std::vector<double> c(n, 0.0);
  for (std::size_t r = 0; r < parts; ++r) {
    std::vector<std::size_t> free;
    for (std::size_t v = 0; v < n; ++v)
      if (label[v] == kNone) free.push_back(v);
    if (free.empty()) break;
    std::fill(c.begin(), c.end(), 0.0);
    auto take = [&](std::size_t v) {
      label[v] = r;
      weight[r] += g.vw[v];
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) c[g.adj[k]] += g.ew[k];
    };
    take(free[rng.below(free.size())]);
    while (static_cast<double>(weight[r]) < target) {
      std::size_t best = kNone;
      for (std::size_t v = 0; v < n; ++v) {
        if (label[v] != kNone || c[v] <= 0.0 || weight[r] + g.vw[v] > cap) continue;
        if (best == kNone || c[v] > c[best]) best = v;
      }
      if (best == kNone) break;
      take(best);
    }
  }

  std::vector<double> conn(parts, 0.0);
  std::vector<char> adjacent(parts, 0);
  while (true) {
    std::size_t best_v = kNone, best_p = kNone;
    double best_w = 0.0;
    std::size_t first_free = kNone;
    for (std::size_t v = 0; v < n; ++v) {
      if (label[v] != kNone) continue;
      if (first_free == kNone) first_free = v;
      std::fill(conn.begin(), conn.end(), 0.0);
      std::fill(adjacent.begin(), adjacent.end(), 0);
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
        const std::size_t p = label[g.adj[k]];
        if (p == kNone) continue;
        adjacent[p] = 1;
        conn[p] += g.ew[k];
      }
      for (std::size_t p = 0; p < parts; ++p) {
        if (!adjacent[p] || weight[p] + g.vw[v] > cap) continue;
        if (best_v == kNone || conn[p] > best_w) {
          best_v = v;
          best_p = p;
          best_w = conn[p];
        }
      }
    }
    if (first_free == kNone) break;
    if (best_v == kNone) {
      best_v = first_free;
      best_p = static_cast<std::size_t>(
          std::min_element(weight.begin(), weight.end()) - weight.begin());
    }
    label[best_v] = best_p;
    weight[best_p] += g.vw[best_v];
  }
  return label;
}

// true if `region` stays connected once v leaves it
bool connected_without(const SparseMatrix& w, const Allocation& a, std::size_t region,
                       std::size_t v, std::size_t region_size, std::vector<std::size_t>& mark,
                       std::size_t stamp) {
  if (region_size <= 2) return true;
  std::size_t start = kNone;
  for (std::size_t u : w.row_columns(v))
    if (a[u] == region) {
      start = u;
      break;
    }
  if (start == kNone) return true;
  std::vector<std::size_t> stack{start};
  mark[start] = stamp;
  mark[v] = stamp;
  std::size_t seen = 1;
  while (!stack.empty()) {
    const std::size_t x = stack.back();
    stack.pop_back();
    for (std::size_t u : w.row_columns(x)) {
      if (a[u] != region || mark[u] == stamp) continue;
      mark[u] = stamp;
      ++seen;
      stack.push_back(u);
    }
  }
  return seen == region_size - 1;
}

std::size_t overweight(std::size_t size, std::size_t cap) { return size > cap ? size - cap : 0; }

// single-node moves on the repaired partition that keep every region
// connected and nonempty; lowers (overweight, cut) lexicographically
Allocation refine_connected(const SimilarityGraph& gs, Allocation alloc, std::size_t cap) {
  const std::size_t n = gs.size();
  std::vector<std::size_t> size = alloc.region_sizes();
  std::vector<std::size_t> mark(n, 0);
  std::size_t stamp = 0;
  std::map<std::size_t, double> conn;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t from = alloc[v];
      if (size[from] <= 1) continue;
      conn.clear();
      const auto cols = gs.weights.row_columns(v);
      const auto vals = gs.weights.row_values(v);
      for (std::size_t k = 0; k < cols.size(); ++k) conn[alloc[cols[k]]] += vals[k];
      const double own = conn.count(from) ? conn[from] : 0.0;
      std::size_t best = kNone;
      long best_over = 0;
      double best_cut = 0.0;
      for (const auto& [p, w] : conn) {
        if (p == from) continue;
        const long d_over = static_cast<long>(overweight(size[from] - 1, cap) + overweight(size[p] + 1, cap)) -
                            static_cast<long>(overweight(size[from], cap) + overweight(size[p], cap));
        const double d_cut = own - w;
        const bool improves = d_over < 0 || (d_over == 0 && d_cut < -1e-12);
        if (!improves) continue;
        if (best == kNone || d_over < best_over || (d_over == best_over && d_cut < best_cut)) {
          best = p;
          best_over = d_over;
          best_cut = d_cut;
        }
      }
      if (best == kNone) continue;
      if (!connected_without(gs.weights, alloc, from, v, size[from], mark, ++stamp)) continue;
      alloc.labels[v] = best;
      --size[from];
      ++size[best];
      changed = true;
    }
  }
  return alloc;
}

std::size_t max_region_size(const Allocation& a) {
  const auto sizes = a.region_sizes();
  return sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
}

}  // namespace

SimilarityGraph co_assignment_graph(const SpatialGraph& g, std::span<const Allocation> schemes) {
  if (schemes.empty()) throw invalid_argument("co-assignment needs at least one region scheme");
  for (const auto& s : schemes) {
    if (s.size() != g.size()) {
      throw dimension_mismatch("region scheme covers " + std::to_string(s.size()) +
                               " nodes, graph has " + std::to_string(g.size()));
    }
  }
  const SparseMatrix& a = g.adjacency();
  std::vector<double> counts(a.nonzeros(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = a.offsets()[i]; k < a.offsets()[i + 1]; ++k) {
      const std::size_t j = a.columns()[k];
      for (const auto& s : schemes)
        if (s[i] == s[j]) counts[k] += 1.0;
    }
  }
  SimilarityGraph gs;
  gs.weights = SparseMatrix(g.size(), a.offsets(), a.columns(), std::move(counts));
  gs.schemes = schemes.size();
  return gs;
}

double cut_weight(const SimilarityGraph& gs, const Allocation& alloc) {
  if (alloc.size() != gs.size()) throw dimension_mismatch("allocation size differs from graph");
  double cut = 0.0;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const auto cols = gs.weights.row_columns(i);
    const auto vals = gs.weights.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] > i && alloc[i] != alloc[cols[k]]) cut += vals[k];
  }
  return cut;
}

std::size_t balance_cap(std::size_t n, std::size_t regions, double u) {
  const double cap =
      std::ceil((1.0 + u / 1000.0) * static_cast<double>(n) / static_cast<double>(regions) - 1e-9);
  return static_cast<std::size_t>(cap);
}

Allocation repair_connectivity(const SimilarityGraph& gs, Allocation alloc, std::size_t* merged) {
  const std::size_t n = gs.size();
  std::size_t merges = 0;
  std::vector<std::size_t> comp(n);
  bool changed = true;
  while (changed) {
    changed = false;
    // components inside each region
    std::fill(comp.begin(), comp.end(), kNone);
    std::vector<std::vector<std::size_t>> pieces;
    for (std::size_t s = 0; s < n; ++s) {
      if (comp[s] != kNone) continue;
      const std::size_t id = pieces.size();
      pieces.emplace_back();
      std::vector<std::size_t> stack{s};
      comp[s] = id;
      while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        pieces[id].push_back(v);
        for (std::size_t u : gs.weights.row_columns(v)) {
          if (comp[u] == kNone && alloc[u] == alloc[v]) {
            comp[u] = id;
            stack.push_back(u);
          }
        }
      }
    }
    // largest piece per region stays
    std::vector<std::size_t> keep(alloc.regions, kNone);
    for (std::size_t id = 0; id < pieces.size(); ++id) {
      const std::size_t r = alloc[pieces[id].front()];
      if (keep[r] == kNone || pieces[id].size() > pieces[keep[r]].size()) keep[r] = id;
    }
    for (std::size_t id = 0; id < pieces.size() && !changed; ++id) {
      const std::size_t r = alloc[pieces[id].front()];
      if (keep[r] == id) continue;
      std::map<std::size_t, double> link;
      for (std::size_t v : pieces[id]) {
        const auto cols = gs.weights.row_columns(v);
        const auto vals = gs.weights.row_values(v);
        for (std::size_t k = 0; k < cols.size(); ++k)
          if (alloc[cols[k]] != r) link[alloc[cols[k]]] += vals[k];
      }
      if (link.empty()) continue;  // fragment is its own graph component
      std::size_t target = link.begin()->first;
      for (const auto& [q, w] : link)
        if (w > link[target]) target = q;
      for (std::size_t v : pieces[id]) alloc.labels[v] = target;
      ++merges;
      changed = true;
    }
  }
  if (merged) *merged = merges;
  return alloc;
}

PartitionResult partition_kway(const SimilarityGraph& gs, std::size_t regions, double u,
                               const PartitionOptions& options) {
  const std::size_t n = gs.size();
  if (regions == 0) throw invalid_argument("region count must be at least 1");
  if (regions > n) {
    throw invalid_argument("cannot partition " + std::to_string(n) + " nodes into " +
                           std::to_string(regions) + " regions");
  }
  if (u < 0.0) throw invalid_argument("balance parameter u must be non-negative");
  PartitionResult result;
  result.cap = balance_cap(n, regions, u);
  if (regions == 1) {
    result.allocation = Allocation(std::vector<std::size_t>(n, 0), 1);
    result.max_size_before_repair = result.max_size_after_repair = n;
    return result;
  }

  const Level base = base_level(gs);
  const Prng master(options.seed);
  std::optional<std::tuple<std::size_t, std::size_t, double>> best_key;
  for (std::size_t trial = 0; trial < std::max<std::size_t>(options.trials, 1); ++trial) {
    Prng rng = master.substream("partition", trial);
    std::vector<Level> levels{base};
    std::vector<std::vector<std::size_t>> maps;
    while (levels.back().size() > 8 * regions) {
      std::vector<std::size_t> map;
      Level coarse = coarsen(levels.back(), result.cap, rng, map);
      if (static_cast<double>(coarse.size()) > 0.95 * static_cast<double>(levels.back().size()))
        break;
      levels.push_back(std::move(coarse));
      maps.push_back(std::move(map));
    }

    Partition part(levels.back(), regions, result.cap,
                   grow_initial(levels.back(), regions, result.cap, rng), rng);
    part.refine(options.refine_passes);
    std::vector<std::size_t> labels = part.label;
    for (std::size_t l = levels.size() - 1; l > 0; --l) {
      std::vector<std::size_t> finer(levels[l - 1].size());
      for (std::size_t v = 0; v < finer.size(); ++v) finer[v] = labels[maps[l - 1][v]];
      Partition p(levels[l - 1], regions, result.cap, std::move(finer), rng);
      p.refine(options.refine_passes);
      labels = std::move(p.label);
    }

    Allocation alloc(std::move(labels), regions);
    const std::size_t before = max_region_size(alloc);
    std::size_t merged = 0;
    Allocation repaired = refine_connected(gs, repair_connectivity(gs, alloc, &merged), result.cap);
    const double cut = cut_weight(gs, repaired);
    std::size_t over = 0;
    for (std::size_t s : repaired.region_sizes()) over += overweight(s, result.cap);
    const std::tuple<std::size_t, std::size_t, double> key{overweight(before, result.cap), over, cut};
    if (!best_key || key < *best_key) {
      best_key = key;
      result.allocation = std::move(repaired);
      result.cut = cut;
      result.max_size_before_repair = before;
      result.max_size_after_repair = max_region_size(result.allocation);
      result.fragments_merged = merged;
    }
  }
  return result;
}

double nmi(const Allocation& a, const Allocation& b) {
  if (a.size() != b.size()) {
    throw dimension_mismatch("nmi: allocations cover " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " nodes");
  }
  const std::size_t n = a.size();
  if (n == 0) throw invalid_argument("nmi: empty allocations");
  const auto sa = a.region_sizes();
  const auto sb = b.region_sizes();
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  for (std::size_t i = 0; i < n; ++i) ++joint[{a[i], b[i]}];

  const double nn = static_cast<double>(n);
  double num = 0.0;
  for (const auto& [key, count] : joint) {
    const double c = static_cast<double>(count);
    num += c * std::log(nn * c / (static_cast<double>(sa[key.first]) *
                                  static_cast<double>(sb[key.second])));
  }
  double den = 0.0;
  for (std::size_t s : sa)
    if (s > 0) den += static_cast<double>(s) * std::log(static_cast<double>(s) / nn);
  for (std::size_t s : sb)
    if (s > 0) den += static_cast<double>(s) * std::log(static_cast<double>(s) / nn);
  if (den == 0.0) return 1.0;  // both partitions have a single nonempty region
  return std::clamp(-2.0 * num / den, 0.0, 1.0);
}

double anmi(std::span<const Allocation> schemes, const Allocation& ensemble) {
  if (schemes.empty()) throw invalid_argument("anmi needs at least one region scheme");
  double s = 0.0;
  for (const auto& scheme : schemes) s += nmi(scheme, ensemble);
  return s / static_cast<double>(schemes.size());
}

RSelection select_r(const SimilarityGraph& gs, std::span<const std::size_t> candidates, double u,
                    std::span<const Allocation> schemes, const PartitionOptions& options) {
  if (candidates.empty()) throw invalid_argument("no candidate region counts");
  RSelection out;
  double best = -1.0;
  for (std::size_t r : candidates) {
    PartitionResult p = partition_kway(gs, r, u, options);
    const double score = anmi(schemes, p.allocation);
    out.table.emplace_back(r, score);
    if (score > best) {
      best = score;
      out.best_r = r;
    }
    out.partitions.push_back(std::move(p));
  }
  return out;
}

}  // namespace rgcn
