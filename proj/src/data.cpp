#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "error.hpp"

namespace rgcn {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::Train:
      return "train";
    case Role::Validation:
      return "val";
    case Role::Test:
      return "test";
    case Role::None:
      break;
  }
  return "none";
}

std::vector<std::size_t> Dataset::nodes_with(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == role) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::labeled_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i]) out.push_back(i);
  return out;
}

std::vector<double> Dataset::dense_target() const {
  std::vector<double> out(target.size(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i]) out[i] = *target[i];
  return out;
}

std::size_t Dataset::index_of(const std::string& id) const {
  const auto it = std::find(node_ids.begin(), node_ids.end(), id);
  if (it == node_ids.end()) throw invalid_argument("unknown node id '" + id + "'");
  return static_cast<std::size_t>(it - node_ids.begin());
}

Dataset dataset_from_table(const CsvTable& table, const LoadOptions& options,
                           const std::string& source) {
  const std::size_t id_col = table.column("node_id");
  const bool derived_target = options.dem_column && options.rep_column;
  std::optional<std::size_t> target_col;
  std::optional<std::size_t> dem_col;
  std::optional<std::size_t> rep_col;
  if (derived_target) {
    dem_col = table.column(*options.dem_column);
    rep_col = table.column(*options.rep_column);
  } else {
    target_col = table.column(options.target_column);
  }

  std::vector<std::size_t> feature_cols;
  Dataset data;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == id_col || c == target_col || c == dem_col || c == rep_col) continue;
    const auto& name = table.header[c];
    if (std::find(options.ignore_columns.begin(), options.ignore_columns.end(), name) !=
        options.ignore_columns.end())
      continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(name);
  }

  const std::size_t n = table.rows.size();
  data.target_name = derived_target ? std::string("vote_share") : options.target_column;
  data.features = Matrix(n, feature_cols.size());
  data.target.assign(n, std::nullopt);
  data.roles.assign(n, Role::None);
  std::unordered_set<std::string> seen;
  std::vector<double> dem;
  std::vector<double> rep;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const std::string& id = row[id_col];
    if (!seen.insert(id).second) throw parse_error(source + ": duplicate node id '" + id + "'");
    data.node_ids.push_back(id);
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::string context =
          source + ": node '" + id + "' column '" + table.header[feature_cols[k]] + "'";
      data.features(r, k) = parse_double(row[feature_cols[k]], context);
    }
    if (derived_target) {
      dem.push_back(parse_double(row[*dem_col], source + ": node '" + id + "' dem votes"));
      rep.push_back(parse_double(row[*rep_col], source + ": node '" + id + "' rep votes"));
    } else if (!row[*target_col].empty()) {
      data.target[r] = parse_double(row[*target_col], source + ": node '" + id + "' target");
    }
  }
  if (derived_target) {
    const auto share = vote_share(dem, rep);
    for (std::size_t r = 0; r < n; ++r) data.target[r] = share[r];
  }
  return data;
}

LoadedData load_dataset(const std::filesystem::path& node_csv,
                        const std::filesystem::path& edge_csv, const LoadOptions& options) {
  LoadedData out;
  out.dataset = dataset_from_table(read_csv(node_csv), options, node_csv.string());
  const Dataset& data = out.dataset;

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.node_ids[i], i);
  const CsvTable edges = read_csv(edge_csv);
  const std::size_t src_col = edges.column("src");
  const std::size_t dst_col = edges.column("dst");
  const std::optional<std::size_t> weight_col =
      edges.has_column("weight") ? std::optional(edges.column("weight")) : std::nullopt;
  auto lookup = [&](const std::string& id) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw invalid_argument(edge_csv.string() + ": edge references unknown node id '" + id +
                             "'");
    }
    return it->second;
  };

  if (options.symmetrize_flows) {
    std::vector<WeightedArc> arcs;
    for (const auto& row : edges.rows) {
      const double w =
          weight_col ? parse_double(row[*weight_col], edge_csv.string() + ": weight") : 1.0;
      arcs.push_back({lookup(row[src_col]), lookup(row[dst_col]), w});
    }
    out.graph = symmetrize_flows(data.size(), arcs);
  } else {
    std::vector<Edge> list;
    for (const auto& row : edges.rows) {
      Edge e{lookup(row[src_col]), lookup(row[dst_col]), std::nullopt};
      if (weight_col) e.weight = parse_double(row[*weight_col], edge_csv.string() + ": weight");
      list.push_back(e);
    }
    out.graph = from_edge_list(data.size(), list);
  }
  out.graph.set_node_ids(data.node_ids);
  return out;
}

std::string format_node_csv(const Dataset& data) {
  CsvTable table;
  table.header.push_back("node_id");
  table.header.insert(table.header.end(), data.feature_names.begin(), data.feature_names.end());
  table.header.push_back(data.target_name);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::string> row{data.node_ids[i]};
    for (double v : data.features.row(i)) row.push_back(format_double(v));
    row.push_back(data.target[i] ? format_double(*data.target[i]) : std::string());
    table.rows.push_back(std::move(row));
  }
  return format_csv(table);
}

std::string format_edge_csv(const SpatialGraph& g) {
  CsvTable table;
  table.header = {"src", "dst"};
  if (g.weighted()) table.header.push_back("weight");
  for (const auto& e : g.edges()) {
    std::vector<std::string> row{g.node_ids()[e.src], g.node_ids()[e.dst]};
    if (g.weighted()) row.push_back(format_double(e.weight));
    table.rows.push_back(std::move(row));
  }
  return format_csv(table);
}

Matrix standardize_columns(const Matrix& x, std::span<const std::string> names) {
  Matrix out = x;
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0)) {
      const std::string name = c < names.size() ? names[c] : "#" + std::to_string(c);
      throw invalid_argument("feature column '" + name + "' is constant and cannot be standardized");
    }
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, c) = (x(r, c) - mean) / sd;
  }
  return out;
}

Dataset standardize(Dataset data) {
  data.features = standardize_columns(data.features, data.feature_names);
  return data;
}

std::vector<double> vote_share(std::span<const double> dem, std::span<const double> rep) {
  if (dem.size() != rep.size()) throw dimension_mismatch("vote_share: vector lengths differ");
  std::vector<double> out(dem.size());
  for (std::size_t i = 0; i < dem.size(); ++i) {
    if (dem[i] < 0.0 || rep[i] < 0.0) throw invalid_argument("vote counts must be non-negative");
    const double total = dem[i] + rep[i];
    if (!(total > 0.0)) {
      throw invalid_argument("node " + std::to_string(i) + " has zero two-party votes");
    }
    out[i] = dem[i] / total;
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t m, const SplitRatios& ratios) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (!(ratios.train > 0.0 && ratios.validation > 0.0 && ratios.test > 0.0) ||
      std::abs(total - 1.0) > 1e-9) {
    throw invalid_argument("split ratios must be positive and sum to 1");
  }
  if (m < 3) throw invalid_argument("need at least 3 labelled nodes to split");
  const auto floor_of = [m](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(m) + 1e-9));
  };
  const std::size_t val = floor_of(ratios.validation);
  const std::size_t test = floor_of(ratios.test);
  return {m - val - test, val, test};
}

Dataset split(Dataset data, const SplitRatios& ratios, Prng& rng) {
  std::vector<std::size_t> labeled = data.labeled_nodes();
  const auto sizes = split_sizes(labeled.size(), ratios);
  rng.shuffle(labeled);
  std::fill(data.roles.begin(), data.roles.end(), Role::None);
  for (std::size_t k = 0; k < labeled.size(); ++k) {
    Role role = Role::Train;
    if (k >= sizes[0]) role = k < sizes[0] + sizes[1] ? Role::Validation : Role::Test;
    data.roles[labeled[k]] = role;
  }
  return data;
}

Dataset apply_split_table(Dataset data, const CsvTable& table) {
  const std::size_t id_col = table.column("node_id");
  const std::size_t split_col = table.column("split");
  std::fill(data.roles.begin(), data.roles.end(), Role::None);
  for (const auto& row : table.rows) {
    const std::size_t i = data.index_of(row[id_col]);
    const std::string& s = row[split_col];
    Role role;
    if (s == "train") {
      role = Role::Train;
    } else if (s == "val" || s == "validation") {
      role = Role::Validation;
    } else if (s == "test") {
      role = Role::Test;
    } else {
      throw parse_error("unknown split '" + s + "' for node '" + row[id_col] + "'");
    }
    if (!data.target[i]) {
      throw invalid_argument("node '" + row[id_col] + "' has no target but is assigned a split");
    }
    data.roles[i] = role;
  }
  return data;
}

SpatialGraph grid_graph(std::size_t k) {
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t v = r * k + c;
      if (c + 1 < k) edges.push_back({v, v + 1, std::nullopt});
      if (r + 1 < k) edges.push_back({v, v + k, std::nullopt});
    }
  }
  return from_edge_list(k * k, edges);
}

SyntheticTruth synth_generate(const SynthOptions& options) {
  if (options.grid < 4) throw invalid_argument("synthetic grid side must be at least 4");
  if (options.regions == 0) throw invalid_argument("synthetic region count must be at least 1");
  const std::size_t n = options.grid * options.grid;
  const std::size_t c0 = options.features;
  const Prng master(options.seed);

  SyntheticTruth truth;
  truth.graph = grid_graph(options.grid);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "n" + std::to_string(i);
  truth.graph.set_node_ids(ids);

  Prng region_rng = master.substream("synth.regions");
  truth.allocation = grow_regions(truth.graph, options.regions, region_rng);

  // coefficient vectors at pairwise distance >= 1
  Prng coef_rng = master.substream("synth.coefficients");
  truth.coefficients = Matrix(options.regions, c0);
  for (std::size_t j = 0; j < options.regions; ++j) {
    while (true) {
      for (double& v : truth.coefficients.row(j)) v = coef_rng.normal();
      bool far_enough = true;
      for (std::size_t q = 0; q < j && far_enough; ++q) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < c0; ++k) {
          const double d = truth.coefficients(j, k) - truth.coefficients(q, k);
          d2 += d * d;
        }
        far_enough = d2 >= 1.0;
      }
      if (far_enough) break;
    }
  }

  Prng feature_rng = master.substream("synth.features");
  Dataset& data = truth.dataset;
  data.node_ids = ids;
  for (std::size_t k = 0; k < c0; ++k) data.feature_names.push_back("x" + std::to_string(k + 1));
  data.features = Matrix(n, c0);
  for (double& v : data.features.values()) v = feature_rng.normal();

  std::vector<double> local(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto beta = truth.coefficients.row(truth.allocation[i]);
    const auto x = data.features.row(i);
    for (std::size_t k = 0; k < c0; ++k) local[i] += beta[k] * x[k];
  }

  Prng noise_rng = master.substream("synth.noise");
  data.target.assign(n, std::nullopt);
  data.roles.assign(n, Role::None);
  for (std::size_t i = 0; i < n; ++i) {
    double lag = 0.0;
    for (std::size_t u : truth.graph.neighbors(i)) lag += local[u];
    lag /= static_cast<double>(truth.graph.degree(i));
    double y = activate(local[i] + options.gamma * lag, Activation::Sigmoid);
    if (options.noise_sd > 0.0) y += options.noise_sd * noise_rng.normal();
    data.target[i] = std::clamp(y, 0.0, 1.0);
  }
  truth.noise_sd = options.noise_sd;
  return truth;
}

}  // namespace rgcn
