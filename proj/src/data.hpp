#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csv.hpp"
#include "graph.hpp"
#include "numerics.hpp"
#include "regions.hpp"

namespace rgcn {

enum class Role : std::uint8_t { None, Train, Validation, Test };

std::string_view to_string(Role role) noexcept;

/// Node features, optional targets and the train/validation/test roles of
/// labelled nodes. Unlabelled nodes always have Role::None.
struct Dataset {
  std::vector<std::string> node_ids;
  std::vector<std::string> feature_names;
  std::string target_name = "target";
  Matrix features;
  std::vector<std::optional<double>> target;
  std::vector<Role> roles;

  std::size_t size() const noexcept { return node_ids.size(); }
  std::vector<std::size_t> nodes_with(Role role) const;
  std::vector<std::size_t> labeled_nodes() const;
  /// Target values with unlabelled entries set to 0.
  std::vector<double> dense_target() const;
  std::size_t index_of(const std::string& id) const;
};

struct LoadOptions {
  std::string target_column = "target";
  /// Columns that are neither features nor target.
  std::vector<std::string> ignore_columns;
  /// Treat edge rows as directed flows and average both directions.
  bool symmetrize_flows = false;
  /// When both are set the target is dem / (dem + rep) and the two columns
  /// are removed from the features.
  std::optional<std::string> dem_column;
  std::optional<std::string> rep_column;
};

struct LoadedData {
  Dataset dataset;
  SpatialGraph graph;
};

LoadedData load_dataset(const std::filesystem::path& node_csv,
                        const std::filesystem::path& edge_csv, const LoadOptions& options = {});

/// Builds the dataset from an already parsed node table (no graph).
Dataset dataset_from_table(const CsvTable& table, const LoadOptions& options,
                           const std::string& source);

/// Node CSV with header `node_id,<features>,<target>`; empty cell = unlabelled.
std::string format_node_csv(const Dataset& data);
/// Edge CSV with header `src,dst[,weight]` using node ids.
std::string format_edge_csv(const SpatialGraph& g);

/// Per-column z-score over all n rows with the population standard deviation.
Dataset standardize(Dataset data);
/// Same transformation applied to a bare matrix; names label error messages.
Matrix standardize_columns(const Matrix& x, std::span<const std::string> names = {});

std::vector<double> vote_share(std::span<const double> dem, std::span<const double> rep);

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

/// Shuffles the labelled nodes; validation and test get floor(ratio·m) nodes
/// and train takes the rest.
Dataset split(Dataset data, const SplitRatios& ratios, Prng& rng);
/// Sizes (train, validation, test) produced by `split` for m labelled nodes.
std::array<std::size_t, 3> split_sizes(std::size_t m, const SplitRatios& ratios);

/// Applies a `node_id,split` table (split ∈ train/val/test).
Dataset apply_split_table(Dataset data, const CsvTable& table);

/// k×k grid with rook contiguity; node index = row·k + col.
SpatialGraph grid_graph(std::size_t k);

struct SynthOptions {
  std::size_t grid = 20;
  std::size_t regions = 3;
  double noise_sd = 0.05;
  double gamma = 0.3;
  std::size_t features = 4;
  std::uint64_t seed = 0;
};

struct SyntheticTruth {
  Dataset dataset;
  SpatialGraph graph;
  Allocation allocation;
  /// p×c₀ regional coefficient vectors.
  Matrix coefficients;
  double noise_sd = 0.0;
};

/// Regime data on a grid: y = sigmoid(β_r·x + γ·mean_nbr(β_r'·x')) + noise,
/// clipped to [0, 1], with regions grown from random seeds.
SyntheticTruth synth_generate(const SynthOptions& options);

}  // namespace rgcn
