#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "graph.hpp"
#include "numerics.hpp"
#include "regions.hpp"

namespace rgcn {

/// gcn: generalized convolution with separate neighbourhood (Θ) and self (Φ)
/// weights. gwgcn: the same on inputs scaled by per-node weights. regiongcn:
/// output of the generalized convolution scaled and shifted per region.
/// ann: self path only. basic_gcn: renormalized-Laplacian propagation.
enum class Variant { Gcn, Gwgcn, RegionGcn, Ann, BasicGcn };

std::string_view to_string(Variant v) noexcept;
Variant variant_from_string(std::string_view name);

struct NetworkConfig {
  Variant variant = Variant::Gcn;
  /// c₀, c₁, …, c_L.
  std::vector<std::size_t> dims;
  Activation hidden = Activation::Relu;
  Activation output = Activation::Sigmoid;
  /// Region count p (regiongcn only).
  std::size_t regions = 1;

  std::size_t layer_count() const noexcept { return dims.empty() ? 0 : dims.size() - 1; }
  void validate() const;
};

/// L layers of width 4·c₀ (at least 1).
NetworkConfig default_network(Variant variant, std::size_t input_dim, std::size_t regions = 1,
                              std::size_t layers = 2);

struct LayerParams {
  Matrix theta;  // c_{l-1} × c_l
  Matrix phi;    // c_{l-1} × c_l
  Matrix psi;    // 1 × c_l

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct RegionLayerParams {
  Matrix omega;  // p × c_l
  Matrix psi;    // p × c_l

  friend bool operator==(const RegionLayerParams&, const RegionLayerParams&) = default;
};

struct LocalWeights {
  Matrix omega;  // n × c_{l-1}

  friend bool operator==(const LocalWeights&, const LocalWeights&) = default;
};

struct OutputHead {
  Matrix u;  // c_L × 1
  Matrix b;  // 1 × 1

  friend bool operator==(const OutputHead&, const OutputHead&) = default;
};

struct ModelParams {
  std::vector<LayerParams> layers;
  std::vector<RegionLayerParams> regional;
  std::vector<LocalWeights> local;
  OutputHead head;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TensorRef {
  std::string name;
  Matrix* value;
};

/// The tensors the variant trains, in a fixed order.
std::vector<TensorRef> trainable_tensors(ModelParams& params, Variant variant);
ModelParams zeros_like(const ModelParams& params);

/// Glorot-uniform Θ, Φ and u; zero biases; ω = 1, region ψ = 0, Ω_loc = 1.
ModelParams init_params(const NetworkConfig& config, std::size_t node_count, Prng& rng);

/// Graph operator consumed by the neighbourhood term: D⁻¹A, or the
/// renormalized Laplacian for basic_gcn; empty for ann.
struct ModelContext {
  Variant variant = Variant::Gcn;
  const SpatialGraph* graph = nullptr;
  SparseMatrix propagation;
  SparseMatrix propagation_t;

  static ModelContext build(Variant variant, const SpatialGraph& g);
};

// Single-layer operators.
Matrix gconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                     Activation sigma);
Matrix basic_gconv_forward(const Matrix& x, const SparseMatrix& laplacian, const Matrix& theta,
                           const Matrix& psi, Activation sigma);
Matrix gwconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                      const LocalWeights& local, Activation sigma);
Matrix regconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                       const RegionLayerParams& regions, const Allocation& alloc,
                       Activation sigma);

/// Intermediates kept for the backward pass.
struct LayerTrace {
  Matrix input;       // X^(l-1)
  Matrix scaled;      // X^(l-1) ⊙ Ω_loc (gwgcn), else X^(l-1)
  Matrix aggregated;  // propagation · scaled
  Matrix linear;      // aggregated·Θ + scaled·Φ
  Matrix pre_activation;
  Matrix output;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Matrix head_pre;     // n × 1
  Matrix predictions;  // n × 1
};

ForwardTrace forward_trace(const ModelParams& params, const NetworkConfig& config,
                           const ModelContext& ctx, const Matrix& x,
                           const Allocation* alloc = nullptr);
std::vector<double> forward(const ModelParams& params, const NetworkConfig& config,
                            const ModelContext& ctx, const Matrix& x,
                            const Allocation* alloc = nullptr);

double mse_on(std::span<const double> predictions, std::span<const double> target,
              std::span<const std::size_t> nodes);

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean squared error over `train_nodes` and its exact gradient with respect
/// to every parameter tensor (untrained tensors get zero gradients).
LossAndGrads loss_and_grads(const ModelParams& params, const NetworkConfig& config,
                            const ModelContext& ctx, const Matrix& x,
                            std::span<const double> target,
                            std::span<const std::size_t> train_nodes,
                            const Allocation* alloc = nullptr);

/// Training loss of tentative region moves, recomputing only the L-hop
/// neighbourhood of the moved nodes. Parameters are frozen for its lifetime.
class LocalizedLoss final : public MoveEvaluator {
 public:
  LocalizedLoss(const ModelParams& params, const NetworkConfig& config, const ModelContext& ctx,
                const Matrix& x, std::span<const double> target,
                std::span<const std::size_t> train_nodes, Allocation alloc);

  double loss() const override { return sum_sq_ / static_cast<double>(train_count_); }
  double loss_if_moved(std::span<const std::size_t> nodes, std::size_t region) override;
  void apply(std::span<const std::size_t> nodes, std::size_t region) override;

  const Allocation& allocation() const noexcept { return alloc_; }

 private:
  struct Overlay {
    std::vector<std::size_t> nodes;
    Matrix linear;
    Matrix output;
  };

  /// Propagates a relabelling; returns the summed change in squared error and
  /// leaves per-layer overlays and new predictions in the scratch buffers.
  double propagate(std::span<const std::size_t> nodes, std::size_t region);
  std::size_t label_after(std::size_t node, std::size_t region) const noexcept {
    return moved_[node] ? region : alloc_[node];
  }

  const ModelParams& params_;
  const NetworkConfig& config_;
  const ModelContext& ctx_;
  const Matrix& x_;
  std::span<const double> target_;
  Allocation alloc_;
  std::vector<char> is_train_;
  std::size_t train_count_ = 0;

  std::vector<Matrix> linear_;   // cached S per layer
  std::vector<Matrix> outputs_;  // cached X^(l) per layer
  std::vector<double> predictions_;
  std::vector<double> sq_err_;
  double sum_sq_ = 0.0;

  std::vector<char> moved_;
  std::vector<Overlay> overlays_;
  std::vector<double> new_predictions_;
  std::vector<std::vector<long>> slots_;
  std::vector<char> mark_;
  std::vector<double> scratch_in_;
  std::vector<double> scratch_self_;
};

/// Early stopping on validation error: stop once the error has been strictly
/// above the historical minimum for `patience` consecutive epochs. Epochs equal
/// to the minimum neither reset nor advance the counter.
class EarlyStopping {
 public:
  struct Decision {
    bool improved = false;
    bool stop = false;
  };

  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  Decision observe(double validation_error);
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t above_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

template <typename State>
struct EarlyStopOutcome {
  State best;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double best_validation = 0.0;
};

/// Runs `epoch(state, e)` for e = 1…max_epochs; it advances the state and
/// returns the validation error. The state at the historical minimum is
/// returned.
template <typename State>
EarlyStopOutcome<State> run_early_stopping(
    State state, std::size_t max_epochs, std::size_t patience,
    const std::function<double(State&, std::size_t)>& epoch) {
  EarlyStopping stopper(patience);
  EarlyStopOutcome<State> out{state, 0, 0, 0.0};
  for (std::size_t e = 1; e <= max_epochs; ++e) {
    const double val = epoch(state, e);
    out.epochs_run = e;
    const auto decision = stopper.observe(val);
    if (decision.improved) {
      out.best = state;
      out.best_epoch = e;
      out.best_validation = val;
    }
    if (decision.stop) break;
  }
  return out;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2 = 0.0;
  std::size_t max_epochs = 1000;
  /// Early-stopping tolerance T.
  std::size_t patience = 100;
  /// Region optimization interval T₀ (stage two only).
  std::size_t region_interval = 10;
};

enum class RegionInit { Grow, KMeans, Fixed };

std::string_view to_string(RegionInit init) noexcept;
RegionInit region_init_from_string(std::string_view name);

struct RegionOptions {
  RegionInit init = RegionInit::Grow;
  /// Run the zoning procedure during stage two.
  bool adaptive = true;
  bool contiguous = false;
  std::optional<Allocation> fixed;
};

struct TrainSpec {
  NetworkConfig network;
  /// Single-stage variants use stage1 only.
  TrainConfig stage1;
  TrainConfig stage2;
  RegionOptions regions;
};

struct EpochRecord {
  int stage = 1;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  std::size_t zoning_moves = 0;
};

struct TrainResult {
  NetworkConfig network;
  ModelParams params;
  std::optional<Allocation> initial_allocation;
  std::optional<Allocation> allocation;
  std::vector<EpochRecord> log;
  std::size_t stage1_best_epoch = 0;
  std::size_t stage2_best_epoch = 0;
  std::size_t zoning_moves = 0;
};

/// Stage-one parameters turned into an equivalent regiongcn model: Θ and Φ
/// copied, every ω_j = 1 and every ψ_j equal to the stage-one bias.
ModelParams transfer_to_regional(const ModelParams& stage1, std::size_t regions);

/// Full-batch Adam with early stopping. regiongcn trains a gcn first, transfers
/// its parameters, then trains the regional model while periodically
/// reallocating nodes with the parameters frozen.
TrainResult train(const Dataset& data, const SpatialGraph& g, const TrainSpec& spec, Prng& rng);

}  // namespace rgcn
