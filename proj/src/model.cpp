#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace rgcn {

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::Gcn:
      return "gcn";
    case Variant::Gwgcn:
      return "gwgcn";
    case Variant::RegionGcn:
      return "regiongcn";
    case Variant::Ann:
      return "ann";
    case Variant::BasicGcn:
      return "basic_gcn";
  }
  return "gcn";
}

Variant variant_from_string(std::string_view name) {
  if (name == "gcn") return Variant::Gcn;
  if (name == "gwgcn") return Variant::Gwgcn;
  if (name == "regiongcn") return Variant::RegionGcn;
  if (name == "ann") return Variant::Ann;
  if (name == "basic_gcn") return Variant::BasicGcn;
  throw invalid_argument("unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(RegionInit init) noexcept {
  switch (init) {
    case RegionInit::Grow:
      return "grow";
    case RegionInit::KMeans:
      return "kmeans";
    case RegionInit::Fixed:
      return "fixed";
  }
  return "grow";
}

RegionInit region_init_from_string(std::string_view name) {
  if (name == "grow") return RegionInit::Grow;
  if (name == "kmeans") return RegionInit::KMeans;
  if (name == "fixed" || name == "fixed-file") return RegionInit::Fixed;
  throw invalid_argument("unknown region init '" + std::string(name) + "'");
}

void NetworkConfig::validate() const {
  if (dims.size() < 2) throw invalid_argument("network needs at least one layer");
  for (std::size_t d : dims)
    if (d == 0) throw invalid_argument("layer widths must be at least 1");
  if (regions == 0) throw invalid_argument("region count must be at least 1");
}

NetworkConfig default_network(Variant variant, std::size_t input_dim, std::size_t regions,
                              std::size_t layers) {
  NetworkConfig c;
  c.variant = variant;
  c.regions = regions;
  c.dims.push_back(input_dim);
  for (std::size_t l = 0; l < layers; ++l) c.dims.push_back(std::max<std::size_t>(1, 4 * input_dim));
  return c;
}

namespace {

bool uses_theta(Variant v) noexcept { return v != Variant::Ann; }
bool uses_phi(Variant v) noexcept { return v != Variant::BasicGcn; }
bool uses_global_bias(Variant v) noexcept { return v != Variant::RegionGcn; }

}  // namespace

std::vector<TensorRef> trainable_tensors(ModelParams& params, Variant variant) {
  std::vector<TensorRef> out;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    if (uses_theta(variant)) out.push_back({prefix + "theta", &params.layers[l].theta});
    if (uses_phi(variant)) out.push_back({prefix + "phi", &params.layers[l].phi});
    if (uses_global_bias(variant)) out.push_back({prefix + "psi", &params.layers[l].psi});
    if (variant == Variant::RegionGcn) {
      out.push_back({prefix + "region_omega", &params.regional[l].omega});
      out.push_back({prefix + "region_psi", &params.regional[l].psi});
    }
    if (variant == Variant::Gwgcn) out.push_back({prefix + "local_omega", &params.local[l].omega});
  }
  out.push_back({"head.u", &params.head.u});
  out.push_back({"head.b", &params.head.b});
  return out;
}

ModelParams zeros_like(const ModelParams& params) {
  auto zero = [](const Matrix& m) { return Matrix(m.rows(), m.cols()); };
  ModelParams z;
  for (const auto& l : params.layers) z.layers.push_back({zero(l.theta), zero(l.phi), zero(l.psi)});
  for (const auto& r : params.regional) z.regional.push_back({zero(r.omega), zero(r.psi)});
  for (const auto& w : params.local) z.local.push_back({zero(w.omega)});
  z.head = {zero(params.head.u), zero(params.head.b)};
  return z;
}

ModelParams init_params(const NetworkConfig& config, std::size_t node_count, Prng& rng) {
  config.validate();
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (double& v : m.values()) v = rng.uniform(-s, s);
    return m;
  };
  ModelParams p;
  const Variant v = config.variant;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const std::size_t in = config.dims[l];
    const std::size_t out = config.dims[l + 1];
    LayerParams layer;
    layer.theta = uses_theta(v) ? glorot(in, out) : Matrix(in, out);
    layer.phi = uses_phi(v) ? glorot(in, out) : Matrix(in, out);
    layer.psi = Matrix(1, out);
    p.layers.push_back(std::move(layer));
    if (v == Variant::RegionGcn) {
      p.regional.push_back({Matrix(config.regions, out, 1.0), Matrix(config.regions, out)});
    }
    if (v == Variant::Gwgcn) p.local.push_back({Matrix(node_count, in, 1.0)});
  }
  p.head.u = glorot(config.dims.back(), 1);
  p.head.b = Matrix(1, 1);
  return p;
}

ModelContext ModelContext::build(Variant variant, const SpatialGraph& g) {
  ModelContext ctx;
  ctx.variant = variant;
  ctx.graph = &g;
  if (variant == Variant::BasicGcn) {
    ctx.propagation = renormalized_laplacian(g);
  } else if (variant != Variant::Ann) {
    ctx.propagation = row_normalize(g);
  }
  if (variant != Variant::Ann) ctx.propagation_t = ctx.propagation.transposed();
  return ctx;
}

namespace {

struct LayerInputs {
  const LayerParams* layer = nullptr;
  const RegionLayerParams* regional = nullptr;
  const LocalWeights* local = nullptr;
  const Allocation* alloc = nullptr;
};

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw dimension_mismatch(std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                             "x" + std::to_string(cols));
  }
}

LayerTrace layer_forward(Variant v, const Matrix& x, const SparseMatrix* op,
                         const LayerInputs& in, Activation sigma) {
  const LayerParams& layer = *in.layer;
  const std::size_t n = x.rows();
  const std::size_t c_in = x.cols();
  const std::size_t c_out = uses_theta(v) ? layer.theta.cols() : layer.phi.cols();
  if (uses_theta(v)) check_shape(layer.theta, c_in, c_out, "theta");
  if (uses_phi(v)) check_shape(layer.phi, c_in, c_out, "phi");
  if (uses_theta(v) && (!op || op->n() != n)) {
    throw dimension_mismatch("graph operator does not match the node count");
  }

  LayerTrace t;
  t.input = x;
  if (v == Variant::Gwgcn) {
    check_shape(in.local->omega, n, c_in, "local weights");
    t.scaled = hadamard(x, in.local->omega);
  } else {
    t.scaled = x;
  }
  if (uses_theta(v)) {
    t.aggregated = spmm(*op, t.scaled);
    t.linear = matmul(t.aggregated, layer.theta);
  } else {
    t.linear = Matrix(n, c_out);
  }
  if (uses_phi(v)) {
    const Matrix self = matmul(t.scaled, layer.phi);
    for (std::size_t i = 0; i < t.linear.size(); ++i) t.linear.values()[i] += self.values()[i];
  }

  t.pre_activation = t.linear;
  if (v == Variant::RegionGcn) {
    const RegionLayerParams& reg = *in.regional;
    const Allocation& alloc = *in.alloc;
    if (alloc.size() != n) throw dimension_mismatch("allocation size differs from node count");
    check_shape(reg.omega, alloc.regions, c_out, "region omega");
    check_shape(reg.psi, alloc.regions, c_out, "region psi");
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = alloc[i];
      if (r >= alloc.regions) throw invalid_argument("region label out of range");
      auto row = t.pre_activation.row(i);
      const auto w = reg.omega.row(r);
      const auto b = reg.psi.row(r);
      for (std::size_t c = 0; c < c_out; ++c) row[c] = row[c] * w[c] + b[c];
    }
  } else {
    check_shape(layer.psi, 1, c_out, "psi");
    const auto b = layer.psi.row(0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = t.pre_activation.row(i);
      for (std::size_t c = 0; c < c_out; ++c) row[c] += b[c];
    }
  }
  t.output = activation(t.pre_activation, sigma);
  return t;
}

}  // namespace

Matrix gconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                     Activation sigma) {
  return layer_forward(Variant::Gcn, x, &dinva, {&layer}, sigma).output;
}

Matrix basic_gconv_forward(const Matrix& x, const SparseMatrix& laplacian, const Matrix& theta,
                           const Matrix& psi, Activation sigma) {
  LayerParams layer{theta, Matrix(theta.rows(), theta.cols()), psi};
  return layer_forward(Variant::BasicGcn, x, &laplacian, {&layer}, sigma).output;
}

Matrix gwconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                      const LocalWeights& local, Activation sigma) {
  LayerInputs in{&layer};
  in.local = &local;
  return layer_forward(Variant::Gwgcn, x, &dinva, in, sigma).output;
}

Matrix regconv_forward(const Matrix& x, const SparseMatrix& dinva, const LayerParams& layer,
                       const RegionLayerParams& regions, const Allocation& alloc,
                       Activation sigma) {
  LayerInputs in{&layer};
  in.regional = &regions;
  in.alloc = &alloc;
  return layer_forward(Variant::RegionGcn, x, &dinva, in, sigma).output;
}

ForwardTrace forward_trace(const ModelParams& params, const NetworkConfig& config,
                           const ModelContext& ctx, const Matrix& x, const Allocation* alloc) {
  config.validate();
  const Variant v = config.variant;
  if (x.cols() != config.dims.front()) {
    throw dimension_mismatch("feature matrix has " + std::to_string(x.cols()) +
                             " columns, network expects " + std::to_string(config.dims.front()));
  }
  if (params.layers.size() != config.layer_count()) {
    throw dimension_mismatch("parameter layer count differs from the network config");
  }
  if (v == Variant::RegionGcn && !alloc) throw invalid_argument("regiongcn needs an allocation");
  if (v == Variant::RegionGcn && params.regional.size() != config.layer_count()) {
    throw dimension_mismatch("missing region parameters");
  }
  if (v == Variant::Gwgcn && params.local.size() != config.layer_count()) {
    throw dimension_mismatch("missing local weights");
  }

  ForwardTrace trace;
  const Matrix* current = &x;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    LayerInputs in{&params.layers[l]};
    if (v == Variant::RegionGcn) {
      in.regional = &params.regional[l];
      in.alloc = alloc;
    }
    if (v == Variant::Gwgcn) in.local = &params.local[l];
    trace.layers.push_back(layer_forward(v, *current, &ctx.propagation, in, config.hidden));
    current = &trace.layers.back().output;
  }
  check_shape(params.head.u, config.dims.back(), 1, "head weights");
  trace.head_pre = matmul(*current, params.head.u);
  for (double& q : trace.head_pre.values()) q += params.head.b(0, 0);
  trace.predictions = activation(trace.head_pre, config.output);
  return trace;
}

std::vector<double> forward(const ModelParams& params, const NetworkConfig& config,
                            const ModelContext& ctx, const Matrix& x, const Allocation* alloc) {
  return forward_trace(params, config, ctx, x, alloc).predictions.values();
}

double mse_on(std::span<const double> predictions, std::span<const double> target,
              std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw invalid_argument("loss needs at least one node");
  double s = 0.0;
  for (std::size_t i : nodes) {
    const double d = predictions[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(nodes.size());
}

LossAndGrads loss_and_grads(const ModelParams& params, const NetworkConfig& config,
                            const ModelContext& ctx, const Matrix& x,
                            std::span<const double> target,
                            std::span<const std::size_t> train_nodes, const Allocation* alloc) {
  if (train_nodes.empty()) throw invalid_argument("training mask selects no labelled node");
  if (target.size() != x.rows()) throw dimension_mismatch("target length differs from node count");
  const Variant v = config.variant;
  const ForwardTrace trace = forward_trace(params, config, ctx, x, alloc);
  const std::size_t n = x.rows();
  const double m = static_cast<double>(train_nodes.size());

  LossAndGrads out;
  const auto& pred = trace.predictions.values();
  out.loss = mse_on(pred, target, train_nodes);
  out.grads = zeros_like(params);
  ModelParams& g = out.grads;

  Matrix dq(n, 1);
  for (std::size_t i : train_nodes) {
    dq(i, 0) += 2.0 * (pred[i] - target[i]) / m *
                activate_grad(trace.head_pre(i, 0), config.output);
  }
  g.head.u = matmul_at_b(trace.layers.back().output, dq);
  for (double d : dq.values()) g.head.b(0, 0) += d;
  Matrix d_out = matmul_a_bt(dq, params.head.u);

  for (std::size_t l = config.layer_count(); l-- > 0;) {
    const LayerTrace& t = trace.layers[l];
    const LayerParams& layer = params.layers[l];
    Matrix d_pre = d_out;
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      d_pre.values()[i] *= activate_grad(t.pre_activation.values()[i], config.hidden);

    Matrix d_linear;
    if (v == Variant::RegionGcn) {
      const RegionLayerParams& reg = params.regional[l];
      RegionLayerParams& greg = g.regional[l];
      d_linear = Matrix(d_pre.rows(), d_pre.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = (*alloc)[i];
        const auto dp = d_pre.row(i);
        const auto s = t.linear.row(i);
        const auto w = reg.omega.row(r);
        auto gw = greg.omega.row(r);
        auto gb = greg.psi.row(r);
        auto ds = d_linear.row(i);
        for (std::size_t c = 0; c < dp.size(); ++c) {
          gw[c] += dp[c] * s[c];
          gb[c] += dp[c];
          ds[c] = dp[c] * w[c];
        }
      }
    } else {
      g.layers[l].psi = column_sums(d_pre);
      d_linear = std::move(d_pre);
    }

    const bool need_input_grad = l > 0 || v == Variant::Gwgcn;
    Matrix d_scaled(n, t.scaled.cols());
    if (uses_theta(v)) {
      g.layers[l].theta = matmul_at_b(t.aggregated, d_linear);
      if (need_input_grad) d_scaled = spmm(ctx.propagation_t, matmul_a_bt(d_linear, layer.theta));
    }
    if (uses_phi(v)) {
      g.layers[l].phi = matmul_at_b(t.scaled, d_linear);
      if (need_input_grad) {
        const Matrix self = matmul_a_bt(d_linear, layer.phi);
        for (std::size_t i = 0; i < self.size(); ++i) d_scaled.values()[i] += self.values()[i];
      }
    }
    if (!need_input_grad) break;
    if (v == Variant::Gwgcn) {
      g.local[l].omega = hadamard(d_scaled, t.input);
      if (l == 0) break;
      d_out = hadamard(d_scaled, params.local[l].omega);
    } else {
      d_out = std::move(d_scaled);
    }
  }
  return out;
}

LocalizedLoss::LocalizedLoss(const ModelParams& params, const NetworkConfig& config,
                             const ModelContext& ctx, const Matrix& x,
                             std::span<const double> target,
                             std::span<const std::size_t> train_nodes, Allocation alloc)
    : params_(params), config_(config), ctx_(ctx), x_(x), target_(target),
      alloc_(std::move(alloc)) {
  if (config.variant != Variant::RegionGcn) {
    throw invalid_argument("localized loss evaluation applies to regiongcn only");
  }
  if (train_nodes.empty()) throw invalid_argument("training mask selects no labelled node");
  if (ctx.graph == nullptr) throw invalid_argument("model context has no graph");
  const std::size_t n = x.rows();
  const ForwardTrace trace = forward_trace(params, config, ctx, x, &alloc_);
  for (auto& t : trace.layers) {
    linear_.push_back(t.linear);
    outputs_.push_back(t.output);
  }
  predictions_ = trace.predictions.values();
  is_train_.assign(n, 0);
  sq_err_.assign(n, 0.0);
  for (std::size_t i : train_nodes) {
    is_train_[i] = 1;
    const double d = predictions_[i] - target_[i];
    sq_err_[i] = d * d;
    sum_sq_ += d * d;
  }
  train_count_ = train_nodes.size();
  moved_.assign(n, 0);
  mark_.assign(n, 0);
  overlays_.resize(config.layer_count());
  slots_.assign(config.layer_count(), std::vector<long>(n, -1));
}

double LocalizedLoss::propagate(std::span<const std::size_t> nodes, std::size_t region) {
  const SpatialGraph& g = *ctx_.graph;
  const SparseMatrix& op = ctx_.propagation;
  const std::size_t layers = config_.layer_count();
  for (std::size_t v : nodes) moved_[v] = 1;

  std::vector<std::size_t> changed;
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerParams& layer = params_.layers[l];
    const RegionLayerParams& reg = params_.regional[l];
    const std::size_t c_in = config_.dims[l];
    const std::size_t c_out = config_.dims[l + 1];

    // rows whose linear term changes: changed inputs and their neighbours
    std::vector<std::size_t> relinear;
    for (std::size_t v : changed) {
      relinear.push_back(v);
      for (std::size_t u : g.neighbors(v)) relinear.push_back(u);
    }
    std::sort(relinear.begin(), relinear.end());
    relinear.erase(std::unique(relinear.begin(), relinear.end()), relinear.end());
    for (std::size_t v : relinear) mark_[v] = 1;

    Overlay& ov = overlays_[l];
    ov.nodes = relinear;
    ov.nodes.insert(ov.nodes.end(), nodes.begin(), nodes.end());
    std::sort(ov.nodes.begin(), ov.nodes.end());
    ov.nodes.erase(std::unique(ov.nodes.begin(), ov.nodes.end()), ov.nodes.end());
    ov.linear = Matrix(ov.nodes.size(), c_out);
    ov.output = Matrix(ov.nodes.size(), c_out);
    for (std::size_t k = 0; k < ov.nodes.size(); ++k) slots_[l][ov.nodes[k]] = static_cast<long>(k);

    auto input_row = [&](std::size_t node) -> std::span<const double> {
      if (l == 0) return x_.row(node);
      const long slot = slots_[l - 1][node];
      if (slot >= 0) return overlays_[l - 1].output.row(static_cast<std::size_t>(slot));
      return outputs_[l - 1].row(node);
    };

    scratch_in_.assign(c_in, 0.0);
    scratch_self_.assign(c_out, 0.0);
    for (std::size_t k = 0; k < ov.nodes.size(); ++k) {
      const std::size_t node = ov.nodes[k];
      auto s = ov.linear.row(k);
      if (mark_[node]) {
        // same operation order as spmm + matmul in the full forward pass
        std::fill(scratch_in_.begin(), scratch_in_.end(), 0.0);
        const auto cols = op.row_columns(node);
        const auto vals = op.row_values(node);
        for (std::size_t e = 0; e < cols.size(); ++e) {
          const auto src = input_row(cols[e]);
          for (std::size_t c = 0; c < c_in; ++c) scratch_in_[c] += vals[e] * src[c];
        }
        for (std::size_t a = 0; a < c_in; ++a) {
          const double coef = scratch_in_[a];
          if (coef == 0.0) continue;
          const auto w = layer.theta.row(a);
          for (std::size_t c = 0; c < c_out; ++c) s[c] += coef * w[c];
        }
        std::fill(scratch_self_.begin(), scratch_self_.end(), 0.0);
        const auto self = input_row(node);
        for (std::size_t a = 0; a < c_in; ++a) {
          const double coef = self[a];
          if (coef == 0.0) continue;
          const auto w = layer.phi.row(a);
          for (std::size_t c = 0; c < c_out; ++c) scratch_self_[c] += coef * w[c];
        }
        for (std::size_t c = 0; c < c_out; ++c) s[c] += scratch_self_[c];
      } else {
        const auto cached = linear_[l].row(node);
        std::copy(cached.begin(), cached.end(), s.begin());
      }
      const std::size_t r = label_after(node, region);
      const auto w = reg.omega.row(r);
      const auto b = reg.psi.row(r);
      auto out = ov.output.row(k);
      for (std::size_t c = 0; c < c_out; ++c) out[c] = activate(s[c] * w[c] + b[c], config_.hidden);
    }
    for (std::size_t v : relinear) mark_[v] = 0;
    if (l > 0)
      for (std::size_t v : overlays_[l - 1].nodes) slots_[l - 1][v] = -1;
    changed = ov.nodes;
  }
  for (std::size_t v : overlays_[layers - 1].nodes) slots_[layers - 1][v] = -1;

  const Overlay& last = overlays_[layers - 1];
  const auto u = params_.head.u.values();
  const double b = params_.head.b(0, 0);
  new_predictions_.assign(last.nodes.size(), 0.0);
  double delta = 0.0;
  for (std::size_t k = 0; k < last.nodes.size(); ++k) {
    const std::size_t node = last.nodes[k];
    double q = 0.0;
    const auto h = last.output.row(k);
    for (std::size_t c = 0; c < h.size(); ++c) {
      if (h[c] == 0.0) continue;
      q += h[c] * u[c];
    }
    q += b;
    const double y = activate(q, config_.output);
    new_predictions_[k] = y;
    if (is_train_[node]) {
      const double d = y - target_[node];
      delta += d * d - sq_err_[node];
    }
  }
  for (std::size_t v : nodes) moved_[v] = 0;
  return delta;
}

double LocalizedLoss::loss_if_moved(std::span<const std::size_t> nodes, std::size_t region) {
  if (region >= alloc_.regions) throw invalid_argument("candidate region out of range");
  const bool noop = std::all_of(nodes.begin(), nodes.end(),
                                [&](std::size_t v) { return alloc_[v] == region; });
  if (noop || nodes.empty()) return loss();
  const double delta = propagate(nodes, region);
  return (sum_sq_ + delta) / static_cast<double>(train_count_);
}

void LocalizedLoss::apply(std::span<const std::size_t> nodes, std::size_t region) {
  if (region >= alloc_.regions) throw invalid_argument("target region out of range");
  if (nodes.empty()) return;
  const double delta = propagate(nodes, region);
  for (std::size_t l = 0; l < overlays_.size(); ++l) {
    const Overlay& ov = overlays_[l];
    for (std::size_t k = 0; k < ov.nodes.size(); ++k) {
      const auto lin = ov.linear.row(k);
      const auto out = ov.output.row(k);
      std::copy(lin.begin(), lin.end(), linear_[l].row(ov.nodes[k]).begin());
      std::copy(out.begin(), out.end(), outputs_[l].row(ov.nodes[k]).begin());
    }
  }
  const Overlay& last = overlays_.back();
  for (std::size_t k = 0; k < last.nodes.size(); ++k) {
    const std::size_t node = last.nodes[k];
    predictions_[node] = new_predictions_[k];
    if (is_train_[node]) {
      const double d = new_predictions_[k] - target_[node];
      sq_err_[node] = d * d;
    }
  }
  sum_sq_ += delta;
  for (std::size_t v : nodes) alloc_.labels[v] = region;
}

EarlyStopping::Decision EarlyStopping::observe(double validation_error) {
  ++epochs_;
  if (epochs_ == 1 || validation_error < best_) {
    best_ = validation_error;
    best_epoch_ = epochs_;
    above_ = 0;
    return {true, false};
  }
  if (validation_error > best_) ++above_;
  return {false, above_ >= patience_};
}

ModelParams transfer_to_regional(const ModelParams& stage1, std::size_t regions) {
  ModelParams p;
  p.layers = stage1.layers;
  for (const auto& layer : stage1.layers) {
    RegionLayerParams reg{Matrix(regions, layer.psi.cols(), 1.0), Matrix(regions, layer.psi.cols())};
    for (std::size_t j = 0; j < regions; ++j)
      std::copy(layer.psi.row(0).begin(), layer.psi.row(0).end(), reg.psi.row(j).begin());
    p.regional.push_back(std::move(reg));
  }
  p.head = stage1.head;
  return p;
}

namespace {

struct StageState {
  ModelParams params;
  std::optional<Allocation> alloc;
};

struct StageInputs {
  const NetworkConfig* network = nullptr;
  const ModelContext* ctx = nullptr;
  const SpatialGraph* graph = nullptr;
  const Matrix* x = nullptr;
  std::span<const double> target;
  std::span<const std::size_t> train_nodes;
  std::span<const std::size_t> val_nodes;
  const TrainConfig* config = nullptr;
  bool zoning = false;
  ZoningOptions zoning_options;
  int stage = 1;
};

EarlyStopOutcome<StageState> run_stage(StageState state, const StageInputs& in,
                                       std::vector<EpochRecord>& log, std::size_t& moves) {
  const TrainConfig& tc = *in.config;
  if (tc.patience == 0) throw invalid_argument("early-stopping tolerance must be at least 1");
  if (in.zoning && tc.region_interval == 0) {
    throw invalid_argument("region optimization interval must be at least 1");
  }
  const Variant v = in.network->variant;
  std::vector<AdamState> adam;
  for (const auto& t : trainable_tensors(state.params, v)) adam.emplace_back(t.value->size());

  std::function<double(StageState&, std::size_t)> epoch = [&](StageState& s, std::size_t e) {
    const Allocation* alloc = s.alloc ? &*s.alloc : nullptr;
    LossAndGrads lg = loss_and_grads(s.params, *in.network, *in.ctx, *in.x, in.target,
                                     in.train_nodes, alloc);
    if (!std::isfinite(lg.loss)) {
      throw numeric_error("training diverged in stage " + std::to_string(in.stage) +
                          " at epoch " + std::to_string(e) + " (non-finite loss)");
    }
    auto tensors = trainable_tensors(s.params, v);
    auto grads = trainable_tensors(lg.grads, v);
    for (std::size_t k = 0; k < tensors.size(); ++k)
      adam_step(*tensors[k].value, *grads[k].value, adam[k], tc.learning_rate, tc.l2);

    std::size_t epoch_moves = 0;
    if (in.zoning && e % tc.region_interval == 0) {
      LocalizedLoss evaluator(s.params, *in.network, *in.ctx, *in.x, in.target, in.train_nodes,
                              *s.alloc);
      ZoningStats stats;
      s.alloc = optimize_allocation(evaluator, *in.graph, *s.alloc, in.zoning_options, &stats);
      epoch_moves = stats.moves;
      moves += stats.moves;
    }
    const Allocation* after = s.alloc ? &*s.alloc : nullptr;
    const auto pred = forward(s.params, *in.network, *in.ctx, *in.x, after);
    const double val = mse_on(pred, in.target, in.val_nodes);
    if (!std::isfinite(val)) {
      throw numeric_error("training diverged in stage " + std::to_string(in.stage) +
                          " at epoch " + std::to_string(e) + " (non-finite validation loss)");
    }
    log.push_back({in.stage, e, lg.loss, val, epoch_moves});
    return val;
  };
  return run_early_stopping<StageState>(std::move(state), tc.max_epochs, tc.patience, epoch);
}

}  // namespace

TrainResult train(const Dataset& data, const SpatialGraph& g, const TrainSpec& spec, Prng& rng) {
  spec.network.validate();
  if (spec.network.dims.front() != data.features.cols()) {
    throw dimension_mismatch("network input width " + std::to_string(spec.network.dims.front()) +
                             " differs from feature count " +
                             std::to_string(data.features.cols()));
  }
  const auto train_nodes = data.nodes_with(Role::Train);
  const auto val_nodes = data.nodes_with(Role::Validation);
  if (train_nodes.empty()) throw invalid_argument("dataset has no training nodes");
  if (val_nodes.empty()) throw invalid_argument("dataset has no validation nodes");
  const std::vector<double> target = data.dense_target();
  const std::size_t n = data.size();
  Prng init_rng = rng.substream("init");

  TrainResult result;
  result.network = spec.network;
  const Variant v = spec.network.variant;

  NetworkConfig first = spec.network;
  if (v == Variant::RegionGcn) first.variant = Variant::Gcn;
  const ModelContext ctx = ModelContext::build(first.variant, g);

  StageInputs in{};
  in.network = &first;
  in.ctx = &ctx;
  in.graph = &g;
  in.x = &data.features;
  in.target = target;
  in.train_nodes = train_nodes;
  in.val_nodes = val_nodes;
  in.config = &spec.stage1;
  auto stage1 = run_stage({init_params(first, n, init_rng), std::nullopt}, in, result.log,
                          result.zoning_moves);
  result.stage1_best_epoch = stage1.best_epoch;
  if (v != Variant::RegionGcn) {
    result.params = std::move(stage1.best.params);
    return result;
  }

  const std::size_t p = spec.network.regions;
  Allocation alloc;
  switch (spec.regions.init) {
    case RegionInit::Grow: {
      Prng region_rng = rng.substream("regions");
      alloc = grow_regions(g, p, region_rng);
      break;
    }
    case RegionInit::KMeans: {
      Prng region_rng = rng.substream("regions");
      alloc = kmeans_allocate(data.features, p, region_rng);
      break;
    }
    case RegionInit::Fixed:
      if (!spec.regions.fixed) throw invalid_argument("fixed region init needs an allocation");
      alloc = *spec.regions.fixed;
      if (alloc.size() != n || alloc.regions != p) {
        throw invalid_argument("fixed allocation does not match node count and region count");
      }
      break;
  }
  result.initial_allocation = alloc;

  StageInputs in2 = in;
  in2.network = &spec.network;
  in2.config = &spec.stage2;
  in2.stage = 2;
  in2.zoning = spec.regions.adaptive;
  in2.zoning_options.contiguous = spec.regions.contiguous;
  auto stage2 = run_stage({transfer_to_regional(stage1.best.params, p), std::move(alloc)}, in2,
                          result.log, result.zoning_moves);
  result.stage2_best_epoch = stage2.best_epoch;
  result.params = std::move(stage2.best.params);
  result.allocation = std::move(stage2.best.alloc);
  return result;
}

}  // namespace rgcn
