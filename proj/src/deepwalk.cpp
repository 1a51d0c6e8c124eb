#include "deepwalk.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace rgcn {

WalkCorpus sample_walks(const SpatialGraph& g, std::size_t walk_length, std::size_t walks_per_node,
                        const Prng& rng) {
  const std::size_t n = g.size();
  if (walk_length == 0) throw invalid_argument("walk length must be at least 1");
  for (std::size_t i = 0; i < n; ++i)
    if (g.degree(i) == 0) throw invalid_argument("node " + std::to_string(i) + " is isolated");
  WalkCorpus corpus;
  corpus.walk_length = walk_length;
  corpus.walks_per_node = walks_per_node;
  corpus.walks.reserve(n * walks_per_node);
  for (std::size_t r = 0; r < walks_per_node; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      Prng local = rng.substream("walks", r * n + i);
      std::vector<std::size_t> walk{i};
      walk.reserve(walk_length);
      while (walk.size() < walk_length) {
        const auto nbrs = g.neighbors(walk.back());
        walk.push_back(nbrs[local.below(nbrs.size())]);
      }
      corpus.walks.push_back(std::move(walk));
    }
  }
  return corpus;
}

namespace {

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// rows touched by a minibatch, with their accumulated gradients
struct SparseGrad {
  std::size_t dim;
  std::vector<double> grad;
  std::vector<char> touched;
  std::vector<std::size_t> rows;

  SparseGrad(std::size_t n, std::size_t d) : dim(d), grad(n * d, 0.0), touched(n, 0) {}

  double* row(std::size_t r) {
    if (!touched[r]) {
      touched[r] = 1;
      rows.push_back(r);
    }
    return grad.data() + r * dim;
  }
};

void sparse_adam(Matrix& table, SparseGrad& g, std::vector<double>& m, std::vector<double>& v,
                 std::uint64_t t, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  const std::size_t d = g.dim;
  std::sort(g.rows.begin(), g.rows.end());
  for (std::size_t r : g.rows) {
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t idx = r * d + k;
      const double grad = g.grad[idx];
      m[idx] = beta1 * m[idx] + (1.0 - beta1) * grad;
      v[idx] = beta2 * v[idx] + (1.0 - beta2) * grad * grad;
      table.values()[idx] -= lr * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + eps);
      g.grad[idx] = 0.0;
    }
    g.touched[r] = 0;
  }
  g.rows.clear();
}

}  // namespace

EmbeddingResult train_embeddings(const WalkCorpus& corpus, std::size_t n,
                                 const EmbeddingOptions& options, Prng& rng) {
  if (corpus.walks.empty()) throw invalid_argument("empty walk corpus");
  if (options.dim == 0) throw invalid_argument("embedding dimension must be at least 1");
  const std::size_t d = options.dim;

  // noise distribution: unigram counts to the power 0.75
  std::vector<double> cumulative(n, 0.0);
  for (const auto& w : corpus.walks)
    for (std::size_t v : w) {
      if (v >= n) throw invalid_argument("walk visits node " + std::to_string(v) + " out of range");
      cumulative[v] += 1.0;
    }
  double total = 0.0;
  for (double& c : cumulative) {
    total += std::pow(c, 0.75);
    c = total;
  }
  auto draw_negative = [&]() {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
  };

  EmbeddingResult out;
  Matrix input(n, d), output(n, d);
  for (double& x : input.values()) x = rng.uniform(-0.5, 0.5) / static_cast<double>(d);
  std::vector<double> m_in(n * d, 0.0), v_in(n * d, 0.0), m_out(n * d, 0.0), v_out(n * d, 0.0);
  SparseGrad g_in(n, d), g_out(n, d);

  std::vector<std::size_t> order(corpus.walks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad_center(d);
  std::uint64_t step = 0;
  const std::size_t batch = std::max<std::size_t>(options.batch_walks, 1);
  const std::size_t window = std::max<std::size_t>(options.context_size, 2) - 1;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      // count pairs first so gradients are means
      std::size_t pairs = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t len = corpus.walks[order[b]].size();
        for (std::size_t i = 0; i < len; ++i)
          pairs += std::min(len - 1, i + window) - (i >= window ? i - window : 0);
      }
      if (pairs == 0) continue;
      const double scale = 1.0 / static_cast<double>(pairs);
      double loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& walk = corpus.walks[order[b]];
        const std::size_t len = walk.size();
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t lo = i >= window ? i - window : 0;
          const std::size_t hi = std::min(len - 1, i + window);
          const std::size_t center = walk[i];
          const auto u = input.row(center);
          for (std::size_t j = lo; j <= hi; ++j) {
            if (j == i) continue;
            std::fill(grad_center.begin(), grad_center.end(), 0.0);
            for (std::size_t s = 0; s <= options.negatives; ++s) {
              const std::size_t target = s == 0 ? walk[j] : draw_negative();
              const double label = s == 0 ? 1.0 : 0.0;
              const auto vt = output.row(target);
              double dot = 0.0;
              for (std::size_t k = 0; k < d; ++k) dot += u[k] * vt[k];
              loss -= s == 0 ? log_sigmoid(dot) : log_sigmoid(-dot);
              const double coef = (activate(dot, Activation::Sigmoid) - label) * scale;
              double* go = g_out.row(target);
              for (std::size_t k = 0; k < d; ++k) {
                grad_center[k] += coef * vt[k];
                go[k] += coef * u[k];
              }
            }
            double* gi = g_in.row(center);
            for (std::size_t k = 0; k < d; ++k) gi[k] += grad_center[k];
          }
        }
      }
      ++step;
      sparse_adam(input, g_in, m_in, v_in, step, options.learning_rate);
      sparse_adam(output, g_out, m_out, v_out, step, options.learning_rate);
      out.batch_losses.push_back(loss * scale);
      epoch_loss += loss;
      epoch_pairs += pairs;
    }
    out.epoch_losses.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);
  }
  if (!input.all_finite()) throw numeric_error("embedding training diverged");
  out.vectors = std::move(input);
  return out;
}

Matrix augment_features(const Matrix& x, const Matrix& embeddings) {
  if (embeddings.rows() != x.rows()) {
    throw dimension_mismatch("embedding table has " + std::to_string(embeddings.rows()) +
                             " rows, features have " + std::to_string(x.rows()));
  }
  if (embeddings.cols() == 0) return x;
  return hconcat(x, embeddings);
}

}  // namespace rgcn
