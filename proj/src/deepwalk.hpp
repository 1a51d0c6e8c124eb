#pragma once

#include <cstddef>
#include <vector>

#include "graph.hpp"
#include "numerics.hpp"

namespace rgcn {

struct WalkCorpus {
  std::vector<std::vector<std::size_t>> walks;
  std::size_t walk_length = 0;
  std::size_t walks_per_node = 0;
};

/// Uniform random walks; edge weights are ignored. Walk r of node i comes
/// from its own sub-stream so the corpus does not depend on visiting order.
WalkCorpus sample_walks(const SpatialGraph& g, std::size_t walk_length, std::size_t walks_per_node,
                        const Prng& rng);

struct EmbeddingOptions {
  std::size_t dim = 14;
  std::size_t context_size = 10;
  std::size_t negatives = 5;
  std::size_t epochs = 100;
  double learning_rate = 0.01;
  /// walks per minibatch
  std::size_t batch_walks = 16;
};

struct EmbeddingResult {
  Matrix vectors;  // n × dim
  /// mean loss per minibatch, in order
  std::vector<double> batch_losses;
  std::vector<double> epoch_losses;
};

/// Skip-gram with negative sampling (unigram^0.75 noise). Pairs are nodes at
/// distance 1..context_size-1 within a walk, both directions. Adam updates
/// only the rows a minibatch touched.
EmbeddingResult train_embeddings(const WalkCorpus& corpus, std::size_t n,
                                 const EmbeddingOptions& options, Prng& rng);

/// [X | E]
Matrix augment_features(const Matrix& x, const Matrix& embeddings);

}  // namespace rgcn
