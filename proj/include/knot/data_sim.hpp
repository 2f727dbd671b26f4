#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "knot/confidence.hpp"
#include "knot/dataset.hpp"
#include "knot/label_space.hpp"

namespace knot {

/// Gaussian classes whose centers are the label coordinates, zero-padded to
/// feature_dim, so feature geometry mirrors label geometry.
struct SyntheticTask {
  LabelSpace space;
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> class_centers;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

SyntheticTask make_task(LabelSpace space, std::size_t feature_dim, double noise_std,
                        std::uint64_t seed);

/// One sample of class `label`.
std::vector<double> draw_sample(const SyntheticTask& task, std::size_t label, std::mt19937_64& rng);

/// `n` samples with labels drawn from `proportions`.
LabeledDataset draw_dataset(const SyntheticTask& task, std::span<const double> proportions,
                            std::size_t n, std::mt19937_64& rng);

struct FederationLayout {
  std::size_t n_locals = 3;
  double dirichlet_alpha = 0.3;
  std::vector<std::size_t> local_sizes{2000, 3000, 5000};
  std::size_t global_size = 4000;
  std::size_t transfer_size = 4000;
  std::size_t test_size = 2000;
  // Samples generated per class before partitioning; 0 sizes the pool so
  // that no request can exhaust it.
  std::size_t pool_per_class = 0;

  void validate() const;
};

struct FederatedData {
  std::vector<LabeledDataset> local_train;
  std::vector<LabeledDataset> local_test;
  std::vector<std::vector<double>> local_proportions;  // Dirichlet draw per local
  LabeledDataset global_train;
  LabeledDataset global_test;
  FeatureMatrix transfer;  // unlabeled
};

/// Draws every split without replacement from one per-class pool. Local
/// splits follow their own Dirichlet(alpha) class proportions; the global
/// splits are class-balanced; the transfer set follows the size-weighted
/// mixture of all training splits and keeps no labels. Throws
/// std::runtime_error if a class pool runs out.
FederatedData partition_non_iid(const SyntheticTask& task, const FederationLayout& layout);

/// Infinite stream of vectors uniform over the per-dimension [min, max] of
/// `reference` (the transfer set), seeded from `seed`.
InputSampler noise_sampler(const FeatureMatrix& reference, std::uint64_t seed);

/// Deterministic sub-stream of an experiment seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace knot
