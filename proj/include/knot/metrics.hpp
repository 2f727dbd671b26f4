#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "knot/dataset.hpp"
#include "knot/label_space.hpp"
#include "knot/model.hpp"
#include "knot/prob.hpp"

namespace knot {

struct SemanticDistance {
  double sd = 0.0;
  // Per label; NaN for labels that never occur among the truths.
  std::vector<double> per_label;
};

/// Euclidean distance from the expected coordinate of `weights` to the
/// coordinate of label `truth`. The weights are used as given.
double expected_distance(const LabelSpace& space, std::span<const double> weights,
                         std::size_t truth);

/// Euclidean distance between the expected coordinate of each prediction and
/// its true label's coordinate, averaged per true label, then across the
/// labels that occur. Throws std::invalid_argument on empty or ragged input.
SemanticDistance semantic_distance(std::span<const Distribution> predictions,
                                   std::span<const std::size_t> truths, const LabelSpace& space);

/// Unweighted mean of per-label F1 over labels that occur among the truths.
double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truths,
                std::size_t n_labels);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truths);

struct EvalReport {
  double sd = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_label_sd;
  std::size_t n_samples = 0;
};

EvalReport evaluate(const LinearSoftmaxClassifier& model, const LabeledDataset& data);

}  // namespace knot
