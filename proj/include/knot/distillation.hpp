#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knot/confidence.hpp"
#include "knot/dataset.hpp"
#include "knot/divergences.hpp"
#include "knot/model.hpp"
#include "knot/prob.hpp"

namespace knot {

/// A frozen teacher as seen by the server: an opaque prediction function and
/// nothing else of the local model. The learning-without-forgetting teacher
/// instead replays predictions stored per transfer-set row.
struct Teacher {
  std::string id;
  Predictor predict;
  std::shared_ptr<const std::vector<Distribution>> stored_outputs;
  std::optional<ProbabilityBias> bias;
  std::size_t dataset_size = 0;

  /// Prediction for transfer-set row `index` with features `x`.
  Distribution predict_at(std::size_t index, std::span<const double> x) const;
};

struct TeacherEnsemble {
  std::vector<Teacher> teachers;
  WeightScheme scheme = WeightScheme::A;
  bool includes_lwf_teacher = false;

  /// Throws std::invalid_argument on an empty ensemble, a teacher without a
  /// prediction source, or (scheme E) a teacher without a bias, naming it.
  void validate() const;
  std::size_t total_dataset_size() const;
};

/// Per-teacher weights for one sample given each teacher's prediction.
std::vector<double> teacher_weights(const TeacherEnsemble& ensemble,
                                    std::span<const Distribution> teacher_probs);

/// sum_k w_k D(student, teacher_k) / sum_k w_k.
double ensemble_loss(const Distribution& student, std::span<const Distribution> teacher_probs,
                     std::span<const double> weights, Divergence divergence, const Matrix& cost,
                     const SinkhornConfig& cfg);

/// Centered gradient of ensemble_loss with respect to the student probabilities.
std::vector<double> ensemble_grad(const Distribution& student,
                                  std::span<const Distribution> teacher_probs,
                                  std::span<const double> weights, Divergence divergence,
                                  const Matrix& cost, const SinkhornConfig& cfg);

/// Loss and gradient together. `warm`, when non-null, holds one slot of
/// Sinkhorn potentials per teacher and is updated in place.
DivergenceEval evaluate_ensemble(const Distribution& student,
                                 std::span<const Distribution> teacher_probs,
                                 std::span<const double> weights, Divergence divergence,
                                 const Matrix& cost, const SinkhornConfig& cfg,
                                 std::span<DualPotentials> warm = {});

/// Adds a pseudo-teacher replaying `snapshot` on every transfer-set row. The
/// outputs are computed once, here. `bias` should come from the same noise
/// procedure as the other teachers; it is required when the scheme is E.
TeacherEnsemble augment_with_lwf(TeacherEnsemble ensemble, const Predictor& snapshot,
                                 const FeatureMatrix& transfer_set, std::size_t global_size,
                                 std::optional<ProbabilityBias> bias);

struct DistillHistory {
  // [0] is the mean loss of the initial student over the transfer set; [e]
  // for e >= 1 is the mean mini-batch loss seen during epoch e.
  std::vector<double> epoch_loss;
};

/// Mini-batch gradient descent of the student on the mean ensemble loss over
/// the unlabeled transfer set. Teacher outputs and weights are computed once
/// up front since the teachers are frozen.
DistillHistory distill(LinearSoftmaxClassifier& student, const TeacherEnsemble& ensemble,
                       const FeatureMatrix& transfer_set, Divergence divergence,
                       const SinkhornConfig& cfg, const OptimizerConfig& opt);

/// Mean ensemble loss of `student` over the transfer set.
double mean_ensemble_loss(const LinearSoftmaxClassifier& student,
                          const TeacherEnsemble& ensemble, const FeatureMatrix& transfer_set,
                          Divergence divergence, const SinkhornConfig& cfg);

}  // namespace knot
