#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "knot/dataset.hpp"
#include "knot/label_space.hpp"
#include "knot/prob.hpp"

namespace knot {

struct OptimizerConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ParamGrad {
  Matrix dW;  // labels x features
  std::vector<double> db;
};

/// h(x) = softmax(W x + b). Used for every teacher and for the student.
class LinearSoftmaxClassifier {
 public:
  /// Zero-initialized parameters.
  LinearSoftmaxClassifier(LabelSpace space, std::size_t feature_dim);
  /// Gaussian(0, 0.01^2) parameters drawn from `seed`.
  static LinearSoftmaxClassifier random_init(LabelSpace space, std::size_t feature_dim,
                                             std::uint64_t seed);

  const LabelSpace& space() const { return space_; }
  std::size_t n_labels() const { return space_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }

  const Matrix& weights() const { return W_; }
  Matrix& weights() { return W_; }
  const std::vector<double>& bias() const { return b_; }
  std::vector<double>& bias() { return b_; }

  std::vector<double> logits(std::span<const double> x) const;
  Distribution forward(std::span<const double> x) const;
  std::size_t predict_argmax(std::span<const double> x) const;

  /// Chains a gradient over output probabilities through the softmax
  /// Jacobian: dz = (diag(p) - p p^T) dp, dW = dz x^T, db = dz.
  ParamGrad backward_from_prob_grad(std::span<const double> x,
                                    std::span<const double> dL_dp) const;

  /// Same, reusing a forward pass already computed for x.
  void accumulate_backward(std::span<const double> x, const Distribution& p,
                           std::span<const double> dL_dp, double scale, ParamGrad& acc) const;

  void apply(const ParamGrad& g, double step);

  /// Snapshot as a Predictor; later changes to *this do not affect it.
  Predictor as_predictor() const;

  bool operator==(const LinearSoftmaxClassifier& o) const {
    return feature_dim_ == o.feature_dim_ && W_ == o.W_ && b_ == o.b_ &&
           space_.name() == o.space_.name();
  }

 private:
  void check_input(std::span<const double> x) const;

  LabelSpace space_;
  std::size_t feature_dim_;
  Matrix W_;
  std::vector<double> b_;
};

ParamGrad zero_grad(const LinearSoftmaxClassifier& model);

struct CeHistory {
  std::vector<double> mean_loss;  // per epoch, mean CE over the epoch's batches
  std::vector<double> accuracy;   // training accuracy after each epoch
};

/// Mini-batch SGD on mean cross-entropy; shuffles every epoch from opt.seed.
CeHistory train_ce(LinearSoftmaxClassifier& model, const LabeledDataset& data,
                   const OptimizerConfig& opt);

// {"space": {...}, "feature_dim": d, "W": [[...]], "b": [...]}
nlohmann::json to_json(const LinearSoftmaxClassifier& model);
/// "space" may be a full label-space object or the name of a built-in space.
LinearSoftmaxClassifier model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const LinearSoftmaxClassifier& model);
LinearSoftmaxClassifier load_model(const std::filesystem::path& path);

}  // namespace knot
