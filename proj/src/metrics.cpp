#include "knot/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace knot {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

double expected_distance(const LabelSpace& space, std::span<const double> weights,
                         std::size_t truth) {
  if (truth >= space.size()) throw std::invalid_argument("expected_distance: label out of range");
  const auto mean = expectation_in_space(space, weights);
  const auto& target = space.coords()[truth];
  double sq = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) sq += (mean[k] - target[k]) * (mean[k] - target[k]);
  return std::sqrt(sq);
}

SemanticDistance semantic_distance(std::span<const Distribution> predictions,
                                   std::span<const std::size_t> truths, const LabelSpace& space) {
  check_lengths(predictions.size(), truths.size(), "semantic_distance");
  const std::size_t n_labels = space.size();
  std::vector<double> sum(n_labels, 0.0);
  std::vector<std::size_t> count(n_labels, 0);
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const auto y = truths[s];
    if (y >= n_labels) throw std::invalid_argument("semantic_distance: label out of range");
    sum[y] += expected_distance(space, predictions[s].values(), y);
    ++count[y];
  }
  SemanticDistance out;
  out.per_label.assign(n_labels, std::numeric_limits<double>::quiet_NaN());
  double macro = 0.0;
  std::size_t present = 0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (count[l] == 0) continue;
    out.per_label[l] = sum[l] / static_cast<double>(count[l]);
    macro += out.per_label[l];
    ++present;
  }
  out.sd = macro / static_cast<double>(present);
  return out;
}

double macro_f1(std::span<const std::size_t> predicted, std::span<const std::size_t> truths,
                std::size_t n_labels) {
  check_lengths(predicted.size(), truths.size(), "macro_f1");
  std::vector<std::size_t> tp(n_labels, 0), fp(n_labels, 0), fn(n_labels, 0);
  std::vector<bool> present(n_labels, false);
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const auto p = predicted[s];
    const auto t = truths[s];
    if (p >= n_labels || t >= n_labels) throw std::invalid_argument("macro_f1: label out of range");
    present[t] = true;
    if (p == t) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double total = 0.0;
  std::size_t n_present = 0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (!present[l]) continue;
    ++n_present;
    const auto denom = 2 * tp[l] + fp[l] + fn[l];
    if (denom > 0) total += 2.0 * static_cast<double>(tp[l]) / static_cast<double>(denom);
  }
  return total / static_cast<double>(n_present);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truths) {
  check_lengths(predicted.size(), truths.size(), "accuracy");
  std::size_t correct = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) correct += predicted[s] == truths[s] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

EvalReport evaluate(const LinearSoftmaxClassifier& model, const LabeledDataset& data) {
  std::vector<Distribution> probs;
  std::vector<std::size_t> preds;
  probs.reserve(data.size());
  preds.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    probs.push_back(model.forward(data.x.row(i)));
    preds.push_back(argmax(probs.back().values()));
  }
  const auto sd = semantic_distance(probs, data.y, model.space());
  EvalReport r;
  r.sd = sd.sd;
  r.per_label_sd = sd.per_label;
  r.macro_f1 = macro_f1(preds, data.y, model.n_labels());
  r.accuracy = accuracy(preds, data.y);
  r.n_samples = data.size();
  return r;
}

}  // namespace knot
