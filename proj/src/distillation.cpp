#include "knot/distillation.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace knot {

Distribution Teacher::predict_at(std::size_t index, std::span<const double> x) const {
  if (stored_outputs) {
    if (index >= stored_outputs->size()) {
      throw std::out_of_range("teacher '" + id + "': no stored output for transfer row " +
                              std::to_string(index));
    }
    return (*stored_outputs)[index];
  }
  if (!predict) throw std::logic_error("teacher '" + id + "' has no prediction source");
  return predict(x);
}

void TeacherEnsemble::validate() const {
  if (teachers.empty()) throw std::invalid_argument("ensemble: no teachers");
  for (const auto& t : teachers) {
    if (!t.predict && !t.stored_outputs) {
      throw std::invalid_argument("ensemble: teacher '" + t.id + "' has no prediction source");
    }
    if (scheme == WeightScheme::E && !t.bias) {
      throw std::invalid_argument("ensemble: scheme E needs a probability bias for teacher '" +
                                  t.id + "'");
    }
  }
  if (scheme == WeightScheme::D && total_dataset_size() == 0) {
    throw std::invalid_argument("ensemble: scheme D needs nonzero dataset sizes");
  }
}

std::size_t TeacherEnsemble::total_dataset_size() const {
  std::size_t total = 0;
  for (const auto& t : teachers) total += t.dataset_size;
  return total;
}

std::vector<double> teacher_weights(const TeacherEnsemble& ensemble,
                                    std::span<const Distribution> teacher_probs) {
  if (teacher_probs.size() != ensemble.teachers.size()) {
    throw std::invalid_argument("teacher_weights: one prediction per teacher expected");
  }
  const std::size_t total = ensemble.total_dataset_size();
  std::vector<double> w(teacher_probs.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto& t = ensemble.teachers[k];
    w[k] = weight(ensemble.scheme, teacher_probs[k], t.bias ? &*t.bias : nullptr,
                  t.dataset_size, total);
  }
  return w;
}

namespace {

double weight_sum(std::span<const Distribution> teacher_probs, std::span<const double> weights) {
  if (teacher_probs.size() != weights.size() || teacher_probs.empty()) {
    throw std::invalid_argument("ensemble: need one weight per teacher and at least one teacher");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("ensemble: weights must be nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("ensemble: all teacher weights are zero");
  return sum;
}

}  // namespace

DivergenceEval evaluate_ensemble(const Distribution& student,
                                 std::span<const Distribution> teacher_probs,
                                 std::span<const double> weights, Divergence divergence,
                                 const Matrix& cost, const SinkhornConfig& cfg,
                                 std::span<DualPotentials> warm) {
  const double sum = weight_sum(teacher_probs, weights);
  if (!warm.empty() && warm.size() != teacher_probs.size()) {
    throw std::invalid_argument("ensemble: one warm-start slot per teacher expected");
  }
  DivergenceEval out;
  out.grad.assign(student.size(), 0.0);
  for (std::size_t k = 0; k < teacher_probs.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const double wk = weights[k] / sum;
    auto e = evaluate_divergence(divergence, student, teacher_probs[k], cost, cfg,
                                 warm.empty() ? nullptr : &warm[k]);
    out.value += wk * e.value;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += wk * e.grad[i];
  }
  center(out.grad);
  return out;
}

double ensemble_loss(const Distribution& student, std::span<const Distribution> teacher_probs,
                     std::span<const double> weights, Divergence divergence, const Matrix& cost,
                     const SinkhornConfig& cfg) {
  return evaluate_ensemble(student, teacher_probs, weights, divergence, cost, cfg).value;
}

std::vector<double> ensemble_grad(const Distribution& student,
                                  std::span<const Distribution> teacher_probs,
                                  std::span<const double> weights, Divergence divergence,
                                  const Matrix& cost, const SinkhornConfig& cfg) {
  return evaluate_ensemble(student, teacher_probs, weights, divergence, cost, cfg).grad;
}

TeacherEnsemble augment_with_lwf(TeacherEnsemble ensemble, const Predictor& snapshot,
                                 const FeatureMatrix& transfer_set, std::size_t global_size,
                                 std::optional<ProbabilityBias> bias) {
  if (transfer_set.rows() == 0) throw std::invalid_argument("augment_with_lwf: empty transfer set");
  auto outputs = std::make_shared<std::vector<Distribution>>();
  outputs->reserve(transfer_set.rows());
  for (std::size_t i = 0; i < transfer_set.rows(); ++i) {
    outputs->push_back(snapshot(transfer_set.row(i)));
  }
  Teacher lwf;
  lwf.id = "lwf";
  lwf.stored_outputs = std::move(outputs);
  if (bias) {
    bias->teacher_id = lwf.id;
    lwf.bias = std::move(bias);
  }
  lwf.dataset_size = global_size;
  ensemble.teachers.push_back(std::move(lwf));
  ensemble.includes_lwf_teacher = true;
  return ensemble;
}

namespace {

struct SoftLabels {
  std::vector<std::vector<Distribution>> probs;  // row -> teacher
  std::vector<std::vector<double>> weights;      // row -> teacher
  std::vector<bool> usable;                      // false when every weight is zero
};

SoftLabels soft_labels(const TeacherEnsemble& ensemble, const FeatureMatrix& transfer_set) {
  SoftLabels out;
  const std::size_t n = transfer_set.rows();
  out.probs.resize(n);
  out.weights.resize(n);
  out.usable.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = transfer_set.row(i);
    for (const auto& t : ensemble.teachers) out.probs[i].push_back(t.predict_at(i, x));
    out.weights[i] = teacher_weights(ensemble, out.probs[i]);
    out.usable[i] =
        std::accumulate(out.weights[i].begin(), out.weights[i].end(), 0.0) > 0.0;
  }
  return out;
}

void check_student(const LinearSoftmaxClassifier& student, const TeacherEnsemble& ensemble,
                   const FeatureMatrix& transfer_set) {
  ensemble.validate();
  if (transfer_set.rows() == 0) throw std::invalid_argument("distill: empty transfer set");
  if (transfer_set.dim() != student.feature_dim()) {
    throw std::invalid_argument("distill: transfer set feature dimension mismatch");
  }
}

double mean_loss(const LinearSoftmaxClassifier& student, const SoftLabels& labels,
                 const FeatureMatrix& transfer_set, Divergence divergence,
                 const SinkhornConfig& cfg, std::vector<DualPotentials>* warm,
                 std::size_t n_teachers) {
  const auto& cost = student.space().cost();
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < transfer_set.rows(); ++i) {
    if (!labels.usable[i]) continue;
    std::span<DualPotentials> slots;
    if (warm != nullptr) slots = std::span<DualPotentials>(warm->data() + i * n_teachers, n_teachers);
    sum += evaluate_ensemble(student.forward(transfer_set.row(i)), labels.probs[i],
                             labels.weights[i], divergence, cost, cfg, slots)
               .value;
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

}  // namespace

double mean_ensemble_loss(const LinearSoftmaxClassifier& student,
                          const TeacherEnsemble& ensemble, const FeatureMatrix& transfer_set,
                          Divergence divergence, const SinkhornConfig& cfg) {
  check_student(student, ensemble, transfer_set);
  const auto labels = soft_labels(ensemble, transfer_set);
  return mean_loss(student, labels, transfer_set, divergence, cfg, nullptr, 0);
}

DistillHistory distill(LinearSoftmaxClassifier& student, const TeacherEnsemble& ensemble,
                       const FeatureMatrix& transfer_set, Divergence divergence,
                       const SinkhornConfig& cfg, const OptimizerConfig& opt) {
  check_student(student, ensemble, transfer_set);
  cfg.validate();
  opt.validate();

  const auto labels = soft_labels(ensemble, transfer_set);
  const std::size_t n = transfer_set.rows();
  const std::size_t n_teachers = ensemble.teachers.size();
  const auto& cost = student.space().cost();
  // Warm-start slots: potentials move little between visits of the same row.
  std::vector<DualPotentials> warm(divergence == Divergence::Sinkhorn ? n * n_teachers : 0);

  DistillHistory hist;
  hist.epoch_loss.push_back(
      mean_loss(student, labels, transfer_set, divergence, cfg,
                warm.empty() ? nullptr : &warm, n_teachers));

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t end = std::min(start + opt.batch_size, n);
      std::size_t batch_used = 0;
      for (std::size_t k = start; k < end; ++k) batch_used += labels.usable[order[k]] ? 1 : 0;
      if (batch_used == 0) continue;
      const double scale = 1.0 / static_cast<double>(batch_used);
      auto grad = zero_grad(student);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        if (!labels.usable[i]) continue;
        const auto x = transfer_set.row(i);
        const auto p = student.forward(x);
        std::span<DualPotentials> slots;
        if (!warm.empty()) slots = std::span<DualPotentials>(warm.data() + i * n_teachers, n_teachers);
        const auto e = evaluate_ensemble(p, labels.probs[i], labels.weights[i], divergence,
                                         cost, cfg, slots);
        loss_sum += e.value;
        ++loss_count;
        student.accumulate_backward(x, p, e.grad, scale, grad);
      }
      student.apply(grad, opt.learning_rate);
    }
    hist.epoch_loss.push_back(loss_count == 0 ? 0.0
                                              : loss_sum / static_cast<double>(loss_count));
  }
  return hist;
}

}  // namespace knot
