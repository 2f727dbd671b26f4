#include "knot/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "knot/io.hpp"

namespace knot {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("optimizer: batch_size must be >= 1");
}

LinearSoftmaxClassifier::LinearSoftmaxClassifier(LabelSpace space, std::size_t feature_dim)
    : space_(std::move(space)),
      feature_dim_(feature_dim),
      W_(space_.size(), feature_dim),
      b_(space_.size(), 0.0) {
  if (feature_dim_ == 0) throw std::invalid_argument("classifier: feature_dim must be >= 1");
}

LinearSoftmaxClassifier LinearSoftmaxClassifier::random_init(LabelSpace space,
                                                             std::size_t feature_dim,
                                                             std::uint64_t seed) {
  LinearSoftmaxClassifier m(std::move(space), feature_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (double& w : m.W_.data()) w = normal(rng);
  for (double& b : m.b_) b = normal(rng);
  return m;
}

void LinearSoftmaxClassifier::check_input(std::span<const double> x) const {
  if (x.size() != feature_dim_) {
    throw std::invalid_argument("classifier: expected " + std::to_string(feature_dim_) +
                                " features, got " + std::to_string(x.size()));
  }
}

std::vector<double> LinearSoftmaxClassifier::logits(std::span<const double> x) const {
  check_input(x);
  std::vector<double> z(b_);
  for (std::size_t l = 0; l < z.size(); ++l) {
    for (std::size_t k = 0; k < feature_dim_; ++k) z[l] += W_(l, k) * x[k];
  }
  return z;
}

Distribution LinearSoftmaxClassifier::forward(std::span<const double> x) const {
  return softmax(logits(x));
}

std::size_t LinearSoftmaxClassifier::predict_argmax(std::span<const double> x) const {
  return argmax(forward(x).values());
}

ParamGrad zero_grad(const LinearSoftmaxClassifier& model) {
  return {Matrix(model.n_labels(), model.feature_dim()),
          std::vector<double>(model.n_labels(), 0.0)};
}

void LinearSoftmaxClassifier::accumulate_backward(std::span<const double> x,
                                                  const Distribution& p,
                                                  std::span<const double> dL_dp, double scale,
                                                  ParamGrad& acc) const {
  check_input(x);
  if (dL_dp.size() != n_labels() || p.size() != n_labels()) {
    throw std::invalid_argument("classifier: gradient length does not match labels");
  }
  double pg = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) pg += p[l] * dL_dp[l];
  for (std::size_t l = 0; l < p.size(); ++l) {
    const double dz = scale * p[l] * (dL_dp[l] - pg);
    acc.db[l] += dz;
    for (std::size_t k = 0; k < feature_dim_; ++k) acc.dW(l, k) += dz * x[k];
  }
}

ParamGrad LinearSoftmaxClassifier::backward_from_prob_grad(std::span<const double> x,
                                                           std::span<const double> dL_dp) const {
  for (double v : dL_dp) {
    if (!std::isfinite(v)) throw std::invalid_argument("classifier: non-finite gradient");
  }
  auto g = zero_grad(*this);
  accumulate_backward(x, forward(x), dL_dp, 1.0, g);
  return g;
}

void LinearSoftmaxClassifier::apply(const ParamGrad& g, double step) {
  auto& w = W_.data();
  const auto& dw = g.dW.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * dw[i];
  for (std::size_t l = 0; l < b_.size(); ++l) b_[l] -= step * g.db[l];
}

Predictor LinearSoftmaxClassifier::as_predictor() const {
  return [snapshot = *this](std::span<const double> x) { return snapshot.forward(x); };
}

CeHistory train_ce(LinearSoftmaxClassifier& model, const LabeledDataset& data,
                   const OptimizerConfig& opt) {
  opt.validate();
  if (data.size() == 0) throw std::invalid_argument("train_ce: empty dataset");
  if (data.x.dim() != model.feature_dim()) {
    throw std::invalid_argument("train_ce: dataset feature dimension mismatch");
  }
  for (auto y : data.y) {
    if (y >= model.n_labels()) throw std::invalid_argument("train_ce: label out of range");
  }

  CeHistory hist;
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(start + opt.batch_size, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grad = zero_grad(model);
      for (std::size_t k = start; k < end; ++k) {
        const auto x = data.x.row(order[k]);
        const auto y = data.y[order[k]];
        const auto p = model.forward(x);
        loss_sum -= std::log(std::max(p[y], kProbFloor));
        // d(-ln p_y)/dz = p - e_y
        for (std::size_t l = 0; l < p.size(); ++l) {
          const double dz = scale * (p[l] - (l == y ? 1.0 : 0.0));
          grad.db[l] += dz;
          for (std::size_t j = 0; j < x.size(); ++j) grad.dW(l, j) += dz * x[j];
        }
      }
      model.apply(grad, opt.learning_rate);
    }
    hist.mean_loss.push_back(loss_sum / static_cast<double>(data.size()));

    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      correct += model.predict_argmax(data.x.row(i)) == data.y[i] ? 1 : 0;
    }
    hist.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(data.size()));
  }
  return hist;
}

nlohmann::json to_json(const LinearSoftmaxClassifier& model) {
  std::vector<std::vector<double>> rows;
  for (std::size_t l = 0; l < model.n_labels(); ++l) {
    const auto& w = model.weights();
    rows.emplace_back(w.data().begin() + static_cast<std::ptrdiff_t>(l * w.cols()),
                      w.data().begin() + static_cast<std::ptrdiff_t>((l + 1) * w.cols()));
  }
  return {{"space", to_json(model.space())},
          {"feature_dim", model.feature_dim()},
          {"W", rows},
          {"b", model.bias()}};
}

LinearSoftmaxClassifier model_from_json(const nlohmann::json& j) {
  const auto& js = j.at("space");
  LabelSpace space = js.is_string() ? builtin_space(js.get<std::string>())
                                    : label_space_from_json(js);
  const auto dim = j.at("feature_dim").get<std::size_t>();
  LinearSoftmaxClassifier model(std::move(space), dim);
  const auto rows = j.at("W").get<std::vector<std::vector<double>>>();
  const auto b = j.at("b").get<std::vector<double>>();
  if (rows.size() != model.n_labels() || b.size() != model.n_labels()) {
    throw std::invalid_argument("model json: W/b rows do not match the label count");
  }
  for (std::size_t l = 0; l < rows.size(); ++l) {
    if (rows[l].size() != dim) throw std::invalid_argument("model json: W row width != feature_dim");
    for (std::size_t k = 0; k < dim; ++k) {
      if (!std::isfinite(rows[l][k])) throw std::invalid_argument("model json: non-finite W");
      model.weights()(l, k) = rows[l][k];
    }
    if (!std::isfinite(b[l])) throw std::invalid_argument("model json: non-finite b");
  }
  model.bias() = b;
  return model;
}

void save_model(const std::filesystem::path& path, const LinearSoftmaxClassifier& model) {
  write_json_atomic(path, to_json(model));
}

LinearSoftmaxClassifier load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

}  // namespace knot
