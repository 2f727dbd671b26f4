#include "knot/prob.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace knot {

Distribution::Distribution(std::vector<double> p) : p_(std::move(p)) {
  if (p_.empty()) throw std::invalid_argument("distribution must be non-empty");
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("distribution entries must be finite and nonnegative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw std::invalid_argument("distribution entries sum to " + std::to_string(sum) +
                                ", not 1");
  }
}

Distribution Distribution::uniform(std::size_t n) {
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::one_hot(std::size_t n, std::size_t at) {
  if (at >= n) throw std::out_of_range("one_hot index out of range");
  std::vector<double> p(n, 0.0);
  p[at] = 1.0;
  return Distribution(std::move(p));
}

Distribution softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty logits");
  double zmax = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
    zmax = std::max(zmax, z);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return Distribution(std::move(p));
}

Distribution clamp_simplex(std::span<const double> p, double floor) {
  double raw_sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("clamp_simplex: entries must be finite and nonnegative");
    }
    raw_sum += v;
  }
  if (!(raw_sum > 0.0)) throw std::invalid_argument("clamp_simplex: all-zero input");
  std::vector<double> out(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::max(v, floor);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return Distribution(std::move(out));
}

Coord expectation_in_space(const LabelSpace& space, std::span<const double> weights) {
  if (weights.size() != space.size()) {
    throw std::invalid_argument("weight vector length does not match label space '" +
                                space.name() + "'");
  }
  Coord mean(space.dim(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& c = space.coords()[i];
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += weights[i] * c[k];
  }
  return mean;
}

Coord expectation_in_space(const LabelSpace& space, const Distribution& p) {
  return expectation_in_space(space, p.values());
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace knot
