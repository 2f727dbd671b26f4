#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "knot/label_space.hpp"

namespace knot {

inline constexpr double kSimplexTol = 1e-9;
inline constexpr double kProbFloor = 1e-12;

/// A point on the probability simplex: nonnegative entries summing to 1
/// within kSimplexTol. The owning LabelSpace is supplied by callers that need
/// geometry; lengths are checked there.
class Distribution {
 public:
  Distribution() = default;
  /// Validates; throws std::invalid_argument if p is not on the simplex.
  explicit Distribution(std::vector<double> p);
  Distribution(std::initializer_list<double> p) : Distribution(std::vector<double>(p)) {}

  static Distribution uniform(std::size_t n);
  static Distribution one_hot(std::size_t n, std::size_t at);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }
  const std::vector<double>& vec() const { return p_; }

  auto begin() const { return p_.begin(); }
  auto end() const { return p_.end(); }

  bool operator==(const Distribution&) const = default;

 private:
  std::vector<double> p_;
};

/// Numerically stable softmax; throws std::invalid_argument on non-finite
/// or empty logits.
Distribution softmax(std::span<const double> logits);

/// Raises every entry to at least `floor`, then renormalizes.
Distribution clamp_simplex(std::span<const double> p, double floor = kProbFloor);

/// Mean position of p in the space's coordinate system.
Coord expectation_in_space(const LabelSpace& space, const Distribution& p);
/// Sum of weights[i] * coords[i] with the weights taken as given, e.g. a
/// rounded probability vector that misses 1 by a few thousandths.
Coord expectation_in_space(const LabelSpace& space, std::span<const double> weights);

/// A frozen hypothesis: feature vector in, label distribution out.
using Predictor = std::function<Distribution(std::span<const double>)>;

/// Lowest index among the maximal entries.
std::size_t argmax(std::span<const double> v);

}  // namespace knot
