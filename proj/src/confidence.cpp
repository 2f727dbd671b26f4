#include "knot/confidence.hpp"

#include <cmath>
#include <stdexcept>

#include "knot/io.hpp"

namespace knot {

std::string_view to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::A: return "A";
    case WeightScheme::D: return "D";
    case WeightScheme::U: return "U";
    case WeightScheme::E: return "E";
  }
  return "?";
}

WeightScheme parse_scheme(std::string_view s) {
  if (s == "A") return WeightScheme::A;
  if (s == "D") return WeightScheme::D;
  if (s == "U") return WeightScheme::U;
  if (s == "E") return WeightScheme::E;
  throw std::invalid_argument("unknown weighting scheme '" + std::string(s) +
                              "' (expected A, D, U or E)");
}

ProbabilityBias estimate_bias(std::string teacher_id, const Predictor& teacher,
                              const InputSampler& noise, std::size_t n) {
  if (n == 0) throw std::invalid_argument("estimate_bias: need at least one noise sample");
  std::vector<std::size_t> counts;
  for (std::size_t s = 0; s < n; ++s) {
    auto x = noise();
    if (!x) {
      throw std::runtime_error("estimate_bias: noise source exhausted after " +
                               std::to_string(s) + " of " + std::to_string(n) + " samples");
    }
    const auto p = teacher(*x);
    if (counts.empty()) counts.assign(p.size(), 0);
    ++counts[argmax(p.values())];
  }
  std::vector<double> b(counts.size());
  for (std::size_t l = 0; l < b.size(); ++l) {
    b[l] = static_cast<double>(counts[l]) / static_cast<double>(n);
  }
  return {std::move(teacher_id), clamp_simplex(b, 0.0), n};
}

namespace {

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

}  // namespace

double weight(WeightScheme scheme, const Distribution& prediction, const ProbabilityBias* bias,
              std::size_t dataset_size, std::size_t total_size) {
  switch (scheme) {
    case WeightScheme::A:
      return 1.0;
    case WeightScheme::D:
      if (total_size == 0) throw std::invalid_argument("weight D: total dataset size is zero");
      if (dataset_size > total_size) {
        throw std::invalid_argument("weight D: dataset size exceeds total size");
      }
      return static_cast<double>(dataset_size) / static_cast<double>(total_size);
    case WeightScheme::U: {
      const std::vector<double> uniform(prediction.size(),
                                        1.0 / static_cast<double>(prediction.size()));
      return l2_distance(prediction.values(), uniform);
    }
    case WeightScheme::E:
      if (bias == nullptr) throw std::invalid_argument("weight E: probability bias missing");
      if (bias->b.size() != prediction.size()) {
        throw std::invalid_argument("weight E: bias length does not match prediction");
      }
      return l2_distance(prediction.values(), bias->b.values());
  }
  throw std::invalid_argument("weight: invalid scheme");
}

nlohmann::json to_json(const ProbabilityBias& bias) {
  return {{"teacher_id", bias.teacher_id},
          {"b", bias.b.vec()},
          {"n_noise_samples", bias.n_noise_samples}};
}

ProbabilityBias bias_from_json(const nlohmann::json& j) {
  ProbabilityBias out{j.at("teacher_id").get<std::string>(),
                      Distribution(j.at("b").get<std::vector<double>>()),
                      j.at("n_noise_samples").get<std::size_t>()};
  if (out.n_noise_samples < 1) throw std::invalid_argument("bias json: n_noise_samples < 1");
  return out;
}

void save_bias(const std::filesystem::path& path, const ProbabilityBias& bias) {
  write_json_atomic(path, to_json(bias));
}

ProbabilityBias load_bias(const std::filesystem::path& path) {
  return bias_from_json(read_json(path));
}

}  // namespace knot
