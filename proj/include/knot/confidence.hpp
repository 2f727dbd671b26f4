#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "knot/prob.hpp"

namespace knot {

/// How often each label wins the argmax when a model is fed pure noise.
struct ProbabilityBias {
  std::string teacher_id;
  Distribution b;
  std::size_t n_noise_samples = 0;
};

/// Teacher weighting schemes:
///   A  every teacher weighs 1
///   D  proportional to the teacher's local dataset size
///   U  L2 distance of the prediction from the uniform distribution
///   E  L2 distance of the prediction from the teacher's probability bias
enum class WeightScheme { A, D, U, E };

std::string_view to_string(WeightScheme s);
WeightScheme parse_scheme(std::string_view s);

/// Yields one input per call; std::nullopt means the source is exhausted.
using InputSampler = std::function<std::optional<std::vector<double>>()>;

/// b_l = fraction of n noise inputs whose argmax prediction is l (ties go to
/// the lowest index). Throws std::invalid_argument for n == 0 and
/// std::runtime_error if the sampler runs dry.
ProbabilityBias estimate_bias(std::string teacher_id, const Predictor& teacher,
                              const InputSampler& noise, std::size_t n);

/// Nonnegative weight of one teacher's prediction for one sample. `bias` is
/// required for scheme E; `total_size` must be positive for scheme D.
double weight(WeightScheme scheme, const Distribution& prediction, const ProbabilityBias* bias,
              std::size_t dataset_size, std::size_t total_size);

// {"teacher_id": ..., "b": [...], "n_noise_samples": n}
nlohmann::json to_json(const ProbabilityBias& bias);
ProbabilityBias bias_from_json(const nlohmann::json& j);
void save_bias(const std::filesystem::path& path, const ProbabilityBias& bias);
ProbabilityBias load_bias(const std::filesystem::path& path);

}  // namespace knot
