#include "knot/label_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace knot {

double Matrix::max_entry() const {
  if (data_.empty()) return 0.0;
  return *std::max_element(data_.begin(), data_.end());
}

LabelSpace::LabelSpace(std::string name, std::vector<std::string> labels,
                       std::vector<Coord> coords)
    : name_(std::move(name)), labels_(std::move(labels)), coords_(std::move(coords)) {
  if (labels_.size() < 2) {
    throw std::invalid_argument("label space '" + name_ + "' needs at least 2 labels");
  }
  if (labels_.size() != coords_.size()) {
    throw std::invalid_argument("label space '" + name_ + "': " +
                                std::to_string(labels_.size()) + " labels but " +
                                std::to_string(coords_.size()) + " coordinates");
  }
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) {
      throw std::invalid_argument("label space '" + name_ + "': duplicate label '" + l + "'");
    }
  }
  const std::size_t d = coords_.front().size();
  if (d == 0) throw std::invalid_argument("label space '" + name_ + "': empty coordinates");
  for (const auto& c : coords_) {
    if (c.size() != d) {
      throw std::invalid_argument("label space '" + name_ + "': coordinate dimension mismatch");
    }
    for (double v : c) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("label space '" + name_ + "': non-finite coordinate");
      }
    }
  }

  const std::size_t n = labels_.size();
  cost_ = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = coords_[i][k] - coords_[j][k];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      cost_(i, j) = dist;
      cost_(j, i) = dist;
    }
  }
  max_cost_ = cost_.max_entry();
}

std::size_t LabelSpace::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) {
    throw std::out_of_range("label '" + std::string(label) + "' not in space '" + name_ + "'");
  }
  return static_cast<std::size_t>(it - labels_.begin());
}

LabelSpace build_space(std::string name, std::vector<std::string> labels,
                       std::vector<Coord> coords) {
  return LabelSpace(std::move(name), std::move(labels), std::move(coords));
}

LabelSpace builtin_space(std::string_view task) {
  if (task == "SA") {
    return build_space("SA", {"1", "2", "3", "4", "5"}, {{1.0}, {2.0}, {3.0}, {4.0}, {5.0}});
  }
  if (task == "ERC") {
    return build_space("ERC", {"anger", "happiness", "no-emotion", "sadness", "surprise"},
                       {{-0.4, 0.8}, {0.9, 0.2}, {0.0, 0.0}, {-0.9, -0.4}, {0.4, 0.9}});
  }
  if (task == "NLI") {
    return build_space("NLI", {"entailment", "neutral", "contradiction"},
                       {{1.0, 0.0, 0.0}, {0.5, 1.0, 0.5}, {0.0, 0.0, 1.0}});
  }
  throw std::invalid_argument("unknown task '" + std::string(task) +
                              "' (expected SA, ERC or NLI)");
}

nlohmann::json to_json(const LabelSpace& space) {
  return {{"name", space.name()}, {"labels", space.labels()}, {"coords", space.coords()}};
}

LabelSpace label_space_from_json(const nlohmann::json& j) {
  return build_space(j.at("name").get<std::string>(),
                     j.at("labels").get<std::vector<std::string>>(),
                     j.at("coords").get<std::vector<Coord>>());
}

LabelSpace load_label_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label space file " + path.string());
  return label_space_from_json(nlohmann::json::parse(in));
}

}  // namespace knot
