#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace knot {

using Coord = std::vector<double>;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double max_entry() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Named labels placed at points of a Euclidean semantic space. The transport
/// cost between two labels is the Euclidean distance of their coordinates.
/// Immutable once built.
class LabelSpace {
 public:
  /// Throws std::invalid_argument on fewer than 2 labels, duplicate names,
  /// mismatched coordinate dimensions or non-finite coordinates.
  LabelSpace(std::string name, std::vector<std::string> labels, std::vector<Coord> coords);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Coord>& coords() const { return coords_; }
  const Matrix& cost() const { return cost_; }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return coords_.front().size(); }
  /// Largest entry of the cost matrix (C_M).
  double max_cost() const { return max_cost_; }

  /// Index of a label by name; throws std::out_of_range if absent.
  std::size_t index_of(std::string_view label) const;

 private:
  std::string name_;
  std::vector<std::string> labels_;
  std::vector<Coord> coords_;
  Matrix cost_;
  double max_cost_ = 0.0;
};

LabelSpace build_space(std::string name, std::vector<std::string> labels,
                       std::vector<Coord> coords);

/// Built-in spaces: "SA" (five sentiment grades on a line), "ERC" (five
/// emotions on a valence/arousal plane) and "NLI" (three inference labels).
LabelSpace builtin_space(std::string_view task);

// {"name": ..., "labels": [...], "coords": [[...], ...]}
nlohmann::json to_json(const LabelSpace& space);
LabelSpace label_space_from_json(const nlohmann::json& j);
LabelSpace load_label_space(const std::filesystem::path& path);

}  // namespace knot
