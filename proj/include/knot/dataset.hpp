#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace knot {

/// Row-major samples x features.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t dim) : dim_(dim) {}
  FeatureMatrix(std::size_t dim, std::vector<double> data);

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  void push_back(std::span<const double> x);

  const std::vector<double>& data() const { return data_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct LabeledDataset {
  FeatureMatrix x;
  std::vector<std::size_t> y;

  std::size_t size() const { return y.size(); }
  bool operator==(const LabeledDataset&) const = default;
};

// CSV: header f0,...,f{d-1}[,label]; numbers written in the shortest form
// that round-trips, so files reload exactly.
void write_csv(const std::filesystem::path& path, const LabeledDataset& data);
void write_csv(const std::filesystem::path& path, const FeatureMatrix& unlabeled);
LabeledDataset read_labeled_csv(const std::filesystem::path& path);
/// Rejects files that carry a label column.
FeatureMatrix read_unlabeled_csv(const std::filesystem::path& path);

}  // namespace knot
