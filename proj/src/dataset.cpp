#include "knot/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "knot/io.hpp"

namespace knot {

FeatureMatrix::FeatureMatrix(std::size_t dim, std::vector<double> data)
    : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0 || data_.size() % dim_ != 0) {
    throw std::invalid_argument("feature matrix: data size not a multiple of dimension");
  }
}

void FeatureMatrix::push_back(std::span<const double> x) {
  if (x.size() != dim_) throw std::invalid_argument("feature matrix: row dimension mismatch");
  data_.insert(data_.end(), x.begin(), x.end());
}

namespace {

void write_rows(std::ostream& out, const FeatureMatrix& x, const std::vector<std::size_t>* y) {
  for (std::size_t k = 0; k < x.dim(); ++k) {
    if (k > 0) out << ',';
    out << 'f' << k;
  }
  if (y != nullptr) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k > 0) out << ',';
      out << format_double(r[k]);
    }
    if (y != nullptr) out << ',' << (*y)[i];
    out << '\n';
  }
}

struct ParsedCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

ParsedCsv parse_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ParsedCsv out;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  out.header = split_csv_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != out.header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": wrong number of columns");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ostringstream out;
  write_rows(out, data.x, &data.y);
  write_file_atomic(path, out.str());
}

void write_csv(const std::filesystem::path& path, const FeatureMatrix& unlabeled) {
  std::ostringstream out;
  write_rows(out, unlabeled, nullptr);
  write_file_atomic(path, out.str());
}

LabeledDataset read_labeled_csv(const std::filesystem::path& path) {
  auto csv = parse_csv(path);
  if (csv.header.size() < 2 || csv.header.back() != "label") {
    throw std::runtime_error(path.string() + ": expected a trailing label column");
  }
  const std::size_t dim = csv.header.size() - 1;
  LabeledDataset data{FeatureMatrix(dim), {}};
  for (const auto& row : csv.rows) {
    const double label = row.back();
    if (label < 0 || label != static_cast<double>(static_cast<std::size_t>(label))) {
      throw std::runtime_error(path.string() + ": label is not a nonnegative integer");
    }
    data.x.push_back(std::span<const double>(row.data(), dim));
    data.y.push_back(static_cast<std::size_t>(label));
  }
  return data;
}

FeatureMatrix read_unlabeled_csv(const std::filesystem::path& path) {
  auto csv = parse_csv(path);
  for (const auto& h : csv.header) {
    if (h == "label") throw std::runtime_error(path.string() + ": unexpected label column");
  }
  FeatureMatrix x(csv.header.size());
  for (const auto& row : csv.rows) x.push_back(row);
  return x;
}

}  // namespace knot
