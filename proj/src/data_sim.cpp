#include "knot/data_sim.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace knot {

namespace {

enum Stream : std::uint64_t {
  kPool = 1,
  kDirichlet = 2,
  kAssign = 3,
};

std::size_t draw_label(std::span<const double> proportions, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(proportions.begin(), proportions.end());
  return pick(rng);
}

std::vector<double> dirichlet(std::size_t k, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  // Small alpha can underflow every draw; redraw in that case.
  do {
    sum = 0.0;
    for (double& v : p) {
      v = gamma(rng);
      sum += v;
    }
  } while (!(sum > 0.0));
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

SyntheticTask make_task(LabelSpace space, std::size_t feature_dim, double noise_std,
                        std::uint64_t seed) {
  if (feature_dim < space.dim()) {
    throw std::invalid_argument("make_task: feature_dim " + std::to_string(feature_dim) +
                                " is smaller than the label-space dimension " +
                                std::to_string(space.dim()));
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("make_task: noise_std must be >= 0");
  SyntheticTask task{std::move(space), feature_dim, {}, noise_std, seed};
  for (const auto& c : task.space.coords()) {
    std::vector<double> center(feature_dim, 0.0);
    std::copy(c.begin(), c.end(), center.begin());
    task.class_centers.push_back(std::move(center));
  }
  return task;
}

std::vector<double> draw_sample(const SyntheticTask& task, std::size_t label,
                                std::mt19937_64& rng) {
  std::vector<double> x = task.class_centers.at(label);
  if (task.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, task.noise_std);
    for (double& v : x) v += noise(rng);
  }
  return x;
}

LabeledDataset draw_dataset(const SyntheticTask& task, std::span<const double> proportions,
                            std::size_t n, std::mt19937_64& rng) {
  LabeledDataset data{FeatureMatrix(task.feature_dim), {}};
  for (std::size_t s = 0; s < n; ++s) {
    const auto y = draw_label(proportions, rng);
    data.x.push_back(draw_sample(task, y, rng));
    data.y.push_back(y);
  }
  return data;
}

void FederationLayout::validate() const {
  if (n_locals < 1) throw std::invalid_argument("layout: n_locals must be >= 1");
  if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("layout: dirichlet_alpha must be > 0");
  if (local_sizes.size() != n_locals) {
    throw std::invalid_argument("layout: local_sizes must list one size per local");
  }
  for (auto s : local_sizes) {
    if (s < 1) throw std::invalid_argument("layout: local sizes must be >= 1");
  }
  if (global_size < 1 || transfer_size < 1 || test_size < 1) {
    throw std::invalid_argument("layout: global, transfer and test sizes must be >= 1");
  }
}

FederatedData partition_non_iid(const SyntheticTask& task, const FederationLayout& layout) {
  layout.validate();
  const std::size_t n_labels = task.space.size();
  std::size_t total = layout.global_size + layout.transfer_size + layout.test_size;
  for (auto s : layout.local_sizes) total += s + layout.test_size;
  const std::size_t pool_size = layout.pool_per_class == 0 ? total : layout.pool_per_class;

  // Per-class pools, consumed from the back.
  auto pool_rng = make_rng(task.seed, kPool);
  std::vector<std::vector<std::vector<double>>> pool(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    pool[l].reserve(pool_size);
    for (std::size_t s = 0; s < pool_size; ++s) pool[l].push_back(draw_sample(task, l, pool_rng));
  }

  auto assign_rng = make_rng(task.seed, kAssign);
  auto take = [&](std::span<const double> proportions, std::size_t n) {
    LabeledDataset data{FeatureMatrix(task.feature_dim), {}};
    for (std::size_t s = 0; s < n; ++s) {
      const auto y = draw_label(proportions, assign_rng);
      if (pool[y].empty()) {
        throw std::runtime_error("partition_non_iid: pool for label '" + task.space.labels()[y] +
                                 "' exhausted; requested sizes exceed pool_per_class = " +
                                 std::to_string(pool_size));
      }
      data.x.push_back(pool[y].back());
      pool[y].pop_back();
      data.y.push_back(y);
    }
    return data;
  };

  FederatedData out;
  auto dir_rng = make_rng(task.seed, kDirichlet);
  for (std::size_t k = 0; k < layout.n_locals; ++k) {
    out.local_proportions.push_back(dirichlet(n_labels, layout.dirichlet_alpha, dir_rng));
  }
  const std::vector<double> balanced(n_labels, 1.0 / static_cast<double>(n_labels));

  for (std::size_t k = 0; k < layout.n_locals; ++k) {
    out.local_train.push_back(take(out.local_proportions[k], layout.local_sizes[k]));
    out.local_test.push_back(take(out.local_proportions[k], layout.test_size));
  }
  out.global_train = take(balanced, layout.global_size);
  out.global_test = take(balanced, layout.test_size);

  std::vector<double> mixture(n_labels, 0.0);
  double mass = static_cast<double>(layout.global_size);
  for (std::size_t l = 0; l < n_labels; ++l) mixture[l] = balanced[l] * mass;
  for (std::size_t k = 0; k < layout.n_locals; ++k) {
    const double sz = static_cast<double>(layout.local_sizes[k]);
    for (std::size_t l = 0; l < n_labels; ++l) mixture[l] += out.local_proportions[k][l] * sz;
    mass += sz;
  }
  for (double& v : mixture) v /= mass;
  out.transfer = take(mixture, layout.transfer_size).x;
  return out;
}

InputSampler noise_sampler(const FeatureMatrix& reference, std::uint64_t seed) {
  if (reference.rows() == 0) throw std::invalid_argument("noise_sampler: empty reference set");
  const std::size_t d = reference.dim();
  std::vector<double> lo(reference.row(0).begin(), reference.row(0).end());
  std::vector<double> hi = lo;
  for (std::size_t i = 1; i < reference.rows(); ++i) {
    const auto r = reference.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], r[k]);
      hi[k] = std::max(hi[k], r[k]);
    }
  }
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng, lo = std::move(lo), hi = std::move(hi)]() -> std::optional<std::vector<double>> {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> x(lo.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = lo[k] + (hi[k] - lo[k]) * unit(*rng);
    return x;
  };
}

}  // namespace knot
