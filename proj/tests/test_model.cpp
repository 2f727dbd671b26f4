#include <doctest.h>

#include <cmath>
#include <random>

#include "knot/distillation.hpp"
#include "knot/model.hpp"
#include "test_util.hpp"

using namespace knot;

namespace {

const LabelSpace& sa() {
  static const LabelSpace s = builtin_space("SA");
  return s;
}

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

LinearSoftmaxClassifier random_model(std::uint64_t seed, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  LinearSoftmaxClassifier m(sa(), 4);
  m.weights().data() = gaussian(20, rng, sd);
  m.bias() = gaussian(5, rng, sd);
  return m;
}

// Flattened parameter gradient: W row-major, then b.
std::vector<double> flatten(const ParamGrad& g) {
  std::vector<double> out(g.dW.data());
  out.insert(out.end(), g.db.begin(), g.db.end());
  return out;
}

std::vector<double> param_fd(const LinearSoftmaxClassifier& m,
                             const std::function<double(const LinearSoftmaxClassifier&)>& loss, double h) {
  std::vector<double> out;
  const std::size_t nw = m.weights().data().size();
  for (std::size_t i = 0; i < nw + m.bias().size(); ++i) {
    auto up = m, dn = m;
    double& u = i < nw ? up.weights().data()[i] : up.bias()[i - nw];
    double& d = i < nw ? dn.weights().data()[i] : dn.bias()[i - nw];
    u += h;
    d -= h;
    out.push_back((loss(up) - loss(dn)) / (2.0 * h));
  }
  return out;
}

LabeledDataset two_blobs(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  LabeledDataset d{FeatureMatrix(2), {}};
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double m = c == 0 ? -2.0 : 2.0;
      const std::vector<double> x{m + g(rng), m + g(rng)};
      d.x.push_back(x);
      d.y.push_back(c);
    }
  }
  return d;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("forward examples") {
  LinearSoftmaxClassifier m(sa(), 3);
  const std::vector<double> x{1.0, -2.0, 0.5};
  for (double p : m.forward(x)) CHECK(std::abs(p - 0.2) < 1e-15);
  m.bias()[0] = 50.0;
  CHECK(m.forward(x)[0] > 1.0 - 1e-9);
  CHECK_THROWS_AS(m.forward(std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(LinearSoftmaxClassifier(sa(), 0), std::invalid_argument);
}

TEST_CASE("forward always yields a distribution") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    LinearSoftmaxClassifier m(sa(), 6);
    m.weights().data() = gaussian(30, rng, 10.0);
    m.bias() = gaussian(5, rng, 10.0);
    CHECK_NOTHROW(m.forward(gaussian(6, rng, 10.0)));
  }
}

TEST_CASE("forward is invariant to a common bias shift") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    auto m = random_model(100 + t);
    auto shifted = m;
    for (auto& b : shifted.bias()) b += 7.25;
    const auto x = gaussian(4, rng);
    const auto p = m.forward(x), q = shifted.forward(x);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("random_init is seeded and small") {
  const auto a = LinearSoftmaxClassifier::random_init(sa(), 8, 5);
  const auto b = LinearSoftmaxClassifier::random_init(sa(), 8, 5);
  const auto c = LinearSoftmaxClassifier::random_init(sa(), 8, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double w : a.weights().data()) CHECK(std::abs(w) < 0.06);
}

TEST_CASE("constant probability gradients vanish") {
  const auto m = random_model(3);
  const std::vector<double> x{0.3, -1.0, 2.0, 0.7};
  const auto g = m.backward_from_prob_grad(x, std::vector<double>(5, 3.5));
  for (double v : flatten(g)) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("saturated outputs give vanishing gradients") {
  LinearSoftmaxClassifier m(sa(), 2);
  m.bias()[3] = 1000.0;
  const auto g = m.backward_from_prob_grad(std::vector<double>{1.0, 1.0}, std::vector<double>{1, -2, 3, -4, 5});
  for (double v : flatten(g)) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("backward matches finite differences of a linear probability loss") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_model(200 + t);
    const auto x = gaussian(4, rng);
    const auto c = gaussian(5, rng);
    const auto loss = [&](const LinearSoftmaxClassifier& mm) {
      const auto p = mm.forward(x);
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += c[i] * p[i];
      return s;
    };
    const auto g = flatten(m.backward_from_prob_grad(x, c));
    CHECK(test::rel_error(g, param_fd(m, loss, 1e-6)) < 1e-4);
  }
}

TEST_CASE("full chain matches finite differences") {
  std::mt19937_64 rng(5);
  SinkhornConfig cfg;
  cfg.epsilon = 0.01;
  for (auto div : {Divergence::Sinkhorn, Divergence::KL}) {
    for (int t = 0; t < 10; ++t) {
      const auto m = random_model(300 + t);
      const auto x = gaussian(4, rng);
      const std::vector<Distribution> ts{test::random_simplex(5, rng), test::random_simplex(5, rng)};
      const std::vector<double> w{0.7, 1.3};
      const auto loss = [&](const LinearSoftmaxClassifier& mm) {
        return ensemble_loss(mm.forward(x), ts, w, div, sa().cost(), cfg);
      };
      const auto dp = ensemble_grad(m.forward(x), ts, w, div, sa().cost(), cfg);
      const auto g = flatten(m.backward_from_prob_grad(x, dp));
      CHECK(test::rel_error(g, param_fd(m, loss, 1e-5)) < 1e-3);
    }
  }
}

TEST_CASE("predict_argmax") {
  LinearSoftmaxClassifier m(sa(), 2);
  CHECK(m.predict_argmax(std::vector<double>{0.5, 0.5}) == 0);
  m.bias()[4] = 3.0;
  CHECK(m.predict_argmax(std::vector<double>{0.5, 0.5}) == 4);
}

TEST_CASE("CE training memorizes a single sample") {
  LabeledDataset d{FeatureMatrix(3), {3}};
  d.x.push_back(std::vector<double>{0.2, -0.4, 1.0});
  LinearSoftmaxClassifier m(sa(), 3);
  OptimizerConfig opt{0.5, 1, 200, 0};
  train_ce(m, d, opt);
  CHECK(m.forward(d.x.row(0))[3] > 0.99);
}

TEST_CASE("CE training separates two blobs") {
  const auto bin = build_space("bin", {"neg", "pos"}, {{0.0}, {1.0}});
  const auto train = two_blobs(500, 6);
  const auto test = two_blobs(500, 7);
  LinearSoftmaxClassifier m(bin, 2);
  OptimizerConfig opt{0.1, 32, 10, 0};
  const auto h = train_ce(m, train, opt);
  std::size_t right = 0;
  for (std::size_t i = 0; i < test.size(); ++i) right += m.predict_argmax(test.x.row(i)) == test.y[i];
  CHECK(static_cast<double>(right) / test.size() >= 0.98);
  REQUIRE(h.mean_loss.size() == 10);
  for (std::size_t e = 1; e < h.mean_loss.size(); ++e) CHECK(h.mean_loss[e] <= 1.05 * h.mean_loss[e - 1]);
}

TEST_CASE("CE training with zero epochs is a no-op") {
  const auto train = two_blobs(20, 8);
  LinearSoftmaxClassifier m(build_space("bin", {"neg", "pos"}, {{0.0}, {1.0}}), 2);
  const auto copy = m;
  OptimizerConfig opt{0.1, 8, 0, 0};
  train_ce(m, train, opt);
  CHECK(m == copy);
}

TEST_CASE("CE training errors") {
  LinearSoftmaxClassifier m(sa(), 2);
  OptimizerConfig opt;
  CHECK_THROWS_AS(train_ce(m, LabeledDataset{FeatureMatrix(2), {}}, opt), std::invalid_argument);
  LabeledDataset bad{FeatureMatrix(2), {7}};
  bad.x.push_back(std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(train_ce(m, bad, opt), std::invalid_argument);
  opt.learning_rate = 0.0;
  CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
}

TEST_CASE("model JSON round trip") {
  const auto m = random_model(9);
  const auto back = model_from_json(to_json(m));
  CHECK(back == m);
  CHECK(back.space().cost() == m.space().cost());
  auto j = to_json(m);
  j["space"] = "SA";
  CHECK(model_from_json(j) == m);
  j["b"] = std::vector<double>{1, 2};
  CHECK_THROWS(model_from_json(j));
  const auto dir = test::scratch_dir("model");
  save_model(dir / "m.json", m);
  CHECK(load_model(dir / "m.json") == m);
}

}
