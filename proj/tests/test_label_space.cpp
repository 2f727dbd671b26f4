#include <doctest.h>

#include <cmath>

#include "knot/io.hpp"
#include "knot/label_space.hpp"
#include "test_util.hpp"

using namespace knot;

TEST_SUITE("label_space") {

TEST_CASE("SA cost is |i - j| with C_M = 4") {
  const auto sa = builtin_space("SA");
  CHECK(sa.size() == 5);
  CHECK(sa.dim() == 1);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(sa.cost()(i, j) == std::abs(static_cast<double>(i) - static_cast<double>(j)));
  CHECK(sa.max_cost() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("NLI costs") {
  const auto nli = builtin_space("NLI");
  CHECK(nli.size() == 3);
  CHECK(nli.dim() == 3);
  const auto e = nli.index_of("entailment");
  const auto n = nli.index_of("neutral");
  const auto c = nli.index_of("contradiction");
  CHECK(std::abs(nli.cost()(e, c) - std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(nli.cost()(e, n) - std::sqrt(1.5)) < 1e-12);
  CHECK(nli.cost()(e, c) > nli.cost()(e, n));
  CHECK(std::abs(nli.max_cost() - std::sqrt(2.0)) < 1e-12);
}

TEST_CASE("ERC anger to happiness") {
  const auto erc = builtin_space("ERC");
  CHECK(erc.size() == 5);
  CHECK(erc.dim() == 2);
  const auto a = erc.index_of("anger");
  const auto h = erc.index_of("happiness");
  CHECK(std::abs(erc.cost()(a, h) - std::sqrt(2.05)) < 1e-12);
  const auto& origin = erc.coords()[erc.index_of("no-emotion")];
  CHECK(origin == Coord{0.0, 0.0});
}

TEST_CASE("built-in spaces are metrics") {
  for (const char* task : {"SA", "ERC", "NLI"}) {
    CAPTURE(task);
    const auto s = builtin_space(task);
    const auto& c = s.cost();
    const auto n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(c(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(c(i, j) == c(j, i));
        for (std::size_t k = 0; k < n; ++k) CHECK(c(i, k) <= c(i, j) + c(j, k) + 1e-15);
      }
    }
  }
}

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(build_space("x", {"a"}, {{0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(build_space("x", {"a", "a"}, {{0.0}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(build_space("x", {"a", "b"}, {{0.0}, {1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(build_space("x", {"a", "b"}, {{0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(build_space("x", {"a", "b"}, {{0.0}, {NAN}}), std::invalid_argument);
  CHECK_THROWS_AS(builtin_space("POS"), std::invalid_argument);
  CHECK_THROWS_AS(builtin_space("SA").index_of("6"), std::out_of_range);
}

TEST_CASE("JSON round trip and file loading") {
  const auto erc = builtin_space("ERC");
  const auto back = label_space_from_json(to_json(erc));
  CHECK(back.name() == erc.name());
  CHECK(back.labels() == erc.labels());
  CHECK(back.coords() == erc.coords());
  CHECK(back.cost() == erc.cost());

  const auto dir = test::scratch_dir("label_space");
  write_json_atomic(dir / "custom.json",
                    {{"name", "tri"}, {"labels", {"a", "b", "c"}}, {"coords", {{0, 0}, {3, 0}, {0, 4}}}});
  const auto tri = load_label_space(dir / "custom.json");
  CHECK(tri.cost()(1, 2) == doctest::Approx(5.0));
  CHECK(tri.max_cost() == doctest::Approx(5.0));
  CHECK_THROWS(load_label_space(dir / "missing.json"));
}

}
