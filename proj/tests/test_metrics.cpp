#include <catch2/catch.hpp>

#include "huntline/metrics.hpp"

using namespace huntline;

TEST_CASE("normal_quantile hits standard values") {
  CHECK(normal_quantile(0.975) == Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_quantile(0.5) == Approx(0.0).margin(1e-12));
  CHECK(normal_quantile(0.995) == Approx(2.5758293035489004).epsilon(1e-8));
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
}

TEST_CASE("wilson_ci reproduces reference intervals at 0.1% rounding") {
  // Large-sample rows of the bundled reference table.
  auto pc = wilson_ci(626, 773);
  CHECK(round_percent(pc.first) == Approx(78.1));
  CHECK(round_percent(pc.second) == Approx(83.6));

  auto micro = wilson_ci(871, 1088);
  CHECK(round_percent(micro.first) == Approx(77.6));
  CHECK(round_percent(micro.second) == Approx(82.3));

  CHECK(round_percent(86.0 / 118.0) == Approx(72.9));
  CHECK(round_percent(159.0 / 197.0) == Approx(80.7));
  CHECK(round_percent(626.0 / 773.0) == Approx(81.0));
  CHECK(round_percent(871.0 / 1088.0) == Approx(80.1));
}

TEST_CASE("wilson_ci boundary and error cases") {
  auto zero = wilson_ci(0, 10);
  CHECK(zero.first == 0.0);
  CHECK(zero.second > 0.0);
  auto all = wilson_ci(10, 10);
  CHECK(all.second == 1.0);
  CHECK(all.first < 1.0);
  CHECK_THROWS_AS(wilson_ci(1, 0), Error);
  CHECK_THROWS_AS(wilson_ci(5, 3), Error);
}

TEST_CASE("wilson bounds satisfy the score equation") {
  // Each bound b of the Wilson interval is a root of
  //   (p - b)^2 = z^2 b (1 - b) / n
  // which gives an implementation-independent check.
  const double z = normal_quantile(0.975);
  Rng rng(99);
  for (int i = 0; i < 300; ++i) {
    std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(5000));
    std::int64_t s = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n + 1)));
    auto [lo, hi] = wilson_ci(s, n);
    const double p = static_cast<double>(s) / static_cast<double>(n);
    for (double b : {lo, hi}) {
      const double lhs = (p - b) * (p - b);
      const double rhs = z * z * b * (1.0 - b) / static_cast<double>(n);
      CHECK(lhs == Approx(rhs).margin(1e-9));
    }
    CHECK(lo <= p);
    CHECK(hi >= p);
  }
}

TEST_CASE("macro interval over phase precisions matches the reference macro row") {
  std::vector<std::pair<std::int64_t, std::int64_t>> phases = {{86, 118}, {159, 197}, {626, 773}};
  double mean = (86.0 / 118.0 + 159.0 / 197.0 + 626.0 / 773.0) / 3.0;
  CHECK(round_percent(mean) == Approx(78.2));
  auto ci = macro_proportion_ci(phases);
  CHECK(round_percent(ci.first) == Approx(74.8));
  CHECK(round_percent(ci.second) == Approx(81.6));
}

TEST_CASE("descriptive statistics conventions") {
  SECTION("mean and sample std over repeated runs") {
    std::vector<double> f1s = {0.76, 0.78, 0.80};
    CHECK(mean_of(f1s) == Approx(0.78));
    CHECK(std_of(f1s) == Approx(0.02));
    CHECK(std_of({0.5}) == 0.0);
  }
  SECTION("nearest-rank percentiles") {
    std::vector<double> costs = {1.0, 2.04, 7.82};
    CHECK(percentile_of(costs, 50) == Approx(2.04));
    CHECK(percentile_of(costs, 75) == Approx(7.82));
    CHECK(percentile_of(costs, 95) == Approx(7.82));
  }
  SECTION("median averages middles for even counts") {
    CHECK(median_of({1.0, 3.0}) == Approx(2.0));
    CHECK(median_of({1.0, 2.0, 9.0}) == Approx(2.0));
  }
  SECTION("compression ratio arithmetic") {
    CHECK(3456.0 / 887.0 == Approx(3.9).margin(0.01));
  }
}

TEST_CASE("prf counts follow the documented conventions") {
  PrfCounts exact{1, 0, 0};
  CHECK(*exact.precision() == 1.0);
  CHECK(exact.recall() == 1.0);
  CHECK(exact.f1() == 1.0);

  PrfCounts missed{0, 0, 2};
  CHECK_FALSE(missed.precision().has_value());
  CHECK(missed.recall() == 0.0);
  CHECK(missed.f1() == 0.0);

  PrfCounts vacuous{0, 0, 0};
  CHECK(*vacuous.precision() == 1.0);
  CHECK(vacuous.recall() == 1.0);

  PrfCounts half{1, 1, 1};
  CHECK(*half.precision() == Approx(0.5));
  CHECK(half.recall() == Approx(0.5));
  CHECK(half.f1() == Approx(0.5));

  PrfCounts merged = exact;
  merged.merge(half);
  CHECK(merged.tp == 2);
  CHECK(merged.fp == 1);
  CHECK(merged.fn == 1);
}
