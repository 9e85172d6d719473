#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qrambench/benchmark.hpp"
#include "qrambench/fit.hpp"

using namespace qrambench;

TEST_SUITE("fit") {
  TEST_CASE("power law recovers the generating law") {
    std::vector<FitPoint> pts;
    for (int n = 2; n <= 15; ++n) pts.push_back({double(n), 0.001 * std::pow(n, 1.9)});
    const PowerLawFit f = fit_power_law(pts);
    CHECK(std::abs(f.exponent - 1.9) < 1e-6);
    CHECK(f.prefactor == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(f.r2 == doctest::Approx(1.0));
  }

  TEST_CASE("fit preconditions") {
    CHECK_THROWS_AS(fit_power_law({{1, 0.1}, {2, 0.2}}), DomainError);
    CHECK_THROWS_AS(fit_power_law({{1, 0.1}, {2, 0.0}, {3, 0.3}}), DomainError);
  }

  TEST_CASE("max feasible n") {
    const PowerLawFit f{2.0, 0.001, 1.0};
    CHECK(max_feasible_n(f, 0.1) == 10);  // 0.001 * 10^2 = 0.1
    CHECK(max_feasible_n(f, 0.0999) == 9);
    CHECK(max_feasible_n(f, 0.0005) == 0);
  }

  TEST_CASE("linear regression") {
    const LinearFit l = fit_linear({1, 2, 3}, {3, 5, 7});
    CHECK(l.slope == doctest::Approx(2.0));
    CHECK(l.intercept == doctest::Approx(1.0));
    CHECK(l.r2 == doctest::Approx(1.0));
  }
}

TEST_SUITE("benchmark") {
  TEST_CASE("region classification") {
    CHECK(region_x(10, 1e-6) == doctest::Approx(0.1024));
    CHECK(classify_region(10, 1e-6) == Region::I);
    CHECK(region_x(14, 1e-4) == doctest::Approx(321.1264));
    CHECK(classify_region(14, 1e-4) == Region::III);
    CHECK(region_x(12, 1e-5) == doctest::Approx(5.89824));
    CHECK(classify_region(12, 1e-5) == Region::II);
    // Boundaries: x = 1 and x = 256 belong to region II.
    CHECK(classify_region(1, 0.5) == Region::II);
    CHECK(classify_region(4, 1.0) == Region::II);  // x = 16*16 = 256
  }

  TEST_CASE("zero repetitions give no samples") {
    BenchConfig c;
    c.repetitions = 0;
    CHECK(measure_static({6}, {4}, c).empty());
  }

  TEST_CASE("static costs are flat in n and split memory") {
    BenchConfig c;
    c.shots = 50;
    const auto s = measure_static({6, 8, 10}, {8}, c);
    REQUIRE(s.size() == 3);
    for (const auto& x : s) {
      CHECK(x.wall_time > 0.0);
      CHECK(x.branch_memory == doctest::Approx(s[0].branch_memory));
      CHECK(x.table_memory == doctest::Approx(4.0 * std::ldexp(1.0, static_cast<int>(x.n))));
    }
    CHECK_THROWS_AS(measure_static({3}, {16}, c), DomainError);
  }

  TEST_CASE("dynamic costs need a baseline and are reproducible") {
    BenchConfig c;
    c.shots = 10;
    c.repetitions = 1;
    const auto base = measure_static({6}, {kFullBranchSize}, c);
    const auto a = measure_dynamic({6}, {1e-3}, kFullBranchSize, Mode::Pruned, c, &base);
    const auto b = measure_dynamic({6}, {1e-3}, kFullBranchSize, Mode::Pruned, c, &base);
    REQUIRE(a.size() == 1);
    CHECK(a[0].delta_memory.has_value());
    CHECK(a[0].unreliable_branches == b[0].unreliable_branches);
    CHECK(a[0].peak_memory == b[0].peak_memory);
    CHECK(a[0].region == classify_region(6, 1e-3));
    const std::vector<CostSample> none;
    CHECK_THROWS_AS(measure_dynamic({6}, {1e-3}, kFullBranchSize, Mode::Pruned, c, &none), DomainError);
  }

  TEST_CASE("mode comparison") {
    BenchConfig c;
    c.shots = 5;
    c.repetitions = 1;
    const auto p = measure_dynamic({5}, {1e-3}, kFullBranchSize, Mode::Pruned, c);
    const auto same = compare_modes(p, p);
    REQUIRE(same.ratios.size() == 1);
    CHECK(same.ratios[0].time_ratio == 1.0);
    CHECK(same.ratios[0].memory_ratio == 1.0);
    const auto miss = compare_modes({}, p);
    CHECK(miss.ratios.empty());
    CHECK(miss.warnings.size() == 1);
  }

  TEST_CASE("csv round trip") {
    BenchConfig c;
    c.shots = 5;
    c.repetitions = 1;
    const auto base = measure_static({5}, {kFullBranchSize}, c);
    auto rows = measure_dynamic({5}, {1e-3}, kFullBranchSize, Mode::Full, c, &base);
    rows.insert(rows.begin(), base.begin(), base.end());
    std::stringstream ss;
    write_csv(ss, rows);
    const auto back = read_csv(ss);
    REQUIRE(back.size() == rows.size());
    CHECK(back[1].mode == Mode::Full);
    CHECK(back[1].delta_memory.has_value());
    CHECK_FALSE(back[0].delta_memory.has_value());
    CHECK(back[1].peak_memory == doctest::Approx(rows[1].peak_memory));
  }
}
