#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "qrambench/dense_oracle.hpp"
#include "qrambench/engine.hpp"
#include "qrambench/fit.hpp"

using namespace qrambench;

namespace {

Branch basis(std::uint64_t a, std::uint64_t d, Complex amp = 1.0) {
  Branch b;
  b.bus_address = a;
  b.bus_data = d;
  b.amp = amp;
  return b;
}

bool same_state(SparseState a, SparseState b, double tol = 1e-10) {
  a.canonicalize();
  b.canonicalize();
  if (a.size() != b.size()) return false;
  a.sort_by_label();
  b.sort_by_label();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.branches()[i].same_label(b.branches()[i])) return false;
    if (std::abs(a.branches()[i].amp - b.branches()[i].amp) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("query_engine") {
  TEST_CASE("schedule length and stages") {
    for (std::uint32_t n = 1; n <= 8; ++n) {
      const QuerySchedule s = build_schedule(TreeShape(n, 1));
      CHECK(s.length() == n * n + 3 * n + 1);
      CHECK(s.stage_length(Stage::AddressSetting) == n * (n + 1) / 2);
      CHECK(s.stage_length(Stage::DataFetch) == 2 * n + 1);
      CHECK(s.stage_length(Stage::Uncompute) == n * (n + 1) / 2);
    }
    CHECK(build_schedule(TreeShape(1, 1)).length() == 5);
    CHECK(build_schedule(TreeShape(3, 1)).length() == 19);
  }

  TEST_CASE("uncompute mirrors address setting") {
    for (std::uint32_t n = 1; n <= 6; ++n) {
      const QuerySchedule s = build_schedule(TreeShape(n, 1));
      const std::uint32_t a = s.stage_length(Stage::AddressSetting);
      for (std::uint32_t i = 0; i < a; ++i) {
        auto fwd = s.steps[i].ops;
        std::reverse(fwd.begin(), fwd.end());
        CHECK(s.steps[s.length() - 1 - i].ops == fwd);
      }
    }
  }

  TEST_CASE("noiseless query examples") {
    const TreeShape shape(3, 1);
    std::vector<std::uint32_t> d(8, 0);
    d[5] = 1;
    d[2] = 1;
    const DataTable table(shape, d);
    const QuerySchedule sched = build_schedule(shape);
    SparseState in;
    in.add(basis(5, 0));
    auto out = run_noiseless(in, table, sched);
    REQUIRE(out.size() == 1);
    CHECK(out.branches()[0].bus_data == 1);
    SparseState in1;
    in1.add(basis(5, 1));
    CHECK(run_noiseless(in1, table, sched).branches()[0].bus_data == 0);
    SparseState sup;
    sup.add(basis(2, 0, std::sqrt(0.5)));
    sup.add(basis(6, 0, std::sqrt(0.5)));
    SparseState want;
    want.add(basis(2, 1, std::sqrt(0.5)));
    want.add(basis(6, 0, std::sqrt(0.5)));
    CHECK(same_state(run_noiseless(sup, table, sched), want));
  }

  TEST_CASE("noiseless round trip and idle trees") {
    for (std::uint32_t n = 1; n <= 9; ++n) {
      const TreeShape shape(n, 3);
      Rng rng(n);
      const DataTable table = DataTable::random(shape, rng);
      const QuerySchedule sched = build_schedule(shape);
      const SparseState in = haar_input(shape, std::min<std::uint64_t>(shape.cells(), 32), rng);
      const SparseState once = run_noiseless(in, table, sched);
      CHECK(once.size() == in.size());
      for (const auto& b : once.branches()) CHECK(b.tree.idle());
      CHECK(same_state(once, ideal_output(in, table)));
      CHECK(same_state(run_noiseless(once, table, sched), in));
    }
  }

  TEST_CASE("table length mismatch") {
    const QuerySchedule sched = build_schedule(TreeShape(3, 1));
    const DataTable table = DataTable::zeros(TreeShape(2, 1));
    CHECK_THROWS(run_noiseless(uniform_input(TreeShape(3, 1), 8), table, sched));
  }

  TEST_CASE("zero noise equals the noiseless query in both modes") {
    const TreeShape shape(4, 1);
    Rng rng(2);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 16, rng);
    const NoiseModel quiet = make_noise_model("depolarizing", 0.0, 0.0, NoiseScope::AllQudits);
    for (Mode m : {Mode::Full, Mode::Pruned}) {
      RunOptions o;
      o.mode = m;
      const ShotOutcome r = run_noisy(in, table, sched, quiet, rng, o);
      CHECK(r.faults.empty());
      CHECK(r.unreliable.empty());
      CHECK(r.fidelity == 1.0);
      CHECK(same_state(r.final, run_noiseless(in, table, sched)));
    }
  }

  TEST_CASE("forced fault at (1,0) on n = 2 agrees with the dense oracle") {
    const TreeShape shape(2, 1);
    Rng rng(6);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = uniform_input(shape, 4);
    const NoiseModel model = make_noise_model("depolarizing", 0.1, 0.0, NoiseScope::AllQudits);
    const DenseQueryOracle oracle(sched, table);
    bool saw_quarter = false;
    for (std::uint32_t t = 0; t < sched.length(); ++t)
      for (std::uint32_t u = 1; u <= 8; ++u) {
        std::vector<FaultEvent> f{forced_fault(NodeId{1, 0}, Register::Address, t, u)};
        auto fd = f;
        RunOptions o;
        const ShotOutcome r = run_with_faults(in, table, sched, model, f, o);
        CHECK(r.unreliable.to_set() == std::set<Address>{0, 1});
        const DenseState d = oracle.run(in, model, fd);
        CHECK(max_abs_difference(expand(r.final, d.layout), d) < 1e-12);
        o.mode = Mode::Full;
        const ShotOutcome full = run_with_faults(in, table, sched, model, f, o);
        CHECK(full.fidelity == doctest::Approx(r.fidelity).epsilon(1e-12));
        saw_quarter = saw_quarter || std::abs(r.fidelity - 0.25) < 1e-12;
      }
    CHECK(saw_quarter);
  }

  TEST_CASE("pruned equals full on random shots") {
    int shots = 0;
    for (std::uint32_t n : {2U, 3U, 5U, 7U, 10U})
      for (double eps : {1e-4, 1e-3, 1e-2}) {
        if (n == 10 && eps > 1e-3) continue;
        const TreeShape shape(n, 2);
        Rng rng(n * 31 + static_cast<std::uint64_t>(eps * 1e5));
        const DataTable table = DataTable::random(shape, rng);
        const QuerySchedule sched = build_schedule(shape);
        const SparseState in = haar_input(shape, std::min<std::uint64_t>(shape.cells(), 8), rng);
        for (const char* ch : {"depolarizing", "damping", "heating"}) {
          const NoiseModel model = make_noise_model(ch, eps, 0.0, NoiseScope::AllQudits);
          for (int s = 0; s < 5; ++s, ++shots) {
            Rng fr = shot_rng(n, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(eps * 1e6));
            const auto faults = sample_faults(model, sched.length(), shape, fr);
            RunOptions o;
            o.mode = Mode::Full;
            const ShotOutcome a = run_with_faults(in, table, sched, model, faults, o);
            o.mode = Mode::Pruned;
            const ShotOutcome b = run_with_faults(in, table, sched, model, faults, o);
            CHECK(same_state(a.final, b.final));
            CHECK(a.fidelity == doctest::Approx(b.fidelity).epsilon(1e-10));
          }
        }
      }
    CHECK(shots >= 200);
  }

  TEST_CASE("reliable branches carry the right data and the shared tree") {
    const TreeShape shape(5, 2);
    Rng rng(12);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = uniform_input(shape, 32);
    const NoiseModel model = make_noise_model("depolarizing", 2e-3, 0.0, NoiseScope::AllQudits);
    for (int s = 0; s < 20; ++s) {
      Rng r = shot_rng(5, static_cast<std::uint64_t>(s));
      RunOptions o;
      const ShotOutcome out = run_noisy(in, table, sched, model, r, o);
      for (const auto& b : out.final.branches())
        if (!out.unreliable.contains(b.bus_address)) {
          CHECK(b.bus_data == table[b.bus_address]);
          CHECK(b.tree == out.ghost.tree);
        }
    }
  }

  TEST_CASE("fidelity estimates") {
    const TreeShape shape(6, 1);
    Rng rng(3);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 16, rng);
    const NoiseModel quiet = make_noise_model("depolarizing", 0.0, 0.0, NoiseScope::AllQudits);
    const auto e0 = estimate_fidelity(in, table, sched, quiet, 50, 1, Mode::Pruned);
    CHECK(e0.mean == 1.0);
    CHECK(e0.std_error == 0.0);

    // Worker count does not change results; the serial loop is the reference.
    const NoiseModel m = make_noise_model("depolarizing", 1e-3, 0.0, NoiseScope::AllQudits);
    const auto s = estimate_fidelity_serial(in, table, sched, m, 300, 9, Mode::Pruned);
    for (int w : {1, 2, 3}) {
      const auto p = estimate_fidelity(in, table, sched, m, 300, 9, Mode::Pruned, Metric::Bus, w);
      CHECK(p.mean == s.mean);
      CHECK(p.std_error == s.std_error);
    }
  }

  TEST_CASE("infidelity is linear in epsilon at small epsilon") {
    const TreeShape shape(6, 1);
    Rng rng(4);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 16, rng);
    std::vector<double> x, y;
    for (double eps : {1e-5, 1e-4, 1e-3}) {
      const NoiseModel m = make_noise_model("depolarizing", eps, 0.0, NoiseScope::AllQudits);
      const auto e = estimate_fidelity(in, table, sched, m, eps < 1e-4 ? 200000 : 20000, 21, Mode::Pruned);
      x.push_back(std::log(eps));
      y.push_back(std::log(1.0 - e.mean));
    }
    CHECK(std::abs(fit_linear(x, y).slope - 1.0) <= 0.15);
  }

  TEST_CASE("unreliable count scales as n^2 eps 2^n within a factor of two") {
    const double eps = 1e-5;
    double lo = 1e300, hi = 0.0;
    for (std::uint32_t n = 6; n <= 14; ++n) {
      const TreeShape shape(n, 1);
      const NoiseModel m = make_noise_model("depolarizing", eps, 0.0, NoiseScope::AllQudits);
      const std::uint32_t tau = schedule_length(n);
      double sum = 0.0;
      const int seeds = 400;
      for (int s = 0; s < seeds; ++s) {
        Rng r = shot_rng(n, static_cast<std::uint64_t>(s));
        std::vector<FaultSite> sites;
        for (const auto& ev : sample_faults(m, tau, shape, r)) sites.push_back(ev.site);
        sum += static_cast<double>(unreliable_set(sites, shape).count());
      }
      const double ratio = sum / seeds / (double(n) * n * eps * std::ldexp(1.0, static_cast<int>(n)));
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    CHECK(hi / lo < 2.0);
  }

  TEST_CASE("memory accounting") {
    const TreeShape shape(4, 1);
    Rng rng(7);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = uniform_input(shape, 16);
    const NoiseModel model = make_noise_model("depolarizing", 0.1, 0.0, NoiseScope::AllQudits);
    CHECK(branch_bytes(3) > branch_bytes(2));
    RunOptions o;
    o.account_memory = true;
    std::uint64_t prev = noiseless_bytes(in.size(), table);
    // Faults at deeper-to-shallower nodes enlarge the unreliable set step by step.
    std::vector<FaultEvent> f;
    for (std::uint32_t l : {4U, 3U, 2U, 1U, 0U}) {
      f.push_back(forced_fault(NodeId{l, 0}, Register::Address, 0, 1));
      const ShotOutcome r = run_with_faults(in, table, sched, model, f, o);
      CHECK(r.peak_bytes >= prev);
      prev = r.peak_bytes;
    }
  }

  TEST_CASE("data table files") {
    const TreeShape shape(4, 11);
    Rng rng(8);
    const DataTable t = DataTable::random(shape, rng);
    const auto dir = std::filesystem::temp_directory_path();
    for (const char* name : {"qrambench_table.csv", "qrambench_table.bin"}) {
      const auto p = dir / name;
      t.save(p);
      CHECK(DataTable::load(p, shape).entries() == t.entries());
      std::filesystem::remove(p);
    }
    CHECK_THROWS_AS(DataTable(shape, std::vector<std::uint32_t>(15, 0)), DomainError);
    CHECK_THROWS_AS(DataTable(TreeShape(1, 1), std::vector<std::uint32_t>{0, 2}), DomainError);
  }
}
