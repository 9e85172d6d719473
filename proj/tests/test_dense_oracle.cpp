#include <doctest.h>

#include <cmath>

#include "qrambench/dense_oracle.hpp"
#include "qrambench/engine.hpp"

using namespace qrambench;

TEST_SUITE("dense_oracle") {
  TEST_CASE("layout round trip") {
    const DenseLayout layout(TreeShape(1, 1));
    CHECK(layout.dim() == 864);  // 2^(1+1) * 3^3 * 2^3
    for (std::uint64_t i = 0; i < layout.dim(); ++i) CHECK(layout.index(layout.label(i)) == i);
    CHECK_THROWS_AS(DenseLayout(TreeShape(3, 1)), DomainError);
  }

  TEST_CASE("noiseless trajectory equals the expanded sparse result") {
    const TreeShape shape(2, 1);
    Rng rng(1);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 4, rng);
    const NoiseModel quiet = make_noise_model("depolarizing", 0.0, 0.0, NoiseScope::AllQudits);
    std::vector<FaultEvent> none;
    const DenseState d = dense_trajectory(in, table, sched, quiet, none);
    CHECK(max_abs_difference(expand(run_noiseless(in, table, sched), d.layout), d) < 1e-12);
  }

  TEST_CASE("forced A1 fault at (1,0)") {
    const TreeShape shape(2, 1);
    Rng rng(2);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = uniform_input(shape, 4);
    const NoiseModel model = make_noise_model("depolarizing", 0.01, 0.0, NoiseScope::AllQudits);
    for (std::uint32_t t = 0; t < sched.length(); ++t) {
      std::vector<FaultEvent> f{forced_fault(NodeId{1, 0}, Register::Address, t, 1)};
      auto fd = f;
      RunOptions o;
      const auto sp = run_with_faults(in, table, sched, model, f, o);
      const DenseState d = dense_trajectory(in, table, sched, model, fd);
      CHECK(max_abs_difference(expand(sp.final, d.layout), d) < 1e-12);
    }
  }

  TEST_CASE("seed-matched sweep at n = 2") {
    const TreeShape shape(2, 1);
    Rng rng(3);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const DenseQueryOracle oracle(sched, table);
    for (const char* ch : {"depolarizing", "damping", "heating"}) {
      const NoiseModel model = make_noise_model(ch, 1e-2, 0.0, NoiseScope::AllQudits);
      int worst_faults = 0;
      for (std::uint64_t s = 0; s < 20U; ++s) {
        Rng ir = shot_rng(s, 0, 1);
        const SparseState in = haar_input(shape, 4, ir);
        Rng fr = shot_rng(s, 0, 2);
        auto f = sample_faults(model, sched.length(), shape, fr);
        if (f.empty()) continue;
        auto fd = f;
        worst_faults = std::max(worst_faults, static_cast<int>(f.size()));
        RunOptions o;
        const auto sp = run_with_faults(in, table, sched, model, f, o);
        const DenseState d = oracle.run(in, model, fd);
        CHECK(max_abs_difference(expand(sp.final, d.layout), d) < 1e-10);
      }
      CHECK(worst_faults > 0);
    }
  }

  TEST_CASE("exact channel fidelity") {
    const TreeShape shape(1, 1);
    Rng rng(4);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = uniform_input(shape, 2);
    const NoiseModel quiet = make_noise_model("depolarizing", 0.0, 0.0, NoiseScope::AllQudits);
    CHECK(dense_channel_fidelity(in, table, sched, quiet) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(dense_channel_fidelity(uniform_input(TreeShape(2, 1), 4), DataTable::zeros(TreeShape(2, 1)),
                                           build_schedule(TreeShape(2, 1)), quiet),
                    DomainError);
  }

  TEST_CASE("single-qubit depolarizing identity is 1 - 2p/3") {
    for (double p : {0.01, 0.05, 0.3}) {
      const std::vector<std::pair<Complex, Complex>> q{{Complex(0.6, 0.0), Complex(0.0, 0.8)}};
      CHECK(dense_identity_fidelity(q, qubit_depolarizing(p)) == doctest::Approx(1.0 - 2.0 * p / 3.0).epsilon(1e-13));
    }
  }

  TEST_CASE("Monte Carlo converges to the exact channel at n = 1") {
    const TreeShape shape(1, 1);
    Rng rng(5);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 2, rng);
    for (const char* ch : {"depolarizing", "damping", "heating"}) {
      const NoiseModel model = make_noise_model(ch, 1e-2, 0.0, NoiseScope::AllQudits);
      const double exact = dense_channel_fidelity(in, table, sched, model);
      const auto mc = estimate_fidelity(in, table, sched, model, 10000, 17, Mode::Pruned);
      CHECK(std::abs(mc.mean - exact) <= 3.0 * mc.std_error + 1e-12);
    }
  }

  TEST_CASE("fault enumeration brackets the exact channel at n = 1") {
    const TreeShape shape(1, 1);
    Rng rng(6);
    const DataTable table = DataTable::random(shape, rng);
    const QuerySchedule sched = build_schedule(shape);
    const SparseState in = haar_input(shape, 2, rng);
    for (double eps : {1e-3, 1e-2}) {
      const NoiseModel model = make_noise_model("depolarizing", eps, 0.0, NoiseScope::AllQudits);
      const double exact = dense_channel_fidelity(in, table, sched, model);
      const FidelityBracket br = enumerated_channel_fidelity(in, table, sched, model, 2);
      CHECK(br.lower <= exact + 1e-12);
      CHECK(exact <= br.upper + 1e-12);
      CHECK(br.tail_mass < 10.0 * eps * eps * eps * 1e4);
    }
    const NoiseModel biased = make_noise_model("damping", 1e-3, 0.0, NoiseScope::AllQudits);
    CHECK_THROWS_AS(enumerated_channel_fidelity(in, table, sched, biased, 2), DomainError);
  }
}
