#include <doctest.h>

#include <cmath>
#include <map>

#include "qrambench/dense_oracle.hpp"
#include "qrambench/engine.hpp"
#include "qrambench/noise.hpp"
#include "qrambench/sparse_state.hpp"

using namespace qrambench;

namespace {

Branch bus(std::uint64_t a, std::uint64_t d, Complex amp) {
  Branch b;
  b.bus_address = a;
  b.bus_data = d;
  b.amp = amp;
  return b;
}

SparseState random_state(const TreeShape& shape, std::size_t count, Rng& rng) {
  std::normal_distribution<double> g;
  SparseState s;
  for (std::size_t i = 0; i < count; ++i) {
    Branch b = bus(rng() % shape.cells(), rng() % 2, {g(rng), g(rng)});
    if (rng() % 2) b.tree.address.set(rng() % shape.node_count(), Qutrit(1 + rng() % 2));
    s.add(b);
  }
  s.canonicalize();
  s.normalize();
  return s;
}

}  // namespace

TEST_SUITE("sparse_state") {
  TEST_CASE("node maps keep only non-idle entries") {
    AddressMap m;
    m.set(5, Qutrit::One);
    m.set(2, Qutrit::Zero);
    CHECK(m.size() == 2);
    CHECK(m.get(5) == Qutrit::One);
    CHECK(m.get(7) == Qutrit::W);
    m.set(5, Qutrit::W);
    CHECK(m.size() == 1);
    CHECK(m.entries().front().first == 2);
  }

  TEST_CASE("swap between bus data and a tree data qubit") {
    SparseState s;
    Branch b = bus(0, 1, 1.0);
    s.add(b);
    apply_permutation(s, SwapGate{Coord::bus_data(0), Coord::tree_data(NodeId{0, 0}), std::nullopt});
    REQUIRE(s.size() == 1);
    CHECK(s.branches()[0].bus_data == 0);
    CHECK(s.branches()[0].tree.data.get(0) == 1);
    CHECK(s.branches()[0].amp == Complex(1.0, 0.0));
  }

  TEST_CASE("controlled swap with an idle control acts as identity") {
    SparseState s;
    s.add(bus(1, 1, std::sqrt(0.5)));
    s.add(bus(2, 0, std::sqrt(0.5)));
    const SparseState before = s;
    for (std::uint32_t v : {1U, 2U})
      apply_permutation(s, SwapGate{Coord::bus_data(0), Coord::tree_data(NodeId{1, 0}),
                                    Condition{Coord::tree_address(NodeId{0, 0}), v}});
    CHECK(std::norm(overlap(before, s)) == doctest::Approx(1.0));
    for (const auto& b : s.branches()) CHECK(b.tree.idle());
  }

  TEST_CASE("X twice is the identity and preserves the norm") {
    Rng rng(3);
    SparseState s = random_state(TreeShape(2, 1), 6, rng);
    const SparseState before = s;
    const LocalGate x{Coord::bus_data(0), Monomial::from_matrix(pauli_x()), std::nullopt};
    apply_permutation(s, x);
    CHECK(s.norm2() == doctest::Approx(1.0).epsilon(1e-14));
    apply_permutation(s, x);
    CHECK(std::norm(overlap(before, s)) == doctest::Approx(1.0));
  }

  TEST_CASE("branching matrices are rejected") {
    Matrix h = Matrix::identity(2);
    h.m[0][0] = h.m[0][1] = h.m[1][0] = 1.0 / std::sqrt(2.0);
    h.m[1][1] = -1.0 / std::sqrt(2.0);
    CHECK_THROWS_AS(Monomial::from_matrix(h), ContractViolation);
    SparseState s;
    s.add(bus(0, 0, 1.0));
    CHECK_THROWS_AS(apply_matrix(s, Coord::bus_data(0), h), ContractViolation);
  }

  TEST_CASE("overlap basics") {
    Rng rng(5);
    const SparseState s = random_state(TreeShape(2, 1), 4, rng);
    CHECK(overlap(s, s).real() == doctest::Approx(1.0));
    CHECK(overlap(s, s).imag() == doctest::Approx(0.0));
    SparseState a, b;
    a.add(bus(1, 0, 1.0));
    b.add(bus(2, 0, 1.0));
    CHECK(std::abs(overlap(a, b)) == 0.0);
  }

  TEST_CASE("overlap matches the dense inner product and is conjugate symmetric") {
    const TreeShape shape(2, 1);
    const DenseLayout layout(shape);
    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
      const SparseState a = random_state(shape, 4, rng), b = random_state(shape, 4, rng);
      const DenseState da = expand(a, layout), db = expand(b, layout);
      Complex dense{};
      for (std::size_t i = 0; i < da.amps.size(); ++i) dense += std::conj(da.amps[i]) * db.amps[i];
      const Complex sp = overlap(a, b);
      CHECK(std::abs(sp - dense) < 1e-12);
      CHECK(std::abs(overlap(b, a) - std::conj(sp)) < 1e-12);
    }
  }

  TEST_CASE("bus fidelity with one corrupted branch of four") {
    const TreeShape shape(2, 1);
    const DataTable table = DataTable::zeros(shape);
    const SparseState input = uniform_input(shape, 4);
    const SparseState ideal = ideal_output(input, table);
    SparseState s = ideal;
    s.branches()[3].bus_data ^= 1;
    s.branches()[3].tree.address.set(0, Qutrit::One);
    const double f = bus_fidelity(s, ideal);
    CHECK(f == doctest::Approx(0.5625).epsilon(1e-12));

    // Independent route: reduced bus density matrix from the dense vector.
    const DenseLayout layout(shape);
    const DenseState d = expand(s, layout);
    std::map<std::pair<std::uint64_t, std::uint64_t>, Complex> ideal_amp;
    for (const auto& b : ideal.branches()) ideal_amp[{b.bus_address, b.bus_data}] = b.amp;
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<std::pair<std::uint64_t, Complex>>> by_bus;
    for (std::uint64_t i = 0; i < d.amps.size(); ++i)
      if (d.amps[i] != Complex{}) {
        Branch l = layout.label(i);
        Branch env = l;
        env.bus_address = env.bus_data = 0;
        by_bus[{l.bus_address, l.bus_data}].push_back({layout.index(env), d.amps[i]});
      }
    double rho = 0.0;
    for (const auto& [k1, v1] : by_bus)
      for (const auto& [k2, v2] : by_bus) {
        Complex elem{};  // rho[k1][k2] = sum_env psi(k1,env) conj(psi(k2,env))
        for (const auto& [e1, a1] : v1)
          for (const auto& [e2, a2] : v2)
            if (e1 == e2) elem += a1 * std::conj(a2);
        const Complex i1 = ideal_amp.count(k1) ? ideal_amp[k1] : Complex{};
        const Complex i2 = ideal_amp.count(k2) ? ideal_amp[k2] : Complex{};
        rho += (std::conj(i1) * elem * i2).real();
      }
    CHECK(rho == doctest::Approx(f).epsilon(1e-12));
  }

  TEST_CASE("bus fidelity of a wrong data bit is zero") {
    SparseState ideal, s;
    ideal.add(bus(1, 0, 1.0));
    s.add(bus(1, 1, 1.0));
    CHECK(bus_fidelity(s, ideal) == 0.0);
  }

  TEST_CASE("bus fidelity equals full overlap when trees are idle") {
    Rng rng(9);
    const TreeShape shape(3, 1);
    SparseState a = haar_input(shape, 8, rng), b = haar_input(shape, 8, rng);
    CHECK(bus_fidelity(a, b) == doctest::Approx(std::norm(overlap(a, b))).epsilon(1e-12));
    CHECK(full_fidelity(a, b) == doctest::Approx(std::norm(overlap(a, b))).epsilon(1e-12));
  }

  TEST_CASE("normalize") {
    SparseState s;
    s.add(bus(0, 0, 0.5));
    CHECK(s.normalize() == doctest::Approx(0.25));
    CHECK(s.branches()[0].amp.real() == doctest::Approx(1.0));
    CHECK(s.normalize() == doctest::Approx(1.0));
    SparseState z;
    CHECK_THROWS_AS(z.normalize(), NumericalError);
  }

  TEST_CASE("canonicalize merges equal labels and drops zeros") {
    SparseState s;
    s.add(bus(1, 0, 0.5));
    s.add(bus(1, 0, 0.5));
    s.add(bus(2, 0, 1e-15));
    s.canonicalize();
    REQUIRE(s.size() == 1);
    CHECK(s.branches()[0].amp.real() == doctest::Approx(1.0));
  }
}
