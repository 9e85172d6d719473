#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qrambench/noise.hpp"
#include "qrambench/schedule.hpp"

using namespace qrambench;

namespace {

std::vector<Complex> mat_vec(const Matrix& m, const std::vector<Complex>& v) {
  std::vector<Complex> out(v.size());
  for (std::size_t r = 0; r < v.size(); ++r)
    for (std::size_t c = 0; c < v.size(); ++c) out[r] += m.m[r][c] * v[c];
  return out;
}

double expectation(const Matrix& m, const std::vector<Complex>& v) {
  const auto mv = mat_vec(m, v);
  Complex s{};
  for (std::size_t i = 0; i < v.size(); ++i) s += std::conj(v[i]) * mv[i];
  return s.real();
}

// Single-qudit state held on the root address qutrit (dim 3) or bus data bit (dim 2).
Coord site(int dim) { return dim == 3 ? Coord::tree_address(NodeId{0, 0}) : Coord::bus_data(0); }

SparseState embed(const std::vector<Complex>& v) {
  SparseState s;
  const Coord c = site(static_cast<int>(v.size()));
  for (std::uint32_t i = 0; i < v.size(); ++i) {
    if (v[i] == Complex{}) continue;
    Branch b;
    b.amp = v[i];
    set_coord_value(b, c, i);
    s.add(b);
  }
  return s;
}

std::vector<Complex> extract(const SparseState& s, int dim) {
  std::vector<Complex> v(static_cast<std::size_t>(dim));
  for (const auto& b : s.branches()) v[coord_value(b, site(dim))] += b.amp;
  return v;
}

}  // namespace

TEST_SUITE("noise_model") {
  TEST_CASE("qutrit depolarizing") {
    CHECK(qutrit_depolarizing(0.0).operators.size() == 1);
    const auto ch = qutrit_depolarizing(0.08);
    REQUIRE(ch.probabilities.size() == 9);
    for (std::size_t i = 1; i < 9; ++i) CHECK(ch.probabilities[i] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(qutrit_depolarizing(0.3).completeness_error() < 1e-10);
    CHECK_THROWS_AS(qutrit_depolarizing(1.5), DomainError);
  }

  TEST_CASE("completeness on the strength grid") {
    for (double e : {0.0, 0.01, 0.1, 0.5, 1.0}) {
      CHECK(qutrit_depolarizing(e).completeness_error() < 1e-10);
      CHECK(qutrit_damping(e).completeness_error() < 1e-10);
      CHECK(qutrit_heating(e).completeness_error() < 1e-10);
      CHECK(qubit_depolarizing(e).completeness_error() < 1e-10);
      CHECK(qubit_amplitude_damping(e).completeness_error() < 1e-10);
    }
  }

  TEST_CASE("clock and shift operators") {
    const Matrix a2 = qutrit_clock();
    const Complex w = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    CHECK(std::abs(a2.m[2][2] - w * w) < 1e-15);
    const Matrix a1 = qutrit_shift();
    CHECK(a1.m[1][0] == Complex(1.0, 0.0));  // W -> 0
  }

  TEST_CASE("damping and heating outcome probabilities") {
    const auto d0 = qutrit_damping(0.0);
    CHECK(d0.operators.size() == 1);
    CHECK(std::abs(d0.operators[0].m[1][1] - 1.0) < 1e-15);
    const auto d = qutrit_damping(0.36);
    const std::vector<Complex> zero{0.0, 1.0, 0.0}, w{1.0, 0.0, 0.0};
    CHECK(expectation(d.operators[1].adjoint() * d.operators[1], zero) == doctest::Approx(0.36));
    const auto h = qutrit_heating(0.5);
    CHECK(expectation(h.operators[1].adjoint() * h.operators[1], w) == doctest::Approx(0.25));
    CHECK(expectation(h.operators[2].adjoint() * h.operators[2], w) == doctest::Approx(0.25));
    CHECK(mat_vec(h.operators[1], w)[1] != Complex{});
    CHECK(mat_vec(h.operators[2], w)[2] != Complex{});
  }

  TEST_CASE("qubit depolarizing") {
    const auto c = qubit_depolarizing(0.0);
    CHECK(c.operators.size() == 1);
    CHECK(c.completeness_error() == 0.0);
  }

  TEST_CASE("fault location sampling") {
    const TreeShape s(3, 1);
    Rng rng(1);
    CHECK(sample_fault_locations(19, s, 0.0, rng).empty());
    CHECK(sample_fault_locations(19, s, 1.0, rng).size() == 19 * 2 * s.node_count());
  }

  TEST_CASE("fault count expectation at n = 8") {
    const TreeShape s(8, 1);
    const std::uint32_t tau = schedule_length(8);
    REQUIRE(tau == 89);
    const double expected = 2.0 * 511.0 * 89.0 * 1e-4;
    const int seeds = 10000;
    double sum = 0.0;
    for (int i = 0; i < seeds; ++i) {
      Rng rng = shot_rng(77, static_cast<std::uint64_t>(i));
      sum += static_cast<double>(sample_fault_locations(tau, s, 1e-4, rng).size());
    }
    const double mean = sum / seeds;
    CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(expected / seeds));
  }

  TEST_CASE("mixed-unitary application") {
    // A1 on an idle node inserts the key with value 0.
    SparseState s;
    for (std::uint64_t a = 0; a < 2; ++a) {
      Branch b;
      b.amp = std::sqrt(0.5);
      b.bus_address = a;
      s.add(b);
    }
    apply_unitary(s, Coord::tree_address(NodeId{1, 1}), qutrit_shift());
    for (const auto& b : s.branches()) CHECK(b.tree.address.get(2) == Qutrit::Zero);
    // A2 multiplies |1> by omega^2.
    SparseState t;
    Branch b;
    b.amp = 1.0;
    b.tree.address.set(0, Qutrit::One);
    t.add(b);
    apply_unitary(t, Coord::tree_address(NodeId{0, 0}), qutrit_clock());
    const Complex w = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    CHECK(std::abs(t.branches()[0].amp - w * w) < 1e-14);
    // Sampling the identity leaves the state alone; any choice preserves the norm.
    Rng rng(3);
    const auto ch = qutrit_depolarizing(0.5);
    for (int i = 0; i < 20; ++i) {
      SparseState u = s;
      const auto idx = apply_mixed_unitary(u, Coord::tree_address(NodeId{0, 0}), ch, rng);
      CHECK(u.norm2() == doctest::Approx(1.0).epsilon(1e-14));
      if (idx == 0) CHECK(std::norm(overlap(u, s)) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("quasi-measurement: qubit amplitude damping") {
    SparseState s = embed({1.0, 0.0});
    const auto ch1 = qubit_amplitude_damping(0.3);
    CHECK(quasi_measure(s, site(2), ch1, 0.99) == 0);
    CHECK(std::abs(extract(s, 2)[0] - 1.0) < 1e-14);

    const auto ch = qubit_amplitude_damping(1.0);
    const std::vector<Complex> plus{std::sqrt(0.5), std::sqrt(0.5)};
    int ones = 0;
    Rng rng(4);
    const int trials = 4000;
    for (int i = 0; i < trials; ++i) {
      SparseState t = embed(plus);
      if (quasi_measure(t, site(2), ch, rng) == 1) {
        ++ones;
        CHECK(std::abs(std::abs(extract(t, 2)[0]) - 1.0) < 1e-12);
      }
    }
    CHECK(std::abs(ones / double(trials) - 0.5) < 3.0 * std::sqrt(0.25 / trials));
  }

  TEST_CASE("quasi-measurement outcome weights match the effects") {
    const std::vector<Complex> eq{1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
    for (const auto& ch : {qutrit_damping(0.2), qutrit_heating(0.2)}) {
      const auto eff = ch.spot_effects();
      std::vector<double> p;
      for (const auto& e : eff) p.push_back(expectation(e, eq));
      double cum = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] >= -1e-12);
        if (p[i] <= 1e-12) {
          cum += p[i];
          continue;
        }
        SparseState s = embed(eq);
        CHECK(quasi_measure(s, site(3), ch, cum + 0.5 * p[i]) == i);
        const auto want = mat_vec(ch.operators[i], eq);
        double nn = 0.0;
        for (auto x : want) nn += std::norm(x);
        const auto got = extract(s, 3);
        Complex ov{};
        for (std::size_t j = 0; j < 3; ++j) ov += std::conj(want[j]) * got[j];
        CHECK(std::norm(ov) / nn == doctest::Approx(1.0));
        cum += p[i];
      }
      CHECK(cum == doctest::Approx(1.0));
    }
  }

  TEST_CASE("trajectory average reproduces the channel on one qudit") {
    struct Case {
      KrausChannel ch;
      std::vector<Complex> psi;
    };
    const double r3 = 1.0 / std::sqrt(3.0);
    std::vector<Case> cases{{qutrit_depolarizing(0.3), {r3, Complex(0, r3), -r3}},
                            {qutrit_damping(0.3), {r3, r3, Complex(0, r3)}},
                            {qutrit_heating(0.3), {Complex(0.8, 0), 0.36, 0.48}},
                            {qubit_depolarizing(0.3), {Complex(0.6, 0), Complex(0, 0.8)}}};
    for (auto& c : cases) {
      double nn = 0.0;
      for (auto x : c.psi) nn += std::norm(x);
      for (auto& x : c.psi) x /= std::sqrt(nn);
      const std::size_t d = c.psi.size();
      // Exact rho' = sum K rho K^dagger.
      std::vector<std::vector<Complex>> exact(d, std::vector<Complex>(d));
      for (const auto& k : c.ch.operators) {
        const auto kv = mat_vec(k, c.psi);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) exact[i][j] += kv[i] * std::conj(kv[j]);
      }
      std::vector<std::vector<Complex>> sum(d, std::vector<Complex>(d)), sq(d, std::vector<Complex>(d));
      Rng rng(11);
      const int shots = 20000;
      for (int s = 0; s < shots; ++s) {
        SparseState st = embed(c.psi);
        if (c.ch.kind == ChannelKind::MixedUnitary) {
          apply_mixed_unitary(st, site(static_cast<int>(d)), c.ch, rng);
        } else if (uniform01(rng) < c.ch.error_mass()) {
          quasi_measure(st, site(static_cast<int>(d)), c.ch, rng);
        } else {
          apply_matrix(st, site(static_cast<int>(d)), c.ch.operators[0]);
          st.normalize();
        }
        const auto v = extract(st, static_cast<int>(d));
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const Complex e = v[i] * std::conj(v[j]);
            sum[i][j] += e;
            sq[i][j] += Complex(e.real() * e.real(), e.imag() * e.imag());
          }
      }
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const Complex mean = sum[i][j] / double(shots);
          const double sr = std::sqrt(std::max(0.0, sq[i][j].real() / shots - mean.real() * mean.real()) / shots);
          const double si = std::sqrt(std::max(0.0, sq[i][j].imag() / shots - mean.imag() * mean.imag()) / shots);
          CHECK(std::abs(mean.real() - exact[i][j].real()) <= 3.0 * sr + 1e-12);
          CHECK(std::abs(mean.imag() - exact[i][j].imag()) <= 3.0 * si + 1e-12);
        }
    }
  }
}
