#include "qrambench/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qrambench {

namespace {

void check_strength(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

Matrix outer(int dim, int row, int col, Complex v) {
  Matrix m;
  m.dim = dim;
  m.m[row][col] = v;
  return m;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix r = a;
  for (int i = 0; i < a.dim; ++i)
    for (int j = 0; j < a.dim; ++j) r.m[i][j] += b.m[i][j];
  return r;
}

KrausChannel mixed_unitary(std::string name, int dim, double strength, std::vector<Matrix> errors) {
  KrausChannel ch;
  ch.name = std::move(name);
  ch.kind = ChannelKind::MixedUnitary;
  ch.dim = dim;
  ch.strength = strength;
  ch.unitaries.push_back(Matrix::identity(dim));
  ch.probabilities.push_back(1.0 - strength);
  if (strength > 0.0) {
    const double each = strength / static_cast<double>(errors.size());
    for (auto& u : errors) {
      ch.unitaries.push_back(u);
      ch.probabilities.push_back(each);
    }
  }
  for (std::size_t i = 0; i < ch.unitaries.size(); ++i)
    ch.operators.push_back(ch.unitaries[i].scaled(std::sqrt(ch.probabilities[i])));
  return ch;
}

}  // namespace

Matrix qutrit_shift() {
  Matrix a;
  a.dim = 3;
  a.m[0][1] = 1.0;
  a.m[1][0] = 1.0;
  a.m[2][2] = 1.0;
  return a;
}

Matrix qutrit_clock() {
  const Complex omega = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
  Matrix a;
  a.dim = 3;
  a.m[0][0] = 1.0;
  a.m[1][1] = omega;
  a.m[2][2] = omega * omega;
  return a;
}

Matrix pauli_x() {
  Matrix m;
  m.dim = 2;
  m.m[0][1] = m.m[1][0] = 1.0;
  return m;
}

Matrix pauli_y() {
  Matrix m;
  m.dim = 2;
  m.m[0][1] = Complex(0.0, -1.0);
  m.m[1][0] = Complex(0.0, 1.0);
  return m;
}

Matrix pauli_z() {
  Matrix m;
  m.dim = 2;
  m.m[0][0] = 1.0;
  m.m[1][1] = -1.0;
  return m;
}

double KrausChannel::completeness_error() const {
  Matrix sum;
  sum.dim = dim;
  for (const auto& k : operators) sum = add(sum, k.adjoint() * k);
  double err = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) err = std::max(err, std::abs(sum.m[i][j] - (i == j ? 1.0 : 0.0)));
  return err;
}

std::vector<Matrix> KrausChannel::spot_effects() const {
  if (kind != ChannelKind::Biased) throw ContractViolation("spot effects are defined for biased channels only");
  if (!(strength > 0.0)) throw ContractViolation("a zero-strength channel has no noise spots");
  std::vector<Matrix> effects;
  const Matrix k0 = operators[0].adjoint() * operators[0];
  effects.push_back(add(k0, Matrix::identity(dim).scaled(-(1.0 - strength))).scaled(1.0 / strength));
  for (std::size_t i = 1; i < operators.size(); ++i)
    effects.push_back((operators[i].adjoint() * operators[i]).scaled(1.0 / strength));
  return effects;
}

std::vector<Complex> KrausChannel::default_diagonal() const {
  std::vector<Complex> d(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) d[static_cast<std::size_t>(i)] = operators[0].m[i][i];
  return d;
}

KrausChannel qutrit_depolarizing(double eps) {
  check_strength(eps, "qutrit depolarizing strength");
  const Matrix a1 = qutrit_shift();
  const Matrix a2 = qutrit_clock();
  const Matrix a1sq = a1 * a1;
  const Matrix a2sq = a2 * a2;
  return mixed_unitary("qutrit-depolarizing", 3, eps,
                       {a1, a2, a1sq, a2sq, a1 * a2, a1sq * a2, a1 * a2sq, a1sq * a2sq});
}

KrausChannel qutrit_damping(double eps) {
  check_strength(eps, "qutrit damping strength");
  KrausChannel ch;
  ch.name = "qutrit-damping";
  ch.kind = ChannelKind::Biased;
  ch.dim = 3;
  ch.strength = eps;
  Matrix k0 = outer(3, 0, 0, 1.0);
  k0.m[1][1] = k0.m[2][2] = std::sqrt(1.0 - eps);
  ch.operators.push_back(k0);
  if (eps > 0.0) {
    ch.operators.push_back(outer(3, 0, 1, std::sqrt(eps)));
    ch.operators.push_back(outer(3, 0, 2, std::sqrt(eps)));
  }
  return ch;
}

KrausChannel qutrit_heating(double eps) {
  check_strength(eps, "qutrit heating strength");
  KrausChannel ch;
  ch.name = "qutrit-heating";
  ch.kind = ChannelKind::Biased;
  ch.dim = 3;
  ch.strength = eps;
  Matrix k0 = outer(3, 0, 0, std::sqrt(1.0 - eps));
  k0.m[1][1] = k0.m[2][2] = 1.0;
  ch.operators.push_back(k0);
  if (eps > 0.0) {
    ch.operators.push_back(outer(3, 1, 0, std::sqrt(eps / 2.0)));
    ch.operators.push_back(outer(3, 2, 0, std::sqrt(eps / 2.0)));
  }
  return ch;
}

KrausChannel qubit_depolarizing(double p) {
  check_strength(p, "qubit depolarizing probability");
  return mixed_unitary("qubit-depolarizing", 2, p, {pauli_x(), pauli_y(), pauli_z()});
}

KrausChannel qubit_amplitude_damping(double gamma) {
  check_strength(gamma, "amplitude damping rate");
  KrausChannel ch;
  ch.name = "qubit-amplitude-damping";
  ch.kind = ChannelKind::Biased;
  ch.dim = 2;
  ch.strength = gamma;
  Matrix e0 = outer(2, 0, 0, 1.0);
  e0.m[1][1] = std::sqrt(1.0 - gamma);
  ch.operators.push_back(e0);
  if (gamma > 0.0) ch.operators.push_back(outer(2, 0, 1, std::sqrt(gamma)));
  return ch;
}

double NoiseSource::rate() const {
  if (address) return address->error_mass();
  if (data) return data->error_mass();
  return 0.0;
}

const KrausChannel& NoiseSource::channel_for(Register reg) const {
  const auto& ch = reg == Register::Address ? address : data;
  if (!ch) throw ContractViolation("noise source has no channel for this register");
  return *ch;
}

bool NoiseSource::biased() const {
  return (address && address->kind == ChannelKind::Biased) || (data && data->kind == ChannelKind::Biased);
}

bool NoiseModel::noiseless() const {
  return std::all_of(sources.begin(), sources.end(), [](const NoiseSource& s) { return s.rate() <= 0.0; });
}

bool NoiseModel::has_biased() const {
  return std::any_of(sources.begin(), sources.end(),
                     [](const NoiseSource& s) { return s.biased() && s.rate() > 0.0; });
}

NoiseModel make_noise_model(const std::string& channel, double epsilon, double gamma, NoiseScope scope) {
  NoiseModel model;
  model.scope = scope;
  NoiseSource primary;
  if (channel == "depolarizing") {
    primary.address = qutrit_depolarizing(epsilon);
    primary.data = qubit_depolarizing(epsilon);
  } else if (channel == "damping") {
    primary.address = qutrit_damping(epsilon);
  } else if (channel == "heating") {
    primary.address = qutrit_heating(epsilon);
  } else if (channel == "qubit-depolarizing") {
    primary.data = qubit_depolarizing(epsilon);
  } else {
    throw DomainError("unknown channel '" + channel + "'");
  }
  if (scope == NoiseScope::AddressOnly) primary.data.reset();
  model.sources.push_back(std::move(primary));
  if (gamma > 0.0) {
    NoiseSource damping;
    damping.address = qutrit_damping(gamma);
    model.sources.push_back(std::move(damping));
  }
  return model;
}

Coord coord_of(const FaultSite& site) {
  return site.reg == Register::Address ? Coord{Coord::Kind::TreeAddress, flat_index(site.node), 0}
                                       : Coord{Coord::Kind::TreeData, flat_index(site.node), site.bit};
}

std::vector<FaultSite> sample_fault_sites(std::uint32_t schedule_length, const TreeShape& shape, double rate,
                                          bool address_qudits, bool data_qudits, Rng& rng) {
  check_strength(rate, "fault rate");
  std::vector<FaultSite> sites;
  const std::uint64_t nodes = shape.node_count();
  const std::uint64_t addr_sites = address_qudits ? nodes : 0;
  const std::uint64_t data_sites = data_qudits ? nodes * shape.k : 0;
  const std::uint64_t per_step = addr_sites + data_sites;
  const std::uint64_t total = per_step * schedule_length;
  if (rate <= 0.0 || total == 0) return sites;

  auto emit = [&](std::uint64_t s) {
    FaultSite f;
    f.timestep = static_cast<std::uint32_t>(s / per_step);
    std::uint64_t r = s % per_step;
    if (r < addr_sites) {
      f.reg = Register::Address;
      f.node = node_from_flat(r);
    } else {
      r -= addr_sites;
      f.reg = Register::Data;
      f.node = node_from_flat(r / shape.k);
      f.bit = static_cast<std::uint32_t>(r % shape.k);
    }
    sites.push_back(f);
  };

  if (rate >= 1.0) {
    sites.reserve(total);
    for (std::uint64_t s = 0; s < total; ++s) emit(s);
    return sites;
  }
  // Geometric gaps between successes of the Bernoulli sequence.
  std::geometric_distribution<std::uint64_t> gap(rate);
  std::uint64_t s = gap(rng);
  while (s < total) {
    emit(s);
    const std::uint64_t g = gap(rng);
    if (g >= total - s) break;
    s += g + 1;
  }
  return sites;
}

std::vector<FaultSite> sample_fault_locations(std::uint32_t schedule_length, const TreeShape& shape, double rate,
                                              Rng& rng) {
  return sample_fault_sites(schedule_length, shape, rate, true, true, rng);
}

std::vector<FaultEvent> sample_faults(const NoiseModel& model, std::uint32_t schedule_length,
                                      const TreeShape& shape, Rng& rng) {
  std::vector<FaultEvent> events;
  for (std::size_t si = 0; si < model.sources.size(); ++si) {
    const auto& src = model.sources[si];
    const double rate = src.rate();
    if (rate <= 0.0) continue;
    const bool data = src.data.has_value() && model.scope == NoiseScope::AllQudits;
    auto sites = sample_fault_sites(schedule_length, shape, rate, src.address.has_value(), data, rng);
    for (const auto& site : sites) {
      FaultEvent ev;
      ev.site = site;
      ev.source = static_cast<std::uint16_t>(si);
      const auto& ch = src.channel_for(site.reg);
      if (ch.kind == ChannelKind::MixedUnitary) {
        // Conditional on a fault, the error unitary is uniform over U_1..U_m.
        const auto m = ch.unitaries.size() - 1;
        ev.resolution = Resolution::SampledUnitary;
        ev.index = 1 + static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
      } else {
        ev.resolution = Resolution::Pending;
        ev.draw = uniform01(rng);
      }
      events.push_back(ev);
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const FaultEvent& a, const FaultEvent& b) { return a.site.timestep < b.site.timestep; });
  return events;
}

void apply_unitary(SparseState& state, const Coord& target, const Matrix& unitary) {
  apply_matrix(state, target, unitary);
}

std::size_t apply_mixed_unitary(SparseState& state, const Coord& target, const KrausChannel& channel, Rng& rng) {
  if (channel.kind != ChannelKind::MixedUnitary) throw ContractViolation("channel is not mixed-unitary");
  std::discrete_distribution<std::size_t> pick(channel.probabilities.begin(), channel.probabilities.end());
  const std::size_t i = pick(rng);
  if (i != 0) apply_unitary(state, target, channel.unitaries[i]);
  return i;
}

std::size_t outcome_from_weights(std::span<const double> weights, double draw) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw NumericalError("all quasi-measurement outcomes have zero probability");
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    acc += weights[i] / total;
    if (draw < acc) return i;
  }
  return last;
}

std::size_t quasi_measure(SparseState& state, const Coord& target, const KrausChannel& channel, double draw) {
  const auto effects = channel.spot_effects();
  std::vector<double> weights(effects.size(), 0.0);
  for (const auto& b : state.branches()) {
    const auto v = coord_value(b, target);
    const double p = std::norm(b.amp);
    for (std::size_t i = 0; i < effects.size(); ++i) weights[i] += p * effects[i].m[v][v].real();
  }
  const std::size_t outcome = outcome_from_weights(weights, draw);
  apply_permutation(state, LocalGate{target, Monomial::from_matrix(channel.operators[outcome]), std::nullopt});
  state.normalize();
  return outcome;
}

std::size_t quasi_measure(SparseState& state, const Coord& target, const KrausChannel& channel, Rng& rng) {
  return quasi_measure(state, target, channel, uniform01(rng));
}

}  // namespace qrambench
