// Deliberately naive reference simulator: every operation is a full pass over
// the mixed-radix basis. Shares no evolution code with the sparse engine.
#include "qrambench/dense_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace qrambench {

namespace {

constexpr std::uint32_t kMaxNodes = 15;

struct Label {
  std::uint64_t a = 0, d = 0, c = 0;
  std::array<std::uint32_t, kMaxNodes> q{};  // 0 = W, 1 = |0>, 2 = |1>
  std::array<std::uint32_t, kMaxNodes> w{};
};

// Position of one qudit inside the mixed-radix index.
struct Site {
  std::uint64_t stride = 1;  // index step of the containing digit
  std::uint64_t radix = 2;   // radix of the containing digit
  std::uint64_t unit = 1;    // index step of one level of this qudit
  std::uint32_t shift = 0;   // bit offset inside the digit (data bits)
  int dim = 2;

  std::uint32_t value(std::uint64_t i) const {
    const auto digit = (i / stride) % radix;
    return dim == 3 ? static_cast<std::uint32_t>(digit) : static_cast<std::uint32_t>((digit >> shift) & 1U);
  }
};

}  // namespace

struct DenseAccess {
  static Label decode(const DenseLayout& L, std::uint64_t i) {
    Label x;
    const std::uint64_t na = L.shape_.cells();
    x.a = i % na;
    x.d = (i / L.stride_data_) % L.data_radix_;
    x.c = (i / L.stride_control_) % (std::uint64_t{1} << L.control_bits_);
    for (std::uint32_t f = 0; f < L.nodes_; ++f) {
      x.q[f] = static_cast<std::uint32_t>((i / L.stride_q_[f]) % 3);
      x.w[f] = static_cast<std::uint32_t>((i / L.stride_w_[f]) % L.data_radix_);
    }
    return x;
  }
  static std::uint64_t encode(const DenseLayout& L, const Label& x) {
    std::uint64_t i = x.a + x.d * L.stride_data_ + x.c * L.stride_control_;
    for (std::uint32_t f = 0; f < L.nodes_; ++f) i += x.q[f] * L.stride_q_[f] + x.w[f] * L.stride_w_[f];
    return i;
  }
  static Site address_site(const DenseLayout& L, std::uint32_t node) {
    return Site{L.stride_q_[node], 3, L.stride_q_[node], 0, 3};
  }
  static Site data_site(const DenseLayout& L, std::uint32_t node, std::uint32_t bit) {
    return Site{L.stride_w_[node], L.data_radix_, L.stride_w_[node] << bit, bit, 2};
  }
};

DenseLayout::DenseLayout(const TreeShape& shape, std::uint32_t control_bits)
    : shape_(shape), control_bits_(control_bits) {
  nodes_ = static_cast<std::uint32_t>(shape.node_count());
  if (nodes_ > kMaxNodes) throw DomainError("dense oracle supports at most n = 3");
  data_radix_ = std::uint64_t{1} << shape.k;
  double dim = static_cast<double>(shape.cells()) * static_cast<double>(data_radix_) *
               std::pow(2.0, control_bits) * std::pow(3.0, nodes_) * std::pow(static_cast<double>(data_radix_), nodes_);
  if (dim > static_cast<double>(kMaxTrajectoryDim))
    throw DomainError("dense state dimension " + std::to_string(static_cast<long double>(dim)) + " exceeds the oracle limit");
  stride_data_ = shape.cells();
  stride_control_ = stride_data_ * data_radix_;
  std::uint64_t s = stride_control_ << control_bits;
  for (std::uint32_t f = 0; f < nodes_; ++f) {
    stride_q_.push_back(s);
    s *= 3;
  }
  for (std::uint32_t f = 0; f < nodes_; ++f) {
    stride_w_.push_back(s);
    s *= data_radix_;
  }
  dim_ = s;
}

std::uint64_t DenseLayout::index(const Branch& b) const {
  Label x;
  x.a = b.bus_address;
  x.d = b.bus_data;
  x.c = b.control;
  for (std::uint32_t f = 0; f < nodes_; ++f) {
    x.q[f] = static_cast<std::uint32_t>(b.tree.address.get(f));
    x.w[f] = b.tree.data.get(f);
  }
  if (x.a >= shape_.cells() || x.d >= data_radix_ || x.c >= (std::uint64_t{1} << control_bits_))
    throw DomainError("branch label outside the dense layout");
  for (const auto& [node, v] : b.tree.address.entries())
    if (node >= nodes_) throw DomainError("branch tree node outside the dense layout");
  for (const auto& [node, v] : b.tree.data.entries())
    if (node >= nodes_ || v >= data_radix_) throw DomainError("branch tree node outside the dense layout");
  return DenseAccess::encode(*this, x);
}

Branch DenseLayout::label(std::uint64_t index) const {
  const Label x = DenseAccess::decode(*this, index);
  Branch b;
  b.bus_address = x.a;
  b.bus_data = x.d;
  b.control = static_cast<std::uint32_t>(x.c);
  for (std::uint32_t f = 0; f < nodes_; ++f) {
    b.tree.address.set(f, static_cast<Qutrit>(x.q[f]));
    b.tree.data.set(f, x.w[f]);
  }
  return b;
}

double DenseState::norm2() const {
  double s = 0.0;
  for (const auto& a : amps) s += std::norm(a);
  return s;
}

DenseState expand(const SparseState& s, const DenseLayout& layout) {
  DenseState d(layout);
  for (const auto& b : s.branches()) d.amps[layout.index(b)] += b.amp;
  return d;
}

double max_abs_difference(const DenseState& a, const DenseState& b) {
  if (a.amps.size() != b.amps.size()) throw ContractViolation("dense states of different dimension");
  const double na = std::sqrt(a.norm2());
  const double nb = std::sqrt(b.norm2());
  double m = 0.0;
  for (std::size_t i = 0; i < a.amps.size(); ++i) m = std::max(m, std::abs(a.amps[i] / na - b.amps[i] / nb));
  return m;
}

namespace {

std::uint32_t first_in_layer(std::uint32_t l) { return (1U << l) - 1; }

// One layer operation on a decoded label, written directly from the circuit
// description: nodes are visited by layer and position.
void act(Label& x, const LayerOp& op, const DataTable& table, const TreeShape& shape) {
  const std::uint32_t n = shape.n;
  switch (op.kind) {
    case OpKind::InjectAddress: {
      const std::uint32_t pos = n - 1 - op.bit;
      const std::uint64_t bus_bit = (x.a >> pos) & 1U;
      const std::uint64_t root_bit = x.w[0] & 1U;
      x.a = (x.a & ~(std::uint64_t{1} << pos)) | (root_bit << pos);
      x.w[0] = (x.w[0] & ~1U) | static_cast<std::uint32_t>(bus_bit);
      break;
    }
    case OpKind::BusData: {
      const std::uint64_t bus = x.d;
      x.d = x.w[0];
      x.w[0] = static_cast<std::uint32_t>(bus);
      break;
    }
    case OpKind::Routing:
      for (std::uint32_t p = 0; p < (1U << op.layer); ++p) {
        const std::uint32_t f = first_in_layer(op.layer) + p;
        if (x.q[f] == 0) continue;
        const std::uint32_t child = first_in_layer(op.layer + 1) + 2 * p + (x.q[f] == 2 ? 1 : 0);
        std::swap(x.w[f], x.w[child]);
      }
      break;
    case OpKind::InternalSwap:
      for (std::uint32_t p = 0; p < (1U << op.layer); ++p) {
        const std::uint32_t f = first_in_layer(op.layer) + p;
        if (op.layer > 0) {
          const std::uint32_t parent = first_in_layer(op.layer - 1) + p / 2;
          const std::uint32_t wanted = (p % 2 == 0) ? 1 : 2;
          if (x.q[parent] != wanted) continue;
        }
        const std::uint32_t b = x.w[f] & 1U;
        if (x.q[f] == 0) {
          x.q[f] = 1 + b;
          x.w[f] &= ~1U;
        } else if (b == 0) {
          x.w[f] |= (x.q[f] == 2 ? 1U : 0U);
          x.q[f] = 0;
        }
      }
      break;
    case OpKind::MemoryAccess:
      for (std::uint32_t p = 0; p < (1U << n); ++p) {
        const std::uint32_t leaf = first_in_layer(n) + p;
        const std::uint32_t parent = first_in_layer(n - 1) + p / 2;
        const std::uint32_t wanted = (p % 2 == 0) ? 1 : 2;
        if (x.q[parent] == wanted) x.w[leaf] ^= table[p];
      }
      break;
  }
}

void act_step(Label& x, const TimeStep& step, const DataTable& table, const TreeShape& shape) {
  for (const auto& op : step.ops) act(x, op, table, shape);
}

std::vector<std::uint32_t> step_permutation(const DenseLayout& L, const TimeStep& step, const DataTable& table,
                                            bool parallel) {
  std::vector<std::uint32_t> perm(L.dim());
  const auto D = static_cast<std::int64_t>(L.dim());
#pragma omp parallel for if (parallel)
  for (std::int64_t i = 0; i < D; ++i) {
    Label x = DenseAccess::decode(L, static_cast<std::uint64_t>(i));
    act_step(x, step, table, L.shape());
    perm[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(DenseAccess::encode(L, x));
  }
  return perm;
}

void permute(std::vector<Complex>& v, const std::vector<std::uint32_t>& perm, bool parallel) {
  std::vector<Complex> out(v.size());
  const auto D = static_cast<std::int64_t>(v.size());
#pragma omp parallel for if (parallel)
  for (std::int64_t i = 0; i < D; ++i) out[perm[static_cast<std::size_t>(i)]] = v[static_cast<std::size_t>(i)];
  v.swap(out);
}

void apply_site_matrix(std::vector<Complex>& v, const Site& s, const Matrix& m, bool parallel) {
  // Indices whose qudit is at level 0 are hi * unit * dim + lo with lo < unit.
  const std::uint64_t dim = static_cast<std::uint64_t>(s.dim);
  const auto blocks = static_cast<std::int64_t>(v.size() / (s.unit * dim));
#pragma omp parallel for if (parallel)
  for (std::int64_t hi = 0; hi < blocks; ++hi) {
    for (std::uint64_t lo = 0; lo < s.unit; ++lo) {
      const std::uint64_t i = static_cast<std::uint64_t>(hi) * s.unit * dim + lo;
      Complex in[3], out[3];
      for (std::uint64_t a = 0; a < dim; ++a) in[a] = v[i + a * s.unit];
      for (std::uint64_t a = 0; a < dim; ++a) {
        out[a] = 0.0;
        for (std::uint64_t b = 0; b < dim; ++b) out[a] += m.m[a][b] * in[b];
      }
      for (std::uint64_t a = 0; a < dim; ++a) v[i + a * s.unit] = out[a];
    }
  }
}

double site_expectation(const std::vector<Complex>& v, const Site& s, const Matrix& e) {
  double total = 0.0;
  for (std::uint64_t i = 0; i < v.size(); ++i) {
    if (s.value(i) != 0) continue;
    Complex acc{};
    for (int a = 0; a < s.dim; ++a)
      for (int b = 0; b < s.dim; ++b)
        acc += std::conj(v[i + static_cast<std::uint64_t>(a) * s.unit]) * e.m[a][b] * v[i + static_cast<std::uint64_t>(b) * s.unit];
    total += acc.real();
  }
  return total;
}

Site site_of(const DenseLayout& L, const FaultSite& f) {
  const auto node = static_cast<std::uint32_t>(flat_index(f.node));
  return f.reg == Register::Address ? DenseAccess::address_site(L, node) : DenseAccess::data_site(L, node, f.bit);
}

void normalise(std::vector<Complex>& v) {
  double n2 = 0.0;
  for (const auto& a : v) n2 += std::norm(a);
  if (!(n2 > 0.0)) throw NumericalError("dense trajectory has zero norm");
  const double s = 1.0 / std::sqrt(n2);
  for (auto& a : v) a *= s;
}

}  // namespace

DenseQueryOracle::DenseQueryOracle(const QuerySchedule& schedule, const DataTable& table, bool parallel)
    : schedule_(schedule), layout_(schedule.shape), parallel_(parallel) {
  if (table.size() != schedule.shape.cells()) throw DomainError("data table length does not match 2^n");
  for (const auto& step : schedule.steps) perms_.push_back(step_permutation(layout_, step, table, parallel));
}

DenseState dense_trajectory(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                            const NoiseModel& model, std::vector<FaultEvent>& faults, bool parallel) {
  return DenseQueryOracle(schedule, table, parallel).run(input, model, faults);
}

DenseState DenseQueryOracle::run(const SparseState& input, const NoiseModel& model,
                                 std::vector<FaultEvent>& faults) const {
  const DenseLayout& L = layout_;
  const QuerySchedule& schedule = schedule_;
  const bool parallel = parallel_;
  DenseState st = expand(input, L);
  auto& v = st.amps;
  for (std::uint32_t t = 0; t < schedule.length(); ++t) {
    permute(v, perms_[t], parallel);
    for (std::uint16_t src = 0; src < model.sources.size(); ++src) {
      const auto& source = model.sources[src];
      const bool biased_default = source.address && source.address->kind == ChannelKind::Biased &&
                                  source.address->strength > 0.0 && source.address->strength < 1.0;
      if (biased_default) {
        const Matrix& k0 = source.address->operators[0];
        for (std::uint32_t f = 0; f < L.nodes(); ++f) {
          const bool spot = std::any_of(faults.begin(), faults.end(), [&](const FaultEvent& e) {
            return e.site.timestep == t && e.source == src && e.site.reg == Register::Address &&
                   flat_index(e.site.node) == f;
          });
          if (!spot) apply_site_matrix(v, DenseAccess::address_site(L, f), k0, parallel);
        }
      }
      for (auto& ev : faults) {
        if (ev.site.timestep != t || ev.source != src) continue;
        const auto& ch = source.channel_for(ev.site.reg);
        const Site s = site_of(L, ev.site);
        if (ch.kind == ChannelKind::MixedUnitary) {
          apply_site_matrix(v, s, ch.unitaries.at(ev.index), parallel);
          continue;
        }
        std::size_t outcome = ev.index;
        if (ev.resolution != Resolution::QuasiMeasured) {
          const auto effects = ch.spot_effects();
          std::vector<double> w;
          for (const auto& e : effects) w.push_back(site_expectation(v, s, e));
          outcome = outcome_from_weights(w, ev.draw);
          ev.resolution = Resolution::QuasiMeasured;
          ev.index = static_cast<std::uint32_t>(outcome);
        }
        apply_site_matrix(v, s, ch.operators.at(outcome), parallel);
        normalise(v);
      }
    }
  }
  normalise(v);
  return st;
}

namespace {

// rho <- sum_K K rho K^dagger on one site, via the d^2 x d^2 superoperator.
void apply_site_channel(std::vector<Complex>& rho, std::uint64_t D, const Site& s, const KrausChannel& ch,
                        bool parallel) {
  const int d = s.dim;
  Complex sup[9][9]{};
  for (const auto& k : ch.operators)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int x = 0; x < d; ++x)
          for (int y = 0; y < d; ++y) sup[a * d + b][x * d + y] += k.m[a][x] * std::conj(k.m[b][y]);
  const auto DD = static_cast<std::int64_t>(D);
#pragma omp parallel for if (parallel)
  for (std::int64_t ii = 0; ii < DD; ++ii) {
    const auto i = static_cast<std::uint64_t>(ii);
    if (s.value(i) != 0) continue;
    for (std::uint64_t j = 0; j < D; ++j) {
      if (s.value(j) != 0) continue;
      Complex in[9], out[9];
      for (int x = 0; x < d; ++x)
        for (int y = 0; y < d; ++y) in[x * d + y] = rho[(i + x * s.unit) * D + j + y * s.unit];
      for (int r = 0; r < d * d; ++r) {
        out[r] = 0.0;
        for (int c = 0; c < d * d; ++c) out[r] += sup[r][c] * in[c];
      }
      for (int x = 0; x < d; ++x)
        for (int y = 0; y < d; ++y) rho[(i + x * s.unit) * D + j + y * s.unit] = out[x * d + y];
    }
  }
}

}  // namespace

double dense_channel_fidelity(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                              const NoiseModel& model, bool bus_metric, bool parallel) {
  const DenseLayout L(schedule.shape);
  const std::uint64_t D = L.dim();
  if (D > DenseLayout::kMaxChannelDim) throw DomainError("exact channel mode is limited to n = 1, k = 1");
  const DenseState psi = expand(input, L);
  std::vector<Complex> rho(D * D);
  for (std::uint64_t i = 0; i < D; ++i)
    for (std::uint64_t j = 0; j < D; ++j) rho[i * D + j] = psi.amps[i] * std::conj(psi.amps[j]);

  for (std::uint32_t t = 0; t < schedule.length(); ++t) {
    const auto perm = step_permutation(L, schedule.steps[t], table, parallel);
    std::vector<Complex> next(D * D);
    for (std::uint64_t i = 0; i < D; ++i)
      for (std::uint64_t j = 0; j < D; ++j) next[perm[i] * D + perm[j]] = rho[i * D + j];
    rho.swap(next);
    for (const auto& src : model.sources) {
      if (src.address && src.address->strength > 0.0)
        for (std::uint32_t f = 0; f < L.nodes(); ++f)
          apply_site_channel(rho, D, DenseAccess::address_site(L, f), *src.address, parallel);
      if (src.data && src.data->strength > 0.0 && model.scope == NoiseScope::AllQudits)
        for (std::uint32_t f = 0; f < L.nodes(); ++f)
          for (std::uint32_t b = 0; b < L.shape().k; ++b)
            apply_site_channel(rho, D, DenseAccess::data_site(L, f, b), *src.data, parallel);
    }
  }

  // Ideal bus amplitudes, indexed by bus label a + 2^n d.
  const std::uint64_t bus_dim = L.shape().cells() << L.shape().k;
  std::vector<Complex> ideal(bus_dim);
  for (const auto& b : input.branches()) ideal[b.bus_address + L.shape().cells() * (b.bus_data ^ table[b.bus_address])] += b.amp;
  double trace = 0.0;
  for (std::uint64_t i = 0; i < D; ++i) trace += rho[i * D + i].real();
  Complex f{};
  const std::uint64_t envs = bus_metric ? D / bus_dim : 1;
  for (std::uint64_t q = 0; q < envs; ++q)
    for (std::uint64_t x = 0; x < bus_dim; ++x)
      for (std::uint64_t y = 0; y < bus_dim; ++y)
        f += std::conj(ideal[x]) * rho[(x + q * bus_dim) * D + y + q * bus_dim] * ideal[y];
  return f.real() / trace;
}

double dense_identity_fidelity(const std::vector<std::pair<Complex, Complex>>& qubits, const KrausChannel& channel) {
  if (channel.dim != 2) throw ContractViolation("identity fidelity needs a qubit channel");
  double f = 1.0;
  for (const auto& [a0, a1] : qubits) {
    const double n = std::sqrt(std::norm(a0) + std::norm(a1));
    const Complex psi[2] = {a0 / n, a1 / n};
    Complex rho[2][2]{};
    for (const auto& k : channel.operators) {
      Complex kp[2] = {k.m[0][0] * psi[0] + k.m[0][1] * psi[1], k.m[1][0] * psi[0] + k.m[1][1] * psi[1]};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) rho[a][b] += kp[a] * std::conj(kp[b]);
    }
    Complex v{};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) v += std::conj(psi[a]) * rho[a][b] * psi[b];
    f *= v.real();
  }
  return f;
}

}  // namespace qrambench
