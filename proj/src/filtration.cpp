#include "qrambench/filtration.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <unordered_map>

#include <omp.h>

#include "qrambench/engine.hpp"

namespace qrambench {

double RegisterState::norm2() const {
  double s = 0.0;
  for (const auto& [l, a] : amps) s += std::norm(a);
  return s;
}

namespace {

// Per-qubit depolarizing faults on a qubit register label.
class QubitNoise {
 public:
  QubitNoise(std::uint32_t qubits, double eps) : qubits_(qubits), eps_(eps), channel_(qubit_depolarizing(eps)) {
    for (const auto& u : channel_.unitaries) paulis_.push_back(Monomial::from_matrix(u));
  }

  NoisyOperation::Faults sample(Rng& rng) const {
    NoisyOperation::Faults f;
    if (eps_ <= 0.0) return f;
    std::uniform_int_distribution<std::uint32_t> pick(1, 3);
    for (std::uint32_t q = 0; q < qubits_; ++q) {
      if (uniform01(rng) >= eps_) continue;
      FaultEvent ev;
      ev.site.reg = Register::Data;
      ev.site.bit = q;
      ev.resolution = Resolution::SampledUnitary;
      ev.index = pick(rng);
      f.events.push_back(ev);
    }
    return f;
  }

  void apply(std::vector<JointBranch>& branches, const NoisyOperation::Faults& f) const {
    for (const auto& ev : f.events) {
      const Monomial& m = paulis_[ev.index];
      const std::uint32_t q = ev.site.bit;
      for (auto& b : branches) {
        const auto v = static_cast<std::uint32_t>((b.slot >> q) & 1U);
        b.amp *= m.factor[v];
        b.slot = (b.slot & ~(std::uint64_t{1} << q)) | (std::uint64_t{m.target[v]} << q);
      }
    }
  }

 private:
  std::uint32_t qubits_;
  double eps_;
  KrausChannel channel_;
  std::vector<Monomial> paulis_;
};

class IdentityOp : public NoisyOperation {
 public:
  IdentityOp(std::uint32_t qubits, double eps) : noise_(qubits, eps), qubits_(qubits) {
    if (qubits == 0 || qubits > 20) throw DomainError("identity op supports 1..20 qubits");
  }
  std::string name() const override { return "identity"; }
  std::uint64_t ideal(std::uint64_t label) const override { return label; }
  Faults sample(Rng& rng) const override { return noise_.sample(rng); }
  void invoke(std::vector<JointBranch>& branches, Faults& f) const override { noise_.apply(branches, f); }

 private:
  QubitNoise noise_;
  std::uint32_t qubits_;
};

class CnotOp : public NoisyOperation {
 public:
  explicit CnotOp(double eps) : noise_(2, eps) {}
  std::string name() const override { return "cnot"; }
  std::uint64_t ideal(std::uint64_t label) const override { return label ^ ((label & 1U) << 1); }
  Faults sample(Rng& rng) const override { return noise_.sample(rng); }
  void invoke(std::vector<JointBranch>& branches, Faults& f) const override {
    for (auto& b : branches) b.slot = ideal(b.slot);
    noise_.apply(branches, f);
  }

 private:
  QubitNoise noise_;
};

class QramOp : public NoisyOperation {
 public:
  QramOp(const QuerySchedule& schedule, const DataTable& table, NoiseModel model)
      : schedule_(schedule), table_(table), model_(std::move(model)) {
    if (table.size() != schedule.shape.cells()) throw DomainError("data table length does not match 2^n");
  }
  std::string name() const override { return "qram"; }
  std::uint64_t ideal(std::uint64_t label) const override {
    const std::uint64_t mask = schedule_.shape.cells() - 1;
    const std::uint64_t addr = label & mask;
    const std::uint64_t data = label >> schedule_.shape.n;
    return addr | ((data ^ table_[addr]) << schedule_.shape.n);
  }
  Faults sample(Rng& rng) const override {
    return Faults{sample_faults(model_, schedule_.length(), schedule_.shape, rng)};
  }
  void invoke(std::vector<JointBranch>& branches, Faults& f) const override {
    const std::uint32_t n = schedule_.shape.n;
    const std::uint64_t mask = schedule_.shape.cells() - 1;
    SparseState in;
    in.branches().reserve(branches.size());
    for (std::size_t i = 0; i < branches.size(); ++i) {
      Branch b;
      b.amp = branches[i].amp;
      b.bus_address = branches[i].slot & mask;
      b.bus_data = branches[i].slot >> n;
      b.tag = i;
      in.add(std::move(b));
    }
    RunOptions opts;
    opts.mode = Mode::Pruned;
    opts.compute_fidelity = false;
    auto out = run_with_faults(in, table_, schedule_, model_, f.events, opts);
    f.events = std::move(out.faults);
    std::vector<JointBranch> next;
    next.reserve(out.final.size());
    for (auto& b : out.final.branches()) {
      JointBranch j = branches[b.tag];
      j.amp = b.amp;
      j.slot = b.bus_address | (b.bus_data << n);
      j.env.push_back(std::move(b.tree));
      next.push_back(std::move(j));
    }
    branches.swap(next);
  }

 private:
  QuerySchedule schedule_;
  DataTable table_;
  NoiseModel model_;
};

struct JointKey {
  std::uint64_t memory;
  std::uint64_t slot;
  const std::vector<TreeConfig>* env;
  bool with_memory;

  friend bool operator==(const JointKey& a, const JointKey& b) {
    return (!a.with_memory || a.memory == b.memory) && a.slot == b.slot && *a.env == *b.env;
  }
};

struct JointKeyHash {
  std::size_t operator()(const JointKey& k) const {
    std::uint64_t h = splitmix64(k.slot) ^ (k.with_memory ? splitmix64(k.memory + 0x51) : 0);
    for (const auto& t : *k.env) h = splitmix64(h ^ tree_hash(t));
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

std::unique_ptr<NoisyOperation> make_identity_op(std::uint32_t qubits, double eps) {
  return std::make_unique<IdentityOp>(qubits, eps);
}
std::unique_ptr<NoisyOperation> make_cnot_op(double eps) { return std::make_unique<CnotOp>(eps); }
std::unique_ptr<NoisyOperation> make_qram_op(const QuerySchedule& schedule, const DataTable& table,
                                             NoiseModel model) {
  return std::make_unique<QramOp>(schedule, table, std::move(model));
}

Estimator parse_estimator(const std::string& s) {
  if (s == "weight" || s == "weight-accumulation") return Estimator::WeightAccumulation;
  if (s == "sampled" || s == "sampled-outcome") return Estimator::SampledOutcome;
  throw DomainError("unknown estimator '" + s + "'");
}

std::uint32_t EFSchedule::count(EFLayerKind k) const {
  std::uint32_t c = 0;
  for (const auto& l : layers) c += l.kind == k ? 1 : 0;
  return c;
}

EFSchedule build_ef_schedule(std::uint32_t T) {
  if (T > 16) throw DomainError("filtration level must be at most 16");
  EFSchedule s;
  s.T = T;
  if (T == 0) {
    s.layers.push_back({EFLayerKind::Invoke, 0});
    return s;
  }
  s.layers.push_back({EFLayerKind::Hadamard, 0});
  for (std::uint32_t v = 0; v < (1U << T); ++v) {
    s.layers.push_back({EFLayerKind::ControlledSwap, v});
    s.layers.push_back({EFLayerKind::Invoke, v});
    s.layers.push_back({EFLayerKind::ControlledSwap, v});
  }
  s.layers.push_back({EFLayerKind::Hadamard, 0});
  s.layers.push_back({EFLayerKind::Project, 0});
  return s;
}

EFShotRecord run_ef_shot(const NoisyOperation& op, const RegisterState& psi, const RegisterState& phi,
                         std::uint32_t T, Rng& rng) {
  const EFSchedule sched = build_ef_schedule(T);
  const std::uint32_t calls = 1U << T;
  std::vector<NoisyOperation::Faults> faults(calls);
  EFShotRecord rec;
  for (auto& f : faults) {
    f = op.sample(rng);
    rec.faults += f.events.size();
  }
  // Without faults every invocation is ideal and EF is transparent.
  if (rec.faults == 0) return rec;

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(calls));
  std::vector<JointBranch> branches;
  const RegisterState bare{{{0, Complex{1.0, 0.0}}}};
  const RegisterState& anc = T == 0 ? bare : phi;
  for (const auto& layer : sched.layers) {
    switch (layer.kind) {
      case EFLayerKind::Hadamard:
        if (!branches.empty()) break;  // the closing H is folded into Project
        for (std::uint32_t c = 0; c < calls; ++c)
          for (const auto& [m, am] : psi.amps)
            for (const auto& [a, aa] : anc.amps) branches.push_back({am * aa * inv_sqrt, c, m, a, {}});
        break;
      case EFLayerKind::ControlledSwap:
        for (auto& b : branches)
          if (b.control == layer.invocation) std::swap(b.memory, b.slot);
        break;
      case EFLayerKind::Invoke:
        if (T == 0) {
          for (const auto& [m, am] : psi.amps) branches.push_back({am, 0, 0, m, {}});
        }
        op.invoke(branches, faults[layer.invocation]);
        if (T == 0)
          for (auto& b : branches) std::swap(b.memory, b.slot);
        break;
      case EFLayerKind::Project:
        break;
    }
  }

  // <0..0| H^T on the control: amplitude sum over control values.
  std::unordered_map<JointKey, Complex, JointKeyHash> projected;
  projected.reserve(branches.size());
  const double proj = T == 0 ? 1.0 : inv_sqrt;
  for (const auto& b : branches) projected[JointKey{b.memory, b.slot, &b.env, true}] += b.amp * proj;
  double pass = 0.0;
  for (const auto& [k, a] : projected) pass += std::norm(a);
  rec.pass_weight = pass;

  std::unordered_map<std::uint64_t, Complex> ideal;
  for (const auto& [m, am] : psi.amps) ideal[op.ideal(m)] += am;
  std::unordered_map<JointKey, Complex, JointKeyHash> groups;
  for (const auto& [k, a] : projected) {
    auto it = ideal.find(k.memory);
    if (it == ideal.end()) continue;
    groups[JointKey{0, k.slot, k.env, false}] += std::conj(it->second) * a;
  }
  double f = 0.0;
  for (const auto& [k, v] : groups) f += std::norm(v);
  rec.conditional_fidelity = pass > 0.0 ? std::min(1.0, f / pass) : 0.0;
  return rec;
}

namespace {

void check_inputs(const std::vector<RegisterState>& inputs) {
  if (inputs.empty()) throw DomainError("EF needs at least one input state");
  for (const auto& s : inputs)
    if (std::abs(s.norm2() - 1.0) > 1e-9) throw DomainError("EF input states must be normalised");
}

EFShotRecord shot(const NoisyOperation& op, const std::vector<RegisterState>& inputs, const EFConfig& cfg,
                  std::uint64_t seed, std::uint64_t s) {
  const auto& psi = inputs[s % inputs.size()];
  const auto& phi = cfg.ancilla_equals_memory ? psi : inputs[(s + 1) % inputs.size()];
  Rng rng = shot_rng(seed, s);
  EFShotRecord rec = run_ef_shot(op, psi, phi, cfg.T, rng);
  if (cfg.estimator == Estimator::SampledOutcome) {
    Rng outcome = shot_rng(seed, s, 1);
    rec.passed = uniform01(outcome) < rec.pass_weight;
  }
  return rec;
}

EFResult reduce(std::vector<EFShotRecord> recs, const EFConfig& cfg, bool keep) {
  EFResult r;
  r.shots = recs.size();
  const double n = static_cast<double>(recs.size());
  if (cfg.estimator == Estimator::WeightAccumulation) {
    double sp = 0.0, spf = 0.0;
    for (const auto& x : recs) {
      sp += x.pass_weight;
      spf += x.pass_weight * x.conditional_fidelity;
    }
    r.passed_shots = recs.size();
    if (!(sp > 0.0)) {
      r.estimation_failed = true;
    } else {
      r.P_S = sp / n;
      r.F = spf / sp;
      double vp = 0.0, vf = 0.0;
      for (const auto& x : recs) {
        vp += (x.pass_weight - r.P_S) * (x.pass_weight - r.P_S);
        const double d = x.pass_weight * (x.conditional_fidelity - r.F);
        vf += d * d;
      }
      if (n > 1) {
        r.P_S_stderr = std::sqrt(vp / (n - 1) / n);
        r.F_stderr = std::sqrt(vf / (n - 1) / n) / r.P_S;
      }
    }
  } else {
    double sf = 0.0;
    std::uint64_t k = 0;
    for (const auto& x : recs)
      if (x.passed) {
        ++k;
        sf += x.conditional_fidelity;
      }
    r.passed_shots = k;
    r.P_S = static_cast<double>(k) / n;
    r.P_S_stderr = std::sqrt(r.P_S * (1 - r.P_S) / n);
    if (k == 0) {
      r.estimation_failed = true;
    } else {
      r.F = sf / static_cast<double>(k);
      double vf = 0.0;
      for (const auto& x : recs)
        if (x.passed) vf += (x.conditional_fidelity - r.F) * (x.conditional_fidelity - r.F);
      if (k > 1) r.F_stderr = std::sqrt(vf / static_cast<double>(k - 1) / static_cast<double>(k));
    }
  }
  if (keep) r.records = std::move(recs);
  return r;
}

}  // namespace

EFResult run_ef(const NoisyOperation& op, const std::vector<RegisterState>& inputs, const EFConfig& cfg,
                std::uint64_t shots, std::uint64_t seed, int workers, bool keep_records) {
  check_inputs(inputs);
  if (shots == 0) throw DomainError("shots must be at least 1");
  std::vector<EFShotRecord> recs(shots);
  std::exception_ptr error;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(shots); ++s) {
    try {
      recs[static_cast<std::size_t>(s)] = shot(op, inputs, cfg, seed, static_cast<std::uint64_t>(s));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return reduce(std::move(recs), cfg, keep_records);
}

EFResult run_ef_serial(const NoisyOperation& op, const std::vector<RegisterState>& inputs, const EFConfig& cfg,
                       std::uint64_t shots, std::uint64_t seed, bool keep_records) {
  check_inputs(inputs);
  if (shots == 0) throw DomainError("shots must be at least 1");
  std::vector<EFShotRecord> recs;
  recs.reserve(shots);
  for (std::uint64_t s = 0; s < shots; ++s) recs.push_back(shot(op, inputs, cfg, seed, s));
  return reduce(std::move(recs), cfg, keep_records);
}

RegisterState haar_qram_register(const TreeShape& shape, std::uint64_t count, Rng& rng) {
  const SparseState s = haar_input(shape, count, rng);
  RegisterState r;
  for (const auto& b : s.branches()) r.amps.emplace_back(b.bus_address, b.amp);
  return r;
}

RegisterState random_product_register(std::uint32_t qubits, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RegisterState r;
  r.amps.emplace_back(0, Complex{1.0, 0.0});
  for (std::uint32_t q = 0; q < qubits; ++q) {
    Complex a0(g(rng), g(rng)), a1(g(rng), g(rng));
    const double n = std::sqrt(std::norm(a0) + std::norm(a1));
    a0 /= n;
    a1 /= n;
    std::vector<std::pair<std::uint64_t, Complex>> next;
    next.reserve(r.amps.size() * 2);
    for (const auto& [l, a] : r.amps) {
      next.emplace_back(l, a * a0);
      next.emplace_back(l | (std::uint64_t{1} << q), a * a1);
    }
    r.amps.swap(next);
  }
  return r;
}

double suppression_ratio(double F0, double FT) {
  if (FT >= 1.0) return std::numeric_limits<double>::infinity();
  return (1.0 - F0) / (1.0 - FT);
}

double predicted_ratio(std::uint32_t T, double P_S) { return std::ldexp(P_S, static_cast<int>(T)); }

EFBounds ef_bounds(double eps, std::uint32_t T) {
  if (!(eps >= 0.0 && eps <= 0.5)) throw DomainError("bound noise strength must lie in [0, 0.5]");
  const double p = std::ldexp(1.0, static_cast<int>(T));
  return EFBounds{1.0 - p * eps, 1.0 - 4.0 * eps + eps / p, 1.0 - 2.0 * eps, 1.0 - 2.0 * eps * (1.0 - 1.0 / p)};
}

EFBoundCheck check_bounds(const EFBounds& b, double P_S, double sigma) {
  const double m = P_S + 3.0 * sigma;
  return EFBoundCheck{m >= b.worst, m >= b.original, m >= b.refined, m >= b.dynamic_refined};
}

double progressive_limit(double C_bound) {
  if (!(C_bound > 0.0)) throw DomainError("bound constant must be positive");
  return 1.0 / (2.0 * C_bound);
}

}  // namespace qrambench
