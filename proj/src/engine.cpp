#include "qrambench/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <omp.h>

namespace qrambench {

Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::Full;
  if (s == "pruned") return Mode::Pruned;
  throw DomainError("unknown mode '" + s + "' (expected full or pruned)");
}

std::string to_string(Mode m) { return m == Mode::Full ? "full" : "pruned"; }

Metric parse_metric(const std::string& s) {
  if (s == "bus") return Metric::Bus;
  if (s == "full") return Metric::Full;
  throw DomainError("unknown fidelity metric '" + s + "' (expected bus or full)");
}

std::vector<Address> spread_addresses(const TreeShape& shape, std::uint64_t count) {
  if (count == 0 || count > shape.cells()) throw DomainError("branch count must lie in [1, 2^n]");
  std::vector<Address> out(count);
  const std::uint64_t stride = shape.cells() / count;
  for (std::uint64_t i = 0; i < count; ++i) out[i] = i * stride;
  return out;
}

SparseState uniform_input(const TreeShape& shape, std::uint64_t count) {
  SparseState s;
  const double a = 1.0 / std::sqrt(static_cast<double>(count));
  for (auto addr : spread_addresses(shape, count)) {
    Branch b;
    b.amp = a;
    b.bus_address = addr;
    s.add(std::move(b));
  }
  return s;
}

SparseState haar_input(const TreeShape& shape, std::uint64_t count, Rng& rng) {
  SparseState s;
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto addr : spread_addresses(shape, count)) {
    Branch b;
    const double re = g(rng);
    const double im = g(rng);
    b.amp = Complex(re, im);
    b.bus_address = addr;
    s.add(std::move(b));
  }
  s.normalize();
  return s;
}

SparseState ideal_output(const SparseState& input, const DataTable& table) {
  SparseState out = input;
  for (auto& b : out.branches()) {
    if (!b.tree.idle()) throw ContractViolation("query input must have an idle tree");
    if (b.bus_address >= table.size()) throw DomainError("bus address outside the data table");
    b.bus_data ^= table[b.bus_address];
  }
  return out;
}

std::size_t IdealBus::KeyHash::operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const {
  return static_cast<std::size_t>(splitmix64(k.first * 0x9e3779b97f4a7c15ULL ^ k.second));
}

IdealBus::IdealBus(const SparseState& input, const DataTable& table) {
  amps_.reserve(input.size());
  const SparseState out = ideal_output(input, table);
  for (const auto& b : out.branches()) {
    if (b.control != 0 || b.tag != 0) throw ContractViolation("fidelity needs inputs without control or tag labels");
    amps_[{b.bus_address, b.bus_data}] += b.amp;
  }
}

Complex IdealBus::amplitude(std::uint64_t address, std::uint64_t data) const {
  auto it = amps_.find({address, data});
  return it == amps_.end() ? Complex{} : it->second;
}

namespace {

// (W,b) <-> (b,0) on (address qutrit, data bit 0); (b,1) is fixed.
void internal_swap(TreeConfig& t, std::uint64_t node) {
  const Qutrit q = t.address.get(node);
  const std::uint32_t d = t.data.get(node);
  const std::uint32_t d0 = d & 1U;
  if (q == Qutrit::W) {
    t.address.set(node, qutrit_from_bit(d0));
    t.data.set(node, d & ~1U);
  } else if (d0 == 0) {
    t.address.set(node, Qutrit::W);
    t.data.set(node, d | (q == Qutrit::One ? 1U : 0U));
  }
}

void swap_words(TreeConfig& t, std::uint64_t a, std::uint64_t b) {
  const std::uint32_t wa = t.data.get(a);
  const std::uint32_t wb = t.data.get(b);
  t.data.set(a, wb);
  t.data.set(b, wa);
}

}  // namespace

void apply_op(Branch& b, const LayerOp& op, const DataTable& table, const TreeShape& shape, bool ghost) {
  TreeConfig& t = b.tree;
  switch (op.kind) {
    case OpKind::InjectAddress: {
      if (ghost) return;
      const std::uint32_t pos = shape.n - 1 - op.bit;
      const std::uint64_t abit = (b.bus_address >> pos) & 1U;
      const std::uint32_t root = t.data.get(0);
      b.bus_address = (b.bus_address & ~(std::uint64_t{1} << pos)) | (std::uint64_t{root & 1U} << pos);
      t.data.set(0, (root & ~1U) | static_cast<std::uint32_t>(abit));
      return;
    }
    case OpKind::BusData: {
      if (ghost) return;
      const std::uint32_t root = t.data.get(0);
      t.data.set(0, static_cast<std::uint32_t>(b.bus_data));
      b.bus_data = root;
      return;
    }
    case OpKind::Routing: {
      // Swapping data words leaves the address map untouched, so iterating it is safe.
      auto [first, last] = t.address.range(layer_begin(op.layer), layer_begin(op.layer + 1) - 1);
      for (auto it = first; it != last; ++it) swap_words(t, it->first, child_flat(it->first, direction_of(it->second)));
      return;
    }
    case OpKind::InternalSwap: {
      if (op.layer == 0) {
        if (!ghost) internal_swap(t, 0);
        return;
      }
      thread_local std::vector<std::uint64_t> targets;
      targets.clear();
      auto [first, last] = t.address.range(layer_begin(op.layer - 1), layer_begin(op.layer) - 1);
      for (auto it = first; it != last; ++it) targets.push_back(child_flat(it->first, direction_of(it->second)));
      for (auto node : targets) internal_swap(t, node);
      return;
    }
    case OpKind::MemoryAccess: {
      const std::uint64_t leaves = layer_begin(shape.n);
      auto [first, last] = t.address.range(layer_begin(shape.n - 1), leaves - 1);
      for (auto it = first; it != last; ++it) {
        const std::uint64_t leaf = child_flat(it->first, direction_of(it->second));
        t.data.set(leaf, t.data.get(leaf) ^ table[leaf - leaves]);
      }
      return;
    }
  }
}

void apply_step(Branch& b, const TimeStep& step, const DataTable& table, const TreeShape& shape, bool ghost) {
  for (const auto& op : step.ops) apply_op(b, op, table, shape, ghost);
}

namespace {

void check_table(const DataTable& table, const QuerySchedule& schedule) {
  if (table.size() != schedule.shape.cells()) throw DomainError("data table length does not match 2^n");
}

void check_input(const SparseState& input, const TreeShape& shape) {
  for (const auto& b : input.branches()) {
    if (!b.tree.idle()) throw ContractViolation("query input must have an idle tree");
    if (b.bus_address >= shape.cells()) throw DomainError("bus address out of range");
  }
}

}  // namespace

SparseState run_noiseless(const SparseState& input, const DataTable& table, const QuerySchedule& schedule) {
  check_table(table, schedule);
  check_input(input, schedule.shape);
  SparseState s = input;
  for (auto& b : s.branches())
    for (const auto& step : schedule.steps) apply_step(b, step, table, schedule.shape);
  return s;
}

std::vector<std::uint32_t> nominal_set_counts(const QuerySchedule& schedule, const DataTable& table) {
  Branch ref;
  ref.amp = 1.0;
  std::vector<std::uint32_t> counts;
  counts.reserve(schedule.steps.size());
  for (const auto& step : schedule.steps) {
    apply_step(ref, step, table, schedule.shape);
    counts.push_back(static_cast<std::uint32_t>(ref.tree.address.size()));
  }
  return counts;
}

std::uint64_t branch_bytes(std::uint64_t entries) {
  return sizeof(Branch) + entries * sizeof(AddressMap::Entry);
}

std::uint64_t noiseless_bytes(std::uint64_t branches, const DataTable& table) {
  return branches * sizeof(Branch) + table.bytes();
}

FaultEvent forced_fault(NodeId node, Register reg, std::uint32_t timestep, std::uint32_t unitary_index,
                        std::uint32_t bit, std::uint16_t source) {
  FaultEvent ev;
  ev.site.node = node;
  ev.site.reg = reg;
  ev.site.bit = bit;
  ev.site.timestep = timestep;
  ev.source = source;
  ev.resolution = Resolution::SampledUnitary;
  ev.index = unitary_index;
  return ev;
}

namespace {

// Per-source data for the default operator of a biased address channel,
// expressed relative to its idle entry so the global factor c_W^N drops out.
struct BiasedDefault {
  std::uint16_t source = 0;
  double rel[3]{1.0, 1.0, 1.0};
};

struct ChannelCache {
  std::vector<Monomial> ops;      // Kraus operators (biased) or unitaries
  std::vector<Matrix> effects;    // spot effects (biased only)
};

// Evolving part of one trajectory: individually stepped branches plus, in
// pruned mode, the reliable block represented by a ghost overlay whose amp
// multiplies every reliable input amplitude.
class Trajectory {
 public:
  Trajectory(const NoiseModel& model, SparseState stepped, double reliable_weight)
      : model_(model), stepped_(std::move(stepped)), w_good_(reliable_weight) {
    ghost_.amp = 1.0;
    caches_.resize(model.sources.size() * 2);
    for (std::size_t s = 0; s < model.sources.size(); ++s) {
      const auto& src = model.sources[s];
      for (int r = 0; r < 2; ++r) {
        const auto& ch = r == 0 ? src.address : src.data;
        if (!ch || !(ch->strength > 0.0)) continue;
        auto& c = caches_[s * 2 + static_cast<std::size_t>(r)];
        if (ch->kind == ChannelKind::MixedUnitary) {
          for (const auto& u : ch->unitaries) c.ops.push_back(Monomial::from_matrix(u));
        } else {
          for (const auto& k : ch->operators) c.ops.push_back(Monomial::from_matrix(k));
          c.effects = ch->spot_effects();
        }
      }
      if (src.address && src.address->kind == ChannelKind::Biased && src.address->strength > 0.0 &&
          src.address->strength < 1.0) {
        const auto d = src.address->default_diagonal();
        BiasedDefault bd;
        bd.source = static_cast<std::uint16_t>(s);
        for (int v = 0; v < 3; ++v) bd.rel[v] = d[static_cast<std::size_t>(v)].real() / d[0].real();
        defaults_.push_back(bd);
      }
    }
  }

  SparseState& stepped() { return stepped_; }
  Branch& ghost() { return ghost_; }
  bool has_reliable() const { return w_good_ > 0.0; }
  bool has_defaults() const { return !defaults_.empty(); }

  void set_nominal(std::vector<std::uint32_t> counts) { nominal_ = std::move(counts); }

  // Default (no-spot) operator of biased source `source` on every address
  // qutrit that is not one of its spots at this timestep.
  void apply_defaults(std::uint16_t source, std::uint32_t timestep, std::span<const FaultEvent> events) {
    for (const auto& bd : defaults_) {
      if (bd.source != source) continue;
      spots_.clear();
      for (const auto& ev : events)
        if (ev.source == bd.source && ev.site.reg == Register::Address) spots_.push_back(flat_index(ev.site.node));
      auto factor = [&](const TreeConfig& t) {
        double f = 1.0;
        for (const auto& [node, q] : t.address.entries())
          if (std::find(spots_.begin(), spots_.end(), node) == spots_.end()) f *= bd.rel[static_cast<int>(q)];
        return f;
      };
      for (auto& b : stepped_.branches()) b.amp *= factor(b.tree);
      if (has_reliable()) {
        if (bd.rel[1] != bd.rel[2]) throw ContractViolation("pruning needs a default operator symmetric in 0/1");
        ghost_.amp *= std::pow(bd.rel[1], static_cast<double>(nominal_.at(timestep))) * factor(ghost_.tree);
      }
    }
  }

  void apply_event(FaultEvent& ev) {
    const auto& src = model_.sources.at(ev.source);
    const auto& ch = src.channel_for(ev.site.reg);
    const auto& cache = caches_[ev.source * 2u + (ev.site.reg == Register::Address ? 0u : 1u)];
    const Coord c = coord_of(ev.site);
    if (ch.kind == ChannelKind::MixedUnitary) {
      if (ev.index >= cache.ops.size()) throw ContractViolation("fault unitary index out of range");
      ev.resolution = Resolution::SampledUnitary;
      if (ev.index != 0) apply_monomial(c, cache.ops[ev.index]);
      return;
    }
    std::size_t outcome = ev.index;
    if (ev.resolution != Resolution::QuasiMeasured) {
      std::vector<double> w(cache.effects.size(), 0.0);
      for (const auto& b : stepped_.branches()) {
        const auto v = coord_value(b, c);
        const double p = std::norm(b.amp);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += p * cache.effects[i].m[v][v].real();
      }
      if (has_reliable()) {
        const auto v = coord_value(ghost_, c);
        const double p = w_good_ * std::norm(ghost_.amp);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += p * cache.effects[i].m[v][v].real();
      }
      outcome = outcome_from_weights(w, ev.draw);
      ev.resolution = Resolution::QuasiMeasured;
      ev.index = static_cast<std::uint32_t>(outcome);
    }
    apply_monomial(c, cache.ops.at(outcome));
    normalize();
  }

  void normalize() {
    double n2 = stepped_.norm2();
    if (has_reliable()) n2 += w_good_ * std::norm(ghost_.amp);
    if (!(n2 > 0.0)) throw NumericalError("trajectory has zero norm");
    const double s = 1.0 / std::sqrt(n2);
    for (auto& b : stepped_.branches()) b.amp *= s;
    ghost_.amp *= s;
  }

 private:
  void apply_monomial(const Coord& c, const Monomial& m) {
    apply_permutation(stepped_, LocalGate{c, m, std::nullopt});
    if (has_reliable()) {
      const auto v = coord_value(ghost_, c);
      ghost_.amp *= m.factor[v];
      set_coord_value(ghost_, c, m.target[v]);
    }
  }

  const NoiseModel& model_;
  SparseState stepped_;
  double w_good_ = 0.0;
  Branch ghost_;
  std::vector<ChannelCache> caches_;
  std::vector<BiasedDefault> defaults_;
  std::vector<std::uint32_t> nominal_;
  std::vector<std::uint64_t> spots_;
};

std::uint64_t stepped_bytes(const SparseState& s) {
  std::uint64_t bytes = 0;
  for (const auto& b : s.branches()) bytes += branch_bytes(b.tree.entries());
  return bytes;
}

using ReliableWeights = std::map<std::pair<std::uint32_t, std::uint64_t>, double>;

double compute_fidelity(const SparseState& stepped, const ReliableWeights& reliable, const Branch& ghost,
                        const IdealBus& ideal, Metric metric) {
  if (metric == Metric::Full) {
    Complex s{};
    for (const auto& b : stepped.branches())
      if (b.tree.idle() && b.control == 0 && b.tag == 0) s += std::conj(ideal.amplitude(b.bus_address, b.bus_data)) * b.amp;
    if (ghost.tree.idle()) {
      auto it = reliable.find({0, 0});
      if (it != reliable.end()) s += it->second * ghost.amp;
    }
    return std::min(1.0, std::norm(s));
  }
  std::unordered_map<EnvironmentKey, Complex, EnvironmentKeyHash> groups;
  groups.reserve(stepped.size() + reliable.size());
  for (const auto& b : stepped.branches()) {
    const Complex id = ideal.amplitude(b.bus_address, b.bus_data);
    if (id == Complex{}) continue;
    groups[EnvironmentKey{b.control, b.tag, &b.tree}] += std::conj(id) * b.amp;
  }
  for (const auto& [key, w] : reliable) groups[EnvironmentKey{key.first, key.second, &ghost.tree}] += w * ghost.amp;
  double f = 0.0;
  for (const auto& [key, v] : groups) f += std::norm(v);
  return std::min(1.0, f);
}

}  // namespace

ShotOutcome run_with_faults(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                            const NoiseModel& model, std::vector<FaultEvent> faults, const RunOptions& opts) {
  check_table(table, schedule);
  check_input(input, schedule.shape);
  const TreeShape& shape = schedule.shape;
  if (!std::is_sorted(faults.begin(), faults.end(), [](const FaultEvent& a, const FaultEvent& b) {
        return a.site.timestep < b.site.timestep;
      }))
    throw ContractViolation("fault events must be ordered by timestep");
  for (const auto& ev : faults) {
    validate(ev.site.node, shape);
    if (ev.site.timestep >= schedule.length()) throw DomainError("fault timestep outside the schedule");
    if (ev.site.reg == Register::Data && ev.site.bit >= shape.k) throw DomainError("fault data bit out of range");
    if (ev.source >= model.sources.size()) throw DomainError("fault refers to an unknown noise source");
  }

  ShotOutcome out;
  out.mode = opts.mode;
  out.input_branches = input.size();
  {
    std::vector<FaultSite> sites;
    sites.reserve(faults.size());
    for (const auto& ev : faults) sites.push_back(ev.site);
    out.unreliable = unreliable_set(sites, shape);
  }
  for (const auto& b : input.branches())
    if (out.unreliable.contains(b.bus_address)) ++out.unreliable_inputs;

  std::optional<IdealBus> own_ideal;
  const IdealBus* ideal = opts.ideal;
  if (opts.compute_fidelity && !ideal) ideal = &own_ideal.emplace(input, table);

  // Noiseless pruned fast path: every branch is reliable and the tree idle.
  if (opts.mode == Mode::Pruned && faults.empty()) {
    out.final = ideal_output(input, table);
    out.reliable_weight = 1.0;
    out.ghost.amp = 1.0;
    out.fidelity = 1.0;
    if (opts.account_memory) out.peak_bytes = noiseless_bytes(input.size(), table);
    out.faults = std::move(faults);
    return out;
  }

  SparseState stepped;
  ReliableWeights reliable;
  std::vector<std::size_t> reliable_index;
  double w_good = 0.0;
  if (opts.mode == Mode::Full) {
    stepped = input;
  } else {
    for (std::size_t i = 0; i < input.size(); ++i) {
      const auto& b = input.branches()[i];
      if (out.unreliable.contains(b.bus_address)) {
        stepped.add(b);
      } else {
        const double w = std::norm(b.amp);
        w_good += w;
        reliable[{b.control, b.tag}] += w;
        reliable_index.push_back(i);
      }
    }
  }
  out.stepped_branches = stepped.size();

  Trajectory traj(model, std::move(stepped), w_good);
  if (traj.has_reliable() && traj.has_defaults()) traj.set_nominal(nominal_set_counts(schedule, table));

  const std::uint64_t fixed_bytes =
      table.bytes() + (opts.mode == Mode::Pruned ? reliable_index.size() * sizeof(Branch) : 0);
  std::uint64_t peak = 0;
  std::size_t next = 0;
  for (std::uint32_t s = 0; s < schedule.length(); ++s) {
    const auto& step = schedule.steps[s];
    for (auto& b : traj.stepped().branches()) apply_step(b, step, table, shape);
    if (traj.has_reliable()) apply_step(traj.ghost(), step, table, shape, true);
    std::size_t end = next;
    while (end < faults.size() && faults[end].site.timestep == s) ++end;
    std::span<FaultEvent> now(faults.data() + next, end - next);
    // Sources act in order; within a source the default operator and the
    // spots touch disjoint sites.
    for (std::uint16_t src = 0; src < model.sources.size(); ++src) {
      if (traj.has_defaults()) traj.apply_defaults(src, s, now);
      for (auto& ev : now)
        if (ev.source == src) traj.apply_event(ev);
    }
    next = end;
    if (opts.account_memory) {
      std::uint64_t bytes = fixed_bytes + stepped_bytes(traj.stepped());
      if (traj.has_reliable()) bytes += branch_bytes(traj.ghost().tree.entries());
      peak = std::max(peak, bytes);
    }
  }
  traj.normalize();
  out.peak_bytes = peak;
  out.reliable_weight = w_good;
  out.ghost = traj.ghost();
  out.faults = std::move(faults);

  if (opts.compute_fidelity)
    out.fidelity = compute_fidelity(traj.stepped(), reliable, out.ghost, *ideal, opts.metric);

  out.final = std::move(traj.stepped());
  if (opts.mode == Mode::Pruned && opts.materialize && out.ghost.amp != Complex{}) {
    for (auto i : reliable_index) {
      Branch b = input.branches()[i];
      b.amp *= out.ghost.amp;
      b.bus_data ^= table[b.bus_address];
      b.tree = out.ghost.tree;
      out.final.add(std::move(b));
    }
  }
  return out;
}

ShotOutcome run_noisy(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                      const NoiseModel& model, Rng& rng, const RunOptions& opts) {
  auto faults = sample_faults(model, schedule.length(), schedule.shape, rng);
  return run_with_faults(input, table, schedule, model, std::move(faults), opts);
}

namespace {

struct ShotStats {
  double fidelity = 0.0;
  double reliable_fraction = 0.0;
  double stepped = 0.0;
};

ShotStats one_shot(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                   const NoiseModel& model, std::uint64_t seed, std::uint64_t shot, const RunOptions& opts) {
  Rng rng = shot_rng(seed, shot);
  const auto out = run_noisy(input, table, schedule, model, rng, opts);
  ShotStats st;
  st.fidelity = out.fidelity;
  st.reliable_fraction =
      input.empty() ? 1.0 : 1.0 - static_cast<double>(out.unreliable_inputs) / static_cast<double>(input.size());
  st.stepped = static_cast<double>(out.stepped_branches);
  return st;
}

FidelityEstimate reduce(const std::vector<ShotStats>& stats) {
  FidelityEstimate e;
  e.shots = stats.size();
  if (stats.empty()) return e;
  double sum = 0.0, rel = 0.0, stepped = 0.0;
  for (const auto& s : stats) {
    sum += s.fidelity;
    rel += s.reliable_fraction;
    stepped += s.stepped;
  }
  const double n = static_cast<double>(stats.size());
  e.mean = sum / n;
  e.reliable_fraction = rel / n;
  e.mean_stepped = stepped / n;
  if (stats.size() > 1) {
    double ss = 0.0;
    for (const auto& s : stats) ss += (s.fidelity - e.mean) * (s.fidelity - e.mean);
    e.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

RunOptions estimate_options(Mode mode, Metric metric, const IdealBus& ideal) {
  RunOptions o;
  o.mode = mode;
  o.metric = metric;
  o.materialize = false;
  o.ideal = &ideal;
  return o;
}

}  // namespace

FidelityEstimate estimate_fidelity(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                                   const NoiseModel& model, std::uint64_t shots, std::uint64_t seed, Mode mode,
                                   Metric metric, int workers) {
  if (shots == 0) throw DomainError("shots must be at least 1");
  const IdealBus ideal(input, table);
  const RunOptions opts = estimate_options(mode, metric, ideal);
  std::vector<ShotStats> stats(shots);
  std::exception_ptr error;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(shots); ++s) {
    try {
      stats[static_cast<std::size_t>(s)] =
          one_shot(input, table, schedule, model, seed, static_cast<std::uint64_t>(s), opts);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return reduce(stats);
}

FidelityEstimate estimate_fidelity_serial(const SparseState& input, const DataTable& table,
                                          const QuerySchedule& schedule, const NoiseModel& model,
                                          std::uint64_t shots, std::uint64_t seed, Mode mode, Metric metric) {
  if (shots == 0) throw DomainError("shots must be at least 1");
  const IdealBus ideal(input, table);
  const RunOptions opts = estimate_options(mode, metric, ideal);
  std::vector<ShotStats> stats;
  stats.reserve(shots);
  for (std::uint64_t s = 0; s < shots; ++s) stats.push_back(one_shot(input, table, schedule, model, seed, s, opts));
  return reduce(stats);
}

int workers_from_env(int fallback) {
  const char* v = std::getenv("QRAMBENCH_WORKERS");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) return fallback;
  return static_cast<int>(n);
}

}  // namespace qrambench
