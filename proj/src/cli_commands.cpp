#include "qrambench/cli.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qrambench/benchmark.hpp"
#include "qrambench/dense_oracle.hpp"
#include "qrambench/engine.hpp"
#include "qrambench/filtration.hpp"
#include "qrambench/fit.hpp"

namespace qrambench {

using json = nlohmann::ordered_json;

std::vector<std::uint32_t> parse_uint_list(const std::string& spec) {
  std::vector<std::uint32_t> out;
  auto num = [&](const std::string& s) -> std::uint32_t {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError("bad integer '" + s + "' in '" + spec + "'");
    }
    if (pos != s.size() || v > 0xffffffffUL) throw ConfigError("bad integer '" + s + "' in '" + spec + "'");
    return static_cast<std::uint32_t>(v);
  };
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    std::string rest = spec.substr(dots + 2);
    std::uint32_t step = 1;
    if (const auto c = rest.find(':'); c != std::string::npos) {
      step = num(rest.substr(c + 1));
      rest = rest.substr(0, c);
    }
    const std::uint32_t lo = num(spec.substr(0, dots)), hi = num(rest);
    if (step == 0 || lo > hi) throw ConfigError("bad range '" + spec + "'");
    for (std::uint32_t v = lo; v <= hi; v += step) out.push_back(v);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(num(item));
  if (out.empty()) throw ConfigError("empty list '" + spec + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "'");
    }
    if (pos != item.size() || !std::isfinite(v)) throw ConfigError("bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list '" + spec + "'");
  return out;
}

namespace {

// ---------------------------------------------------------------- config

// JSON config values fill in every option not given on the command line.
class ConfigFile {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
      data_ = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("invalid JSON in '" + path + "': " + e.what());
    }
    if (!data_.is_object()) throw ConfigError("config file must hold a JSON object");
    present_ = true;
  }
  bool present() const { return present_; }
  bool has(const char* key) const { return present_ && data_.contains(key); }

  template <typename T>
  void merge(CLI::Option* opt, const char* key, T& var) {
    used_.insert(key);
    if (!present_ || opt->count() > 0 || !data_.contains(key)) return;
    const json& v = data_[key];
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        // Lists may be written as JSON arrays or scalars.
        if (v.is_string()) {
          var = v.get<std::string>();
        } else if (v.is_array()) {
          std::string s;
          for (const auto& x : v) s += (s.empty() ? "" : ",") + (x.is_string() ? x.get<std::string>() : x.dump());
          var = s;
        } else {
          var = v.dump();
        }
      } else {
        var = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }

  void reject_unknown() const {
    if (!present_) return;
    for (const auto& [k, v] : data_.items())
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

 private:
  json data_;
  bool present_ = false;
  std::set<std::string> used_;
};

// Seeds are mandatory in config files and generated (and echoed) only in
// flag mode. Returns true when the seed was generated.
bool resolve_seed(CLI::Option* opt, const ConfigFile& cfg, std::uint64_t& seed) {
  if (opt->count() > 0) return false;
  if (cfg.present()) {
    if (!cfg.has("seed")) throw ConfigError("config files must specify a seed");
    return false;
  }
  seed = std::random_device{}();
  return true;
}

int resolve_workers(CLI::Option* opt, int flag_value) {
  if (opt->count() > 0) return flag_value;
  return workers_from_env(flag_value);
}

NoiseScope parse_scope(const std::string& s) {
  if (s == "all-qudits" || s == "all") return NoiseScope::AllQudits;
  if (s == "address-only" || s == "address") return NoiseScope::AddressOnly;
  throw ConfigError("unknown noise scope '" + s + "'");
}

std::string scope_name(NoiseScope s) { return s == NoiseScope::AllQudits ? "all-qudits" : "address-only"; }

// Writes to `path` when given, else to `out`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& out) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigError("cannot write '" + path + "'");
    }
    os_ = path.empty() ? &out : &file_;
  }
  std::ostream& os() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

// Rounded so that mathematically equal results from different code paths
// print identically.
double tidy(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return std::stod(s.str());
}

std::string layer_pos(const NodeId& n) { return std::to_string(n.layer) + ":" + std::to_string(n.pos); }

std::string resolution_name(Resolution r) {
  switch (r) {
    case Resolution::Pending: return "pending";
    case Resolution::SampledUnitary: return "unitary";
    case Resolution::QuasiMeasured: return "quasi-measured";
  }
  return "?";
}

// ---------------------------------------------------------------- query

struct QueryArgs {
  std::string config;
  std::uint32_t n = 3, k = 1;
  std::string channel = "depolarizing";
  double epsilon = 0.0, gamma = 0.0;
  std::uint64_t shots = 1000, seed = 0, branches = 0;
  std::string mode = "pruned", input = "uniform", amplitudes, table, metric = "bus", scope = "all-qudits", output;
  int workers = 0;
  std::size_t fault_log_limit = 100;
  CLI::Option *o_n, *o_k, *o_channel, *o_eps, *o_gamma, *o_shots, *o_seed, *o_branches, *o_mode, *o_input, *o_amps,
      *o_table, *o_metric, *o_scope, *o_workers, *o_output;
};

void add_query(CLI::App& app, QueryArgs& a) {
  app.add_option("--config", a.config, "JSON config file; flags override its values");
  a.o_n = app.add_option("--n", a.n, "address bits");
  a.o_k = app.add_option("--k", a.k, "data bits per cell");
  a.o_channel = app.add_option("--channel", a.channel, "depolarizing|damping|heating|qubit-depolarizing");
  a.o_eps = app.add_option("--epsilon", a.epsilon, "noise strength per qudit per timestep");
  a.o_gamma = app.add_option("--gamma", a.gamma, "extra qutrit damping strength");
  a.o_shots = app.add_option("--shots", a.shots, "trajectories");
  a.o_seed = app.add_option("--seed", a.seed, "RNG seed");
  a.o_mode = app.add_option("--mode", a.mode, "full|pruned");
  a.o_input = app.add_option("--input", a.input, "uniform|haar|list");
  a.o_branches = app.add_option("--branches", a.branches, "active addresses (0 = all 2^n)");
  a.o_amps = app.add_option("--amplitudes", a.amplitudes, "list input: addr:re[:im],...");
  a.o_table = app.add_option("--table", a.table, "data table (.csv or raw binary); random when omitted");
  a.o_metric = app.add_option("--metric", a.metric, "bus|full");
  a.o_scope = app.add_option("--scope", a.scope, "all-qudits|address-only");
  a.o_workers = app.add_option("--workers", a.workers, "shot workers (0 = all cores)");
  a.o_output = app.add_option("--output", a.output, "write JSON here instead of stdout");
}

SparseState build_input(const QueryArgs& a, const TreeShape& shape, std::uint64_t seed) {
  const std::uint64_t count = a.branches == 0 ? shape.cells() : a.branches;
  if (count > shape.cells()) throw ConfigError("--branches exceeds 2^n");
  if (a.input == "uniform") return uniform_input(shape, count);
  if (a.input == "haar") {
    Rng rng = shot_rng(seed, 0, 3);
    return haar_input(shape, count, rng);
  }
  if (a.input == "list") {
    SparseState s;
    std::stringstream ss(a.amplitudes);
    std::string item;
    std::set<std::uint64_t> seen;
    while (std::getline(ss, item, ',')) {
      std::vector<std::string> parts;
      std::stringstream is(item);
      std::string p;
      while (std::getline(is, p, ':')) parts.push_back(p);
      if (parts.size() < 2 || parts.size() > 3) throw ConfigError("bad amplitude entry '" + item + "'");
      Branch b;
      try {
        b.bus_address = std::stoull(parts[0]);
        b.amp = Complex(std::stod(parts[1]), parts.size() == 3 ? std::stod(parts[2]) : 0.0);
      } catch (const std::exception&) {
        throw ConfigError("bad amplitude entry '" + item + "'");
      }
      if (b.bus_address >= shape.cells()) throw ConfigError("listed address outside [0, 2^n)");
      if (!seen.insert(b.bus_address).second) throw ConfigError("listed address repeated");
      s.add(b);
    }
    if (s.empty() || s.norm2() == 0.0) throw ConfigError("list input needs nonzero --amplitudes");
    s.normalize();
    return s;
  }
  throw ConfigError("unknown input kind '" + a.input + "'");
}

int cmd_query(QueryArgs& a, std::ostream& out) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.merge(a.o_n, "n", a.n);
  cfg.merge(a.o_k, "k", a.k);
  cfg.merge(a.o_channel, "channel", a.channel);
  cfg.merge(a.o_eps, "epsilon", a.epsilon);
  cfg.merge(a.o_gamma, "gamma", a.gamma);
  cfg.merge(a.o_shots, "shots", a.shots);
  cfg.merge(a.o_mode, "mode", a.mode);
  cfg.merge(a.o_input, "input", a.input);
  cfg.merge(a.o_branches, "branches", a.branches);
  cfg.merge(a.o_amps, "amplitudes", a.amplitudes);
  cfg.merge(a.o_table, "table", a.table);
  cfg.merge(a.o_metric, "metric", a.metric);
  cfg.merge(a.o_scope, "scope", a.scope);
  cfg.merge(a.o_workers, "workers", a.workers);
  cfg.merge(a.o_output, "output", a.output);
  cfg.merge(a.o_seed, "seed", a.seed);
  cfg.reject_unknown();
  const bool generated_seed = resolve_seed(a.o_seed, cfg, a.seed);
  if (a.shots == 0) throw ConfigError("--shots must be at least 1");
  if (a.epsilon < 0.0 || a.epsilon > 1.0 || a.gamma < 0.0 || a.gamma > 1.0)
    throw ConfigError("noise strengths must lie in [0, 1]");

  const TreeShape shape(a.n, a.k);
  const QuerySchedule schedule = build_schedule(shape);
  const Mode mode = parse_mode(a.mode);
  const Metric metric = parse_metric(a.metric);
  const NoiseScope scope = parse_scope(a.scope);
  const NoiseModel model = make_noise_model(a.channel, a.epsilon, a.gamma, scope);
  DataTable table;
  if (!a.table.empty()) {
    if (!std::filesystem::exists(a.table)) throw ConfigError("table file '" + a.table + "' not found");
    table = DataTable::load(a.table, shape);
  } else {
    Rng rng = shot_rng(a.seed, 0, 2);
    table = DataTable::random(shape, rng);
  }
  const SparseState input = build_input(a, shape, a.seed);
  const int workers = resolve_workers(a.o_workers, a.workers);

  const FidelityEstimate est = estimate_fidelity(input, table, schedule, model, a.shots, a.seed, mode, metric, workers);

  // Shot 0 again, for the final-state summary and fault log.
  Rng rng = shot_rng(a.seed, 0);
  RunOptions opts;
  opts.mode = mode;
  opts.metric = metric;
  opts.account_memory = true;
  const ShotOutcome shot = run_noisy(input, table, schedule, model, rng, opts);
  json faults = json::array();
  for (std::size_t i = 0; i < shot.faults.size() && i < a.fault_log_limit; ++i) {
    const auto& ev = shot.faults[i];
    faults.push_back({{"node", layer_pos(ev.site.node)},
                      {"register", ev.site.reg == Register::Address ? "address" : "data"},
                      {"bit", ev.site.bit},
                      {"timestep", ev.site.timestep},
                      {"source", ev.source},
                      {"resolution", resolution_name(ev.resolution)},
                      {"index", ev.index}});
  }
  std::uint64_t idle = 0;
  for (const auto& b : shot.final.branches()) idle += b.tree.idle() ? 1 : 0;

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "query";
  j["config"] = {{"n", a.n},          {"k", a.k},           {"channel", a.channel},   {"epsilon", a.epsilon},
                 {"gamma", a.gamma},  {"shots", a.shots},   {"seed", a.seed},         {"seed_generated", generated_seed},
                 {"mode", a.mode},    {"input", a.input},   {"branches", input.size()}, {"table", a.table},
                 {"metric", a.metric}, {"scope", scope_name(scope)}};
  j["fidelity"] = {{"mean", tidy(est.mean)}, {"std_error", tidy(est.std_error)}, {"shots", est.shots}};
  j["reliable_fraction"] = tidy(est.reliable_fraction);
  j["trajectory"] = {{"shot", 0},
                     {"fidelity", tidy(shot.fidelity)},
                     {"final_branches", shot.final.size()},
                     {"final_branches_idle_tree", idle},
                     {"unreliable_inputs", shot.unreliable_inputs},
                     {"fault_count", shot.faults.size()},
                     {"faults", faults},
                     {"fault_log_truncated", shot.faults.size() > a.fault_log_limit}};
  Sink sink(a.output, out);
  sink.os() << j.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- ef

struct EfArgs {
  std::string config, op = "identity", channel = "depolarizing", epsilon = "1e-3", T = "1", estimator = "weight",
                      ancilla = "same", output;
  std::uint32_t n = 3, k = 1, qubits = 1;
  double gamma = 0.0;
  std::uint64_t inputs = 100, shots = 1000, seed = 0, branches = 0;
  int workers = 0;
  CLI::Option *o_op, *o_n, *o_k, *o_qubits, *o_channel, *o_eps, *o_gamma, *o_T, *o_inputs, *o_shots, *o_seed,
      *o_branches, *o_estimator, *o_ancilla, *o_workers, *o_output;
};

void add_ef(CLI::App& app, EfArgs& a) {
  app.add_option("--config", a.config, "JSON config file; flags override its values");
  a.o_op = app.add_option("--op", a.op, "identity|cnot|qram");
  a.o_n = app.add_option("--n", a.n, "address bits (qram)");
  a.o_k = app.add_option("--k", a.k, "data bits (qram)");
  a.o_qubits = app.add_option("--qubits", a.qubits, "register size (identity)");
  a.o_channel = app.add_option("--channel", a.channel, "query noise channel (qram)");
  a.o_eps = app.add_option("--epsilon", a.epsilon, "noise strength(s), comma separated");
  a.o_gamma = app.add_option("--gamma", a.gamma, "extra qutrit damping (qram)");
  a.o_T = app.add_option("--T", a.T, "filtration levels, e.g. 1,2,3 or 1..4");
  a.o_inputs = app.add_option("--inputs", a.inputs, "random input states");
  a.o_shots = app.add_option("--shots", a.shots, "shots per input state");
  a.o_seed = app.add_option("--seed", a.seed, "RNG seed");
  a.o_branches = app.add_option("--branches", a.branches, "active addresses of qram inputs (0 = all 2^n)");
  a.o_estimator = app.add_option("--estimator", a.estimator, "weight|sampled");
  a.o_ancilla = app.add_option("--ancilla", a.ancilla, "same (ancilla = memory state) | independent");
  a.o_workers = app.add_option("--workers", a.workers, "shot workers (0 = all cores)");
  a.o_output = app.add_option("--output", a.output, "write CSV here instead of stdout");
}

int cmd_ef(EfArgs& a, std::ostream& out, std::ostream& err) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.merge(a.o_op, "op", a.op);
  cfg.merge(a.o_n, "n", a.n);
  cfg.merge(a.o_k, "k", a.k);
  cfg.merge(a.o_qubits, "qubits", a.qubits);
  cfg.merge(a.o_channel, "channel", a.channel);
  cfg.merge(a.o_eps, "epsilon", a.epsilon);
  cfg.merge(a.o_gamma, "gamma", a.gamma);
  cfg.merge(a.o_T, "T", a.T);
  cfg.merge(a.o_inputs, "inputs", a.inputs);
  cfg.merge(a.o_shots, "shots", a.shots);
  cfg.merge(a.o_branches, "branches", a.branches);
  cfg.merge(a.o_estimator, "estimator", a.estimator);
  cfg.merge(a.o_ancilla, "ancilla", a.ancilla);
  cfg.merge(a.o_workers, "workers", a.workers);
  cfg.merge(a.o_output, "output", a.output);
  cfg.merge(a.o_seed, "seed", a.seed);
  cfg.reject_unknown();
  const bool generated_seed = resolve_seed(a.o_seed, cfg, a.seed);

  const std::vector<double> eps_list = parse_double_list(a.epsilon);
  const std::vector<std::uint32_t> levels = parse_uint_list(a.T);
  for (auto T : levels)
    if (T < 1 || T > 10) throw ConfigError("--T values must lie in 1..10");
  for (double e : eps_list)
    if (e < 0.0 || e > 1.0) throw ConfigError("--epsilon values must lie in [0, 1]");
  if (a.inputs == 0 || a.shots == 0) throw ConfigError("--inputs and --shots must be at least 1");
  if (a.ancilla != "same" && a.ancilla != "independent") throw ConfigError("--ancilla must be same|independent");
  EFConfig base;
  base.estimator = parse_estimator(a.estimator);
  base.ancilla_equals_memory = a.ancilla == "same";
  const int workers = resolve_workers(a.o_workers, a.workers);
  const std::uint64_t total = a.inputs * a.shots;

  // Inputs are shared by every (epsilon, T) cell so ratios are correlated.
  std::vector<RegisterState> inputs;
  Rng in_rng = shot_rng(a.seed, 0, 4);
  std::uint32_t size_col = 0;
  std::optional<TreeShape> shape;
  if (a.op == "identity") {
    if (a.qubits < 1 || a.qubits > 20) throw ConfigError("--qubits must lie in 1..20");
    size_col = a.qubits;
    for (std::uint64_t i = 0; i < a.inputs; ++i) inputs.push_back(random_product_register(a.qubits, in_rng));
  } else if (a.op == "cnot") {
    size_col = 2;
    for (std::uint64_t i = 0; i < a.inputs; ++i) inputs.push_back(random_product_register(2, in_rng));
  } else if (a.op == "qram") {
    shape = TreeShape(a.n, a.k);
    size_col = a.n;
    const std::uint64_t count = a.branches == 0 ? shape->cells() : a.branches;
    if (count > shape->cells()) throw ConfigError("--branches exceeds 2^n");
    for (std::uint64_t i = 0; i < a.inputs; ++i) inputs.push_back(haar_qram_register(*shape, count, in_rng));
  } else {
    throw ConfigError("unknown --op '" + a.op + "'");
  }
  std::optional<QuerySchedule> schedule;
  std::optional<DataTable> table;
  if (shape) {
    schedule = build_schedule(*shape);
    Rng rng = shot_rng(a.seed, 0, 2);
    table = DataTable::random(*shape, rng);
  }

  Sink sink(a.output, out);
  std::ostream& os = sink.os();
  os << "n,epsilon,T,F0,FT,ratio,PS,bound_worst,bound_original,bound_refined,shots,seed\n";
  os << std::setprecision(10);
  for (double eps : eps_list) {
    std::unique_ptr<NoisyOperation> op;
    if (a.op == "identity") op = make_identity_op(a.qubits, eps);
    else if (a.op == "cnot") op = make_cnot_op(eps);
    else op = make_qram_op(*schedule, *table, make_noise_model(a.channel, eps, a.gamma, NoiseScope::AllQudits));
    EFConfig c0 = base;
    c0.T = 0;
    const EFResult r0 = run_ef(*op, inputs, c0, total, a.seed, workers, false);
    for (auto T : levels) {
      EFConfig c = base;
      c.T = T;
      const EFResult r = run_ef(*op, inputs, c, total, a.seed, workers, false);
      const double ratio = suppression_ratio(r0.F, r.F);
      os << size_col << ',' << eps << ',' << T << ',' << r0.F << ',' << r.F << ',' << ratio << ',' << r.P_S << ',';
      if (eps <= 0.5) {
        const EFBounds b = ef_bounds(eps, T);
        os << b.worst << ',' << b.original << ',' << b.refined;
      } else {
        os << ",,";
      }
      os << ',' << total << ',' << a.seed << '\n';
    }
  }
  if (generated_seed) err << "seed: " << a.seed << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string config, n = "6..12", p = "1e-6,1e-5,1e-4", branches = "32", mode = "both", channel = "depolarizing",
                      scope = "all-qudits", output, summary;
  std::uint32_t k = 1, repetitions = 5;
  double gamma = 0.0;
  std::uint64_t shots = 20, seed = 0;
  int workers = 1;
  bool no_static = false;
  CLI::Option *o_n, *o_p, *o_branches, *o_mode, *o_channel, *o_scope, *o_output, *o_summary, *o_k, *o_reps,
      *o_gamma, *o_shots, *o_seed, *o_workers, *o_no_static;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  app.add_option("--config", a.config, "JSON config file; flags override its values");
  a.o_n = app.add_option("--n", a.n, "address sizes, e.g. 6..18 or 6..18:2 or 6,8");
  a.o_p = app.add_option("--p", a.p, "noise strengths, comma separated");
  a.o_branches = app.add_option("--branches", a.branches, "branch size, or 'full' for 2^n");
  a.o_mode = app.add_option("--mode", a.mode, "full|pruned|both");
  a.o_channel = app.add_option("--channel", a.channel, "noise channel");
  a.o_scope = app.add_option("--scope", a.scope, "all-qudits|address-only");
  a.o_k = app.add_option("--k", a.k, "data bits");
  a.o_reps = app.add_option("--repetitions", a.repetitions, "timing repetitions (median)");
  a.o_gamma = app.add_option("--gamma", a.gamma, "extra qutrit damping");
  a.o_shots = app.add_option("--shots", a.shots, "queries per repetition");
  a.o_seed = app.add_option("--seed", a.seed, "RNG seed");
  a.o_workers = app.add_option("--workers", a.workers, "parallel shots (timing is per batch when > 1)");
  a.o_no_static = app.add_flag("--no-static", a.no_static, "skip the noiseless baseline rows");
  a.o_output = app.add_option("--output", a.output, "CSV path (default stdout)");
  a.o_summary = app.add_option("--summary", a.summary, "JSON summary path");
}

json bench_summary(const std::vector<CostSample>& st, const std::vector<CostSample>& dyn,
                   const ModeComparison& cmp) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "bench";
  j["region_thresholds"] = {{"lower", kRegionLower}, {"upper", kRegionUpper}, {"upper_alternative", kRegionUpperAlt},
                            {"note", "upper threshold 256 shipped; 100 is the alternative reading"}};
  json regions = json::array();
  std::set<std::pair<std::uint32_t, double>> seen;
  for (const auto& s : dyn)
    if (seen.insert({s.n, s.epsilon}).second)
      regions.push_back({{"n", s.n}, {"p", s.epsilon}, {"x", region_x(s.n, s.epsilon)}, {"region", to_string(s.region)}});
  j["regions"] = regions;

  json slopes = json::object();
  // Static runtime vs n, per branch size.
  std::map<std::uint64_t, std::pair<std::vector<double>, std::vector<double>>> by_b;
  for (const auto& s : st) {
    by_b[s.branch_count].first.push_back(std::log(s.n));
    by_b[s.branch_count].second.push_back(std::log(s.wall_time));
  }
  json stat = json::array();
  for (const auto& [b, xy] : by_b)
    if (std::set<double>(xy.first.begin(), xy.first.end()).size() >= 2)
      stat.push_back({{"branch_count", b}, {"loglog_time_slope", fit_linear(xy.first, xy.second).slope}});
  slopes["static_time_vs_n"] = stat;

  // Memory ratio - 1 vs p at each (n, mode).
  std::map<std::pair<std::uint32_t, std::string>, std::pair<std::vector<double>, std::vector<double>>> mem;
  std::map<std::pair<double, std::string>, std::pair<std::vector<double>, std::vector<double>>> unrel;
  for (const auto& s : dyn) {
    const CostSample* base = nullptr;
    for (const auto& b : st)
      if (b.n == s.n && b.branch_count == s.branch_count) base = &b;
    if (base) {
      mem[{s.n, to_string(s.mode)}].first.push_back(s.epsilon);
      mem[{s.n, to_string(s.mode)}].second.push_back(s.peak_memory / base->peak_memory - 1.0);
    }
    if (s.unreliable_branches > 0.0) {
      unrel[{s.epsilon, to_string(s.mode)}].first.push_back(std::log(s.n));
      unrel[{s.epsilon, to_string(s.mode)}].second.push_back(std::log(s.unreliable_branches));
    }
  }
  json mj = json::array();
  for (const auto& [key, xy] : mem)
    if (std::set<double>(xy.first.begin(), xy.first.end()).size() >= 2) {
      const LinearFit f = fit_linear(xy.first, xy.second);
      mj.push_back({{"n", key.first}, {"mode", key.second}, {"slope", f.slope}, {"r2", f.r2}});
    }
  slopes["memory_ratio_vs_p"] = mj;
  json uj = json::array();
  for (const auto& [key, xy] : unrel)
    if (std::set<double>(xy.first.begin(), xy.first.end()).size() >= 2)
      uj.push_back({{"p", key.first}, {"mode", key.second}, {"loglog_slope", fit_linear(xy.first, xy.second).slope}});
  slopes["unreliable_branches_vs_n"] = uj;
  j["slopes"] = slopes;

  json rj = json::array();
  for (const auto& r : cmp.ratios)
    rj.push_back({{"n", r.n}, {"p", r.epsilon}, {"region", to_string(r.region)}, {"time_ratio", r.time_ratio},
                  {"memory_ratio", r.memory_ratio}});
  j["mode_ratios"] = rj;
  j["warnings"] = cmp.warnings;
  return j;
}

int cmd_bench(BenchArgs& a, std::ostream& out, std::ostream& err) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.merge(a.o_n, "n", a.n);
  cfg.merge(a.o_p, "p", a.p);
  cfg.merge(a.o_branches, "branches", a.branches);
  cfg.merge(a.o_mode, "mode", a.mode);
  cfg.merge(a.o_channel, "channel", a.channel);
  cfg.merge(a.o_scope, "scope", a.scope);
  cfg.merge(a.o_k, "k", a.k);
  cfg.merge(a.o_reps, "repetitions", a.repetitions);
  cfg.merge(a.o_gamma, "gamma", a.gamma);
  cfg.merge(a.o_shots, "shots", a.shots);
  cfg.merge(a.o_workers, "workers", a.workers);
  cfg.merge(a.o_no_static, "no_static", a.no_static);
  cfg.merge(a.o_output, "output", a.output);
  cfg.merge(a.o_summary, "summary", a.summary);
  cfg.merge(a.o_seed, "seed", a.seed);
  cfg.reject_unknown();
  const bool generated_seed = resolve_seed(a.o_seed, cfg, a.seed);

  BenchConfig bc;
  bc.k = a.k;
  bc.channel = a.channel;
  bc.gamma = a.gamma;
  bc.scope = parse_scope(a.scope);
  bc.shots = a.shots;
  bc.repetitions = a.repetitions;
  bc.seed = a.seed;
  bc.workers = resolve_workers(a.o_workers, a.workers);
  if (bc.shots == 0) throw ConfigError("--shots must be at least 1");
  const auto ns = parse_uint_list(a.n);
  const auto ps = parse_double_list(a.p);
  for (double p : ps)
    if (p < 0.0 || p > 1.0) throw ConfigError("--p values must lie in [0, 1]");
  std::uint64_t b = kFullBranchSize;
  if (a.branches != "full") {
    b = parse_uint_list(a.branches).at(0);
    if (b == 0) throw ConfigError("--branches must be positive or 'full'");
    for (auto n : ns)
      if (n < 64 && b > (std::uint64_t{1} << n)) throw ConfigError("--branches exceeds 2^n for n=" + std::to_string(n));
  }
  std::vector<Mode> modes;
  if (a.mode == "both") modes = {Mode::Full, Mode::Pruned};
  else modes = {parse_mode(a.mode)};

  make_noise_model(bc.channel, 0.0, 0.0, bc.scope);  // validates the channel name
  const std::vector<CostSample> st = measure_static(ns, {b}, bc);
  std::vector<CostSample> full, pruned;
  for (Mode m : modes) {
    auto rows = measure_dynamic(ns, ps, b, m, bc, st.empty() ? nullptr : &st);
    (m == Mode::Full ? full : pruned) = std::move(rows);
  }
  std::vector<CostSample> rows;
  if (!a.no_static) rows = st;
  rows.insert(rows.end(), full.begin(), full.end());
  rows.insert(rows.end(), pruned.begin(), pruned.end());
  {
    Sink sink(a.output, out);
    write_csv(sink.os(), rows);
  }
  ModeComparison cmp;
  if (!full.empty() && !pruned.empty()) cmp = compare_modes(full, pruned);
  for (const auto& w : cmp.warnings) err << "warning: " << w << '\n';
  if (!a.summary.empty()) {
    std::vector<CostSample> dyn = full;
    dyn.insert(dyn.end(), pruned.begin(), pruned.end());
    json j = bench_summary(st, dyn, cmp);
    j["seed"] = a.seed;
    j["seed_generated"] = generated_seed;
    Sink sink(a.summary, out);
    sink.os() << j.dump(2) << '\n';
  }
  if (generated_seed) err << "seed: " << a.seed << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- validate

}  // namespace

std::vector<ValidationCheck> run_validation_suite(std::uint64_t seed) {
  std::vector<ValidationCheck> checks;
  auto add = [&](std::string name, bool ok, double value, double tol, std::string detail = {}) {
    checks.push_back({std::move(name), ok, value, tol, std::move(detail)});
  };

  // Sparse trajectories against the dense state-vector oracle.
  for (const char* ch : {"depolarizing", "damping", "heating"}) {
    for (std::uint32_t n : {1U, 2U}) {
      const TreeShape shape(n, 1);
      const QuerySchedule sched = build_schedule(shape);
      Rng tr = shot_rng(seed, n, 11);
      const DataTable table = DataTable::random(shape, tr);
      const NoiseModel model = make_noise_model(ch, 0.05, 0.0, NoiseScope::AllQudits);
      const DenseQueryOracle oracle(sched, table);
      double worst = 0.0;
      for (std::uint64_t s = 0; s < 4; ++s) {
        Rng ir = shot_rng(seed, s, 12);
        const SparseState in = haar_input(shape, shape.cells(), ir);
        Rng fr = shot_rng(seed, s, 13);
        auto faults = sample_faults(model, sched.length(), shape, fr);
        for (Mode m : {Mode::Pruned, Mode::Full}) {
          RunOptions o;
          o.mode = m;
          auto dense_faults = faults;
          const ShotOutcome sp = run_with_faults(in, table, sched, model, faults, o);
          const DenseState de = oracle.run(in, model, dense_faults);
          worst = std::max(worst, max_abs_difference(expand(sp.final, de.layout), de));
        }
      }
      add(std::string("dense_trajectory_") + ch + "_n" + std::to_string(n), worst <= 1e-9, worst, 1e-9);
    }
  }

  // Monte Carlo mean against the exact density-matrix channel at n = 1.
  for (const char* ch : {"depolarizing", "damping", "heating"}) {
    const TreeShape shape(1, 1);
    const QuerySchedule sched = build_schedule(shape);
    Rng tr = shot_rng(seed, 1, 14);
    const DataTable table = DataTable::random(shape, tr);
    const SparseState in = uniform_input(shape, 2);
    const NoiseModel model = make_noise_model(ch, 0.02, 0.0, NoiseScope::AllQudits);
    const double exact = dense_channel_fidelity(in, table, sched, model);
    const FidelityEstimate mc = estimate_fidelity(in, table, sched, model, 20000, seed, Mode::Pruned);
    const double tol = 4.0 * mc.std_error + 1e-9;
    add(std::string("exact_channel_") + ch, std::abs(exact - mc.mean) <= tol, std::abs(exact - mc.mean), tol,
        "exact " + std::to_string(exact) + " vs mc " + std::to_string(mc.mean));
  }

  // Noiseless queries are exact and leave the tree idle.
  {
    double worst = 0.0;
    for (std::uint32_t n = 1; n <= 6; ++n) {
      const TreeShape shape(n, 2);
      const QuerySchedule sched = build_schedule(shape);
      Rng tr = shot_rng(seed, n, 15);
      const DataTable table = DataTable::random(shape, tr);
      const SparseState in = haar_input(shape, shape.cells(), tr);
      const SparseState outp = run_noiseless(in, table, sched);
      for (const auto& b : outp.branches())
        if (!b.tree.idle()) worst = 1.0;
      worst = std::max(worst, 1.0 - bus_fidelity(outp, ideal_output(in, table)));
    }
    add("noiseless_exact", worst <= 1e-12, worst, 1e-12);
  }

  // Pruned and full modes give identical states.
  {
    double worst = 0.0;
    const TreeShape shape(4, 2);
    const QuerySchedule sched = build_schedule(shape);
    Rng tr = shot_rng(seed, 4, 16);
    const DataTable table = DataTable::random(shape, tr);
    const SparseState in = haar_input(shape, 16, tr);
    for (const char* ch : {"depolarizing", "damping", "heating"}) {
      const NoiseModel model = make_noise_model(ch, 0.01, 0.0, NoiseScope::AllQudits);
      for (std::uint64_t s = 0; s < 10; ++s) {
        Rng fr = shot_rng(seed, s, 17);
        const auto faults = sample_faults(model, sched.length(), shape, fr);
        RunOptions o;
        o.mode = Mode::Full;
        ShotOutcome a = run_with_faults(in, table, sched, model, faults, o);
        o.mode = Mode::Pruned;
        ShotOutcome b = run_with_faults(in, table, sched, model, faults, o);
        const double f = std::norm(overlap(a.final, b.final));
        worst = std::max({worst, 1.0 - f, std::abs(a.fidelity - b.fidelity)});
      }
    }
    add("pruned_equals_full", worst <= 1e-9, worst, 1e-9);
  }

  // Depolarizing identity on product states: (1 - 2p/3)^N for every state.
  {
    double worst = 0.0;
    Rng r = shot_rng(seed, 0, 18);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::uint32_t nq : {1U, 4U, 8U})
      for (double p : {0.01, 0.05}) {
        std::vector<std::pair<Complex, Complex>> qs;
        for (std::uint32_t q = 0; q < nq; ++q) {
          Complex a0(g(r), g(r)), a1(g(r), g(r));
          const double nn = std::sqrt(std::norm(a0) + std::norm(a1));
          qs.emplace_back(a0 / nn, a1 / nn);
        }
        const double exact = dense_identity_fidelity(qs, qubit_depolarizing(p));
        worst = std::max(worst, std::abs(exact - std::pow(1.0 - 2.0 * p / 3.0, nq)));
      }
    add("identity_depolarizing_closed_form", worst <= 1e-12, worst, 1e-12);
  }

  // Filtration is transparent without noise.
  {
    const TreeShape shape(2, 1);
    const QuerySchedule sched = build_schedule(shape);
    Rng r = shot_rng(seed, 2, 19);
    const DataTable table = DataTable::random(shape, r);
    const auto op = make_qram_op(sched, table, make_noise_model("depolarizing", 0.0, 0.0, NoiseScope::AllQudits));
    const std::vector<RegisterState> ins{haar_qram_register(shape, 4, r)};
    double worst = 0.0;
    for (std::uint32_t T = 0; T <= 2; ++T) {
      EFConfig c;
      c.T = T;
      const EFResult e = run_ef(*op, ins, c, 16, seed, 1, false);
      worst = std::max({worst, std::abs(1.0 - e.P_S), std::abs(1.0 - e.F)});
    }
    add("filtration_transparent", worst <= 1e-12, worst, 1e-12);
  }

  // Closed-form bound arithmetic.
  {
    const EFBounds b = ef_bounds(0.1, 3);
    const double d = std::max({std::abs(b.worst - 0.2), std::abs(b.original - 0.6125), std::abs(b.refined - 0.8),
                               std::abs(b.dynamic_refined - 0.825)});
    add("ef_bound_arithmetic", d <= 1e-12, d, 1e-12);
    const double pl = std::max(std::abs(progressive_limit(4.0) - 0.125), std::abs(progressive_limit(2.0) - 0.25));
    add("progressive_limit", pl == 0.0, pl, 0.0);
  }
  return checks;
}

namespace {

struct ValidateArgs {
  std::uint64_t seed = 1;
  std::string output;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto checks = run_validation_suite(a.seed);
  bool all = true;
  json arr = json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance},
                   {"detail", c.detail}});
  }
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "validate";
  j["seed"] = a.seed;
  j["checks"] = arr;
  j["passed"] = all;
  Sink sink(a.output, out);
  sink.os() << j.dump(2) << '\n';
  return all ? kExitOk : kExitValidation;
}

// ---------------------------------------------------------------- fit

inline constexpr double kBoundConstantOriginal = 4.0;  // 1 - 4 eps as T grows
inline constexpr double kBoundConstantRefined = 2.0;   // 1 - 2 eps

struct FitArgs {
  std::string config, input, n = "4..14:2", curve_output, output, channel = "depolarizing", scope = "all-qudits";
  bool simulate = false;
  double epsilon = 1e-5;
  std::uint64_t shots = 20000, branches = 16, seed = 0;
  int workers = 0;
  CLI::Option *o_input, *o_n, *o_curve, *o_output, *o_channel, *o_scope, *o_simulate, *o_eps, *o_shots,
      *o_branches, *o_seed, *o_workers;
};

void add_fit(CLI::App& app, FitArgs& a) {
  app.add_option("--config", a.config, "JSON config file; flags override its values");
  a.o_input = app.add_option("--input", a.input, "CSV with columns n,infidelity");
  a.o_simulate = app.add_flag("--simulate", a.simulate, "simulate the base-infidelity curve instead of reading it");
  a.o_n = app.add_option("--n", a.n, "address sizes for --simulate");
  a.o_eps = app.add_option("--epsilon", a.epsilon, "noise strength for --simulate");
  a.o_channel = app.add_option("--channel", a.channel, "noise channel for --simulate");
  a.o_scope = app.add_option("--scope", a.scope, "all-qudits|address-only");
  a.o_shots = app.add_option("--shots", a.shots, "trajectories per n for --simulate");
  a.o_branches = app.add_option("--branches", a.branches, "Haar-random active addresses for --simulate");
  a.o_seed = app.add_option("--seed", a.seed, "RNG seed for --simulate");
  a.o_workers = app.add_option("--workers", a.workers, "shot workers");
  a.o_curve = app.add_option("--curve-output", a.curve_output, "write the simulated curve as CSV");
  a.o_output = app.add_option("--output", a.output, "write JSON here instead of stdout");
}

std::vector<FitPoint> read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<FitPoint> pts;
  std::string line;
  int col_n = 0, col_y = 1;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (first) {
      first = false;
      if (!f.empty() && !std::isdigit(static_cast<unsigned char>(f[0][0]))) {
        col_n = col_y = -1;
        for (int i = 0; i < static_cast<int>(f.size()); ++i) {
          if (f[i] == "n") col_n = i;
          if (f[i] == "infidelity" || f[i] == "one_minus_F0" || f[i] == "1-F0") col_y = i;
        }
        if (col_n < 0 || col_y < 0) throw ConfigError("CSV header needs columns n and infidelity");
        continue;
      }
    }
    if (static_cast<int>(f.size()) <= std::max(col_n, col_y)) throw ConfigError("short CSV row: " + line);
    try {
      pts.push_back({std::stod(f[col_n]), std::stod(f[col_y])});
    } catch (const std::exception&) {
      throw ConfigError("bad CSV row: " + line);
    }
  }
  return pts;
}

int cmd_fit(FitArgs& a, std::ostream& out, std::ostream& err) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.merge(a.o_input, "input", a.input);
  cfg.merge(a.o_simulate, "simulate", a.simulate);
  cfg.merge(a.o_n, "n", a.n);
  cfg.merge(a.o_eps, "epsilon", a.epsilon);
  cfg.merge(a.o_channel, "channel", a.channel);
  cfg.merge(a.o_scope, "scope", a.scope);
  cfg.merge(a.o_shots, "shots", a.shots);
  cfg.merge(a.o_branches, "branches", a.branches);
  cfg.merge(a.o_workers, "workers", a.workers);
  cfg.merge(a.o_curve, "curve_output", a.curve_output);
  cfg.merge(a.o_output, "output", a.output);
  cfg.merge(a.o_seed, "seed", a.seed);
  cfg.reject_unknown();
  if (a.simulate == !a.input.empty()) throw ConfigError("give exactly one of --input or --simulate");

  std::vector<FitPoint> pts;
  bool generated_seed = false;
  if (a.simulate) {
    generated_seed = resolve_seed(a.o_seed, cfg, a.seed);
    if (a.shots == 0 || a.branches == 0) throw ConfigError("--shots and --branches must be at least 1");
    const NoiseScope scope = parse_scope(a.scope);
    const int workers = resolve_workers(a.o_workers, a.workers);
    for (std::uint32_t n : parse_uint_list(a.n)) {
      const TreeShape shape(n, 1);
      const QuerySchedule sched = build_schedule(shape);
      Rng r = shot_rng(a.seed, n, 20);
      const DataTable table = DataTable::random(shape, r);
      const SparseState in = haar_input(shape, std::min<std::uint64_t>(a.branches, shape.cells()), r);
      const NoiseModel model = make_noise_model(a.channel, a.epsilon, 0.0, scope);
      const FidelityEstimate e = estimate_fidelity(in, table, sched, model, a.shots, a.seed, Mode::Pruned,
                                                   Metric::Bus, workers);
      pts.push_back({static_cast<double>(n), 1.0 - e.mean});
    }
    if (!a.curve_output.empty()) {
      Sink sink(a.curve_output, out);
      sink.os() << "n,infidelity\n" << std::setprecision(12);
      for (const auto& p : pts) sink.os() << p.n << ',' << p.infidelity << '\n';
    }
  } else {
    pts = read_curve(a.input);
  }
  const PowerLawFit fit = fit_power_law(pts);
  const double e_orig = progressive_limit(kBoundConstantOriginal);
  const double e_ref = progressive_limit(kBoundConstantRefined);
  const std::uint32_t n_orig = max_feasible_n(fit, e_orig);
  const std::uint32_t n_ref = max_feasible_n(fit, e_ref);
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "fit";
  j["exponent"] = fit.exponent;
  j["prefactor"] = fit.prefactor;
  j["r2"] = fit.r2;
  j["points"] = pts.size();
  j["eps_max_original"] = e_orig;
  j["eps_max_refined"] = e_ref;
  j["n_max_original"] = n_orig;
  j["n_max_refined"] = n_ref;
  j["n_max_ratio"] = n_orig > 0 ? static_cast<double>(n_ref) / n_orig : 0.0;
  if (a.simulate) {
    j["seed"] = a.seed;
    j["epsilon"] = a.epsilon;
  }
  Sink sink(a.output, out);
  sink.os() << j.dump(2) << '\n';
  if (generated_seed) err << "seed: " << a.seed << '\n';
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- dispatch

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy bucket-brigade QRAM simulator and benchmark harness", "qrambench"};
  app.require_subcommand(1);
  QueryArgs qa;
  EfArgs ea;
  BenchArgs ba;
  ValidateArgs va;
  FitArgs fa;
  auto* q = app.add_subcommand("query", "run noisy queries and report fidelity");
  add_query(*q, qa);
  auto* e = app.add_subcommand("ef", "error-filtration sweep (CSV)");
  add_ef(*e, ea);
  auto* b = app.add_subcommand("bench", "runtime/memory benchmark (CSV, JSON summary)");
  add_bench(*b, ba);
  auto* v = app.add_subcommand("validate", "dense-oracle and analytic self-checks");
  v->add_option("--seed", va.seed, "RNG seed");
  v->add_option("--output", va.output, "write JSON here instead of stdout");
  auto* f = app.add_subcommand("fit", "power-law fit of base infidelity and feasible-size estimate");
  add_fit(*f, fa);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    if (q->parsed()) return cmd_query(qa, out);
    if (e->parsed()) return cmd_ef(ea, out, err);
    if (b->parsed()) return cmd_bench(ba, out, err);
    if (v->parsed()) return cmd_validate(va, out);
    if (f->parsed()) return cmd_fit(fa, out, err);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& ex) {
    err << "runtime error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace qrambench
