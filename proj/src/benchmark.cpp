#include "qrambench/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <omp.h>

namespace qrambench {

double region_x(std::uint32_t n, double p) {
  return static_cast<double>(n) * static_cast<double>(n) * p * std::ldexp(1.0, static_cast<int>(n));
}

Region classify_region(std::uint32_t n, double p) {
  const double x = region_x(n, p);
  if (x < kRegionLower) return Region::I;
  if (x <= kRegionUpper) return Region::II;
  return Region::III;
}

std::string to_string(Region r) {
  switch (r) {
    case Region::I: return "I";
    case Region::II: return "II";
    case Region::III: return "III";
  }
  return "?";
}

namespace {

Region parse_region(const std::string& s) {
  if (s == "I") return Region::I;
  if (s == "II") return Region::II;
  if (s == "III") return Region::III;
  throw DomainError("unknown region '" + s + "'");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mad(const std::vector<double>& v) {
  const double m = median(v);
  std::vector<double> d;
  for (double x : v) d.push_back(std::abs(x - m));
  return median(d);
}

struct CellResult {
  std::vector<double> times;
  double peak = 0.0, unreliable = 0.0, stepped = 0.0;
};

// Runs `shots` queries per repetition with fixed per-shot seeds so branch and
// memory counts are reproducible; only timing varies.
CellResult run_cell(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                    const NoiseModel& model, Mode mode, const BenchConfig& cfg, std::uint64_t cell_seed) {
  CellResult r;
  RunOptions opts;
  opts.mode = mode;
  opts.compute_fidelity = false;
  opts.account_memory = true;
  const auto shots = static_cast<std::int64_t>(cfg.shots);
  std::vector<double> peak(cfg.shots), unrel(cfg.shots), step(cfg.shots);
  for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.workers > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.workers)
      for (std::int64_t s = 0; s < shots; ++s) {
        Rng rng = shot_rng(cell_seed, static_cast<std::uint64_t>(s));
        const auto o = run_noisy(input, table, schedule, model, rng, opts);
        const auto i = static_cast<std::size_t>(s);
        peak[i] = static_cast<double>(o.peak_bytes);
        unrel[i] = static_cast<double>(o.unreliable_inputs);
        step[i] = static_cast<double>(o.stepped_branches);
      }
    } else {
      for (std::int64_t s = 0; s < shots; ++s) {
        Rng rng = shot_rng(cell_seed, static_cast<std::uint64_t>(s));
        const auto o = run_noisy(input, table, schedule, model, rng, opts);
        const auto i = static_cast<std::size_t>(s);
        peak[i] = static_cast<double>(o.peak_bytes);
        unrel[i] = static_cast<double>(o.unreliable_inputs);
        step[i] = static_cast<double>(o.stepped_branches);
      }
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    r.times.push_back(dt.count() / static_cast<double>(cfg.shots));
  }
  for (std::size_t i = 0; i < cfg.shots; ++i) {
    r.peak += peak[i];
    r.unreliable += unrel[i];
    r.stepped += step[i];
  }
  const double m = static_cast<double>(cfg.shots);
  r.peak /= m;
  r.unreliable /= m;
  r.stepped /= m;
  return r;
}

std::uint64_t resolve_branches(std::uint32_t n, std::uint64_t b) {
  const std::uint64_t cells = std::uint64_t{1} << n;
  if (b == kFullBranchSize) return cells;
  if (b > cells) throw DomainError("branch size exceeds 2^n");
  return b;
}

DataTable make_table(const TreeShape& shape, std::uint64_t seed) {
  Rng rng = shot_rng(seed, shape.n, 7);
  return DataTable::random(shape, rng);
}

void check_cfg(const BenchConfig& cfg) {
  if (cfg.shots == 0) throw DomainError("benchmark needs at least one shot");
}

}  // namespace

std::vector<CostSample> measure_static(const std::vector<std::uint32_t>& ns,
                                       const std::vector<std::uint64_t>& branch_sizes, const BenchConfig& cfg) {
  std::vector<CostSample> out;
  if (cfg.repetitions == 0) return out;
  check_cfg(cfg);
  const NoiseModel quiet = make_noise_model(cfg.channel, 0.0, 0.0, cfg.scope);
  for (std::uint32_t n : ns) {
    const TreeShape shape(n, cfg.k);
    const QuerySchedule schedule = build_schedule(shape);
    const DataTable table = make_table(shape, cfg.seed);
    for (std::uint64_t b0 : branch_sizes) {
      const std::uint64_t b = resolve_branches(n, b0);
      const SparseState input = uniform_input(shape, b);
      const CellResult r = run_cell(input, table, schedule, quiet, Mode::Pruned, cfg, cfg.seed);
      CostSample s;
      s.n = n;
      s.branch_count = b;
      s.mode = Mode::Pruned;
      s.wall_time = median(r.times);
      s.time_noise_floor = mad(r.times);
      s.peak_memory = r.peak;
      s.table_memory = static_cast<double>(table.bytes());
      s.branch_memory = r.peak - s.table_memory;
      s.region = classify_region(n, 0.0);
      s.seed = cfg.seed;
      s.shots = cfg.shots;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<CostSample> measure_dynamic(const std::vector<std::uint32_t>& ns, const std::vector<double>& ps,
                                        std::uint64_t branch_size, Mode mode, const BenchConfig& cfg,
                                        const std::vector<CostSample>* baseline) {
  std::vector<CostSample> out;
  if (cfg.repetitions == 0) return out;
  check_cfg(cfg);
  for (std::uint32_t n : ns) {
    const TreeShape shape(n, cfg.k);
    const QuerySchedule schedule = build_schedule(shape);
    const DataTable table = make_table(shape, cfg.seed);
    const std::uint64_t b = resolve_branches(n, branch_size);
    const SparseState input = uniform_input(shape, b);
    const CostSample* base = nullptr;
    if (baseline) {
      for (const auto& c : *baseline)
        if (c.n == n && c.branch_count == b && c.epsilon == 0.0) base = &c;
      if (!base) throw DomainError("no noiseless baseline for n=" + std::to_string(n));
    }
    for (double p : ps) {
      const NoiseModel model = make_noise_model(cfg.channel, p, cfg.gamma, cfg.scope);
      const std::uint64_t cell_seed = splitmix64(cfg.seed ^ (std::uint64_t{n} << 32) ^ std::hash<double>{}(p));
      const CellResult r = run_cell(input, table, schedule, model, mode, cfg, cell_seed);
      CostSample s;
      s.n = n;
      s.branch_count = b;
      s.epsilon = p;
      s.gamma = cfg.gamma;
      s.mode = mode;
      s.wall_time = median(r.times);
      s.time_noise_floor = mad(r.times);
      s.peak_memory = r.peak;
      s.table_memory = static_cast<double>(table.bytes());
      s.branch_memory = r.peak - s.table_memory;
      s.unreliable_branches = r.unreliable;
      s.stepped_branches = r.stepped;
      s.region = classify_region(n, p);
      s.seed = cfg.seed;
      s.shots = cfg.shots;
      if (base) {
        s.delta_time = s.wall_time - base->wall_time;
        s.delta_memory = s.peak_memory - base->peak_memory;
      }
      out.push_back(s);
    }
  }
  return out;
}

ModeComparison compare_modes(const std::vector<CostSample>& full, const std::vector<CostSample>& pruned) {
  ModeComparison c;
  for (const auto& p : pruned) {
    const CostSample* f = nullptr;
    for (const auto& x : full)
      if (x.n == p.n && x.epsilon == p.epsilon && x.seed == p.seed && x.branch_count == p.branch_count) f = &x;
    if (!f) {
      std::ostringstream w;
      w << "no full-mode sample for n=" << p.n << " p=" << p.epsilon << " seed=" << p.seed;
      c.warnings.push_back(w.str());
      continue;
    }
    ModeRatio r;
    r.n = p.n;
    r.epsilon = p.epsilon;
    r.seed = p.seed;
    r.time_ratio = f->wall_time > 0.0 ? p.wall_time / f->wall_time : 1.0;
    r.memory_ratio = f->peak_memory > 0.0 ? p.peak_memory / f->peak_memory : 1.0;
    r.region = p.region;
    c.ratios.push_back(r);
  }
  return c;
}

void write_csv_header(std::ostream& os) {
  os << "n,branch_count,epsilon,gamma,mode,wall_time,peak_memory,branch_memory,table_memory,"
        "unreliable_branches,stepped_branches,region,seed,shots,delta_time,delta_memory,time_noise_floor\n";
}

void write_csv_row(std::ostream& os, const CostSample& s) {
  std::ostringstream o;
  o << std::setprecision(10);
  o << s.n << ',' << s.branch_count << ',' << s.epsilon << ',' << s.gamma << ',' << to_string(s.mode) << ','
    << s.wall_time << ',' << s.peak_memory << ',' << s.branch_memory << ',' << s.table_memory << ','
    << s.unreliable_branches << ',' << s.stepped_branches << ',' << to_string(s.region) << ',' << s.seed << ','
    << s.shots << ',';
  if (s.delta_time) o << *s.delta_time;
  o << ',';
  if (s.delta_memory) o << *s.delta_memory;
  o << ',' << s.time_noise_floor << '\n';
  os << o.str();
}

void write_csv(std::ostream& os, const std::vector<CostSample>& samples) {
  write_csv_header(os);
  for (const auto& s : samples) write_csv_row(os, s);
}

std::vector<CostSample> read_csv(std::istream& is) {
  std::vector<CostSample> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 17) throw DomainError("malformed benchmark CSV row: " + line);
    CostSample s;
    s.n = static_cast<std::uint32_t>(std::stoul(f[0]));
    s.branch_count = std::stoull(f[1]);
    s.epsilon = std::stod(f[2]);
    s.gamma = std::stod(f[3]);
    s.mode = parse_mode(f[4]);
    s.wall_time = std::stod(f[5]);
    s.peak_memory = std::stod(f[6]);
    s.branch_memory = std::stod(f[7]);
    s.table_memory = std::stod(f[8]);
    s.unreliable_branches = std::stod(f[9]);
    s.stepped_branches = std::stod(f[10]);
    s.region = parse_region(f[11]);
    s.seed = std::stoull(f[12]);
    s.shots = std::stoull(f[13]);
    if (!f[14].empty()) s.delta_time = std::stod(f[14]);
    if (!f[15].empty()) s.delta_memory = std::stod(f[15]);
    s.time_noise_floor = std::stod(f[16]);
    out.push_back(s);
  }
  return out;
}

}  // namespace qrambench
