#include <cmath>
#include <vector>

#include "qrambench/dense_oracle.hpp"
#include "qrambench/engine.hpp"


namespace qrambench {

namespace {

struct Site {
  FaultSite site;
  std::uint16_t source = 0;
  std::uint32_t unitaries = 0;  // error unitaries U_1..U_m
  double odds = 0.0;            // r / (1 - r)
};

}  // namespace

FidelityBracket enumerated_channel_fidelity(const SparseState& input, const DataTable& table,
                                            const QuerySchedule& schedule, const NoiseModel& model,
                                            std::uint32_t max_order) {
  if (max_order > 2) throw DomainError("enumeration supports at most two faults");
  if (model.has_biased()) throw DomainError("enumeration requires mixed-unitary channels");

  const TreeShape& shape = schedule.shape;
  const auto steps = static_cast<std::uint32_t>(schedule.steps.size());
  std::vector<Site> sites;
  double log_none = 0.0;
  Rng unused(0);
  for (std::size_t si = 0; si < model.sources.size(); ++si) {
    const auto& src = model.sources[si];
    const double r = src.rate();
    if (r <= 0.0) continue;
    if (r >= 1.0) throw DomainError("enumeration requires fault rates below one");
    const bool data = src.data.has_value() && model.scope == NoiseScope::AllQudits;
    for (const auto& f : sample_fault_sites(steps, shape, 1.0, src.address.has_value(), data, unused)) {
      const auto& ch = src.channel_for(f.reg);
      sites.push_back({f, static_cast<std::uint16_t>(si), static_cast<std::uint32_t>(ch.unitaries.size() - 1),
                       r / (1.0 - r)});
      log_none += std::log1p(-r);
    }
  }
  const double p_none = std::exp(log_none);

  RunOptions opts;
  opts.mode = Mode::Pruned;
  opts.materialize = false;
  IdealBus ideal(input, table);
  opts.ideal = &ideal;

  auto event = [](const Site& s, std::uint32_t u) {
    FaultEvent ev = forced_fault(s.site.node, s.site.reg, s.site.timestep, u, s.site.bit, s.source);
    return ev;
  };
  auto ordered = [](FaultEvent a, FaultEvent b) {
    if (b.site.timestep < a.site.timestep || (b.site.timestep == a.site.timestep && b.source < a.source))
      std::swap(a, b);
    return std::vector<FaultEvent>{a, b};
  };

  double weighted = p_none;  // F = 1 with no faults
  double mass = p_none;
  std::uint64_t configs = 1;

  if (max_order >= 1) {
    const auto m = static_cast<std::int64_t>(sites.size());
    double w1 = 0.0, f1 = 0.0;
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : w1, f1)
    for (std::int64_t i = 0; i < m; ++i) {
      const Site& s = sites[i];
      const double w = p_none * s.odds / s.unitaries;
      for (std::uint32_t u = 1; u <= s.unitaries; ++u) {
        const auto out = run_with_faults(input, table, schedule, model, {event(s, u)}, opts);
        w1 += w;
        f1 += w * out.fidelity;
      }
    }
    weighted += f1;
    mass += w1;
    for (const auto& s : sites) configs += s.unitaries;
  }

  if (max_order >= 2) {
    const auto m = static_cast<std::int64_t>(sites.size());
    double w2 = 0.0, f2 = 0.0;
    std::uint64_t c2 = 0;
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : w2, f2, c2)
    for (std::int64_t i = 0; i < m; ++i) {
      const Site& a = sites[i];
      for (std::int64_t j = i + 1; j < m; ++j) {
        const Site& b = sites[j];
        const double w = p_none * a.odds * b.odds / (a.unitaries * b.unitaries);
        for (std::uint32_t ua = 1; ua <= a.unitaries; ++ua)
          for (std::uint32_t ub = 1; ub <= b.unitaries; ++ub) {
            const auto out = run_with_faults(input, table, schedule, model, ordered(event(a, ua), event(b, ub)), opts);
            w2 += w;
            f2 += w * out.fidelity;
            ++c2;
          }
      }
    }
    weighted += f2;
    mass += w2;
    configs += c2;
  }

  FidelityBracket br;
  br.tail_mass = std::max(0.0, 1.0 - mass);
  br.lower = weighted;
  br.upper = weighted + br.tail_mass;
  br.configurations = configs;
  return br;
}

}  // namespace qrambench
