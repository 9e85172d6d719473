// Serial reference vs OpenMP shot loops: wall time and result equality.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include <omp.h>

#include "qrambench/engine.hpp"
#include "qrambench/filtration.hpp"

using namespace qrambench;

namespace {

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint32_t n = argc > 1 ? static_cast<std::uint32_t>(std::stoul(argv[1])) : 8;
  const std::uint64_t shots = argc > 2 ? std::stoull(argv[2]) : 2000;
  const int workers = workers_from_env(omp_get_max_threads());

  const TreeShape shape(n, 2);
  const QuerySchedule sched = build_schedule(shape);
  Rng rng(5);
  const DataTable table = DataTable::random(shape, rng);
  const SparseState input = haar_input(shape, std::min<std::uint64_t>(64, shape.cells()), rng);
  const NoiseModel model = make_noise_model("depolarizing", 1e-4, 0.0, NoiseScope::AllQudits);

  FidelityEstimate s{}, p{};
  const double ts = seconds([&] { s = estimate_fidelity_serial(input, table, sched, model, shots, 9, Mode::Pruned); });
  const double tp =
      seconds([&] { p = estimate_fidelity(input, table, sched, model, shots, 9, Mode::Pruned, Metric::Bus, workers); });
  std::printf("query shots  n=%u shots=%llu workers=%d  serial %.3fs  openmp %.3fs  speedup %.2f  |dF|=%.1e\n", n,
              static_cast<unsigned long long>(shots), workers, ts, tp, ts / tp, std::abs(s.mean - p.mean));

  const auto op = make_identity_op(4, 0.01);
  std::vector<RegisterState> ins;
  for (int i = 0; i < 20; ++i) ins.push_back(random_product_register(4, rng));
  EFConfig cfg;
  cfg.T = 2;
  EFResult es, ep;
  const double es_t = seconds([&] { es = run_ef_serial(*op, ins, cfg, shots * 20, 3, false); });
  const double ep_t = seconds([&] { ep = run_ef(*op, ins, cfg, shots * 20, 3, workers, false); });
  std::printf("ef shots     T=2 shots=%llu workers=%d  serial %.3fs  openmp %.3fs  speedup %.2f  |dF|=%.1e\n",
              static_cast<unsigned long long>(shots * 20), workers, es_t, ep_t, es_t / ep_t, std::abs(es.F - ep.F));
  const bool same = s.mean == p.mean && es.F == ep.F && es.P_S == ep.P_S;
  std::printf("results identical: %s\n", same ? "yes" : "no");
  return same ? 0 : 1;
}
