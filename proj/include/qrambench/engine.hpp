#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qrambench/data_table.hpp"
#include "qrambench/noise.hpp"
#include "qrambench/schedule.hpp"
#include "qrambench/sparse_state.hpp"

namespace qrambench {

enum class Mode : std::uint8_t { Full, Pruned };
enum class Metric : std::uint8_t { Bus, Full };

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);
Metric parse_metric(const std::string& s);

/// `count` addresses spread evenly over [0, 2^n), data 0, equal amplitudes.
SparseState uniform_input(const TreeShape& shape, std::uint64_t count);
/// Same support as uniform_input with Haar-random (normalised Gaussian)
/// amplitudes.
SparseState haar_input(const TreeShape& shape, std::uint64_t count, Rng& rng);
std::vector<Address> spread_addresses(const TreeShape& shape, std::uint64_t count);

/// |i>|j> -> |i>|j ^ d_i>, trees idle; computed directly, no tree.
SparseState ideal_output(const SparseState& input, const DataTable& table);

/// Ideal bus amplitudes keyed by (address, data).
class IdealBus {
 public:
  IdealBus(const SparseState& input, const DataTable& table);
  Complex amplitude(std::uint64_t address, std::uint64_t data) const;

 private:
  struct KeyHash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const;
  };
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, Complex, KeyHash> amps_;
};

/// Applies one layer operation to a branch. In ghost mode bus operations and
/// the unconditioned root internal swap are skipped (off-path overlay).
void apply_op(Branch& b, const LayerOp& op, const DataTable& table, const TreeShape& shape, bool ghost = false);
void apply_step(Branch& b, const TimeStep& step, const DataTable& table, const TreeShape& shape, bool ghost = false);

/// Steps every branch through the schedule without noise.
SparseState run_noiseless(const SparseState& input, const DataTable& table, const QuerySchedule& schedule);

/// Number of set address qutrits after each timestep of a noiseless query
/// (identical for every address).
std::vector<std::uint32_t> nominal_set_counts(const QuerySchedule& schedule, const DataTable& table);

struct RunOptions {
  Mode mode = Mode::Pruned;
  Metric metric = Metric::Bus;
  bool materialize = true;      // pruned: emit reliable branches into `final`
  bool compute_fidelity = true;
  bool account_memory = false;
  const IdealBus* ideal = nullptr;  // reused across shots when provided
};

struct ShotOutcome {
  SparseState final;  // pruned + !materialize: unreliable branches only
  std::vector<FaultEvent> faults;
  UnreliableSet unreliable;
  double fidelity = 1.0;
  Mode mode = Mode::Pruned;
  std::uint64_t stepped_branches = 0;  // branches evolved individually
  std::uint64_t unreliable_inputs = 0; // input branches whose address is unreliable
  std::uint64_t input_branches = 0;
  double reliable_weight = 0.0;        // input weight of reliable branches
  Branch ghost;                        // shared off-path tree and its scalar
  std::uint64_t peak_bytes = 0;        // deterministic memory accounting
};

/// Samples faults from `rng` and runs one trajectory.
ShotOutcome run_noisy(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                      const NoiseModel& model, Rng& rng, const RunOptions& opts);

/// Runs one trajectory with a fixed fault list (forced-fault API). Events must
/// be ordered by timestep; pending biased events are resolved with their draw.
ShotOutcome run_with_faults(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                            const NoiseModel& model, std::vector<FaultEvent> faults, const RunOptions& opts);

/// Single-fault helper: a mixed-unitary event with a chosen unitary index.
FaultEvent forced_fault(NodeId node, Register reg, std::uint32_t timestep, std::uint32_t unitary_index,
                        std::uint32_t bit = 0, std::uint16_t source = 0);

/// Bytes attributed to one branch with `entries` tree-map entries.
std::uint64_t branch_bytes(std::uint64_t entries);
std::uint64_t noiseless_bytes(std::uint64_t branches, const DataTable& table);

struct FidelityEstimate {
  double mean = 1.0;
  double std_error = 0.0;
  double reliable_fraction = 1.0;
  double mean_stepped = 0.0;
  std::uint64_t shots = 0;
};

/// Mean trajectory fidelity over `shots` shots seeded by shot_rng(seed, s).
/// The result is independent of the worker count.
FidelityEstimate estimate_fidelity(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                                   const NoiseModel& model, std::uint64_t shots, std::uint64_t seed, Mode mode,
                                   Metric metric = Metric::Bus, int workers = 0);
/// Plain serial loop, kept as the reference for the parallel version.
FidelityEstimate estimate_fidelity_serial(const SparseState& input, const DataTable& table,
                                          const QuerySchedule& schedule, const NoiseModel& model,
                                          std::uint64_t shots, std::uint64_t seed, Mode mode,
                                          Metric metric = Metric::Bus);

/// Reads QRAMBENCH_WORKERS; returns `fallback` when unset or invalid.
int workers_from_env(int fallback);

}  // namespace qrambench
