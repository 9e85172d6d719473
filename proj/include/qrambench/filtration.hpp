#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qrambench/data_table.hpp"
#include "qrambench/noise.hpp"
#include "qrambench/schedule.hpp"
#include "qrambench/sparse_state.hpp"

namespace qrambench {

/// Pure state of one register as (basis label, amplitude) pairs.
struct RegisterState {
  std::vector<std::pair<std::uint64_t, Complex>> amps;
  double norm2() const;
};

/// Computational-basis component of the joint control (x) memory (x) slot
/// state. `env` keeps the residual tree left behind by each invocation.
struct JointBranch {
  Complex amp;
  std::uint32_t control = 0;
  std::uint64_t memory = 0;
  std::uint64_t slot = 0;
  std::vector<TreeConfig> env;
};

/// A noisy operation acting on the slot register. Faults are drawn once per
/// invocation and applied to every joint branch alike.
class NoisyOperation {
 public:
  virtual ~NoisyOperation() = default;
  virtual std::string name() const = 0;
  /// Ideal action on a basis label (all supported ideal ops are permutations).
  virtual std::uint64_t ideal(std::uint64_t label) const = 0;

  struct Faults {
    std::vector<FaultEvent> events;
    bool empty() const { return events.empty(); }
  };
  virtual Faults sample(Rng& rng) const = 0;
  /// Applies one invocation to the slot register of every branch.
  virtual void invoke(std::vector<JointBranch>& branches, Faults& faults) const = 0;
};

/// Identity on `qubits` qubits followed by qubit depolarizing(eps) on each.
std::unique_ptr<NoisyOperation> make_identity_op(std::uint32_t qubits, double eps);
/// CNOT (qubit 0 controls qubit 1) followed by qubit depolarizing(eps) on each.
std::unique_ptr<NoisyOperation> make_cnot_op(double eps);
/// One BB QRAM query on the slot bus (label = address + 2^n data), simulated
/// in pruned mode with fresh faults from `model` per invocation.
std::unique_ptr<NoisyOperation> make_qram_op(const QuerySchedule& schedule, const DataTable& table,
                                             NoiseModel model);

enum class Estimator : std::uint8_t { WeightAccumulation, SampledOutcome };
Estimator parse_estimator(const std::string& s);

struct EFConfig {
  std::uint32_t T = 1;
  Estimator estimator = Estimator::WeightAccumulation;
  bool ancilla_equals_memory = true;
};

enum class EFLayerKind : std::uint8_t { Hadamard, ControlledSwap, Invoke, Project };
struct EFLayer {
  EFLayerKind kind = EFLayerKind::Hadamard;
  std::uint32_t invocation = 0;  // control value selecting the memory register
};

struct EFSchedule {
  std::uint32_t T = 0;
  std::vector<EFLayer> layers;
  std::uint32_t count(EFLayerKind k) const;
};

/// H^T; for each control value v: CSWAP(c == v), invoke, CSWAP(c == v);
/// H^T; project the control onto |0...0>. T = 0 is a single bare invocation.
EFSchedule build_ef_schedule(std::uint32_t T);

struct EFShotRecord {
  double pass_weight = 1.0;
  double conditional_fidelity = 1.0;
  std::size_t faults = 0;
  bool passed = true;  // sampled-outcome estimator only
};

struct EFResult {
  double P_S = 1.0;
  double P_S_stderr = 0.0;
  double F = 1.0;
  double F_stderr = 0.0;
  std::uint64_t shots = 0;
  std::uint64_t passed_shots = 0;
  bool estimation_failed = false;
  std::vector<EFShotRecord> records;
};

/// Runs one shot of the EF circuit on fixed inputs.
EFShotRecord run_ef_shot(const NoisyOperation& op, const RegisterState& psi, const RegisterState& phi,
                         std::uint32_t T, Rng& rng);

/// Level-T EF over `shots` shots (T = 0 gives the unfiltered base run).
/// When `inputs` is non-empty, shot s uses inputs[s % inputs.size()].
EFResult run_ef(const NoisyOperation& op, const std::vector<RegisterState>& inputs, const EFConfig& cfg,
                std::uint64_t shots, std::uint64_t seed, int workers = 0, bool keep_records = false);
EFResult run_ef_serial(const NoisyOperation& op, const std::vector<RegisterState>& inputs, const EFConfig& cfg,
                       std::uint64_t shots, std::uint64_t seed, bool keep_records = false);

/// Haar-random state over `count` evenly spread addresses with data 0.
RegisterState haar_qram_register(const TreeShape& shape, std::uint64_t count, Rng& rng);
/// Random product state of `qubits` qubits (Haar per qubit).
RegisterState random_product_register(std::uint32_t qubits, Rng& rng);

/// (1 - F0) / (1 - FT); +infinity when FT = 1.
double suppression_ratio(double F0, double FT);
double predicted_ratio(std::uint32_t T, double P_S);

struct EFBounds {
  double worst = 1.0;
  double original = 1.0;
  double refined = 1.0;
  double dynamic_refined = 1.0;
};
EFBounds ef_bounds(double eps, std::uint32_t T);

struct EFBoundCheck {
  bool worst = true, original = true, refined = true, dynamic_refined = true;
};
/// P_S >= bound - 3 sigma for each bound.
EFBoundCheck check_bounds(const EFBounds& b, double P_S, double sigma);

/// Largest eps with 2^T P_S >= 2^(T-1) when P_S >= 1 - C eps: 1 / (2 C).
double progressive_limit(double C_bound);

}  // namespace qrambench
