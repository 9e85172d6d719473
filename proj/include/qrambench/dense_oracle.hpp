#pragma once

#include <cstdint>
#include <vector>

#include "qrambench/data_table.hpp"
#include "qrambench/noise.hpp"
#include "qrambench/schedule.hpp"
#include "qrambench/sparse_state.hpp"

namespace qrambench {

/// Mixed-radix basis of bus address (2^n), bus data (2^k), control (2^T),
/// one qutrit per node and one k-bit word per node.
class DenseLayout {
 public:
  static constexpr std::uint64_t kMaxTrajectoryDim = std::uint64_t{1} << 23;
  static constexpr std::uint64_t kMaxChannelDim = 4096;

  DenseLayout(const TreeShape& shape, std::uint32_t control_bits = 0);

  std::uint64_t dim() const { return dim_; }
  const TreeShape& shape() const { return shape_; }
  std::uint32_t nodes() const { return nodes_; }

  std::uint64_t index(const Branch& b) const;
  Branch label(std::uint64_t index) const;  // amp left at zero

 private:
  friend struct DenseAccess;
  TreeShape shape_;
  std::uint32_t control_bits_ = 0;
  std::uint32_t nodes_ = 0;
  std::uint64_t dim_ = 0;
  std::uint64_t data_radix_ = 0;
  std::uint64_t stride_data_ = 0, stride_control_ = 0;
  std::vector<std::uint64_t> stride_q_, stride_w_;
};

struct DenseState {
  DenseLayout layout;
  std::vector<Complex> amps;

  explicit DenseState(const DenseLayout& l) : layout(l), amps(l.dim()) {}
  double norm2() const;
};

DenseState expand(const SparseState& s, const DenseLayout& layout);

/// Largest |a_i - b_i| after normalising both states.
double max_abs_difference(const DenseState& a, const DenseState& b);

/// Dense query evolution with the per-timestep basis permutations built once
/// and reused across trajectories.
class DenseQueryOracle {
 public:
  DenseQueryOracle(const QuerySchedule& schedule, const DataTable& table, bool parallel = true);
  DenseState run(const SparseState& input, const NoiseModel& model, std::vector<FaultEvent>& faults) const;
  const DenseLayout& layout() const { return layout_; }

 private:
  QuerySchedule schedule_;
  DenseLayout layout_;
  bool parallel_ = true;
  std::vector<std::vector<std::uint32_t>> perms_;
};

/// Full state-vector evolution of one trajectory with the given (already
/// sampled) fault events; biased events are resolved with their draw and the
/// resolution is written back.
DenseState dense_trajectory(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                            const NoiseModel& model, std::vector<FaultEvent>& faults, bool parallel = true);

/// Exact density-matrix evolution with every Kraus channel applied at every
/// eligible (qudit, timestep); returns the fidelity of the bus against the
/// ideal query output with the tree traced out (Metric::Bus) or kept idle.
double dense_channel_fidelity(const SparseState& input, const DataTable& table, const QuerySchedule& schedule,
                              const NoiseModel& model, bool bus_metric = true, bool parallel = true);

/// Bracket on the exact channel fidelity from enumerating every fault
/// configuration with at most `max_order` faults (all error unitaries, exact
/// weights); the unenumerated probability mass bounds the remainder, so the
/// exact value lies in [lower, upper]. Mixed-unitary models only.
struct FidelityBracket {
  double lower = 0.0;
  double upper = 1.0;
  double tail_mass = 1.0;
  std::uint64_t configurations = 0;
};

FidelityBracket enumerated_channel_fidelity(const SparseState& input, const DataTable& table,
                                            const QuerySchedule& schedule, const NoiseModel& model,
                                            std::uint32_t max_order = 2);

/// Exact fidelity of N_r qubits under independent qubit channels, averaged
/// analytically over a pure input product state given per qubit.
double dense_identity_fidelity(const std::vector<std::pair<Complex, Complex>>& qubits, const KrausChannel& channel);

}  // namespace qrambench
