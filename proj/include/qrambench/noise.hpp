#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrambench/rng.hpp"
#include "qrambench/sparse_state.hpp"
#include "qrambench/topology.hpp"

namespace qrambench {

enum class ChannelKind : std::uint8_t { MixedUnitary, Biased };

/// Kraus channel on a single qutrit (dim 3, basis {W,0,1}) or qubit (dim 2).
/// operators[0] is the identity-like (mixed-unitary) or default (biased)
/// operator; the rest are error operators.
struct KrausChannel {
  std::string name;
  ChannelKind kind = ChannelKind::MixedUnitary;
  int dim = 3;
  double strength = 0.0;
  std::vector<Matrix> operators;
  std::vector<double> probabilities;  // mixed-unitary weights p_i
  std::vector<Matrix> unitaries;      // mixed-unitary U_i, K_i = sqrt(p_i) U_i

  /// Rate at which noise spots are sampled per (qudit, timestep).
  double error_mass() const { return strength; }

  /// Largest entry of |sum K_i^dagger K_i - I|.
  double completeness_error() const;

  /// Outcome effects of the conditional channel resolved at a biased spot:
  /// {(K0^dag K0 - (1-s) I)/s, K_i^dag K_i / s}.
  std::vector<Matrix> spot_effects() const;

  /// Diagonal of the default operator; biased channels only.
  std::vector<Complex> default_diagonal() const;
};

KrausChannel qutrit_depolarizing(double eps);
KrausChannel qutrit_damping(double eps);
KrausChannel qutrit_heating(double eps);
KrausChannel qubit_depolarizing(double p);
KrausChannel qubit_amplitude_damping(double gamma);

Matrix qutrit_shift();  // A1
Matrix qutrit_clock();  // A2
Matrix pauli_x();
Matrix pauli_y();
Matrix pauli_z();

enum class Resolution : std::uint8_t { Pending, SampledUnitary, QuasiMeasured };

struct FaultEvent {
  FaultSite site;
  std::uint16_t source = 0;  // index into NoiseModel::sources
  Resolution resolution = Resolution::Pending;
  std::uint32_t index = 0;   // unitary index or measured outcome
  double draw = 0.0;         // uniform draw that resolves a biased spot
};

/// One independent noise process: a rate, and the channels it applies to
/// address qutrits and/or data qubits. Either channel may be absent.
struct NoiseSource {
  std::optional<KrausChannel> address;
  std::optional<KrausChannel> data;

  double rate() const;
  const KrausChannel& channel_for(Register reg) const;
  bool biased() const;
};

enum class NoiseScope : std::uint8_t { AllQudits, AddressOnly };

struct NoiseModel {
  std::vector<NoiseSource> sources;
  NoiseScope scope = NoiseScope::AllQudits;

  bool noiseless() const;
  bool has_biased() const;
};

/// Builds the query noise model for a named channel ("depolarizing",
/// "damping", "heating", "qubit-depolarizing") plus optional qutrit damping
/// of strength gamma on the address qutrits.
NoiseModel make_noise_model(const std::string& channel, double epsilon, double gamma, NoiseScope scope);

Coord coord_of(const FaultSite& site);

/// Independent Bernoulli(rate) draw for every eligible (qudit, timestep) pair.
/// Sites come out ordered by timestep, then address qutrits by node, then data
/// qubits by (node, bit).
std::vector<FaultSite> sample_fault_sites(std::uint32_t schedule_length, const TreeShape& shape, double rate,
                                          bool address_qudits, bool data_qudits, Rng& rng);

/// All qudits, every timestep (the plain Bernoulli site sampler).
std::vector<FaultSite> sample_fault_locations(std::uint32_t schedule_length, const TreeShape& shape, double rate,
                                              Rng& rng);

/// Samples every source, pre-draws each event's resolution randomness, and
/// returns events ordered by (timestep, source, site).
std::vector<FaultEvent> sample_faults(const NoiseModel& model, std::uint32_t schedule_length,
                                      const TreeShape& shape, Rng& rng);

/// Applies the sampled unitary of a mixed-unitary event to every branch.
void apply_unitary(SparseState& state, const Coord& target, const Matrix& unitary);

/// Samples U_i with probability p_i (identity included) and applies it.
std::size_t apply_mixed_unitary(SparseState& state, const Coord& target, const KrausChannel& channel, Rng& rng);

/// Picks the outcome whose cumulative normalised weight first exceeds `draw`.
std::size_t outcome_from_weights(std::span<const double> weights, double draw);

/// Resolves a biased noise spot on `target`: outcome i has probability
/// sum_b |a_b|^2 <v_b|E_i|v_b> / norm^2; K_i is applied and the state is
/// renormalised. Returns the outcome index.
std::size_t quasi_measure(SparseState& state, const Coord& target, const KrausChannel& channel, double draw);
std::size_t quasi_measure(SparseState& state, const Coord& target, const KrausChannel& channel, Rng& rng);

}  // namespace qrambench
