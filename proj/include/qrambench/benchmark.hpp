#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qrambench/engine.hpp"

namespace qrambench {

enum class Region : std::uint8_t { I, II, III };

inline constexpr double kRegionLower = 1.0;
inline constexpr double kRegionUpper = 256.0;
/// Alternative upper threshold from the main-text reading; reported only.
inline constexpr double kRegionUpperAlt = 100.0;

/// x = n^2 p 2^n.
double region_x(std::uint32_t n, double p);
Region classify_region(std::uint32_t n, double p);
std::string to_string(Region r);

/// Branch size meaning "all 2^n addresses".
inline constexpr std::uint64_t kFullBranchSize = 0;

struct CostSample {
  std::uint32_t n = 0;
  std::uint64_t branch_count = 0;
  double epsilon = 0.0;
  double gamma = 0.0;
  Mode mode = Mode::Pruned;
  double wall_time = 0.0;          // seconds per query, median over repetitions
  double peak_memory = 0.0;        // bytes, mean over shots
  double branch_memory = 0.0;      // bytes excluding the classical table
  double table_memory = 0.0;
  double unreliable_branches = 0.0;  // mean unreliable input branches per shot
  double stepped_branches = 0.0;     // mean individually evolved branches
  Region region = Region::I;
  std::uint64_t seed = 0;
  std::uint64_t shots = 0;
  std::optional<double> delta_time;    // noisy minus noiseless baseline
  std::optional<double> delta_memory;
  double time_noise_floor = 0.0;       // spread of repetitions (MAD, seconds)
};

struct BenchConfig {
  std::uint32_t k = 1;
  std::string channel = "depolarizing";
  double gamma = 0.0;
  NoiseScope scope = NoiseScope::AllQudits;
  std::uint64_t shots = 20;        // queries per repetition
  std::uint32_t repetitions = 5;
  std::uint64_t seed = 1;
  int workers = 1;                 // >1 runs shots in parallel
};

/// Noiseless pruned-mode costs. Throws DomainError if a branch size exceeds 2^n.
std::vector<CostSample> measure_static(const std::vector<std::uint32_t>& ns,
                                       const std::vector<std::uint64_t>& branch_sizes, const BenchConfig& cfg);

/// Noisy costs per (n, p) cell. With a baseline, ΔCost is filled in and a
/// missing (n, branch) baseline cell throws DomainError.
std::vector<CostSample> measure_dynamic(const std::vector<std::uint32_t>& ns, const std::vector<double>& ps,
                                        std::uint64_t branch_size, Mode mode, const BenchConfig& cfg,
                                        const std::vector<CostSample>* baseline = nullptr);

struct ModeRatio {
  std::uint32_t n = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double time_ratio = 1.0;    // pruned / full
  double memory_ratio = 1.0;
  Region region = Region::I;
};

struct ModeComparison {
  std::vector<ModeRatio> ratios;
  std::vector<std::string> warnings;  // unmatched cells
};

ModeComparison compare_modes(const std::vector<CostSample>& full, const std::vector<CostSample>& pruned);

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const CostSample& s);
void write_csv(std::ostream& os, const std::vector<CostSample>& samples);
std::vector<CostSample> read_csv(std::istream& is);

}  // namespace qrambench
