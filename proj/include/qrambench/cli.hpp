#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrambench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr const char* kSchemaVersion = "1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry point for the qrambench tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "6..18", "6..18:2" or "3,5,8".
std::vector<std::uint32_t> parse_uint_list(const std::string& spec);
/// Comma-separated floating-point values.
std::vector<double> parse_double_list(const std::string& spec);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Dense-oracle cross-checks and analytic identities.
std::vector<ValidationCheck> run_validation_suite(std::uint64_t seed);

}  // namespace qrambench
