#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qrambench/rng.hpp"
#include "qrambench/topology.hpp"

namespace qrambench {

/// Classical memory contents: 2^n words of k bits.
class DataTable {
 public:
  DataTable() = default;
  DataTable(const TreeShape& shape, std::vector<std::uint32_t> entries);

  static DataTable zeros(const TreeShape& shape);
  static DataTable random(const TreeShape& shape, Rng& rng);

  std::uint32_t operator[](Address a) const { return entries_[a]; }
  std::uint64_t size() const { return entries_.size(); }
  const TreeShape& shape() const { return shape_; }
  const std::vector<std::uint32_t>& entries() const { return entries_; }
  std::uint64_t bytes() const { return entries_.size() * sizeof(std::uint32_t); }

  /// ".csv" selects address,value rows; anything else is raw little-endian
  /// records of ceil(k/8) bytes.
  static DataTable load(const std::filesystem::path& path, const TreeShape& shape);
  void save(const std::filesystem::path& path) const;

 private:
  TreeShape shape_;
  std::vector<std::uint32_t> entries_;
};

}  // namespace qrambench
