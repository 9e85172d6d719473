#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qrambench {

using Address = std::uint64_t;

/// Node of the routing tree. Layer 0 is the root; layer n holds the leaves
/// that attach to the classical memory cells.
struct NodeId {
  std::uint32_t layer = 0;
  std::uint64_t pos = 0;

  friend bool operator==(const NodeId&, const NodeId&) = default;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct TreeShape {
  std::uint32_t n = 1;  // address bits
  std::uint32_t k = 1;  // data bits

  TreeShape() = default;
  TreeShape(std::uint32_t n_, std::uint32_t k_);

  std::uint64_t cells() const { return std::uint64_t{1} << n; }
  std::uint64_t node_count() const { return (std::uint64_t{2} << n) - 1; }
};

enum class Register : std::uint8_t { Address, Data };

struct FaultSite {
  NodeId node;
  Register reg = Register::Address;
  std::uint32_t bit = 0;  // data-qubit index within the node (0 for address)
  std::uint32_t timestep = 0;

  friend bool operator==(const FaultSite&, const FaultSite&) = default;
};

/// Closed address interval [lo, hi].
struct AddressRange {
  Address lo = 0;
  Address hi = 0;

  bool contains(Address a) const { return a >= lo && a <= hi; }
  std::uint64_t size() const { return hi - lo + 1; }
  friend bool operator==(const AddressRange&, const AddressRange&) = default;
};

struct PathStep {
  NodeId node;
  int direction = 0;  // 0 = left child, 1 = right child
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::uint64_t flat_index(NodeId node);
NodeId node_from_flat(std::uint64_t flat);

inline std::uint64_t layer_begin(std::uint32_t layer) { return (std::uint64_t{1} << layer) - 1; }
inline std::uint64_t parent_flat(std::uint64_t flat) { return (flat - 1) / 2; }
inline std::uint64_t child_flat(std::uint64_t flat, int direction) {
  return 2 * flat + 1 + static_cast<std::uint64_t>(direction);
}

void validate(NodeId node, const TreeShape& shape);

/// Nodes visited by `address`, one per layer 0..n-1, each paired with the
/// direction bit taken there. Bit 0 of the walk is the address MSB.
std::vector<PathStep> routing_path(Address address, const TreeShape& shape);

/// Addresses whose routing path enters the subtree rooted at the fault node.
AddressRange affected_range(const FaultSite& fault, const TreeShape& shape);
AddressRange affected_range(NodeId node, const TreeShape& shape);

/// Union of the affected ranges of all faults, merged into disjoint sorted
/// intervals.
class UnreliableSet {
 public:
  UnreliableSet() = default;
  explicit UnreliableSet(std::vector<AddressRange> merged) : ranges_(std::move(merged)) {}

  bool contains(Address a) const;
  bool empty() const { return ranges_.empty(); }
  std::uint64_t count() const;
  const std::vector<AddressRange>& ranges() const { return ranges_; }
  std::set<Address> to_set() const;

 private:
  std::vector<AddressRange> ranges_;
};

UnreliableSet unreliable_set(std::span<const FaultSite> faults, const TreeShape& shape);

}  // namespace qrambench
