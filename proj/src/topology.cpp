#include "qrambench/topology.hpp"

#include <algorithm>
#include <string>

namespace qrambench {

TreeShape::TreeShape(std::uint32_t n_, std::uint32_t k_) : n(n_), k(k_) {
  if (n < 1 || n > 30) throw DomainError("address size n must be in [1, 30], got " + std::to_string(n));
  if (k < 1 || k > 16) throw DomainError("data width k must be in [1, 16], got " + std::to_string(k));
}

std::uint64_t flat_index(NodeId node) {
  if (node.layer > 62 || node.pos >= (std::uint64_t{1} << node.layer)) {
    throw DomainError("invalid node (" + std::to_string(node.layer) + ", " + std::to_string(node.pos) + ")");
  }
  return layer_begin(node.layer) + node.pos;
}

NodeId node_from_flat(std::uint64_t flat) {
  std::uint32_t layer = 0;
  while (layer_begin(layer + 1) <= flat) ++layer;
  return {layer, flat - layer_begin(layer)};
}

void validate(NodeId node, const TreeShape& shape) {
  if (node.layer > shape.n) {
    throw DomainError("node layer " + std::to_string(node.layer) + " exceeds tree depth " + std::to_string(shape.n));
  }
  (void)flat_index(node);
}

std::vector<PathStep> routing_path(Address address, const TreeShape& shape) {
  if (address >= shape.cells()) {
    throw DomainError("address " + std::to_string(address) + " out of range for n=" + std::to_string(shape.n));
  }
  std::vector<PathStep> path;
  path.reserve(shape.n);
  std::uint64_t pos = 0;
  for (std::uint32_t t = 0; t < shape.n; ++t) {
    const int bit = static_cast<int>((address >> (shape.n - 1 - t)) & 1U);
    path.push_back({{t, pos}, bit});
    pos = 2 * pos + static_cast<std::uint64_t>(bit);
  }
  return path;
}

AddressRange affected_range(NodeId node, const TreeShape& shape) {
  validate(node, shape);
  const std::uint64_t width = std::uint64_t{1} << (shape.n - node.layer);
  const Address lo = width * node.pos;
  return {lo, lo + width - 1};
}

AddressRange affected_range(const FaultSite& fault, const TreeShape& shape) {
  return affected_range(fault.node, shape);
}

bool UnreliableSet::contains(Address a) const {
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), a,
                             [](Address v, const AddressRange& r) { return v < r.lo; });
  if (it == ranges_.begin()) return false;
  return std::prev(it)->contains(a);
}

std::uint64_t UnreliableSet::count() const {
  std::uint64_t total = 0;
  for (const auto& r : ranges_) total += r.size();
  return total;
}

std::set<Address> UnreliableSet::to_set() const {
  std::set<Address> out;
  for (const auto& r : ranges_)
    for (Address a = r.lo; a <= r.hi; ++a) out.insert(a);
  return out;
}

UnreliableSet unreliable_set(std::span<const FaultSite> faults, const TreeShape& shape) {
  std::vector<AddressRange> ranges;
  ranges.reserve(faults.size());
  for (const auto& f : faults) ranges.push_back(affected_range(f, shape));
  std::sort(ranges.begin(), ranges.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  std::vector<AddressRange> merged;
  for (const auto& r : ranges) {
    // Subtree ranges are either nested or disjoint; adjacent ones are joined too.
    if (!merged.empty() && r.lo <= merged.back().hi + 1) {
      merged.back().hi = std::max(merged.back().hi, r.hi);
    } else {
      merged.push_back(r);
    }
  }
  return UnreliableSet(std::move(merged));
}

}  // namespace qrambench
