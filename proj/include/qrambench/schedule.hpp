#pragma once

#include <cstdint>
#include <vector>

#include "qrambench/topology.hpp"

namespace qrambench {

enum class OpKind : std::uint8_t {
  InjectAddress,  // swap bus address bit a_t with root data bit 0
  BusData,        // swap bus data word with root data word (inject / eject)
  Routing,        // every set node at `layer` swaps its data word with child(addr)
  InternalSwap,   // (W,b) <-> (b,0) on (address, data bit 0), parent must point here
  MemoryAccess,   // leaf data ^= d_leaf, parent must point at the leaf
};

enum class Stage : std::uint8_t { AddressSetting, DataFetch, Uncompute };

struct LayerOp {
  OpKind kind = OpKind::Routing;
  std::uint32_t layer = 0;  // target layer (Routing: source layer)
  std::uint32_t bit = 0;    // address bit index t for InjectAddress
  std::uint64_t node_lo = 0;  // flat node range touched by the op
  std::uint64_t node_hi = 0;

  friend bool operator==(const LayerOp&, const LayerOp&) = default;
};

struct TimeStep {
  Stage stage = Stage::AddressSetting;
  std::vector<LayerOp> ops;  // applied in order; every op is an involution

  friend bool operator==(const TimeStep&, const TimeStep&) = default;
};

struct QuerySchedule {
  TreeShape shape;
  std::vector<TimeStep> steps;

  std::uint32_t length() const { return static_cast<std::uint32_t>(steps.size()); }
  std::uint32_t stage_length(Stage s) const;
};

/// n^2 + 3n + 1 timesteps: address setting n(n+1)/2, data fetch 2n+1,
/// uncompute n(n+1)/2.
std::uint32_t schedule_length(std::uint32_t n);

QuerySchedule build_schedule(const TreeShape& shape);

LayerOp make_op(OpKind kind, std::uint32_t layer, const TreeShape& shape, std::uint32_t bit = 0);

}  // namespace qrambench
