#include "qrambench/schedule.hpp"

#include <algorithm>

namespace qrambench {

std::uint32_t schedule_length(std::uint32_t n) { return n * n + 3 * n + 1; }

std::uint32_t QuerySchedule::stage_length(Stage s) const {
  return static_cast<std::uint32_t>(
      std::count_if(steps.begin(), steps.end(), [s](const TimeStep& t) { return t.stage == s; }));
}

LayerOp make_op(OpKind kind, std::uint32_t layer, const TreeShape& shape, std::uint32_t bit) {
  LayerOp op;
  op.kind = kind;
  op.layer = layer;
  op.bit = bit;
  switch (kind) {
    case OpKind::InjectAddress:
    case OpKind::BusData:
      op.node_lo = op.node_hi = 0;
      break;
    case OpKind::Routing:
      op.node_lo = layer_begin(layer);
      op.node_hi = layer_begin(layer + 2) - 1;  // layer and its children
      break;
    case OpKind::InternalSwap:
      op.node_lo = layer == 0 ? 0 : layer_begin(layer - 1);
      op.node_hi = layer_begin(layer + 1) - 1;
      break;
    case OpKind::MemoryAccess:
      op.node_lo = layer_begin(shape.n - 1);
      op.node_hi = layer_begin(shape.n + 1) - 1;
      break;
  }
  return op;
}

QuerySchedule build_schedule(const TreeShape& shape) {
  const std::uint32_t n = shape.n;
  QuerySchedule sched;
  sched.shape = shape;

  std::vector<TimeStep> setting;
  for (std::uint32_t t = 0; t < n; ++t) {
    TimeStep first{Stage::AddressSetting, {make_op(OpKind::InjectAddress, 0, shape, t)}};
    first.ops.push_back(t == 0 ? make_op(OpKind::InternalSwap, 0, shape) : make_op(OpKind::Routing, 0, shape));
    setting.push_back(first);
    for (std::uint32_t s = 1; s < t; ++s) setting.push_back({Stage::AddressSetting, {make_op(OpKind::Routing, s, shape)}});
    if (t >= 1) setting.push_back({Stage::AddressSetting, {make_op(OpKind::InternalSwap, t, shape)}});
  }

  sched.steps = setting;
  sched.steps.push_back({Stage::DataFetch, {make_op(OpKind::BusData, 0, shape), make_op(OpKind::Routing, 0, shape)}});
  for (std::uint32_t l = 1; l < n; ++l) sched.steps.push_back({Stage::DataFetch, {make_op(OpKind::Routing, l, shape)}});
  sched.steps.push_back({Stage::DataFetch, {make_op(OpKind::MemoryAccess, n, shape)}});
  for (std::uint32_t l = n; l-- > 1;) sched.steps.push_back({Stage::DataFetch, {make_op(OpKind::Routing, l, shape)}});
  sched.steps.push_back({Stage::DataFetch, {make_op(OpKind::Routing, 0, shape), make_op(OpKind::BusData, 0, shape)}});

  for (auto it = setting.rbegin(); it != setting.rend(); ++it) {
    TimeStep step{Stage::Uncompute, {it->ops.rbegin(), it->ops.rend()}};
    sched.steps.push_back(std::move(step));
  }
  return sched;
}

}  // namespace qrambench
