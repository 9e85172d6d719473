#include "qrambench/sparse_state.hpp"

#include <cmath>
#include <string>
#include <type_traits>
#include <unordered_map>

namespace qrambench {

namespace {

inline void hash_mix(std::size_t& h, std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  v ^= v >> 30;
  v *= 0xbf58476d1ce4e5b9ULL;
  v ^= v >> 27;
  h ^= static_cast<std::size_t>(v);
}

struct LabelKey {
  const Branch* b;
  friend bool operator==(const LabelKey& x, const LabelKey& y) { return x.b->same_label(*y.b); }
};
struct LabelKeyHash {
  std::size_t operator()(const LabelKey& k) const { return label_hash(*k.b); }
};

struct BusKeyHash {
  std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const {
    std::size_t h = 0;
    hash_mix(h, k.first);
    hash_mix(h, k.second);
    return h;
  }
};

}  // namespace

std::size_t tree_hash(const TreeConfig& t) {
  std::size_t h = 0x51ed270b;
  for (const auto& [k, v] : t.address.entries()) hash_mix(h, (std::uint64_t{k} << 8) | static_cast<std::uint64_t>(v));
  hash_mix(h, 0xa5a5);
  for (const auto& [k, v] : t.data.entries()) hash_mix(h, (std::uint64_t{k} << 32) | v);
  return h;
}

std::size_t label_hash(const Branch& b) {
  std::size_t h = tree_hash(b.tree);
  hash_mix(h, b.bus_address);
  hash_mix(h, b.bus_data);
  hash_mix(h, b.control);
  hash_mix(h, b.tag);
  return h;
}

std::size_t EnvironmentKeyHash::operator()(const EnvironmentKey& k) const {
  std::size_t h = tree_hash(*k.tree);
  hash_mix(h, k.control);
  hash_mix(h, k.tag);
  return h;
}

std::uint32_t coord_value(const Branch& b, const Coord& c) {
  switch (c.kind) {
    case Coord::Kind::BusAddress: return static_cast<std::uint32_t>((b.bus_address >> c.index) & 1U);
    case Coord::Kind::BusData: return static_cast<std::uint32_t>((b.bus_data >> c.index) & 1U);
    case Coord::Kind::Control: return (b.control >> c.index) & 1U;
    case Coord::Kind::TreeAddress: return static_cast<std::uint32_t>(b.tree.address.get(c.index));
    case Coord::Kind::TreeData: return (b.tree.data.get(c.index) >> c.bit) & 1U;
  }
  return 0;
}

void set_coord_value(Branch& b, const Coord& c, std::uint32_t value) {
  auto set_bit = [](auto& word, std::uint64_t bit, std::uint32_t v) {
    using W = std::remove_reference_t<decltype(word)>;
    word = static_cast<W>((word & ~(W{1} << bit)) | (static_cast<W>(v & 1U) << bit));
  };
  switch (c.kind) {
    case Coord::Kind::BusAddress: set_bit(b.bus_address, c.index, value); break;
    case Coord::Kind::BusData: set_bit(b.bus_data, c.index, value); break;
    case Coord::Kind::Control: set_bit(b.control, c.index, value); break;
    case Coord::Kind::TreeAddress: b.tree.address.set(c.index, static_cast<Qutrit>(value)); break;
    case Coord::Kind::TreeData: {
      std::uint32_t word = b.tree.data.get(c.index);
      set_bit(word, c.bit, value);
      b.tree.data.set(c.index, word);
      break;
    }
  }
}

Matrix Matrix::identity(int dim) {
  Matrix r;
  r.dim = dim;
  for (int i = 0; i < dim; ++i) r.m[i][i] = 1.0;
  return r;
}

Matrix Matrix::operator*(const Matrix& o) const {
  Matrix r;
  r.dim = dim;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int l = 0; l < dim; ++l) r.m[i][j] += m[i][l] * o.m[l][j];
  return r;
}

Matrix Matrix::adjoint() const {
  Matrix r;
  r.dim = dim;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r.m[i][j] = std::conj(m[j][i]);
  return r;
}

Matrix Matrix::scaled(Complex s) const {
  Matrix r = *this;
  for (auto& row : r.m)
    for (auto& x : row) x *= s;
  return r;
}

Monomial Monomial::from_matrix(const Matrix& mat, double tol) {
  Monomial mono;
  mono.dim = mat.dim;
  for (int r = 0; r < mat.dim; ++r) {
    int nz = 0;
    for (int c = 0; c < mat.dim; ++c) nz += std::abs(mat.m[r][c]) > tol;
    if (nz > 1) throw ContractViolation("branching gate: row " + std::to_string(r) + " has several nonzero entries");
  }
  for (int c = 0; c < mat.dim; ++c) {
    int nz = 0;
    mono.target[c] = static_cast<std::uint8_t>(c);
    mono.factor[c] = 0.0;
    for (int r = 0; r < mat.dim; ++r) {
      if (std::abs(mat.m[r][c]) > tol) {
        ++nz;
        mono.target[c] = static_cast<std::uint8_t>(r);
        mono.factor[c] = mat.m[r][c];
      }
    }
    if (nz > 1) throw ContractViolation("branching gate: column " + std::to_string(c) + " has several nonzero entries");
  }
  return mono;
}

double SparseState::norm2() const {
  double s = 0.0;
  for (const auto& b : branches_) s += std::norm(b.amp);
  return s;
}

double SparseState::normalize() {
  const double n2 = norm2();
  if (!(n2 > 0.0)) throw NumericalError("cannot normalize a zero state");
  const double scale = 1.0 / std::sqrt(n2);
  for (auto& b : branches_) b.amp *= scale;
  return n2;
}

void SparseState::canonicalize() {
  std::vector<Branch> out;
  out.reserve(branches_.size());  // no reallocation: keys point into `out`
  std::unordered_map<LabelKey, std::size_t, LabelKeyHash> index;
  index.reserve(branches_.size());
  for (auto& b : branches_) {
    auto it = index.find(LabelKey{&b});
    if (it != index.end()) {
      out[it->second].amp += b.amp;
      continue;
    }
    out.push_back(std::move(b));
    index.emplace(LabelKey{&out.back()}, out.size() - 1);
  }
  std::vector<Branch> kept;
  kept.reserve(out.size());
  for (auto& b : out)
    if (std::abs(b.amp) > drop_threshold) kept.push_back(std::move(b));
  branches_ = std::move(kept);
}

bool label_less(const Branch& a, const Branch& b) {
  if (a.bus_address != b.bus_address) return a.bus_address < b.bus_address;
  if (a.bus_data != b.bus_data) return a.bus_data < b.bus_data;
  if (a.control != b.control) return a.control < b.control;
  if (a.tag != b.tag) return a.tag < b.tag;
  if (a.tree.address.entries() != b.tree.address.entries())
    return a.tree.address.entries() < b.tree.address.entries();
  return a.tree.data.entries() < b.tree.data.entries();
}

void SparseState::sort_by_label() { std::sort(branches_.begin(), branches_.end(), label_less); }

void apply_permutation(SparseState& state, const PermutationGate& gate) {
  if (const auto* g = std::get_if<LocalGate>(&gate)) {
    if (g->op.dim != g->target.dim()) throw ContractViolation("gate dimension does not match its target");
    auto& bs = state.branches();
    std::size_t w = 0;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      Branch& b = bs[i];
      if (!g->when || coord_value(b, g->when->coord) == g->when->value) {
        const auto v = coord_value(b, g->target);
        if (g->op.annihilates(v)) continue;
        b.amp *= g->op.factor[v];
        set_coord_value(b, g->target, g->op.target[v]);
      }
      if (w != i) bs[w] = std::move(b);
      ++w;
    }
    bs.resize(w);
    return;
  }
  const auto& g = std::get<SwapGate>(gate);
  if (g.a.dim() != g.b.dim()) throw ContractViolation("swap between coordinates of different dimension");
  for (auto& b : state.branches()) {
    if (g.when && coord_value(b, g.when->coord) != g.when->value) continue;
    const auto va = coord_value(b, g.a);
    const auto vb = coord_value(b, g.b);
    set_coord_value(b, g.a, vb);
    set_coord_value(b, g.b, va);
  }
}

void apply_matrix(SparseState& state, const Coord& target, const Matrix& m) {
  apply_permutation(state, LocalGate{target, Monomial::from_matrix(m), std::nullopt});
}

Complex overlap(const SparseState& a, const SparseState& b) {
  std::unordered_map<LabelKey, Complex, LabelKeyHash> amps;
  amps.reserve(a.size());
  for (const auto& br : a.branches()) amps[LabelKey{&br}] += br.amp;
  Complex s{};
  for (const auto& br : b.branches()) {
    auto it = amps.find(LabelKey{&br});
    if (it != amps.end()) s += std::conj(it->second) * br.amp;
  }
  return s;
}

double bus_fidelity(const SparseState& state, const SparseState& ideal_bus) {
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, Complex, BusKeyHash> ideal;
  for (const auto& b : ideal_bus.branches()) {
    if (!b.tree.idle()) throw ContractViolation("ideal bus state must have an idle tree");
    ideal[{b.bus_address, b.bus_data}] += b.amp;
  }
  std::unordered_map<EnvironmentKey, Complex, EnvironmentKeyHash> groups;
  for (const auto& b : state.branches()) {
    auto it = ideal.find({b.bus_address, b.bus_data});
    if (it == ideal.end()) continue;
    groups[EnvironmentKey{b.control, b.tag, &b.tree}] += std::conj(it->second) * b.amp;
  }
  double f = 0.0;
  for (const auto& [key, s] : groups) f += std::norm(s);
  return std::min(1.0, f);
}

double full_fidelity(const SparseState& state, const SparseState& ideal_bus) {
  return std::norm(overlap(ideal_bus, state));
}

}  // namespace qrambench
