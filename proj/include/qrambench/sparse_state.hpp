#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "qrambench/topology.hpp"

namespace qrambench {

using Complex = std::complex<double>;

/// Address-qutrit levels in basis order {|W>, |0>, |1>}.
enum class Qutrit : std::uint8_t { W = 0, Zero = 1, One = 2 };

inline Qutrit qutrit_from_bit(unsigned b) { return b ? Qutrit::One : Qutrit::Zero; }
inline bool is_set(Qutrit q) { return q != Qutrit::W; }
inline int direction_of(Qutrit q) { return q == Qutrit::One ? 1 : 0; }

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sorted flat map from node index to a non-idle value. Absent key means idle.
template <typename V>
class NodeMap {
 public:
  using Entry = std::pair<std::uint32_t, V>;

  V get(std::uint64_t node) const {
    auto it = find(node);
    return it != entries_.end() && it->first == node ? it->second : V{};
  }

  void set(std::uint64_t node, V value) {
    auto it = find(node);
    const bool present = it != entries_.end() && it->first == node;
    if (value == V{}) {
      if (present) entries_.erase(it);
    } else if (present) {
      it->second = value;
    } else {
      entries_.insert(it, Entry{static_cast<std::uint32_t>(node), value});
    }
  }

  /// Entries with key in [lo, hi].
  std::pair<typename std::vector<Entry>::const_iterator, typename std::vector<Entry>::const_iterator>
  range(std::uint64_t lo, std::uint64_t hi) const {
    auto first = find(lo);
    auto last = first;
    while (last != entries_.end() && last->first <= hi) ++last;
    return {first, last};
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  friend bool operator==(const NodeMap&, const NodeMap&) = default;

 private:
  typename std::vector<Entry>::iterator find(std::uint64_t node) {
    return std::lower_bound(entries_.begin(), entries_.end(), node,
                            [](const Entry& e, std::uint64_t key) { return e.first < key; });
  }
  typename std::vector<Entry>::const_iterator find(std::uint64_t node) const {
    return std::lower_bound(entries_.begin(), entries_.end(), node,
                            [](const Entry& e, std::uint64_t key) { return e.first < key; });
  }

  std::vector<Entry> entries_;
};

using AddressMap = NodeMap<Qutrit>;
using DataMap = NodeMap<std::uint32_t>;  // k-bit word per node, idle = 0

struct TreeConfig {
  AddressMap address;
  DataMap data;

  bool idle() const { return address.empty() && data.empty(); }
  std::size_t entries() const { return address.size() + data.size(); }
  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

/// One computational-basis component of the bus + control + tree state.
/// `tag` is an opaque spectator label for registers outside the query (used
/// by error filtration); it is carried through unchanged.
struct Branch {
  Complex amp{0.0, 0.0};
  std::uint64_t bus_address = 0;
  std::uint64_t bus_data = 0;
  std::uint32_t control = 0;
  std::uint64_t tag = 0;
  TreeConfig tree;

  bool same_label(const Branch& o) const {
    return bus_address == o.bus_address && bus_data == o.bus_data && control == o.control && tag == o.tag &&
           tree == o.tree;
  }
};

std::size_t label_hash(const Branch& b);
std::size_t tree_hash(const TreeConfig& t);

/// Hashable view of everything except the bus label; used to group branches
/// by environment when tracing out the tree.
struct EnvironmentKey {
  std::uint32_t control = 0;
  std::uint64_t tag = 0;
  const TreeConfig* tree = nullptr;

  friend bool operator==(const EnvironmentKey& a, const EnvironmentKey& b) {
    return a.control == b.control && a.tag == b.tag && *a.tree == *b.tree;
  }
};
struct EnvironmentKeyHash {
  std::size_t operator()(const EnvironmentKey& k) const;
};

/// Addressable coordinate of a branch label.
struct Coord {
  enum class Kind : std::uint8_t { BusAddress, BusData, Control, TreeAddress, TreeData };
  Kind kind = Kind::BusData;
  std::uint64_t index = 0;  // bit position for bus/control; flat node for tree
  std::uint32_t bit = 0;    // data bit within a tree node

  static Coord bus_address(std::uint32_t bit) { return {Kind::BusAddress, bit, 0}; }
  static Coord bus_data(std::uint32_t bit) { return {Kind::BusData, bit, 0}; }
  static Coord control_bit(std::uint32_t bit) { return {Kind::Control, bit, 0}; }
  static Coord tree_address(NodeId n) { return {Kind::TreeAddress, flat_index(n), 0}; }
  static Coord tree_data(NodeId n, std::uint32_t bit = 0) { return {Kind::TreeData, flat_index(n), bit}; }

  int dim() const { return kind == Kind::TreeAddress ? 3 : 2; }
};

std::uint32_t coord_value(const Branch& b, const Coord& c);
void set_coord_value(Branch& b, const Coord& c, std::uint32_t value);

/// Dense single-qudit matrix (dim 2 or 3), row-major: m[out][in].
struct Matrix {
  int dim = 2;
  Complex m[3][3]{};

  static Matrix identity(int dim);
  Matrix operator*(const Matrix& o) const;
  Matrix adjoint() const;
  Matrix scaled(Complex s) const;
};

/// Non-branching single-qudit operator: basis v -> factor[v] |target[v]>.
/// A zero factor annihilates that basis state.
struct Monomial {
  int dim = 2;
  std::uint8_t target[3]{0, 1, 2};
  Complex factor[3]{1.0, 1.0, 1.0};

  /// Throws ContractViolation when the matrix has more than one nonzero entry
  /// in any row or column.
  static Monomial from_matrix(const Matrix& m, double tol = 1e-14);
  bool annihilates(std::uint32_t v) const { return factor[v] == Complex{}; }
};

struct Condition {
  Coord coord;
  std::uint32_t value = 0;
};

struct LocalGate {
  Coord target;
  Monomial op;
  std::optional<Condition> when;
};

struct SwapGate {
  Coord a;
  Coord b;
  std::optional<Condition> when;
};

using PermutationGate = std::variant<LocalGate, SwapGate>;

class SparseState {
 public:
  static constexpr double kDefaultDropThreshold = 1e-12;
  static constexpr double kDefaultNormTolerance = 1e-9;

  SparseState() = default;
  explicit SparseState(std::vector<Branch> branches) : branches_(std::move(branches)) {}

  std::vector<Branch>& branches() { return branches_; }
  const std::vector<Branch>& branches() const { return branches_; }
  std::size_t size() const { return branches_.size(); }
  bool empty() const { return branches_.empty(); }
  void add(Branch b) { branches_.push_back(std::move(b)); }

  double norm2() const;

  /// Rescales to unit norm; returns the squared norm before rescaling.
  double normalize();

  /// Merges branches with identical labels and drops negligible amplitudes.
  void canonicalize();

  /// Sorts branches into a deterministic label order (for comparisons and
  /// stable output).
  void sort_by_label();

  double drop_threshold = kDefaultDropThreshold;
  double norm_tolerance = kDefaultNormTolerance;

 private:
  std::vector<Branch> branches_;
};

/// Applies a non-branching gate to every branch. Branch count never grows.
void apply_permutation(SparseState& state, const PermutationGate& gate);

/// Applies a single-qudit matrix to `target`; the matrix must be non-branching.
void apply_matrix(SparseState& state, const Coord& target, const Matrix& m);

Complex overlap(const SparseState& a, const SparseState& b);

/// Fidelity of the bus register against an ideal bus state, with control,
/// tag and tree traced out.
double bus_fidelity(const SparseState& state, const SparseState& ideal_bus);

/// |<ideal (x) idle tree | state>|^2, diagnostic metric keeping the tree.
double full_fidelity(const SparseState& state, const SparseState& ideal_bus);

bool label_less(const Branch& a, const Branch& b);

}  // namespace qrambench
