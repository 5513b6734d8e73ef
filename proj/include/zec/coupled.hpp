#pragma once

// Coupled (tensor-product) graph of a noise graph with itself, and the
// decision procedure for zero zero-error capacity built on it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "zec/fsm.hpp"

namespace zec {

/// Fixed-width set of coupled-graph vertices.
class VertexSet {
 public:
  VertexSet() = default;
  explicit VertexSet(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}
  static VertexSet full(std::size_t bits);

  std::size_t size_bits() const noexcept { return bits_; }
  void set(std::size_t k) { words_[k / 64] |= std::uint64_t{1} << (k % 64); }
  bool test(std::size_t k) const { return words_[k / 64] >> (k % 64) & 1; }
  bool empty() const noexcept;
  std::size_t count() const noexcept;
  bool subset_of(const VertexSet& other) const;
  VertexSet& operator|=(const VertexSet& other);

  friend bool operator==(const VertexSet&, const VertexSet&) = default;
  std::size_t hash() const noexcept;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

struct CoupledEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  Symbol label = 0;
};

inline constexpr std::size_t kDefaultCoupledMaxStates = 12;
inline constexpr std::size_t kDefaultZeroTestMaxStates = 5;

/// Vertex (i, j) has index i * |S| + j. Edge (i,j) -> (k,m) carries the label
/// E_ik - E_jm (mod q) for every pair of base edges i -> k and j -> m.
class CoupledGraph {
 public:
  explicit CoupledGraph(const NoiseFsm& fsm, std::size_t max_states = kDefaultCoupledMaxStates);

  int q() const noexcept { return q_; }
  std::size_t base_states() const noexcept { return base_; }
  std::size_t vertex_count() const noexcept { return base_ * base_; }
  std::pair<StateIndex, StateIndex> pair(std::size_t v) const { return {v / base_, v % base_}; }
  std::size_t vertex_of(StateIndex i, StateIndex j) const { return i * base_ + j; }
  const std::vector<CoupledEdge>& edges() const noexcept { return edges_; }

  /// T(U, d): vertices reachable from U along one edge labeled d.
  VertexSet step(const VertexSet& from, Symbol d) const;
  const VertexSet& successors(std::size_t v, Symbol d) const { return succ_.at(v * q_ + d); }

 private:
  int q_;
  std::size_t base_;
  std::vector<CoupledEdge> edges_;
  std::vector<VertexSet> succ_;
};

CoupledGraph coupled_graph(const NoiseFsm& fsm, std::size_t max_states = kDefaultCoupledMaxStates);

/// True iff some walk on the coupled graph (from any vertex) carries `d`.
bool is_walkable(const CoupledGraph& cg, std::span<const Symbol> d);

struct ZeroTestResult {
  bool is_zero = true;
  std::optional<Word> witness;  // shortest unwalkable label sequence, lexicographically least
  std::size_t subsets_explored = 0;
};

/// Breadth-first subset construction from the full vertex set under T(U, d).
/// The capacities are nonzero iff the empty set is reachable.
ZeroTestResult zero_capacity_test(const CoupledGraph& cg, std::size_t max_states = kDefaultZeroTestMaxStates);

struct DifferenceSetResult {
  bool complete = true;
  std::optional<Word> missing;  // lexicographically least sequence outside P(n)
  std::size_t noise_sequences = 0;
};

/// Brute force: P(n) = { z - z' : z, z' in Z(n) } over every start state,
/// compared against all q^n sequences.
DifferenceSetResult difference_set_oracle(const NoiseFsm& fsm, std::size_t n,
                                          std::uint64_t cap = kDefaultEnumerationCap);

Word negate_word(std::span<const Symbol> d, int q);

}  // namespace zec
