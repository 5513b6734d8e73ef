#include "zec/coupled.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <unordered_map>

#include "zec/error.hpp"

namespace zec {

VertexSet VertexSet::full(std::size_t bits) {
  VertexSet s(bits);
  for (std::size_t k = 0; k < bits; ++k) s.set(k);
  return s;
}

bool VertexSet::empty() const noexcept {
  return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

std::size_t VertexSet::count() const noexcept {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

bool VertexSet::subset_of(const VertexSet& other) const {
  for (std::size_t k = 0; k < words_.size(); ++k)
    if (words_[k] & ~other.words_[k]) return false;
  return true;
}

VertexSet& VertexSet::operator|=(const VertexSet& other) {
  for (std::size_t k = 0; k < words_.size(); ++k) words_[k] |= other.words_[k];
  return *this;
}

std::size_t VertexSet::hash() const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (auto w : words_) {
    h ^= w;
    h *= 1099511628211ull;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

CoupledGraph::CoupledGraph(const NoiseFsm& fsm, std::size_t max_states) : q_(fsm.q()), base_(fsm.state_count()) {
  if (base_ > max_states)
    throw GuardExceeded("coupled graph: " + std::to_string(base_) + " states exceed the cap of " +
                        std::to_string(max_states));
  const std::size_t nv = base_ * base_;
  succ_.assign(nv * static_cast<std::size_t>(q_), VertexSet(nv));
  for (StateIndex i = 0; i < base_; ++i) {
    for (StateIndex j = 0; j < base_; ++j) {
      for (const Edge& ei : fsm.out_edges(i)) {
        for (const Edge& ej : fsm.out_edges(j)) {
          Symbol d = ((ei.label - ej.label) % q_ + q_) % q_;
          std::size_t u = vertex_of(i, j), v = vertex_of(ei.to, ej.to);
          edges_.push_back({u, v, d});
          succ_[u * q_ + d].set(v);
        }
      }
    }
  }
}

VertexSet CoupledGraph::step(const VertexSet& from, Symbol d) const {
  VertexSet out(vertex_count());
  for (std::size_t u = 0; u < vertex_count(); ++u)
    if (from.test(u)) out |= successors(u, d);
  return out;
}

CoupledGraph coupled_graph(const NoiseFsm& fsm, std::size_t max_states) { return CoupledGraph(fsm, max_states); }

bool is_walkable(const CoupledGraph& cg, std::span<const Symbol> d) {
  VertexSet cur = VertexSet::full(cg.vertex_count());
  for (Symbol s : d) {
    if (s < 0 || s >= cg.q()) throw InputError("is_walkable: label outside the alphabet");
    cur = cg.step(cur, s);
    if (cur.empty()) return false;
  }
  return true;
}

namespace {

struct SetHash {
  std::size_t operator()(const VertexSet& s) const noexcept { return s.hash(); }
};

}  // namespace

ZeroTestResult zero_capacity_test(const CoupledGraph& cg, std::size_t max_states) {
  if (cg.base_states() > max_states)
    throw GuardExceeded("zero test: " + std::to_string(cg.base_states()) +
                        " states exceed the exact subset-search cap of " + std::to_string(max_states));

  // parent[k] = (index of predecessor, label); labels are expanded in
  // increasing order so the first path found to a set is the
  // lexicographically least among the shortest ones.
  std::vector<VertexSet> nodes;
  std::vector<std::pair<std::size_t, Symbol>> parent;
  std::unordered_map<VertexSet, std::size_t, SetHash> index;

  nodes.push_back(VertexSet::full(cg.vertex_count()));
  parent.emplace_back(0, -1);
  index.emplace(nodes.front(), 0);

  ZeroTestResult result;
  for (std::size_t head = 0; head < nodes.size(); ++head) {
    for (Symbol d = 0; d < cg.q(); ++d) {
      VertexSet next = cg.step(nodes[head], d);
      if (next.empty()) {
        Word witness{d};
        for (std::size_t k = head; k != 0; k = parent[k].first) witness.push_back(parent[k].second);
        std::reverse(witness.begin(), witness.end());
        result.is_zero = false;
        result.witness = std::move(witness);
        result.subsets_explored = nodes.size();
        return result;
      }
      if (index.emplace(next, nodes.size()).second) {
        nodes.push_back(std::move(next));
        parent.emplace_back(head, d);
      }
    }
  }
  result.subsets_explored = nodes.size();
  return result;
}

DifferenceSetResult difference_set_oracle(const NoiseFsm& fsm, std::size_t n, std::uint64_t cap) {
  const std::uint64_t q = static_cast<std::uint64_t>(fsm.q());
  std::uint64_t space = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (space > cap / q) throw GuardExceeded("difference_set_oracle: q^n exceeds the cap");
    space *= q;
  }
  auto zs = enumerate_noise_sequences(fsm, kAllStates, n, cap);
  if (zs.size() > 0 && zs.size() > cap / zs.size())
    throw GuardExceeded("difference_set_oracle: |Z(n)|^2 exceeds the cap");

  auto encode = [&](const Word& w) {
    std::uint64_t code = 0;
    for (Symbol s : w) code = code * q + static_cast<std::uint64_t>(s);
    return code;
  };
  std::vector<std::uint64_t> codes;
  codes.reserve(zs.size());
  for (const auto& z : zs) codes.push_back(encode(z));

  // Digit-wise subtraction mod q on the base-q encodings.
  std::vector<std::uint64_t> pow(n, 1);
  for (std::size_t k = 1; k < n; ++k) pow[n - 1 - k] = pow[n - k] * q;
  std::vector<bool> present(space, false);
  for (std::size_t a = 0; a < zs.size(); ++a) {
    for (std::size_t b = 0; b < zs.size(); ++b) {
      std::uint64_t code = 0;
      for (std::size_t k = 0; k < n; ++k)
        code += static_cast<std::uint64_t>(((zs[a][k] - zs[b][k]) % fsm.q() + fsm.q()) % fsm.q()) * pow[k];
      present[code] = true;
    }
  }

  DifferenceSetResult res;
  res.noise_sequences = zs.size();
  for (std::uint64_t code = 0; code < space; ++code) {
    if (!present[code]) {
      Word w(n);
      std::uint64_t c = code;
      for (std::size_t k = n; k-- > 0;) {
        w[k] = static_cast<Symbol>(c % q);
        c /= q;
      }
      res.complete = false;
      res.missing = std::move(w);
      break;
    }
  }
  return res;
}

Word negate_word(std::span<const Symbol> d, int q) {
  Word out(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) out[k] = (q - d[k]) % q;
  return out;
}

}  // namespace zec
