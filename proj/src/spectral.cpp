#include "zec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "zec/error.hpp"

namespace zec {

AdjacencyMatrix::AdjacencyMatrix(std::initializer_list<std::initializer_list<int>> rows) : AdjacencyMatrix(rows.size()) {
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != dim_) throw InputError("AdjacencyMatrix: rows must form a square matrix");
    std::size_t c = 0;
    for (int v : row) (*this)(r, c++) = v;
    ++r;
  }
}

bool AdjacencyMatrix::irreducible() const {
  if (dim_ == 0) return false;
  for (std::size_t root = 0; root < dim_; ++root) {
    std::vector<bool> seen(dim_, false);
    std::vector<std::size_t> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
      std::size_t s = stack.back();
      stack.pop_back();
      for (std::size_t t = 0; t < dim_; ++t) {
        if ((*this)(s, t) > 0 && !seen[t]) {
          seen[t] = true;
          stack.push_back(t);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

AdjacencyMatrix adjacency_matrix(const NoiseFsm& fsm) {
  AdjacencyMatrix m(fsm.state_count());
  for (const Edge& e : fsm.edges()) m(e.from, e.to) += 1;
  return m;
}

SpectralResult perron_value(const AdjacencyMatrix& m, double tol) {
  if (!(tol > 0)) throw InputError("perron_value: tolerance must be positive");
  if (!m.irreducible()) throw InputError("perron_value: matrix is not irreducible");
  const std::size_t n = m.dim();
  constexpr std::size_t kMaxIterations = 1'000'000;

  std::vector<double> v(n, 1.0), av(n);
  auto apply = [&](const std::vector<double>& x, std::vector<double>& out) {
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < n; ++c) acc += m(r, c) * x[c];
      out[r] = acc;
    }
  };

  SpectralResult res;
  for (std::size_t it = 1; it <= kMaxIterations; ++it) {
    apply(v, av);
    double lo = av[0] / v[0], hi = lo;
    for (std::size_t k = 1; k < n; ++k) {
      double ratio = av[k] / v[k];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    double lambda = 0.5 * (lo + hi);
    double residual = 0;
    for (std::size_t k = 0; k < n; ++k) residual = std::max(residual, std::abs(av[k] - lambda * v[k]));
    if (hi - lo <= tol * lo && residual <= tol) {
      res.lambda = lambda;
      res.iterations = it;
      res.residual = residual;  // v has max entry 1
      break;
    }
    // Shifted step: v <- (A + I) v, renormalized to max entry 1.
    double top = 0;
    for (std::size_t k = 0; k < n; ++k) {
      av[k] += v[k];
      top = std::max(top, av[k]);
    }
    for (std::size_t k = 0; k < n; ++k) v[k] = av[k] / top;
    if (it == kMaxIterations) throw ContractViolation("perron_value: power iteration did not converge");
  }

  res.eigenvector = v;
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (!(*mn > 0)) throw ContractViolation("perron_value: eigenvector is not strictly positive");
  res.alpha = *mn / *mx;
  res.beta = *mx / *mn;
  return res;
}

double topological_entropy(const NoiseFsm& fsm, double tol) {
  return std::log2(perron_value(adjacency_matrix(fsm), tol).lambda);
}

namespace {

BigInt count_from_single(const NoiseFsm& fsm, StateIndex start, std::size_t n) {
  std::vector<BigInt> ways(fsm.state_count(), BigInt(1)), next(fsm.state_count());
  for (std::size_t step = 0; step < n; ++step) {
    for (StateIndex s = 0; s < fsm.state_count(); ++s) {
      BigInt acc = 0;
      for (const Edge& e : fsm.out_edges(s)) acc += ways[e.to];
      next[s] = std::move(acc);
    }
    ways.swap(next);
  }
  return ways.at(start);
}

// Words accepted from some start state: walk the determinized automaton
// from the full state set, dropping the empty set.
BigInt count_from_any(const NoiseFsm& fsm, std::size_t n) {
  const std::size_t states = fsm.state_count();
  if (states > 63) throw GuardExceeded("count_walks(ALL): more than 63 states");
  using Mask = std::uint64_t;
  auto step = [&](Mask u, Symbol z) {
    Mask out = 0;
    for (StateIndex s = 0; s < states; ++s)
      if (u >> s & 1)
        if (const Edge* e = fsm.edge_for(s, z)) out |= Mask{1} << e->to;
    return out;
  };
  std::map<Mask, BigInt> counts{{(Mask{1} << states) - 1, BigInt(1)}};
  for (std::size_t k = 0; k < n; ++k) {
    std::map<Mask, BigInt> next;
    for (const auto& [u, c] : counts) {
      for (Symbol z = 0; z < fsm.q(); ++z) {
        Mask v = step(u, z);
        if (v) next[v] += c;
      }
    }
    counts.swap(next);
  }
  BigInt total = 0;
  for (const auto& [u, c] : counts) total += c;
  return total;
}

}  // namespace

BigInt count_walks(const NoiseFsm& fsm, StartSet start, std::size_t n) {
  if (start) {
    if (*start >= fsm.state_count()) throw InputError("count_walks: start state out of range");
    return count_from_single(fsm, *start, n);
  }
  return count_from_any(fsm, n);
}

OutputCountBounds output_count_bounds(const NoiseFsm& fsm) {
  auto res = perron_value(adjacency_matrix(fsm));
  return {res.alpha, res.beta, res.lambda};
}

}  // namespace zec
