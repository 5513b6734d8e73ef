#pragma once

// Perron value, topological entropy and exact walk counting for noise graphs.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstddef>
#include <vector>

#include "zec/fsm.hpp"

namespace zec {

using BigInt = boost::multiprecision::cpp_int;

/// Square matrix of edge multiplicities; entry (s, s') counts the edges s -> s'.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(std::size_t dim) : dim_(dim), entries_(dim * dim, 0) {}
  AdjacencyMatrix(std::initializer_list<std::initializer_list<int>> rows);

  std::size_t dim() const noexcept { return dim_; }
  int operator()(std::size_t r, std::size_t c) const { return entries_.at(r * dim_ + c); }
  int& operator()(std::size_t r, std::size_t c) { return entries_.at(r * dim_ + c); }

  bool irreducible() const;

  friend bool operator==(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

 private:
  std::size_t dim_;
  std::vector<int> entries_;
};

struct SpectralResult {
  double lambda = 0;
  std::vector<double> eigenvector;  // strictly positive, max entry 1
  double alpha = 0;                 // v_min / v_max
  double beta = 0;                  // v_max / v_min
  std::size_t iterations = 0;
  double residual = 0;              // |A v - lambda v|_inf / |v|_inf
};

AdjacencyMatrix adjacency_matrix(const NoiseFsm& fsm);

/// Perron value and vector of an irreducible non-negative matrix by power
/// iteration on A + I, stopped once the Collatz-Wielandt bracket
/// [min (Av)_i/v_i, max (Av)_i/v_i] is narrower than tol * lambda.
SpectralResult perron_value(const AdjacencyMatrix& m, double tol = 1e-12);

/// log2 of the Perron value, in bits per channel use.
double topological_entropy(const NoiseFsm& fsm, double tol = 1e-12);

/// Number of label sequences of length n emitted from `start`; for kAllStates
/// the size of the union over all starts.
BigInt count_walks(const NoiseFsm& fsm, StartSet start, std::size_t n);

struct OutputCountBounds {
  double alpha = 0;
  double beta = 0;
  double lambda = 0;
};

/// Constants with alpha * lambda^n <= |Z(s, n)| <= beta * lambda^n.
OutputCountBounds output_count_bounds(const NoiseFsm& fsm);

}  // namespace zec
