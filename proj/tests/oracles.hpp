#pragma once

// Brute-force reference computations for the tests. They work directly on the
// edge list and share no code paths with the library beyond the data types.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "zec/codes.hpp"
#include "zec/fsm.hpp"

namespace oracle {

using zec::NoiseFsm;
using zec::Word;

inline std::set<Word> sequences(const NoiseFsm& fsm, std::optional<std::size_t> start, std::size_t n) {
  std::set<Word> out;
  Word cur;
  std::function<void(std::size_t)> dfs = [&](std::size_t s) {
    if (cur.size() == n) {
      out.insert(cur);
      return;
    }
    for (const auto& e : fsm.edges()) {
      if (e.from != s) continue;
      cur.push_back(e.label);
      dfs(e.to);
      cur.pop_back();
    }
  };
  for (std::size_t s = 0; s < fsm.state_count(); ++s)
    if (!start || *start == s) dfs(s);
  return out;
}

inline Word diff(const Word& a, const Word& b, int q) {
  Word d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = ((a[i] - b[i]) % q + q) % q;
  return d;
}

inline std::set<Word> differences(const NoiseFsm& fsm, std::size_t n) {
  auto z = sequences(fsm, std::nullopt, n);
  std::set<Word> out;
  for (const auto& a : z)
    for (const auto& b : z) out.insert(diff(a, b, fsm.q()));
  return out;
}

inline std::vector<Word> all_words(int q, std::size_t n) {
  std::vector<Word> out;
  Word w(n, 0);
  while (true) {
    out.push_back(w);
    std::size_t i = n;
    while (i > 0 && ++w[i - 1] == q) w[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

/// True when the output sets of distinct codewords are disjoint.
inline bool zero_error(const NoiseFsm& fsm, const std::vector<Word>& code) {
  if (code.empty()) return true;
  auto z = sequences(fsm, std::nullopt, code.front().size());
  std::set<Word> seen;
  for (const auto& x : code) {
    std::set<Word> outputs;
    for (const auto& e : z) {
      Word y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] + e[i]) % fsm.q();
      outputs.insert(y);
    }
    for (const auto& y : outputs)
      if (!seen.insert(y).second) return false;
  }
  return true;
}

inline double perron(const NoiseFsm& fsm) {
  const auto n = static_cast<Eigen::Index>(fsm.state_count());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : fsm.edges()) a(static_cast<Eigen::Index>(e.from), static_cast<Eigen::Index>(e.to)) += 1;
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  double best = 0;
  for (Eigen::Index i = 0; i < n; ++i) best = std::max(best, es.eigenvalues()[i].real());
  return best;
}

/// Root of a polynomial (coefficients highest degree first) in [lo, hi] by bisection.
inline double bisect(const std::vector<double>& c, double lo, double hi) {
  auto f = [&](double x) {
    double v = 0;
    for (double k : c) v = v * x + k;
    return v;
  };
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if ((f(lo) < 0) == (f(mid) < 0))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
