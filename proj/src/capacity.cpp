#include "zec/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "zec/error.hpp"
#include "zec/spectral.hpp"

namespace zec {

CapacityReport analyze(const NoiseFsm& fsm, std::optional<double> h_lin, std::size_t zero_test_max_states) {
  require_valid(fsm);
  CapacityReport r;
  r.q = fsm.q();
  r.log2_q = std::log2(static_cast<double>(fsm.q()));
  r.h_ch = topological_entropy(fsm);
  // Power iteration may overshoot log2 q by rounding when every label is allowed.
  r.h_ch = std::clamp(r.h_ch, 0.0, r.log2_q);

  auto zt = zero_capacity_test(coupled_graph(fsm), zero_test_max_states);
  r.is_zero = zt.is_zero;
  r.witness = zt.witness;
  if (!r.is_zero) {
    r.c0f = r.log2_q - r.h_ch;
    if (r.c0f <= 0) {
      r.c0f = 0;
      r.boundary = true;
    }
  }
  r.c0_lower_raw = r.log2_q - 2 * r.h_ch;
  r.c0_lower = std::max(0.0, r.c0_lower_raw);
  if (h_lin) {
    if (*h_lin < 0) throw InputError("analyze: h_lin must be non-negative");
    r.h_lin = h_lin;
    r.margin = r.log2_q - r.h_ch - *h_lin;
  }
  return r;
}

nlohmann::json report_to_json(const CapacityReport& r) {
  nlohmann::json j{{"q", r.q},
                   {"log2_q", r.log2_q},
                   {"h_ch", r.h_ch},
                   {"c0f", r.c0f},
                   {"c0_lower_raw", r.c0_lower_raw},
                   {"c0_lower", r.c0_lower},
                   {"is_zero", r.is_zero},
                   {"boundary", r.boundary}};
  j["witness"] = r.witness ? nlohmann::json(*r.witness) : nlohmann::json(nullptr);
  j["h_lin"] = r.h_lin ? nlohmann::json(*r.h_lin) : nlohmann::json(nullptr);
  j["margin"] = r.margin ? nlohmann::json(*r.margin) : nlohmann::json(nullptr);
  return j;
}

NoiseFsm memoryless_channel(int x_size, int z_size) {
  if (x_size < 2 || z_size < 1 || z_size > x_size)
    throw InputError("memoryless channel needs 2 <= x_size and 1 <= z_size <= x_size");
  std::vector<Edge> edges;
  for (int z = 0; z < z_size; ++z) edges.push_back({0, 0, z});
  NoiseFsm fsm("memoryless_" + std::to_string(x_size) + "_" + std::to_string(z_size), x_size, {"s"},
               std::move(edges));
  require_valid(fsm);
  return fsm;
}

double memoryless_c0f(int x_size, int z_size) {
  auto fsm = memoryless_channel(x_size, z_size);
  if (x_size > 2 * z_size) return std::log2(static_cast<double>(x_size) / z_size);
  return analyze(fsm).c0f;
}

LpOracleResult memoryless_lp_oracle(int x_size, int z_size, int grid) {
  memoryless_channel(x_size, z_size);
  if (grid < 10) throw InputError("memoryless_lp_oracle: grid must have at least 10 divisions");
  if (x_size > 7) throw GuardExceeded("memoryless_lp_oracle: x_size above 7");

  // Number of grid points is C(grid + x - 1, x - 1).
  double points = 1;
  for (int k = 1; k < x_size; ++k) points = points * (grid + k) / k;
  if (points > 1e8) throw GuardExceeded("memoryless_lp_oracle: simplex grid too large");

  std::vector<int> counts(x_size, 0);
  int best_peak = grid + 1;
  std::vector<int> best;
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == x_size - 1) {
      counts[axis] = left;
      int peak = 0;
      for (int y = 0; y < x_size; ++y) {
        int s = 0;
        for (int z = 0; z < z_size; ++z) s += counts[((y - z) % x_size + x_size) % x_size];
        peak = std::max(peak, s);
      }
      if (peak < best_peak) {
        best_peak = peak;
        best = counts;
      }
      return;
    }
    for (int c = left; c >= 0; --c) {
      counts[axis] = c;
      rec(axis + 1, left - c);
    }
  };
  rec(0, grid);

  LpOracleResult res;
  res.value = -std::log2(static_cast<double>(best_peak) / grid);
  for (int c : best) res.argmax.push_back(static_cast<double>(c) / grid);
  // The grid point nearest the uniform distribution has every mass at most
  // ceil(grid/x)/grid.
  int top = (grid + x_size - 1) / x_size;
  res.error_bound = std::log2(static_cast<double>(x_size) * top / grid);
  return res;
}

double binary_entropy(double p) {
  if (p < 0 || p > 1) throw InputError("binary_entropy: p outside [0, 1]");
  if (p == 0 || p == 1) return 0;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

namespace {

void check_open_unit(double v, const char* what) {
  if (!(v > 0 && v < 1)) throw InputError(std::string(what) + " must lie in (0, 1)");
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

std::vector<double> open_grid(double step) {
  if (!(step > 0 && step < 0.5)) throw InputError("grid step must lie in (0, 0.5)");
  std::vector<double> g;
  for (long k = 1;; ++k) {
    double v = k * step;
    if (v >= 1) break;
    g.push_back(v);
  }
  return g;
}

}  // namespace

double stochastic_cf_example1(int q, double p) {
  if (q < 2) throw InputError("q must be at least 2");
  check_open_unit(p, "p");
  return std::log2(static_cast<double>(q)) - binary_entropy(p) / (1 + p);
}

double stochastic_cf_example2(int q, double p, double r) {
  if (q < 2) throw InputError("q must be at least 2");
  check_open_unit(p, "p");
  check_open_unit(r, "r");
  return std::log2(static_cast<double>(q)) - (binary_entropy(p) + p * binary_entropy(r)) / (1 + p + r * p);
}

Minimum minimize_cf_example1(int q, double step) {
  auto grid = open_grid(step);
  auto f = [q](double p) { return stochastic_cf_example1(q, p); };
  double best_p = grid.front(), best = f(best_p);
  for (double p : grid) {
    double v = f(p);
    if (v < best) best = v, best_p = p;
  }
  double lo = std::max(best_p - step, step * 1e-3), hi = std::min(best_p + step, 1 - step * 1e-3);
  double p = golden_section(f, lo, hi);
  if (f(p) < best) best = f(p), best_p = p;
  return {best, {best_p}};
}

Minimum minimize_cf_example2(int q, double step) {
  auto grid = open_grid(step);
  auto f = [q](double p, double r) { return stochastic_cf_example2(q, p, r); };
  double bp = grid.front(), br = grid.front(), best = f(bp, br);
  for (double p : grid)
    for (double r : grid) {
      double v = f(p, r);
      if (v < best) best = v, bp = p, br = r;
    }
  const double edge = step * 1e-3;
  for (int round = 0; round < 20; ++round) {
    double p = golden_section([&](double x) { return f(x, br); }, std::max(bp - step, edge), std::min(bp + step, 1 - edge));
    if (f(p, br) < best) best = f(p, br), bp = p;
    double r = golden_section([&](double x) { return f(bp, x); }, std::max(br - step, edge), std::min(br + step, 1 - edge));
    if (f(bp, r) < best) best = f(bp, r), br = r;
  }
  return {best, {bp, br}};
}

double small_entropy_margin(double h_lin, const NoiseFsm& fsm) {
  if (h_lin < 0) throw InputError("small_entropy_margin: h_lin must be non-negative");
  require_valid(fsm);
  double h_ch = std::min(topological_entropy(fsm), std::log2(static_cast<double>(fsm.q())));
  return std::log2(static_cast<double>(fsm.q())) - h_ch - h_lin;
}

}  // namespace zec
