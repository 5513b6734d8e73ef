#pragma once

// Capacity reports for finite-state additive noise channels.

#include <optional>
#include <vector>

#include "json.hpp"
#include "zec/coupled.hpp"
#include "zec/fsm.hpp"

namespace zec {

struct CapacityReport {
  int q = 0;
  double log2_q = 0;
  double h_ch = 0;
  double c0f = 0;
  double c0_lower_raw = 0;  // log2 q - 2 h_ch, may be negative
  double c0_lower = 0;      // clamped at 0
  bool is_zero = true;
  std::optional<Word> witness;
  std::optional<double> h_lin;
  std::optional<double> margin;  // log2 q - h_ch - h_lin
  // Zero test passed but h_ch reached log2 q; c0f is reported as 0.
  bool boundary = false;
};

CapacityReport analyze(const NoiseFsm& fsm, std::optional<double> h_lin = std::nullopt,
                       std::size_t zero_test_max_states = kDefaultZeroTestMaxStates);

nlohmann::json report_to_json(const CapacityReport& report);

/// Single-state channel with self-loops labeled 0..z_size-1 over Z_{x_size}.
NoiseFsm memoryless_channel(int x_size, int z_size);

/// log2(x_size / z_size) when x_size > 2 z_size, otherwise analyze() on the
/// equivalent single-state channel.
double memoryless_c0f(int x_size, int z_size);

struct LpOracleResult {
  double value = 0;
  double error_bound = 0;  // value >= closed form - error_bound
  std::vector<double> argmax;
};

/// Maximizes -log2 max_y sum_z P(y - z) over the grid of input distributions
/// with denominators `grid`.
LpOracleResult memoryless_lp_oracle(int x_size, int z_size, int grid);

double binary_entropy(double p);

/// log2 q - H(p) / (1 + p).
double stochastic_cf_example1(int q, double p);
/// log2 q - (H(p) + p H(r)) / (1 + p + r p).
double stochastic_cf_example2(int q, double p, double r);

struct Minimum {
  double value = 0;
  std::vector<double> argmin;
};

/// Grid search with spacing `step`, then golden-section refinement.
Minimum minimize_cf_example1(int q, double step = 1e-3);
Minimum minimize_cf_example2(int q, double step = 1e-3);

double small_entropy_margin(double h_lin, const NoiseFsm& fsm);

}  // namespace zec
