#pragma once

// Coder-estimator and coder-controller for diagonal LTI plants over a
// finite-state additive noise channel.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zec/codes.hpp"
#include "zec/fsm.hpp"

namespace zec {

using Vec = std::vector<double>;

/// x_{t+1} = diag(a) x_t + diag(b) u_t + v_t with |x_1| <= D_x, |v_t| <= D (max-norm).
struct LtiSystem {
  Vec a;
  Vec b;
  double D_x = 1;
  double D = 0;

  std::size_t dim() const noexcept { return a.size(); }
  double norm_a() const;  // max |a_i|
};

/// Throws InputError on malformed systems. With `stabilizing`, every axis
/// with |a_i| >= 1 must have b_i != 0.
void validate_system(const LtiSystem& sys, bool stabilizing);

/// Sum of log2 |a_i| over |a_i| >= 1.
double lin_topological_entropy(const LtiSystem& sys);

/// Per-axis uniform partition of [-1, 1] into levels[i] cells.
struct Quantizer {
  std::size_t r = 0;
  double rho_target = 0;
  double rho = 0;  // achieved: max_i |a_i|^r / levels[i]
  std::vector<std::uint64_t> levels;
  std::uint64_t M = 1;
};

Quantizer build_contracted_quantizer(const LtiSystem& sys, std::size_t r, double rho_target);

struct QuantizedValue {
  std::uint64_t index = 0;
  Vec centroid;
};

/// Cell index (mixed radix, axis 0 most significant) and centroid. Throws
/// ContractViolation when |eps|_inf > 1.
QuantizedValue quantize(const Quantizer& qz, const Vec& eps);
Vec centroid_of(const Quantizer& qz, std::uint64_t index);

/// Controls taking the noise-free plant from xhat to 0 in dim() steps. For
/// diagonal plants the first entry does all the work: u = -(a/b) xhat.
std::vector<Vec> deadbeat_program(const LtiSystem& sys, const Vec& xhat);

/// Control offsets u(y) on one axis, spaced so that b u values differ by
/// more than 2D.
struct Signaling {
  std::size_t axis = 0;
  double spacing = 0;  // separation of b u(y) between consecutive y
  Vec offsets;         // u(y) on `axis`, y = 0..count-1
};

inline constexpr double kSignalingFloor = 1e-9;

Signaling signaling_alphabet(const LtiSystem& sys, std::size_t y_count, double margin = 0.5);

struct Recovery {
  Symbol y = 0;
  double residual = 0;
  bool ambiguous = false;
};

/// The unique y with |x_next - a x - b (u_basic + u(y))| <= D on the
/// signaling axis. `u_basic` is the full control minus the signaling offset.
Recovery recover_y(const LtiSystem& sys, const Signaling& sig, const Vec& x_next, const Vec& x, const Vec& u_basic);

enum class Scheme { estimation, stabilization };

struct CoderConfig {
  std::size_t r = 0;
  double rho_target = 0;
  double delta_star = 0;
  double delta_1 = 0;
  double gamma = 0;
  Quantizer quantizer;
  std::optional<FeedbackCodeSpec> feedback_code;
  Signaling signaling;  // stabilization only
};

/// gamma = 1.01 max|a|; delta_* = 1.01 D max(gamma^r, sum_{k<r} gamma^k)
/// (a small positive floor when D = 0); delta_1 = 1.01 D_x; feedback code
/// built for the quantizer's level count.
CoderConfig default_coder_config(const LtiSystem& sys, const NoiseFsm& fsm, std::size_t r, double rho_target,
                                 Scheme scheme, const FeedbackBuildOptions& options = {});

/// Throws InputError when the configuration breaks an invariant of the scheme.
void check_coder_config(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, Scheme scheme);

struct BoundReport {
  double delta_ceiling = 0;       // delta_1 + delta_* / (1 - rho)
  double D_r = 0;                 // D |sum_{k=1}^{r-1} A^k|
  double noise_accumulation = 0;  // D sum_{k=0}^{r-1} |A|^k
  double estimation_ceiling = 0;  // rho delta_ceiling + noise_accumulation
  double boundary_ceiling = 0;    // scheme-specific: estimation error or state at epoch starts
  double intra_epoch_ceiling = 0; // same quantity at every step
};

BoundReport theoretical_bounds(const LtiSystem& sys, const CoderConfig& cfg, Scheme scheme = Scheme::estimation);

enum class PlantNoise { uniform, extremes, max_positive };

struct SimOptions {
  std::uint64_t seed = 1;
  PlantNoise plant_noise = PlantNoise::uniform;
  std::size_t exhaustive_epochs = 1;  // epochs branched under the exhaustive policy
  std::optional<StateIndex> channel_start;
  std::optional<Vec> x1;
  bool keep_steps = true;
};

struct StepRecord {
  std::size_t t = 0;
  std::size_t epoch = 0;
  std::vector<long double> x;
  std::vector<long double> xhat;
  double delta = 0;
  Symbol q_in = 0;
  Symbol y_out = 0;
  Symbol z = 0;
  StateIndex s_channel = 0;
  Vec u_basic;
  Vec u_comm;
  int decode_ok = -1;  // -1: no decoding at this step
};

struct EpochRecord {
  std::size_t index = 0;
  std::size_t tau = 0;
  double delta = 0;
  double eps_norm = 0;
  std::uint64_t sent = 0;
  std::uint64_t decoded = 0;
  bool decode_ok = false;
  double boundary_norm = 0;  // estimation error or state at tau
  double comm_residual = 0;  // relative, stabilization only
};

struct SimSummary {
  Scheme scheme = Scheme::estimation;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t decoded_epochs = 0;
  std::size_t decode_failures = 0;
  std::size_t signaling_ambiguities = 0;
  std::size_t recovery_errors = 0;
  std::uint64_t exhaustive_branches = 0;
  std::size_t exhaustive_failures = 0;
  double sup_boundary = 0;
  double sup_all = 0;
  double sup_delta = 0;
  double max_eps = 0;
  double max_comm_residual = 0;
  double margin = 0;
  BoundReport bounds;
  bool violated = false;
};

struct SimTrace {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  SimSummary summary;
};

/// log2 q - h_ch - h_lin when the zero test finds positive capacity, else
/// -h_lin. Throws Refusal when it is not positive.
double require_scheme_margin(const LtiSystem& sys, const NoiseFsm& fsm);

SimTrace run_estimation(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, NoisePolicy policy,
                        std::size_t T, const SimOptions& options = {});
SimTrace run_stabilization(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, NoisePolicy policy,
                           std::size_t T, const SimOptions& options = {});

std::string trace_csv(const SimTrace& trace, const NoiseFsm& fsm);
nlohmann::json summary_to_json(const SimSummary& summary);
nlohmann::json bounds_to_json(const BoundReport& bounds);

}  // namespace zec
