#include <cmath>
#include <random>

#include "doctest.h"
#include "zec/bundled.hpp"
#include "zec/control.hpp"
#include "zec/error.hpp"

using namespace zec;

namespace {

const NoiseFsm& ternary() { return bundled_channel("fig3_no_consecutive_q3"); }
LtiSystem scalar(double a = 1.5) { return {{a}, {1.0}, 1.0, 0.01}; }

}  // namespace

TEST_CASE("linear topological entropy") {
  CHECK(lin_topological_entropy({{2.0, 0.5, -4.0}, {1, 1, 1}, 1, 0}) == doctest::Approx(3.0));
  CHECK(lin_topological_entropy({{0.9}, {1}, 1, 0}) == 0);
  CHECK_THROWS_AS(validate_system({{2.0}, {0.0}, 1, 0}, true), InputError);
  CHECK_NOTHROW(validate_system({{2.0}, {0.0}, 1, 0}, false));
  CHECK_THROWS_AS(validate_system({{1.0}, {1.0}, 0, 0}, false), InputError);
  CHECK_THROWS_AS(validate_system({{1.0}, {1.0, 2.0}, 1, 0}, false), InputError);
}

TEST_CASE("contracted quantizer") {
  auto qz = build_contracted_quantizer(scalar(), 9, 0.5);
  CHECK(qz.M == 77);
  CHECK(qz.rho < 0.5);
  CHECK(qz.rho == doctest::Approx(std::pow(1.5, 9) / 77));
  auto q2 = build_contracted_quantizer({{1.5, 0.5, 2.0}, {1, 1, 1}, 1, 0}, 3, 0.6);
  CHECK(q2.levels == std::vector<std::uint64_t>{6, 1, 14});
  CHECK(q2.M == 84);
  CHECK(q2.rho <= 0.6);
  CHECK_THROWS_AS(build_contracted_quantizer(scalar(), 9, 1.0), InputError);
  CHECK_THROWS_AS(build_contracted_quantizer(scalar(), 0, 0.5), InputError);
}

TEST_CASE("quantizer cells contract under r steps") {
  LtiSystem sys{{1.5, -1.2}, {1, 1}, 1, 0};
  auto qz = build_contracted_quantizer(sys, 4, 0.7);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 2000; ++k) {
    Vec e{u(rng), u(rng)};
    auto qv = quantize(qz, e);
    CHECK(qv.index < qz.M);
    CHECK(centroid_of(qz, qv.index) == qv.centroid);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(std::abs(std::pow(sys.a[i], 4) * (e[i] - qv.centroid[i])) <= qz.rho + 1e-12);
  }
  CHECK(quantize(qz, {1.0, -1.0}).index < qz.M);
  CHECK_THROWS_AS(quantize(qz, {1.1, 0.0}), ContractViolation);
  for (std::uint64_t m = 0; m < qz.M; ++m) CHECK(quantize(qz, centroid_of(qz, m)).index == m);
}

TEST_CASE("deadbeat program zeroes the noise-free plant") {
  LtiSystem sys{{1.7, -0.4, 3.0}, {2.0, 1.0, -0.5}, 1, 0};
  Vec x{0.3, -0.8, 0.9};
  auto prog = deadbeat_program(sys, x);
  REQUIRE(prog.size() == 3);
  for (const auto& u : prog)
    for (std::size_t i = 0; i < 3; ++i) x[i] = sys.a[i] * x[i] + sys.b[i] * u[i];
  for (double v : x) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("signaling alphabet separates outputs by more than 2D") {
  auto sys = scalar();
  auto sig = signaling_alphabet(sys, 3);
  CHECK(sig.axis == 0);
  CHECK(sig.offsets.size() == 3);
  CHECK(sig.spacing > 2 * sys.D);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> v(-sys.D, sys.D);
  for (int k = 0; k < 3000; ++k) {
    Vec x{v(rng) * 100}, ub{0.1};
    Symbol y = k % 3;
    Vec xn{sys.a[0] * x[0] + sys.b[0] * (ub[0] + sig.offsets[y]) + (k % 7 == 0 ? sys.D : v(rng))};
    auto rec = recover_y(sys, sig, xn, x, ub);
    CHECK(rec.y == y);
    CHECK_FALSE(rec.ambiguous);
    CHECK(rec.residual <= sys.D + 1e-12);
  }
  LtiSystem quiet{{1.5}, {1}, 1, 0};
  CHECK(signaling_alphabet(quiet, 3).spacing == kSignalingFloor);
  CHECK_THROWS_AS(signaling_alphabet({{0.5}, {0}, 1, 0}, 3), InputError);
}

TEST_CASE("default configuration satisfies its invariants") {
  auto sys = scalar();
  for (auto scheme : {Scheme::estimation, Scheme::stabilization}) {
    auto cfg = default_coder_config(sys, ternary(), 9, 0.5, scheme);
    CHECK_NOTHROW(check_coder_config(sys, ternary(), cfg, scheme));
    CHECK(cfg.feedback_code->total_length == 8);
    CHECK(cfg.gamma > sys.norm_a());
    CHECK(cfg.delta_star > sys.D * std::pow(cfg.gamma, 9));
    CHECK(cfg.delta_1 > sys.D_x);
    auto bad = cfg;
    bad.delta_star = 0.5 * sys.D * std::pow(cfg.gamma, 9);
    CHECK_THROWS_AS(check_coder_config(sys, ternary(), bad, scheme), InputError);
    bad = cfg;
    bad.gamma = 1.4;
    CHECK_THROWS_AS(check_coder_config(sys, ternary(), bad, scheme), InputError);
    bad = cfg;
    bad.feedback_code->message_count = 10;
    CHECK_THROWS_AS(check_coder_config(sys, ternary(), bad, scheme), InputError);
  }
  // r = 8 leaves only 7 slots for an 8-symbol code in stabilization.
  auto cfg8 = default_coder_config(sys, ternary(), 9, 0.5, Scheme::stabilization);
  cfg8.r = 8;
  cfg8.quantizer.r = 8;
  CHECK_THROWS_AS(check_coder_config(sys, ternary(), cfg8, Scheme::stabilization), InputError);
}

TEST_CASE("theoretical bounds") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::estimation);
  auto b = theoretical_bounds(sys, cfg);
  CHECK(b.delta_ceiling == doctest::Approx(cfg.delta_1 + cfg.delta_star / (1 - cfg.quantizer.rho)));
  double s = 0;
  for (int k = 1; k < 9; ++k) s += std::pow(1.5, k);
  CHECK(b.D_r == doctest::Approx(0.01 * s));
  CHECK(b.noise_accumulation == doctest::Approx(0.01 * (s + 1)));
  CHECK(b.estimation_ceiling == doctest::Approx(cfg.quantizer.rho * b.delta_ceiling + b.noise_accumulation));
  CHECK(b.intra_epoch_ceiling >= b.boundary_ceiling);
}

TEST_CASE("refusals") {
  auto sw = bundled_channel("sliding_window_3_1");
  try {
    require_scheme_margin(scalar(2.0), sw);
    FAIL("expected a refusal");
  } catch (const Refusal& r) {
    CHECK(std::abs(r.margin() - (-0.551)) < 5e-4);
    CHECK(std::string(r.what()).find("log2 q") != std::string::npos);
  }
  try {
    require_scheme_margin(scalar(1.1), bundled_channel("fig3_no_consecutive"));
    FAIL("expected a refusal");
  } catch (const Refusal& r) {
    CHECK(std::string(r.what()).find("zero test") != std::string::npos);
  }
  CHECK(require_scheme_margin(scalar(1.5), ternary()) == doctest::Approx(std::log2(3.0) - std::log2((1 + std::sqrt(5.0)) / 2) - std::log2(1.5)));
  auto cfg = default_coder_config(scalar(1.5), ternary(), 9, 0.5, Scheme::estimation);
  CHECK_THROWS_AS(run_estimation(scalar(2.0), sw, cfg, NoisePolicy::random(1), 10), Error);
}

TEST_CASE("estimation keeps the error bounded") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::estimation);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimOptions o;
    o.seed = seed;
    auto tr = run_estimation(sys, ternary(), cfg, NoisePolicy::random(seed), 900, o);
    const auto& s = tr.summary;
    CHECK(s.decode_failures == 0);
    CHECK(s.decoded_epochs == 100);
    CHECK(s.sup_boundary <= s.bounds.boundary_ceiling);
    CHECK(s.sup_all <= s.bounds.intra_epoch_ceiling);
    CHECK(s.sup_delta < s.bounds.delta_ceiling);
    CHECK_FALSE(s.violated);
    REQUIRE(tr.steps.size() == 900);
    // Trace check while x and xhat are still small enough to subtract.
    for (const auto& st : tr.steps)
      if ((st.t - 1) % 9 == 0 && std::abs(double(st.x[0])) < 1e6)
        CHECK(std::abs(double(st.x[0] - st.xhat[0])) <= s.bounds.boundary_ceiling + 1e-6);
  }
}

TEST_CASE("estimation under worst-case plant noise and adversarial channel") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::estimation);
  for (auto pn : {PlantNoise::extremes, PlantNoise::max_positive}) {
    SimOptions o;
    o.plant_noise = pn;
    auto g = run_estimation(sys, ternary(), cfg, NoisePolicy::adversarial_greedy("diameter"), 900, o).summary;
    CHECK(g.decode_failures == 0);
    CHECK_FALSE(g.violated);
    o.exhaustive_epochs = 2;
    auto e = run_estimation(sys, ternary(), cfg, NoisePolicy::exhaustive(4), 900, o).summary;
    CHECK(e.exhaustive_branches > 0);
    CHECK(e.exhaustive_failures == 0);
    CHECK_FALSE(e.violated);
  }
}

TEST_CASE("stabilization keeps the state bounded and signaling clean") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::stabilization);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimOptions o;
    o.seed = seed;
    auto tr = run_stabilization(sys, ternary(), cfg, NoisePolicy::random(seed), 900, o);
    const auto& s = tr.summary;
    CHECK(s.decode_failures == 0);
    CHECK(s.signaling_ambiguities == 0);
    CHECK(s.recovery_errors == 0);
    CHECK(s.max_comm_residual < 1e-9);
    CHECK(s.sup_all <= s.bounds.intra_epoch_ceiling);
    CHECK_FALSE(s.violated);
    double sup = 0;
    for (const auto& st : tr.steps) sup = std::max(sup, std::abs(double(st.x[0])));
    CHECK(sup <= s.bounds.intra_epoch_ceiling);
    // Communication controls are cancelled by the end of every full epoch.
    for (std::size_t ep = 0; ep + 1 < tr.epochs.size(); ++ep) {
      double infl = 0, scale = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        const auto& st = tr.steps[ep * 9 + j];
        infl = 1.5 * infl + st.u_comm[0];
        scale = 1.5 * scale + std::abs(st.u_comm[0]);
      }
      if (scale > 0) CHECK(std::abs(infl) / scale < 1e-9);
    }
  }
  auto g = run_stabilization(sys, ternary(), cfg, NoisePolicy::adversarial_greedy("state"), 900).summary;
  CHECK(g.decode_failures == 0);
  CHECK_FALSE(g.violated);
}

TEST_CASE("stabilization of a two-axis plant") {
  LtiSystem sys{{1.2, 0.5}, {1.0, 1.0}, 1.0, 0.01};
  auto cfg = default_coder_config(sys, ternary(), 8, 0.5, Scheme::stabilization);
  auto s = run_stabilization(sys, ternary(), cfg, NoisePolicy::random(2), 800).summary;
  CHECK(s.decode_failures == 0);
  CHECK(s.max_comm_residual < 1e-9);
  CHECK_FALSE(s.violated);
}

TEST_CASE("simulations are deterministic per seed") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::stabilization);
  SimOptions o;
  o.seed = 9;
  auto a = run_stabilization(sys, ternary(), cfg, NoisePolicy::random(9), 270, o);
  auto b = run_stabilization(sys, ternary(), cfg, NoisePolicy::random(9), 270, o);
  CHECK(trace_csv(a, ternary()) == trace_csv(b, ternary()));
  auto csv = trace_csv(a, ternary());
  CHECK(csv.rfind("t,epoch,x,xhat,delta,q_in,y_out,z,s_channel,u_basic,u_comm,decode_ok\n", 0) == 0);
  CHECK(summary_to_json(a.summary).dump() == summary_to_json(b.summary).dump());
}

TEST_CASE("a corrupted feedback code is caught by the simulator") {
  auto sys = scalar();
  auto cfg = default_coder_config(sys, ternary(), 9, 0.5, Scheme::estimation);
  auto& code = cfg.feedback_code->base_code.codewords;
  for (auto& w : code) w = code[0];
  SimOptions o;
  o.exhaustive_epochs = 10;
  auto s = run_estimation(sys, ternary(), cfg, NoisePolicy::exhaustive(1), 90, o).summary;
  CHECK(s.exhaustive_failures > 0);
  CHECK(s.violated);
}
