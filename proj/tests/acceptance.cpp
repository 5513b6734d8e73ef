// One pass/fail line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "zec/bundled.hpp"
#include "zec/capacity.hpp"
#include "zec/cli.hpp"
#include "zec/codes.hpp"
#include "zec/control.hpp"
#include "zec/coupled.hpp"
#include "zec/error.hpp"
#include "zec/spectral.hpp"

using namespace zec;

namespace {

const double kPhi = (1 + std::sqrt(5.0)) / 2;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    } else if (!cond) {
      detail += "; " + what;
    }
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7g", v);
  return buf;
}

Outcome entropy_numbers() {
  Outcome o;
  double h3 = topological_entropy(bundled_channel("fig3_no_consecutive"));
  o.require(std::abs(h3 - 0.6942419) <= 1e-6, "h_ch two-state = " + num(h3));
  o.require(std::abs(h3 - std::log2(kPhi)) <= 1e-6, "h_ch two-state != log2 phi");
  double trib = oracle::bisect({1, -1, -1, -1}, 1.5, 2.0);
  double h2 = topological_entropy(bundled_channel("ex2_three_state"));
  o.require(std::abs(h2 - std::log2(trib)) <= 1e-6, "h_ch three-state = " + num(h2) + " vs " + num(std::log2(trib)));
  o.detail = o.ok ? "h=" + num(h3) + ", " + num(h2) : o.detail;
  return o;
}

Outcome capacity_numbers() {
  Outcome o;
  auto ex2 = analyze(bundled_channel("ex2_three_state"));
  o.require(std::abs(ex2.c0f - 0.7058) <= 5e-4, "C0f three-state = " + num(ex2.c0f));
  auto sw = analyze(bundled_channel("sliding_window_3_1"));
  o.require(std::abs(sw.c0f - 0.449) <= 5e-4, "C0f sliding window = " + num(sw.c0f));
  o.require(std::abs(sw.c0_lower_raw - (-0.103)) <= 5e-4, "C0 lower raw = " + num(sw.c0_lower_raw));
  auto ge = analyze(bundled_channel("gilbert_elliott_q5"));
  o.require(std::abs(ge.c0f - (std::log2(5.0) - std::log2(kPhi))) <= 1e-6, "C0f GE = " + num(ge.c0f));
  if (o.ok) o.detail = num(ex2.c0f) + ", " + num(sw.c0f) + "/" + num(sw.c0_lower_raw) + ", " + num(ge.c0f);
  return o;
}

Outcome zero_tests() {
  Outcome o;
  struct Case {
    const char* label;
    NoiseFsm fsm;
    bool zero;
  };
  std::vector<Case> cases{{"two-state q=2", bundled_channel("fig3_no_consecutive"), true},
                          {"three-state q=2", with_alphabet(bundled_channel("ex2_three_state"), 2), true},
                          {"two-state q=3", bundled_channel("fig3_no_consecutive_q3"), false}};
  for (const auto& c : cases) {
    auto zt = zero_capacity_test(coupled_graph(c.fsm));
    o.require(zt.is_zero == c.zero, std::string(c.label) + " verdict");
    if (!c.zero) o.require(zt.witness && zt.witness->size() == 2, std::string(c.label) + " witness length");
    for (std::size_t n = 1; n <= 8; ++n) {
      bool complete = oracle::differences(c.fsm, n).size() == std::pow(c.fsm.q(), n);
      bool expect = c.zero || n < zt.witness->size();
      o.require(complete == expect, std::string(c.label) + " brute force disagrees at n=" + std::to_string(n));
    }
  }
  return o;
}

Outcome sandwich() {
  Outcome o;
  for (const auto& b : bundled_channels()) {
    auto cb = output_count_bounds(b.fsm);
    for (StateIndex s = 0; s < b.fsm.state_count(); ++s)
      for (std::size_t n = 1; n <= 12; ++n) {
        BigInt c = count_walks(b.fsm, s, n);
        double cd = static_cast<double>(c);
        double ln = std::pow(cb.lambda, double(n));
        std::string at = b.fsm.name() + " s=" + b.fsm.state_name(s) + " n=" + std::to_string(n);
        o.require(cb.alpha * ln <= cd * (1 + 1e-12) && cd <= cb.beta * ln * (1 + 1e-12), "sandwich " + at);
        o.require(c == BigInt(enumerate_noise_sequences(b.fsm, s, n).size()), "count vs enumeration " + at);
      }
  }
  return o;
}

Outcome code_search() {
  Outcome o;
  const auto& pent = bundled_channel("pentagon_memoryless");
  auto c5 = search_zero_error_code(pent, 2, SearchMode::exact);
  o.require(c5.size() == 5, "pentagon size " + std::to_string(c5.size()));
  o.require(verify_zero_error_code(pent, c5).ok && oracle::zero_error(pent, c5.codewords), "pentagon code not zero-error");
  const auto& t = bundled_channel("fig3_no_consecutive_q3");
  auto c3 = search_zero_error_code(t, 2, SearchMode::exact);
  o.require(c3.size() >= 3, "ternary size " + std::to_string(c3.size()));
  ZeroErrorCode rep{2, {{0, 0}, {1, 1}, {2, 2}}, "repetition"};
  o.require(verify_zero_error_code(t, rep).ok && oracle::zero_error(t, rep.codewords), "{00,11,22} rejected");
  if (o.ok) o.detail = "sizes 5 and " + std::to_string(c3.size());
  return o;
}

Outcome feedback_codes() {
  Outcome o;
  const auto& t = bundled_channel("fig3_no_consecutive_q3");
  double c0f = analyze(t).c0f;
  for (auto [m, len] : {std::pair<std::uint64_t, std::size_t>{3, 3}, {81, 8}}) {
    auto spec = build_feedback_code(t, m);
    std::string tag = "M=" + std::to_string(m);
    o.require(spec.total_length == len, tag + " length " + std::to_string(spec.total_length));
    auto v = verify_feedback_code(t, spec);
    o.require(v.ok, tag + " decoding: " + v.counterexample);
    auto u = verify_uniformity(t, spec);
    o.require(u.ok, tag + " uniformity: " + u.counterexample);
    o.require(spec.rate() <= c0f + 1e-9, tag + " rate above C0f");
  }
  return o;
}

Outcome memoryless_lp() {
  Outcome o;
  double exact = memoryless_c0f(5, 2);
  o.require(exact == std::log2(5.0 / 2.0) && std::abs(exact - 1.3219281) < 1e-7, "closed form " + num(exact));
  auto lp = memoryless_lp_oracle(5, 2, 50);
  o.require(std::abs(lp.value - exact) <= 1e-2, "grid oracle " + num(lp.value));
  if (o.ok) o.detail = "grid " + num(lp.value);
  return o;
}

Outcome variational() {
  Outcome o;
  auto m1 = minimize_cf_example1(3).value;
  auto m2 = minimize_cf_example2(3).value;
  o.require(std::abs(m1 - analyze(bundled_channel("fig3_no_consecutive_q3")).c0f) <= 1e-3, "two-state q=3 " + num(m1));
  o.require(std::abs(m2 - analyze(bundled_channel("ex2_three_state")).c0f) <= 1e-3, "three-state q=3 " + num(m2));
  auto b1 = minimize_cf_example1(2).value;
  auto b2 = minimize_cf_example2(2).value;
  o.require(b1 > 0.1 && analyze(bundled_channel("fig3_no_consecutive")).c0f == 0, "two-state q=2 " + num(b1));
  o.require(b2 > 0.1 && analyze(with_alphabet(bundled_channel("ex2_three_state"), 2)).c0f == 0,
            "three-state q=2 " + num(b2));
  if (o.ok) o.detail = num(m1) + ", " + num(m2) + "; q=2: " + num(b1) + ", " + num(b2);
  return o;
}

void check_sim(Outcome& o, const SimSummary& s, const std::string& tag) {
  o.require(s.decode_failures == 0, tag + " decode failures " + std::to_string(s.decode_failures));
  o.require(s.exhaustive_failures == 0, tag + " exhaustive failures");
  o.require(s.sup_all <= s.bounds.intra_epoch_ceiling, tag + " sup " + num(s.sup_all));
  o.require(s.sup_boundary <= s.bounds.boundary_ceiling, tag + " boundary sup " + num(s.sup_boundary));
  o.require(s.sup_delta <= s.bounds.delta_ceiling, tag + " delta " + num(s.sup_delta));
  o.require(!s.violated, tag + " violated");
}

Outcome estimation() {
  Outcome o;
  LtiSystem sys{{1.5}, {1.0}, 1.0, 0.01};
  const auto& t = bundled_channel("fig3_no_consecutive_q3");
  auto cfg = default_coder_config(sys, t, 9, 0.5, Scheme::estimation);
  double sup = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SimOptions opt;
    opt.seed = seed;
    opt.keep_steps = false;
    auto s = run_estimation(sys, t, cfg, NoisePolicy::random(seed), 1800, opt).summary;
    check_sim(o, s, "seed " + std::to_string(seed));
    sup = std::max(sup, s.sup_all);
  }
  SimOptions opt;
  opt.keep_steps = false;
  opt.plant_noise = PlantNoise::extremes;
  check_sim(o, run_estimation(sys, t, cfg, NoisePolicy::adversarial_greedy("diameter"), 1800, opt).summary, "greedy");
  auto ex = run_estimation(sys, t, cfg, NoisePolicy::exhaustive(1), 1800, opt).summary;
  check_sim(o, ex, "exhaustive");
  o.require(ex.exhaustive_branches > 0, "no exhaustive branches");
  if (o.ok)
    o.detail = "sup |x - xhat| " + num(sup) + " <= " + num(theoretical_bounds(sys, cfg).intra_epoch_ceiling) + ", " +
               std::to_string(ex.exhaustive_branches) + " exhaustive branches";
  return o;
}

Outcome stabilization() {
  Outcome o;
  LtiSystem sys{{1.5}, {1.0}, 1.0, 0.01};
  const auto& t = bundled_channel("fig3_no_consecutive_q3");
  auto cfg = default_coder_config(sys, t, 9, 0.5, Scheme::stabilization);
  o.require(cfg.feedback_code && cfg.feedback_code->total_length == 8, "code length");
  double sup = 0, resid = 0;
  auto more = [&](const SimSummary& s, const std::string& tag) {
    check_sim(o, s, tag);
    o.require(s.signaling_ambiguities == 0 && s.recovery_errors == 0, tag + " signaling");
    o.require(s.max_comm_residual < 1e-9, tag + " residual " + num(s.max_comm_residual));
    sup = std::max(sup, s.sup_all);
    resid = std::max(resid, s.max_comm_residual);
  };
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SimOptions opt;
    opt.seed = seed;
    opt.keep_steps = false;
    more(run_stabilization(sys, t, cfg, NoisePolicy::random(seed), 2700, opt).summary, "seed " + std::to_string(seed));
  }
  SimOptions opt;
  opt.keep_steps = false;
  opt.plant_noise = PlantNoise::extremes;
  more(run_stabilization(sys, t, cfg, NoisePolicy::adversarial_greedy("state"), 2700, opt).summary, "greedy");
  if (o.ok)
    o.detail = "sup |x| " + num(sup) + " <= " + num(theoretical_bounds(sys, cfg, Scheme::stabilization).intra_epoch_ceiling) +
               ", residual " + num(resid);
  return o;
}

Outcome refusal() {
  Outcome o;
  std::ostringstream out, err;
  int code = cli::run({"--json", "sim", "ctl", "--channel", "sliding_window_3_1", "--a", "2", "--b", "1"}, out, err);
  o.require(code == 4, "exit code " + std::to_string(code));
  try {
    double m = nlohmann::json::parse(out.str()).at("margin").get<double>();
    o.require(std::abs(m - (-0.551)) <= 5e-4, "margin " + num(m));
    if (o.ok) o.detail = "exit 4, margin " + num(m);
  } catch (const std::exception& e) {
    o.require(false, std::string("no margin in output: ") + e.what());
  }
  return o;
}

Outcome properties() {
  Outcome o;
  // Negation symmetry of walkability.
  for (const auto& b : bundled_channels()) {
    auto cg = coupled_graph(b.fsm);
    for (std::size_t n = 1; n <= 6 && std::pow(b.fsm.q(), n) <= 5000; ++n)
      for (const auto& d : oracle::all_words(b.fsm.q(), n))
        o.require(is_walkable(cg, d) == is_walkable(cg, negate_word(d, b.fsm.q())), "negation " + b.fsm.name());
  }
  // Best code sizes shrink when the noise graph grows.
  for (int q : {2, 3}) {
    auto small = with_alphabet(bundled_channel("fig3_no_consecutive"), q);
    auto big = with_alphabet(bundled_channel("ex2_three_state"), q);
    for (std::size_t n = 1; n <= 4; ++n)
      o.require(search_zero_error_code(small, n, SearchMode::exact).size() >=
                    search_zero_error_code(big, n, SearchMode::exact).size(),
                "monotonicity q=" + std::to_string(q) + " n=" + std::to_string(n));
  }
  // Every searched code passes the brute-force oracle.
  for (const auto& b : bundled_channels())
    for (std::size_t n = 1; n <= 4; ++n) {
      double words = std::pow(b.fsm.q(), n);
      if (words > kDefaultConfusabilityCap) break;
      auto mode = words <= kDefaultExactSearchCap ? SearchMode::exact : SearchMode::greedy;
      auto code = search_zero_error_code(b.fsm, n, mode);
      o.require(oracle::zero_error(b.fsm, code.codewords), "closure " + b.fsm.name() + " n=" + std::to_string(n));
    }
  // Round trips of channel and feedback-code documents.
  for (const auto& b : bundled_channels()) {
    auto s1 = serialize_channel_spec(b.fsm);
    o.require(serialize_channel_spec(parse_channel_spec(s1)) == s1, "channel round trip " + b.fsm.name());
  }
  auto spec = build_feedback_code(bundled_channel("fig3_no_consecutive_q3"), 81);
  auto j = feedback_spec_to_json(spec);
  o.require(feedback_spec_to_json(feedback_spec_from_json(j)) == j, "feedback spec round trip");
  LtiSystem sys{{1.5}, {1.0}, 1.0, 0.01};
  auto cfg = default_coder_config(sys, bundled_channel("fig3_no_consecutive_q3"), 9, 0.5, Scheme::estimation);
  auto cfg2 = cfg;
  cfg2.feedback_code = feedback_spec_from_json(feedback_spec_to_json(*cfg.feedback_code));
  SimOptions opt;
  opt.seed = 3;
  auto a = run_estimation(sys, bundled_channel("fig3_no_consecutive_q3"), cfg, NoisePolicy::random(3), 180, opt);
  auto b = run_estimation(sys, bundled_channel("fig3_no_consecutive_q3"), cfg2, NoisePolicy::random(3), 180, opt);
  o.require(trace_csv(a, bundled_channel("fig3_no_consecutive_q3")) == trace_csv(b, bundled_channel("fig3_no_consecutive_q3")),
            "config round trip changes the trace");
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  std::vector<Criterion> all{
      {1, "entropy golden numbers", 1, entropy_numbers},
      {2, "capacity golden numbers", 1, capacity_numbers},
      {3, "zero tests with brute-force confirmation", 30, zero_tests},
      {4, "count sandwich and exact counts, n <= 12", 10, sandwich},
      {5, "zero-error code search", 10, code_search},
      {6, "feedback codes: exhaustive decoding, uniformity, rate", 60, feedback_codes},
      {7, "memoryless closed form and grid oracle", 10, memoryless_lp},
      {8, "variational cross-check", 10, variational},
      {9, "estimation: 100 seeds, greedy, exhaustive epoch", 120, estimation},
      {10, "stabilization: 100 seeds, greedy", 180, stabilization},
      {11, "stabilization refusal on the sliding-window channel", 10, refusal},
      {12, "property suites", 60, properties},
  };
  int failed = 0;
  for (const auto& c : all) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) o.require(false, "took " + num(secs) + " s, budget " + num(c.budget_s) + " s");
    std::printf("%s  %2d  %-55s %7.3fs  %s\n", o.ok ? "PASS" : "FAIL", c.id, c.title, secs, o.detail.c_str());
    if (!o.ok) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
