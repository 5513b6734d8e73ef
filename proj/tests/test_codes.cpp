#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "zec/bundled.hpp"
#include "zec/capacity.hpp"
#include "zec/codes.hpp"
#include "zec/error.hpp"

using namespace zec;

namespace {

/// Largest independent set by plain subset enumeration.
std::size_t brute_max_code(const NoiseFsm& fsm, std::size_t n) {
  ConfusabilityGraph g(fsm, n);
  const std::size_t v = g.vertex_count();
  REQUIRE(v <= 20);
  std::size_t best = 0;
  for (std::uint32_t mask = 1; mask < (1u << v); ++mask) {
    std::size_t bits = __builtin_popcount(mask);
    if (bits <= best) continue;
    bool ok = true;
    for (std::size_t a = 0; a < v && ok; ++a)
      if (mask >> a & 1)
        for (std::size_t b = a + 1; b < v && ok; ++b)
          if (mask >> b & 1 && g.adjacent(a, b)) ok = false;
    if (ok) best = bits;
  }
  return best;
}

}  // namespace

TEST_CASE("confusability matches output-set intersection") {
  for (const char* name : {"fig3_no_consecutive_q3", "ex2_three_state", "pentagon_memoryless"}) {
    const auto& fsm = bundled_channel(name);
    for (std::size_t n = 1; n <= 3; ++n) {
      ConfusabilityGraph g(fsm, n);
      for (std::size_t a = 0; a < g.vertex_count(); ++a)
        for (std::size_t b = a + 1; b < g.vertex_count(); ++b)
          CHECK(g.adjacent(a, b) == !oracle::zero_error(fsm, {g.vertex(a), g.vertex(b)}));
      CHECK(g.edges().size() == g.edge_count());
    }
  }
}

TEST_CASE("pentagon code of size five") {
  auto code = search_zero_error_code(bundled_channel("pentagon_memoryless"), 2, SearchMode::exact);
  CHECK(code.size() == 5);
  CHECK(verify_zero_error_code(bundled_channel("pentagon_memoryless"), code).ok);
  CHECK(oracle::zero_error(bundled_channel("pentagon_memoryless"), code.codewords));
  CHECK(code.rate() == doctest::Approx(std::log2(5.0) / 2));
}

TEST_CASE("repetition code on the ternary two-state channel") {
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  ZeroErrorCode rep{2, {{0, 0}, {1, 1}, {2, 2}}, "repetition"};
  CHECK(verify_zero_error_code(fsm, rep).ok);
  CHECK(oracle::zero_error(fsm, rep.codewords));
  auto found = search_zero_error_code(fsm, 2, SearchMode::exact);
  CHECK(found.size() >= 3);
  ZeroErrorCode bad{2, {{0, 0}, {0, 1}}, "manual"};
  auto v = verify_zero_error_code(fsm, bad);
  CHECK_FALSE(v.ok);
  CHECK_FALSE(v.counterexample.empty());
}

TEST_CASE("exact search finds maximum codes") {
  CHECK(search_zero_error_code(bundled_channel("fig3_no_consecutive_q3"), 1, SearchMode::exact).size() ==
        brute_max_code(bundled_channel("fig3_no_consecutive_q3"), 1));
  CHECK(search_zero_error_code(bundled_channel("fig3_no_consecutive_q3"), 2, SearchMode::exact).size() ==
        brute_max_code(bundled_channel("fig3_no_consecutive_q3"), 2));
  CHECK(search_zero_error_code(bundled_channel("pentagon_memoryless"), 1, SearchMode::exact).size() ==
        brute_max_code(bundled_channel("pentagon_memoryless"), 1));
  CHECK(search_zero_error_code(bundled_channel("sliding_window_3_1"), 4, SearchMode::exact).size() ==
        brute_max_code(bundled_channel("sliding_window_3_1"), 4));
}

TEST_CASE("every searched code passes the brute-force oracle") {
  for (const auto& b : bundled_channels()) {
    for (std::size_t n = 1; n <= 4; ++n) {
      double words = std::pow(b.fsm.q(), n);
      if (words > 700) break;
      for (auto mode : {SearchMode::exact, SearchMode::greedy}) {
        if (mode == SearchMode::exact && words > kDefaultExactSearchCap) continue;
        auto code = search_zero_error_code(b.fsm, n, mode);
        CAPTURE(b.file);
        CAPTURE(n);
        CHECK(std::is_sorted(code.codewords.begin(), code.codewords.end()));
        CHECK(oracle::zero_error(b.fsm, code.codewords));
        CHECK(verify_zero_error_code(b.fsm, code).ok);
      }
    }
  }
}

TEST_CASE("greedy never beats exact") {
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto& fsm = bundled_channel("ex2_three_state");
    CHECK(search_zero_error_code(fsm, n, SearchMode::greedy).size() <=
          search_zero_error_code(fsm, n, SearchMode::exact).size());
  }
}

TEST_CASE("concatenation keeps zero error") {
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  auto c2 = search_zero_error_code(fsm, 2, SearchMode::exact);
  auto c = concatenate_codes(c2, c2);
  CHECK(c.n == 4);
  CHECK(c.size() == c2.size() * c2.size());
  CHECK(verify_zero_error_code(fsm, c).ok);
}

TEST_CASE("search guards") {
  CHECK_THROWS_AS(search_zero_error_code(bundled_channel("pentagon_memoryless"), 4, SearchMode::exact), GuardExceeded);
  CHECK_THROWS_AS(ConfusabilityGraph(bundled_channel("pentagon_memoryless"), 6), GuardExceeded);
}

TEST_CASE("digit helpers") {
  CHECK(to_digits(5, 3, 3) == Word{0, 1, 2});
  CHECK(from_digits(Word{0, 1, 2}, 3) == 5);
  CHECK(digits_needed(81, 3) == 4);
  CHECK(digits_needed(82, 3) == 5);
  CHECK(digits_needed(1, 3) == 0);
  CHECK_THROWS_AS(to_digits(27, 3, 3), ContractViolation);
}

TEST_CASE("feedback code shapes") {
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  auto s3 = build_feedback_code(fsm, 3);
  CHECK(s3.total_length == 3);
  auto s81 = build_feedback_code(fsm, 81);
  CHECK(s81.total_length == 8);
  CHECK(s81.stages.front().length == 4);
  CHECK(s81.has_base());
  CHECK(build_feedback_code(fsm, 77).total_length == 8);
  CHECK_THROWS_AS(build_feedback_code(fsm, 1), InputError);
  CHECK_THROWS_AS(build_feedback_code(bundled_channel("fig3_no_consecutive"), 3), Refusal);
}

TEST_CASE("feedback codes decode every message on every noise walk") {
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  for (std::uint64_t m : {2, 3, 9, 81}) {
    auto spec = build_feedback_code(fsm, m);
    CAPTURE(m);
    auto v = verify_feedback_code(fsm, spec);
    CHECK(v.ok);
    CHECK(verify_uniformity(fsm, spec).ok);
    CHECK(spec.rate() <= analyze(fsm).c0f + 1e-9);
  }
  for (const char* name : {"ex2_three_state", "gilbert_elliott_q5", "sliding_window_3_1", "pentagon_memoryless"}) {
    const auto& f = bundled_channel(name);
    auto spec = build_feedback_code(f, 10);
    CAPTURE(name);
    CHECK(verify_feedback_code(f, spec).ok);
    CHECK(spec.rate() <= analyze(f).c0f + 1e-9);
  }
}

TEST_CASE("independent encoder-decoder walk") {
  // Drives the encoder along every noise walk with its own DFS.
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  auto spec = build_feedback_code(fsm, 3);
  std::size_t runs = 0;
  for (std::uint64_t m = 0; m < 3; ++m)
    for (StateIndex s0 = 0; s0 < fsm.state_count(); ++s0) {
      std::function<void(StateIndex, FeedbackEncoder, Word)> go = [&](StateIndex s, FeedbackEncoder enc, Word ys) {
        if (enc.done()) {
          auto d = decode_feedback(spec, ys);
          CHECK(d.ok);
          CHECK(d.message == m);
          ++runs;
          return;
        }
        for (const auto& e : fsm.edges()) {
          if (e.from != s) continue;
          Symbol y = (enc.next_input() + e.label) % 3;
          FeedbackEncoder next = enc;
          next.observe_output(y);
          Word ys2 = ys;
          ys2.push_back(y);
          go(e.to, next, ys2);
        }
      };
      go(s0, FeedbackEncoder(spec, m), {});
    }
  CHECK(runs > 0);
}

TEST_CASE("feedback spec JSON round-trip and fault injection") {
  const auto& fsm = bundled_channel("fig3_no_consecutive_q3");
  auto spec = build_feedback_code(fsm, 81);
  auto j = feedback_spec_to_json(spec);
  auto back = feedback_spec_from_json(j);
  CHECK(feedback_spec_to_json(back) == j);
  CHECK(back.total_length == spec.total_length);
  CHECK(verify_feedback_code(fsm, back).ok);

  auto broken = j;
  broken["base_code"]["codewords"][1] = broken["base_code"]["codewords"][0];
  bool caught = false;
  try {
    auto s = feedback_spec_from_json(broken);
    caught = !verify_feedback_code(fsm, s).ok;
  } catch (const InputError&) {
    caught = true;
  }
  CHECK(caught);

  auto wrong = j;
  wrong["message_count"] = 80;
  CHECK_THROWS_AS(feedback_spec_from_json(wrong), InputError);
}

TEST_CASE("smaller noise graphs admit codes at least as large") {
  for (int q : {2, 3}) {
    auto small = with_alphabet(bundled_channel("fig3_no_consecutive"), q);
    auto big = with_alphabet(bundled_channel("ex2_three_state"), q);
    for (std::size_t n = 1; n <= 4; ++n) {
      CAPTURE(q);
      CAPTURE(n);
      CHECK(search_zero_error_code(small, n, SearchMode::exact).size() >=
            search_zero_error_code(big, n, SearchMode::exact).size());
    }
  }
}
