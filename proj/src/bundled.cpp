#include "zec/bundled.hpp"

#include "zec/error.hpp"

namespace zec {

namespace {

NoiseFsm make(std::string name, int q, std::vector<std::string> states, std::vector<Edge> edges) {
  NoiseFsm fsm(std::move(name), q, std::move(states), std::move(edges));
  require_valid(fsm);
  return fsm;
}

NoiseFsm no_consecutive(std::string name, int q) {
  return make(std::move(name), q, {"s0", "s1"}, {{0, 0, 0}, {0, 1, 1}, {1, 0, 0}});
}

std::vector<BundledChannel> build() {
  std::vector<BundledChannel> out;
  out.push_back({"fig3_no_consecutive.json", no_consecutive("fig3_no_consecutive", 2)});
  out.push_back({"ex2_three_state.json",
                 make("ex2_three_state", 3, {"s0", "s1", "s2"}, {{0, 0, 0}, {0, 1, 1}, {1, 0, 0}, {1, 2, 1}, {2, 0, 0}})});
  out.push_back({"pentagon_memoryless.json", make("pentagon_memoryless", 5, {"s"}, {{0, 0, 0}, {0, 0, 1}})});
  out.push_back({"gilbert_elliott_q5.json", no_consecutive("gilbert_elliott_q5", 5)});
  // State = last three noise bits; at most one error per window of three.
  out.push_back({"sliding_window_3_1.json",
                 make("sliding_window_3_1", 2, {"000", "001", "010", "100"},
                      {{0, 0, 0}, {0, 1, 1}, {1, 2, 0}, {2, 3, 0}, {3, 0, 0}, {3, 1, 1}})});
  out.push_back({"noiseless.json", make("noiseless", 2, {"s"}, {{0, 0, 0}})});
  out.push_back({"fig3_no_consecutive_q3.json", no_consecutive("fig3_no_consecutive_q3", 3)});
  return out;
}

}  // namespace

const std::vector<BundledChannel>& bundled_channels() {
  static const std::vector<BundledChannel> channels = build();
  return channels;
}

const NoiseFsm& bundled_channel(std::string_view name) {
  for (const auto& c : bundled_channels()) {
    std::string_view stem(c.file);
    stem.remove_suffix(5);
    if (name == c.file || name == stem) return c.fsm;
  }
  throw InputError("unknown bundled channel '" + std::string(name) + "'");
}

}  // namespace zec
