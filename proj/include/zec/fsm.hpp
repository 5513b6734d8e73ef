#pragma once

// Finite-state additive noise channels: the labeled noise graph, its
// validation, noise-sequence enumeration, and single-step channel simulation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace zec {

using Symbol = int;
using Word = std::vector<Symbol>;
using StateIndex = std::size_t;

/// Start-state selector: a single state, or std::nullopt for "any state".
using StartSet = std::optional<StateIndex>;
inline constexpr StartSet kAllStates = std::nullopt;

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 24;

struct Edge {
  StateIndex from = 0;
  StateIndex to = 0;
  Symbol label = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Labeled directed graph generating the additive noise Z_i. Outgoing edges of
/// each state are kept sorted by label. Construction only checks that edge
/// endpoints exist; call validate() for the channel invariants.
class NoiseFsm {
 public:
  NoiseFsm(std::string name, int q, std::vector<std::string> states, std::vector<Edge> edges);

  const std::string& name() const noexcept { return name_; }
  int q() const noexcept { return q_; }
  std::size_t state_count() const noexcept { return states_.size(); }
  const std::vector<std::string>& states() const noexcept { return states_; }
  const std::string& state_name(StateIndex s) const { return states_.at(s); }
  std::optional<StateIndex> index_of(std::string_view state) const;

  /// Edges in declaration order.
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  /// Outgoing edges of `s`, sorted by label.
  std::span<const Edge> out_edges(StateIndex s) const;
  /// The edge leaving `s` with `label`, or nullptr.
  const Edge* edge_for(StateIndex s, Symbol label) const;

  friend bool operator==(const NoiseFsm&, const NoiseFsm&) = default;

 private:
  std::string name_;
  int q_;
  std::vector<std::string> states_;
  std::vector<Edge> edges_;
  std::vector<Edge> sorted_;
  std::vector<std::size_t> offsets_;
};

struct ValidationCheck {
  std::string name;
  bool pass = true;
  std::string witness;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const noexcept;
  /// First failing check rendered as "name: witness", empty when ok.
  std::string first_failure() const;
};

ValidationReport validate(const NoiseFsm& fsm);

/// Throws InputError describing the first failed invariant.
void require_valid(const NoiseFsm& fsm);

/// Parses a channel-spec JSON document and validates it.
NoiseFsm parse_channel_spec(std::string_view document);
NoiseFsm channel_from_json(const nlohmann::json& doc);
nlohmann::json channel_to_json(const NoiseFsm& fsm);
std::string serialize_channel_spec(const NoiseFsm& fsm);

/// Same graph over a different alphabet size; the result is validated.
NoiseFsm with_alphabet(const NoiseFsm& fsm, int q);

/// Upper bound on the number of label sequences of length n from `start`
/// (sum over starts for kAllStates), saturating at UINT64_MAX.
std::uint64_t predicted_sequence_count(const NoiseFsm& fsm, StartSet start, std::size_t n);

/// Every noise sequence of length n that some walk from `start` emits,
/// sorted lexicographically. Refuses when the predicted count exceeds `cap`.
std::vector<Word> enumerate_noise_sequences(const NoiseFsm& fsm, StartSet start, std::size_t n,
                                            std::uint64_t cap = kDefaultEnumerationCap);

/// True when some walk starting in `start` emits `labels`.
bool is_noise_sequence(const NoiseFsm& fsm, StartSet start, std::span<const Symbol> labels);

/// Calls `visit(start, walk)` for every start state in `start` and every
/// label sequence of length n walkable from it. Refuses above `cap` walks.
void for_each_walk(const NoiseFsm& fsm, StartSet start, std::size_t n,
                   const std::function<void(StateIndex, const Word&)>& visit,
                   std::uint64_t cap = kDefaultEnumerationCap);

// Word helpers over Z_q.
Word add_words(std::span<const Symbol> x, std::span<const Symbol> z, int q);
Word sub_words(std::span<const Symbol> x, std::span<const Symbol> z, int q);
std::string word_to_string(std::span<const Symbol> w);

struct ChannelState {
  const NoiseFsm* fsm = nullptr;
  StateIndex current = 0;

  ChannelState(const NoiseFsm& owner, StateIndex start);
};

enum class PolicyKind { random, replay, adversarial_greedy, exhaustive };

/// Chooses the outgoing edge taken at each channel use. Greedy policies take
/// a scorer and pick the highest-scoring edge (lowest label on ties).
/// Exhaustive policies step like `random` with the same seed; simulation
/// drivers expand them into every walk over the branching epoch.
class NoisePolicy {
 public:
  using Scorer = std::function<double(const ChannelState&, const Edge&)>;

  static NoisePolicy random(std::uint64_t seed);
  static NoisePolicy replay(std::vector<Symbol> labels);
  static NoisePolicy adversarial_greedy(std::string objective, Scorer scorer = {});
  static NoisePolicy exhaustive(std::uint64_t seed);

  PolicyKind kind() const noexcept { return kind_; }
  const std::string& objective() const noexcept { return objective_; }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_scorer(Scorer scorer) { scorer_ = std::move(scorer); }

  /// Picks an edge out of `cs.current`. Throws InputError when a replay
  /// sequence is exhausted or names a label the current state lacks.
  const Edge& choose(const ChannelState& cs);

 private:
  explicit NoisePolicy(PolicyKind kind) : kind_(kind) {}

  PolicyKind kind_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_;
  std::vector<Symbol> replay_;
  std::size_t replay_pos_ = 0;
  std::string objective_;
  Scorer scorer_;
};

struct StepResult {
  Symbol output = 0;
  Symbol noise = 0;
  StateIndex from = 0;
  StateIndex to = 0;
};

/// One channel use: output = input + label (mod q) along the chosen edge.
StepResult channel_step(ChannelState& cs, Symbol input, NoisePolicy& policy);

}  // namespace zec
