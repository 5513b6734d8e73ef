#pragma once

// Zero-error block codes and staged zero-error feedback codes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zec/coupled.hpp"
#include "zec/fsm.hpp"

namespace zec {

inline constexpr std::size_t kDefaultConfusabilityCap = 4096;
inline constexpr std::size_t kDefaultExactSearchCap = 256;
inline constexpr std::size_t kDefaultMaxBlocklength = 16;

/// Vertices are all q^n input words in lexicographic order (vertex index =
/// base-q value of the word). x ~ x' iff x - x' is walkable on the coupled graph.
class ConfusabilityGraph {
 public:
  ConfusabilityGraph(const NoiseFsm& fsm, std::size_t n, std::size_t vertex_cap = kDefaultConfusabilityCap);

  int q() const noexcept { return q_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  const Word& vertex(std::size_t v) const { return vertices_.at(v); }
  std::size_t index_of(std::span<const Symbol> word) const;
  bool adjacent(std::size_t a, std::size_t b) const;
  std::size_t degree(std::size_t v) const;
  std::size_t edge_count() const;
  /// Unordered confusable pairs (a < b).
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

 private:
  int q_;
  std::size_t n_;
  std::vector<Word> vertices_;
  std::vector<bool> walkable_;  // indexed by the base-q value of a difference
};

ConfusabilityGraph confusability_graph(const NoiseFsm& fsm, std::size_t n,
                                       std::size_t vertex_cap = kDefaultConfusabilityCap);

enum class SearchMode { exact, greedy };

struct ZeroErrorCode {
  std::size_t n = 0;
  std::vector<Word> codewords;  // lexicographically sorted
  std::string method;           // exact | greedy | repetition | concatenation

  std::size_t size() const noexcept { return codewords.size(); }
  double rate() const;

  friend bool operator==(const ZeroErrorCode&, const ZeroErrorCode&) = default;
};

/// exact: maximum independent set by branch and bound (guarded by
/// `exact_cap` vertices). greedy: maximal independent set taking vertices by
/// increasing degree, lowest index first.
ZeroErrorCode search_zero_error_code(const NoiseFsm& fsm, std::size_t n, SearchMode mode,
                                     std::size_t exact_cap = kDefaultExactSearchCap,
                                     std::size_t vertex_cap = kDefaultConfusabilityCap);

/// Block concatenation of two codes; all pairs, lexicographic order.
ZeroErrorCode concatenate_codes(const ZeroErrorCode& a, const ZeroErrorCode& b);

struct Verdict {
  bool ok = true;
  std::string counterexample;
  std::uint64_t cases = 0;

  explicit operator bool() const noexcept { return ok; }
};

/// Brute force: output sets x + Z(ALL, n) of distinct codewords are disjoint.
Verdict verify_zero_error_code(const NoiseFsm& fsm, const ZeroErrorCode& code,
                               std::uint64_t cap = kDefaultEnumerationCap);

enum class StageKind { raw, base };

struct Stage {
  StageKind kind = StageKind::raw;
  std::size_t length = 0;
  std::uint64_t index_set_size = 0;  // number of values the stage carries

  friend bool operator==(const Stage&, const Stage&) = default;
};

/// Stage 0 sends the message in ceil(log_q M) raw symbols. Every later raw
/// stage sends the lexicographic index of the previous stage's realized noise
/// within Z(ALL, previous length); a final block-code stage carries the last
/// such index with a zero-error code.
struct FeedbackCodeSpec {
  NoiseFsm channel;
  std::uint64_t message_count = 0;
  std::vector<Stage> stages;
  ZeroErrorCode base_code;                      // empty when no base stage
  std::vector<std::vector<Word>> noise_enumerations;  // one per raw stage
  std::size_t total_length = 0;

  double rate() const;
  bool has_base() const noexcept { return !stages.empty() && stages.back().kind == StageKind::base; }
};

struct FeedbackBuildOptions {
  std::size_t max_blocklength = kDefaultMaxBlocklength;
  std::size_t exact_cap = kDefaultExactSearchCap;
  std::size_t vertex_cap = kDefaultConfusabilityCap;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::size_t zero_test_max_states = kDefaultZeroTestMaxStates;
};

/// Smallest blocklength whose best found code has at least `size` codewords,
/// together with the first `size` codewords of that code.
std::optional<ZeroErrorCode> base_code_for(const NoiseFsm& fsm, std::uint64_t size,
                                           const FeedbackBuildOptions& options = {});

FeedbackCodeSpec build_feedback_code(const NoiseFsm& fsm, std::uint64_t message_count,
                                     const FeedbackBuildOptions& options = {});

nlohmann::json feedback_spec_to_json(const FeedbackCodeSpec& spec);
/// Rebuilds the noise enumerations from the embedded channel and rejects
/// documents whose stored enumerations or stage sizes disagree.
FeedbackCodeSpec feedback_spec_from_json(const nlohmann::json& doc);

/// Encoder with unit-delay output feedback. Inputs of a stage are fixed when
/// the stage starts, from the outputs of the stages before it.
class FeedbackEncoder {
 public:
  FeedbackEncoder(const FeedbackCodeSpec& spec, std::uint64_t message);

  bool done() const noexcept { return pos_ >= spec_->total_length; }
  std::size_t position() const noexcept { return pos_; }
  Symbol next_input() const;
  void observe_output(Symbol y);

 private:
  void start_stage();

  const FeedbackCodeSpec* spec_;
  std::uint64_t message_;
  std::size_t pos_ = 0;
  std::size_t stage_ = 0;
  std::size_t stage_start_ = 0;
  Word inputs_;   // all inputs sent or scheduled
  Word outputs_;  // outputs observed so far
};

struct DecodeResult {
  bool ok = false;
  std::uint64_t message = 0;
  std::string reason;
};

/// Backward decoding from the block-code stage to stage 0.
DecodeResult decode_feedback(const FeedbackCodeSpec& spec, std::span<const Symbol> outputs);

/// Runs encoder and decoder for every message, start state and noise walk.
Verdict verify_feedback_code(const NoiseFsm& fsm, const FeedbackCodeSpec& spec,
                             std::uint64_t cap = kDefaultEnumerationCap);

/// verify_feedback_code started after every priming walk of length <= 3.
Verdict verify_uniformity(const NoiseFsm& fsm, const FeedbackCodeSpec& spec,
                          std::uint64_t cap = kDefaultEnumerationCap, std::size_t max_priming = 3);

// Digit helpers (most significant first).
Word to_digits(std::uint64_t value, int q, std::size_t length);
std::uint64_t from_digits(std::span<const Symbol> digits, int q);
/// Smallest k with q^k >= count.
std::size_t digits_needed(std::uint64_t count, int q);

}  // namespace zec
