#include "zec/codes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

#include "zec/error.hpp"
#include "zec/spectral.hpp"

namespace zec {

namespace {

std::uint64_t power_capped(int q, std::size_t n, std::uint64_t cap) {
  std::uint64_t p = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (p > cap / static_cast<std::uint64_t>(q)) return cap + 1;
    p *= static_cast<std::uint64_t>(q);
  }
  return p;
}

std::uint64_t word_code(std::span<const Symbol> w, int q) {
  std::uint64_t c = 0;
  for (Symbol s : w) c = c * static_cast<std::uint64_t>(q) + static_cast<std::uint64_t>(s);
  return c;
}

void check_word(std::span<const Symbol> w, int q, std::size_t n, const char* what) {
  if (w.size() != n) throw InputError(std::string(what) + ": word of length " + std::to_string(w.size()) +
                                      ", expected " + std::to_string(n));
  for (Symbol s : w)
    if (s < 0 || s >= q) throw InputError(std::string(what) + ": symbol outside the alphabet");
}

}  // namespace

Word to_digits(std::uint64_t value, int q, std::size_t length) {
  Word w(length, 0);
  for (std::size_t k = length; k-- > 0;) {
    w[k] = static_cast<Symbol>(value % static_cast<std::uint64_t>(q));
    value /= static_cast<std::uint64_t>(q);
  }
  if (value != 0) throw ContractViolation("to_digits: value does not fit in the requested length");
  return w;
}

std::uint64_t from_digits(std::span<const Symbol> digits, int q) { return word_code(digits, q); }

std::size_t digits_needed(std::uint64_t count, int q) {
  std::size_t k = 0;
  std::uint64_t p = 1;
  while (p < count) {
    p = p > UINT64_MAX / static_cast<std::uint64_t>(q) ? UINT64_MAX : p * static_cast<std::uint64_t>(q);
    ++k;
  }
  return k;
}

// ---------------------------------------------------------------------------
// Confusability graph

ConfusabilityGraph::ConfusabilityGraph(const NoiseFsm& fsm, std::size_t n, std::size_t vertex_cap)
    : q_(fsm.q()), n_(n) {
  if (n == 0) throw InputError("confusability graph: blocklength must be at least 1");
  std::uint64_t space = power_capped(q_, n, vertex_cap);
  if (space > vertex_cap)
    throw GuardExceeded("confusability graph: q^n above the cap of " + std::to_string(vertex_cap) + " vertices");
  vertices_.reserve(space);
  for (std::uint64_t c = 0; c < space; ++c) vertices_.push_back(to_digits(c, q_, n));

  // Walkability of every difference word, by depth-first extension of
  // prefixes; an empty reachable set kills the whole subtree.
  CoupledGraph cg(fsm);
  walkable_.assign(space, false);
  std::function<void(const VertexSet&, std::size_t, std::uint64_t)> rec = [&](const VertexSet& cur, std::size_t depth,
                                                                              std::uint64_t code) {
    if (depth == n) {
      walkable_[code] = true;
      return;
    }
    for (Symbol d = 0; d < q_; ++d) {
      VertexSet next = cg.step(cur, d);
      if (!next.empty()) rec(next, depth + 1, code * q_ + d);
    }
  };
  rec(VertexSet::full(cg.vertex_count()), 0, 0);
}

std::size_t ConfusabilityGraph::index_of(std::span<const Symbol> word) const {
  check_word(word, q_, n_, "confusability graph");
  return static_cast<std::size_t>(word_code(word, q_));
}

bool ConfusabilityGraph::adjacent(std::size_t a, std::size_t b) const {
  if (a == b) return false;
  return walkable_[word_code(sub_words(vertices_.at(a), vertices_.at(b), q_), q_)];
}

std::size_t ConfusabilityGraph::degree(std::size_t v) const {
  std::size_t d = 0;
  for (std::size_t u = 0; u < vertex_count(); ++u) d += adjacent(v, u);
  return d;
}

std::size_t ConfusabilityGraph::edge_count() const { return edges().size(); }

std::vector<std::pair<std::size_t, std::size_t>> ConfusabilityGraph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < vertex_count(); ++a)
    for (std::size_t b = a + 1; b < vertex_count(); ++b)
      if (adjacent(a, b)) out.emplace_back(a, b);
  return out;
}

ConfusabilityGraph confusability_graph(const NoiseFsm& fsm, std::size_t n, std::size_t vertex_cap) {
  return ConfusabilityGraph(fsm, n, vertex_cap);
}

// ---------------------------------------------------------------------------
// Code search

double ZeroErrorCode::rate() const {
  if (n == 0 || codewords.empty()) return 0;
  return std::log2(static_cast<double>(codewords.size())) / static_cast<double>(n);
}

namespace {

using Bits = std::vector<std::uint64_t>;

bool bit(const Bits& b, std::size_t k) { return b[k / 64] >> (k % 64) & 1; }
void set_bit(Bits& b, std::size_t k) { b[k / 64] |= std::uint64_t{1} << (k % 64); }
void clear_bit(Bits& b, std::size_t k) { b[k / 64] &= ~(std::uint64_t{1} << (k % 64)); }
bool none(const Bits& b) {
  return std::all_of(b.begin(), b.end(), [](std::uint64_t w) { return w == 0; });
}

// Maximum clique with greedy-coloring bounds (Tomita-style). Vertices are
// relabeled so that position order is the branching order.
class MaxClique {
 public:
  explicit MaxClique(std::vector<Bits> adj) : adj_(std::move(adj)), n_(adj_.size()), words_((n_ + 63) / 64) {}

  std::vector<std::size_t> run() {
    Bits all(words_, 0);
    for (std::size_t v = 0; v < n_; ++v) set_bit(all, v);
    std::vector<std::size_t> r;
    expand(r, all);
    return best_;
  }

 private:
  void expand(std::vector<std::size_t>& r, Bits p) {
    // Greedy coloring of p in position order.
    std::vector<std::size_t> order;
    std::vector<std::size_t> color;
    Bits uncolored = p;
    std::size_t k = 0;
    while (!none(uncolored)) {
      ++k;
      Bits avail = uncolored;
      for (std::size_t v = 0; v < n_; ++v) {
        if (!bit(avail, v)) continue;
        clear_bit(uncolored, v);
        order.push_back(v);
        color.push_back(k);
        for (std::size_t w = 0; w < words_; ++w) avail[w] &= ~adj_[v][w];
        clear_bit(avail, v);
      }
    }
    for (std::size_t i = order.size(); i-- > 0;) {
      if (r.size() + color[i] <= best_.size()) return;
      std::size_t v = order[i];
      r.push_back(v);
      Bits np(words_);
      for (std::size_t w = 0; w < words_; ++w) np[w] = p[w] & adj_[v][w];
      if (none(np)) {
        if (r.size() > best_.size()) best_ = r;
      } else {
        expand(r, np);
      }
      r.pop_back();
      clear_bit(p, v);
    }
  }

  std::vector<Bits> adj_;
  std::size_t n_;
  std::size_t words_;
  std::vector<std::size_t> best_;
};

ZeroErrorCode code_from_indices(const ConfusabilityGraph& g, std::vector<std::size_t> idx, std::string method) {
  std::sort(idx.begin(), idx.end());
  ZeroErrorCode code;
  code.n = g.n();
  code.method = std::move(method);
  for (std::size_t v : idx) code.codewords.push_back(g.vertex(v));
  return code;
}

}  // namespace

ZeroErrorCode search_zero_error_code(const NoiseFsm& fsm, std::size_t n, SearchMode mode, std::size_t exact_cap,
                                     std::size_t vertex_cap) {
  if (mode == SearchMode::exact && power_capped(fsm.q(), n, exact_cap) > exact_cap)
    throw GuardExceeded("exact code search: q^n above the cap of " + std::to_string(exact_cap) + " vertices");
  ConfusabilityGraph g(fsm, n, vertex_cap);
  const std::size_t nv = g.vertex_count();

  std::vector<std::size_t> deg(nv);
  for (std::size_t v = 0; v < nv; ++v) deg[v] = g.degree(v);

  if (mode == SearchMode::greedy) {
    std::vector<std::size_t> order(nv);
    for (std::size_t v = 0; v < nv; ++v) order[v] = v;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deg[a] < deg[b]; });
    std::vector<std::size_t> chosen;
    for (std::size_t v : order) {
      bool free = std::none_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return g.adjacent(v, c); });
      if (free) chosen.push_back(v);
    }
    return code_from_indices(g, std::move(chosen), "greedy");
  }

  // Independent sets of g are cliques of its complement. Branch on vertices
  // of low confusability first (they sit at the end of the coloring order).
  std::vector<std::size_t> order(nv);
  for (std::size_t v = 0; v < nv; ++v) order[v] = v;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deg[a] > deg[b]; });
  const std::size_t words = (nv + 63) / 64;
  std::vector<Bits> adj(nv, Bits(words, 0));
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < nv; ++j)
      if (i != j && !g.adjacent(order[i], order[j])) set_bit(adj[i], j);
  auto clique = MaxClique(std::move(adj)).run();
  std::vector<std::size_t> idx;
  for (std::size_t pos : clique) idx.push_back(order[pos]);
  return code_from_indices(g, std::move(idx), "exact");
}

ZeroErrorCode concatenate_codes(const ZeroErrorCode& a, const ZeroErrorCode& b) {
  if (a.codewords.size() > 0 && b.codewords.size() > (std::size_t{1} << 22) / a.codewords.size())
    throw GuardExceeded("concatenate_codes: product code too large");
  ZeroErrorCode c;
  c.n = a.n + b.n;
  c.method = "concatenation";
  for (const auto& x : a.codewords)
    for (const auto& y : b.codewords) {
      Word w = x;
      w.insert(w.end(), y.begin(), y.end());
      c.codewords.push_back(std::move(w));
    }
  std::sort(c.codewords.begin(), c.codewords.end());
  return c;
}

Verdict verify_zero_error_code(const NoiseFsm& fsm, const ZeroErrorCode& code, std::uint64_t cap) {
  Verdict v;
  if (code.codewords.empty()) throw InputError("verify_zero_error_code: empty code");
  for (const auto& w : code.codewords) check_word(w, fsm.q(), code.n, "verify_zero_error_code");
  if (code.n == 0) {
    v.ok = code.codewords.size() == 1;
    if (!v.ok) v.counterexample = "distinct codewords of length 0";
    return v;
  }
  auto zs = enumerate_noise_sequences(fsm, kAllStates, code.n, cap);
  if (zs.size() > 0 && code.codewords.size() > cap / zs.size())
    throw GuardExceeded("verify_zero_error_code: output enumeration above the cap");

  std::unordered_map<std::uint64_t, std::size_t> owner;
  for (std::size_t c = 0; c < code.codewords.size(); ++c) {
    for (const auto& z : zs) {
      Word y = add_words(code.codewords[c], z, fsm.q());
      ++v.cases;
      auto [it, fresh] = owner.emplace(word_code(y, fsm.q()), c);
      if (!fresh && it->second != c) {
        v.ok = false;
        v.counterexample = "codewords " + word_to_string(code.codewords[it->second]) + " and " +
                           word_to_string(code.codewords[c]) + " can both produce output " + word_to_string(y);
        return v;
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Feedback codes

double FeedbackCodeSpec::rate() const {
  if (total_length == 0) return 0;
  return std::log2(static_cast<double>(message_count)) / static_cast<double>(total_length);
}

namespace {

// Best code found at each blocklength: exact or greedy search where the
// guards allow, otherwise the best concatenation of shorter codes.
class CodeBook {
 public:
  CodeBook(const NoiseFsm& fsm, const FeedbackBuildOptions& opt) : fsm_(fsm), opt_(opt) {}

  const ZeroErrorCode& best(std::size_t n) {
    while (best_.size() <= n) extend();
    return best_[n];
  }

  std::optional<std::size_t> length_for(std::uint64_t size) {
    for (std::size_t n = 1; n <= opt_.max_blocklength; ++n)
      if (best(n).size() >= size) return n;
    return std::nullopt;
  }

 private:
  void extend() {
    const std::size_t n = best_.size();
    if (n == 0) {
      best_.push_back({});
      return;
    }
    ZeroErrorCode code;
    std::uint64_t space = power_capped(fsm_.q(), n, opt_.vertex_cap);
    if (space <= opt_.exact_cap) {
      code = search_zero_error_code(fsm_, n, SearchMode::exact, opt_.exact_cap, opt_.vertex_cap);
    } else if (space <= opt_.vertex_cap) {
      code = search_zero_error_code(fsm_, n, SearchMode::greedy, opt_.exact_cap, opt_.vertex_cap);
    }
    for (std::size_t a = 1; a < n; ++a) {
      const auto& left = best_[a];
      const auto& right = best_[n - a];
      if (left.size() * right.size() > code.size()) code = concatenate_codes(left, right);
    }
    if (code.codewords.empty()) throw ContractViolation("code book: no code at blocklength " + std::to_string(n));
    best_.push_back(std::move(code));
  }

  const NoiseFsm& fsm_;
  FeedbackBuildOptions opt_;
  std::vector<ZeroErrorCode> best_;
};

ZeroErrorCode truncate_code(ZeroErrorCode code, std::uint64_t size) {
  code.codewords.resize(static_cast<std::size_t>(size));
  return code;
}

std::uint64_t to_u64(const BigInt& v) {
  if (v > BigInt(UINT64_MAX)) return UINT64_MAX;
  return static_cast<std::uint64_t>(v);
}

}  // namespace

std::optional<ZeroErrorCode> base_code_for(const NoiseFsm& fsm, std::uint64_t size, const FeedbackBuildOptions& options) {
  CodeBook book(fsm, options);
  auto len = book.length_for(size);
  if (!len) return std::nullopt;
  return truncate_code(book.best(*len), size);
}

FeedbackCodeSpec build_feedback_code(const NoiseFsm& fsm, std::uint64_t message_count,
                                     const FeedbackBuildOptions& options) {
  require_valid(fsm);
  if (message_count < 2) throw InputError("build_feedback_code: need at least 2 messages");
  if (message_count > options.enumeration_cap)
    throw GuardExceeded("build_feedback_code: message count above the enumeration cap");
  auto zt = zero_capacity_test(coupled_graph(fsm), options.zero_test_max_states);
  if (zt.is_zero)
    throw Refusal("zero-error feedback capacity is zero (zero test: every difference sequence is walkable); "
                  "no zero-error feedback code exists",
                  0.0);

  CodeBook book(fsm, options);

  // Cheapest way to carry an index from a set of `count` values: a block code
  // right away, or another raw stage when that shrinks the index set.
  struct Plan {
    std::size_t cost = 0;
    bool base = false;
    std::size_t length = 0;
    std::uint64_t next = 0;
  };
  std::map<std::uint64_t, Plan> memo;
  std::function<std::optional<Plan>(std::uint64_t)> plan = [&](std::uint64_t count) -> std::optional<Plan> {
    if (count <= 1) return Plan{};
    if (auto it = memo.find(count); it != memo.end()) return it->second;
    std::optional<Plan> choice;
    if (auto len = book.length_for(count)) choice = Plan{*len, true, *len, 0};
    std::size_t k = digits_needed(count, fsm.q());
    std::uint64_t next = to_u64(count_walks(fsm, kAllStates, k));
    if (next < count) {
      if (auto sub = plan(next)) {
        std::size_t cost = k + sub->cost;
        if (!choice || cost < choice->cost) choice = Plan{cost, false, k, next};
      }
    }
    if (choice) memo[count] = *choice;
    return choice;
  };

  FeedbackCodeSpec spec{fsm, message_count, {}, {}, {}, 0};
  std::size_t k0 = digits_needed(message_count, fsm.q());
  spec.stages.push_back({StageKind::raw, k0, message_count});
  spec.noise_enumerations.push_back(enumerate_noise_sequences(fsm, kAllStates, k0, options.enumeration_cap));
  std::uint64_t count = spec.noise_enumerations.back().size();

  while (count > 1) {
    auto p = plan(count);
    if (!p)
      throw GuardExceeded("build_feedback_code: no base code with " + std::to_string(count) +
                          " codewords up to blocklength " + std::to_string(options.max_blocklength));
    if (p->base) {
      spec.stages.push_back({StageKind::base, p->length, count});
      spec.base_code = truncate_code(book.best(p->length), count);
      break;
    }
    spec.stages.push_back({StageKind::raw, p->length, count});
    spec.noise_enumerations.push_back(enumerate_noise_sequences(fsm, kAllStates, p->length, options.enumeration_cap));
    count = spec.noise_enumerations.back().size();
  }
  for (const auto& s : spec.stages) spec.total_length += s.length;
  return spec;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

const char* kind_name(StageKind k) { return k == StageKind::raw ? "raw" : "base"; }

}  // namespace

nlohmann::json feedback_spec_to_json(const FeedbackCodeSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : spec.stages)
    stages.push_back({{"kind", kind_name(s.kind)}, {"length", s.length}, {"index_set_size", s.index_set_size}});
  nlohmann::json base = nullptr;
  if (spec.has_base())
    base = {{"n", spec.base_code.n}, {"codewords", spec.base_code.codewords}, {"method", spec.base_code.method}};
  return {{"channel", channel_to_json(spec.channel)},
          {"message_count", spec.message_count},
          {"stages", stages},
          {"base_code", base},
          {"noise_enumerations", spec.noise_enumerations},
          {"total_length", spec.total_length},
          {"rate", spec.rate()}};
}

FeedbackCodeSpec feedback_spec_from_json(const nlohmann::json& doc) {
  try {
    FeedbackCodeSpec spec{channel_from_json(doc.at("channel")), doc.at("message_count").get<std::uint64_t>(), {}, {}, {}, 0};
    const int q = spec.channel.q();
    if (spec.message_count < 2) throw InputError("feedback spec: message_count must be at least 2");
    for (const auto& s : doc.at("stages")) {
      std::string kind = s.at("kind").get<std::string>();
      if (kind != "raw" && kind != "base") throw InputError("feedback spec: unknown stage kind '" + kind + "'");
      spec.stages.push_back({kind == "raw" ? StageKind::raw : StageKind::base, s.at("length").get<std::size_t>(),
                             s.at("index_set_size").get<std::uint64_t>()});
    }
    if (spec.stages.empty() || spec.stages.front().kind != StageKind::raw)
      throw InputError("feedback spec: stage 0 must be raw");

    std::uint64_t expect = spec.message_count;
    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
      const Stage& st = spec.stages[i];
      if (st.index_set_size != expect)
        throw InputError("feedback spec: stage " + std::to_string(i) + " carries " + std::to_string(st.index_set_size) +
                         " values, expected " + std::to_string(expect));
      if (st.kind == StageKind::base) {
        if (i + 1 != spec.stages.size()) throw InputError("feedback spec: block-code stage must be last");
        break;
      }
      if (st.length != digits_needed(expect, q))
        throw InputError("feedback spec: raw stage " + std::to_string(i) + " has the wrong length");
      spec.noise_enumerations.push_back(enumerate_noise_sequences(spec.channel, kAllStates, st.length));
      expect = spec.noise_enumerations.back().size();
    }
    if (!spec.has_base() && expect > 1) throw InputError("feedback spec: final noise index is not determined");
    if (doc.contains("noise_enumerations") &&
        doc.at("noise_enumerations").get<std::vector<std::vector<Word>>>() != spec.noise_enumerations)
      throw InputError("feedback spec: stored noise enumerations disagree with the channel");

    if (spec.has_base()) {
      const auto& b = doc.at("base_code");
      spec.base_code.n = b.at("n").get<std::size_t>();
      spec.base_code.codewords = b.at("codewords").get<std::vector<Word>>();
      spec.base_code.method = b.value("method", "");
      if (spec.base_code.n != spec.stages.back().length)
        throw InputError("feedback spec: base code length differs from its stage length");
      if (spec.base_code.codewords.size() < spec.stages.back().index_set_size)
        throw InputError("feedback spec: base code has too few codewords");
      for (const auto& w : spec.base_code.codewords) check_word(w, q, spec.base_code.n, "feedback spec base code");
    }
    for (const auto& s : spec.stages) spec.total_length += s.length;
    if (doc.contains("total_length") && doc.at("total_length").get<std::size_t>() != spec.total_length)
      throw InputError("feedback spec: total_length disagrees with the stages");
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("feedback spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Encoder / decoder

FeedbackEncoder::FeedbackEncoder(const FeedbackCodeSpec& spec, std::uint64_t message) : spec_(&spec), message_(message) {
  if (message >= spec.message_count) throw InputError("feedback encoder: message out of range");
  if (spec.total_length > 0) start_stage();
}

Symbol FeedbackEncoder::next_input() const {
  if (done()) throw ContractViolation("feedback encoder: code already complete");
  return inputs_[pos_];
}

void FeedbackEncoder::start_stage() {
  const int q = spec_->channel.q();
  const Stage& st = spec_->stages[stage_];
  if (stage_ == 0) {
    auto digits = to_digits(message_, q, st.length);
    inputs_.insert(inputs_.end(), digits.begin(), digits.end());
    return;
  }
  // Realized noise of the previous stage, known from the fed-back outputs.
  const Stage& prev = spec_->stages[stage_ - 1];
  std::size_t from = stage_start_ - prev.length;
  Word z = sub_words(std::span(outputs_).subspan(from, prev.length), std::span(inputs_).subspan(from, prev.length), q);
  const auto& list = spec_->noise_enumerations.at(stage_ - 1);
  auto it = std::lower_bound(list.begin(), list.end(), z);
  if (it == list.end() || *it != z)
    throw ContractViolation("feedback encoder: observed noise " + word_to_string(z) + " is not a noise sequence");
  auto idx = static_cast<std::uint64_t>(it - list.begin());
  if (st.kind == StageKind::raw) {
    auto digits = to_digits(idx, q, st.length);
    inputs_.insert(inputs_.end(), digits.begin(), digits.end());
  } else {
    const Word& c = spec_->base_code.codewords.at(idx);
    inputs_.insert(inputs_.end(), c.begin(), c.end());
  }
}

void FeedbackEncoder::observe_output(Symbol y) {
  if (done()) throw ContractViolation("feedback encoder: output after completion");
  outputs_.push_back(y);
  ++pos_;
  if (!done() && pos_ == stage_start_ + spec_->stages[stage_].length) {
    ++stage_;
    stage_start_ = pos_;
    start_stage();
  }
}

DecodeResult decode_feedback(const FeedbackCodeSpec& spec, std::span<const Symbol> outputs) {
  const int q = spec.channel.q();
  DecodeResult res;
  if (outputs.size() != spec.total_length) {
    res.reason = "expected " + std::to_string(spec.total_length) + " outputs, got " + std::to_string(outputs.size());
    return res;
  }
  std::vector<std::size_t> start(spec.stages.size());
  for (std::size_t i = 1; i < spec.stages.size(); ++i) start[i] = start[i - 1] + spec.stages[i - 1].length;

  std::size_t raw_count = spec.stages.size();
  std::uint64_t idx = 0;
  if (spec.has_base()) {
    --raw_count;
    const Stage& st = spec.stages.back();
    auto y = outputs.subspan(start.back(), st.length);
    std::optional<std::size_t> found;
    for (std::size_t c = 0; c < st.index_set_size; ++c) {
      Word z = sub_words(y, spec.base_code.codewords[c], q);
      if (is_noise_sequence(spec.channel, kAllStates, z)) {
        if (found) {
          res.reason = "block-code stage ambiguous between codewords " + std::to_string(*found) + " and " +
                       std::to_string(c);
          return res;
        }
        found = c;
      }
    }
    if (!found) {
      res.reason = "block-code stage matches no codeword";
      return res;
    }
    idx = *found;
  }

  for (std::size_t i = raw_count; i-- > 0;) {
    const auto& list = spec.noise_enumerations.at(i);
    if (idx >= list.size()) {
      res.reason = "noise index " + std::to_string(idx) + " out of range at stage " + std::to_string(i);
      return res;
    }
    Word x = sub_words(outputs.subspan(start[i], spec.stages[i].length), list[idx], q);
    idx = from_digits(x, q);
  }
  if (idx >= spec.message_count) {
    res.reason = "decoded message " + std::to_string(idx) + " out of range";
    return res;
  }
  res.ok = true;
  res.message = idx;
  return res;
}

// ---------------------------------------------------------------------------
// Exhaustive verification

namespace {

Verdict verify_from(const NoiseFsm& fsm, const FeedbackCodeSpec& spec, StateIndex origin, const std::string& prefix) {
  Verdict v;
  const std::size_t n = spec.total_length;
  Word noise(n), outputs(n);
  for (std::uint64_t m = 0; m < spec.message_count && v.ok; ++m) {
    std::function<void(StateIndex, const FeedbackEncoder&, std::size_t)> rec = [&](StateIndex s,
                                                                                  const FeedbackEncoder& enc,
                                                                                  std::size_t depth) {
      if (!v.ok) return;
      if (depth == n) {
        ++v.cases;
        auto d = decode_feedback(spec, outputs);
        if (!d.ok || d.message != m) {
          v.ok = false;
          std::ostringstream os;
          os << prefix << "start " << fsm.state_name(origin) << ", message " << m << ", noise " << word_to_string(noise)
             << ", outputs " << word_to_string(outputs) << ": "
             << (d.ok ? "decoded " + std::to_string(d.message) : d.reason);
          v.counterexample = os.str();
        }
        return;
      }
      Symbol x = enc.next_input();
      for (const Edge& e : fsm.out_edges(s)) {
        noise[depth] = e.label;
        outputs[depth] = (x + e.label) % fsm.q();
        FeedbackEncoder next = enc;
        next.observe_output(outputs[depth]);
        rec(e.to, next, depth + 1);
      }
    };
    rec(origin, FeedbackEncoder(spec, m), 0);
  }
  return v;
}

void check_compatible(const NoiseFsm& fsm, const FeedbackCodeSpec& spec, std::uint64_t cap) {
  if (fsm.q() != spec.channel.q()) throw InputError("feedback verification: channel alphabet differs from the spec");
  std::uint64_t walks = predicted_sequence_count(fsm, kAllStates, spec.total_length);
  if (walks > cap / spec.message_count)
    throw GuardExceeded("feedback verification: messages x walks above the cap of " + std::to_string(cap));
}

}  // namespace

Verdict verify_feedback_code(const NoiseFsm& fsm, const FeedbackCodeSpec& spec, std::uint64_t cap) {
  check_compatible(fsm, spec, cap);
  Verdict total;
  for (StateIndex s = 0; s < fsm.state_count(); ++s) {
    auto v = verify_from(fsm, spec, s, "");
    total.cases += v.cases;
    if (!v.ok) {
      total.ok = false;
      total.counterexample = v.counterexample;
      return total;
    }
  }
  return total;
}

Verdict verify_uniformity(const NoiseFsm& fsm, const FeedbackCodeSpec& spec, std::uint64_t cap,
                          std::size_t max_priming) {
  check_compatible(fsm, spec, cap);
  // The code's behaviour after a priming walk depends only on the state the
  // walk ends in; each end state is checked once and reused.
  std::map<StateIndex, Verdict> by_state;
  Verdict total;
  for (StateIndex s = 0; s < fsm.state_count(); ++s) {
    for (std::size_t len = 0; len <= max_priming; ++len) {
      std::function<void(StateIndex, Word&)> rec = [&](StateIndex cur, Word& walk) {
        if (!total.ok) return;
        if (walk.size() == len) {
          auto it = by_state.find(cur);
          if (it == by_state.end()) {
            std::string prefix = "priming " + fsm.state_name(s) + ":" + word_to_string(walk) + ", ";
            it = by_state.emplace(cur, verify_from(fsm, spec, cur, prefix)).first;
          }
          total.cases += it->second.cases;
          if (!it->second.ok) {
            total.ok = false;
            total.counterexample = it->second.counterexample;
          }
          return;
        }
        for (const Edge& e : fsm.out_edges(cur)) {
          walk.push_back(e.label);
          rec(e.to, walk);
          walk.pop_back();
        }
      };
      Word walk;
      rec(s, walk);
      if (!total.ok) return total;
    }
  }
  return total;
}

}  // namespace zec
