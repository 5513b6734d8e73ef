#include "zec/fsm.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "zec/error.hpp"

namespace zec {

using nlohmann::json;

NoiseFsm::NoiseFsm(std::string name, int q, std::vector<std::string> states, std::vector<Edge> edges)
    : name_(std::move(name)), q_(q), states_(std::move(states)), edges_(std::move(edges)) {
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    if (e.from >= states_.size() || e.to >= states_.size()) {
      throw InputError("edge " + std::to_string(k) + " references a state index outside 0.." +
                       std::to_string(states_.size()));
    }
  }
  sorted_ = edges_;
  std::stable_sort(sorted_.begin(), sorted_.end(), [](const Edge& a, const Edge& b) {
    return a.from != b.from ? a.from < b.from : a.label < b.label;
  });
  offsets_.assign(states_.size() + 1, 0);
  for (const Edge& e : sorted_) ++offsets_[e.from + 1];
  for (std::size_t s = 0; s < states_.size(); ++s) offsets_[s + 1] += offsets_[s];
}

std::optional<StateIndex> NoiseFsm::index_of(std::string_view state) const {
  for (std::size_t s = 0; s < states_.size(); ++s)
    if (states_[s] == state) return s;
  return std::nullopt;
}

std::span<const Edge> NoiseFsm::out_edges(StateIndex s) const {
  return std::span<const Edge>(sorted_).subspan(offsets_.at(s), offsets_.at(s + 1) - offsets_.at(s));
}

const Edge* NoiseFsm::edge_for(StateIndex s, Symbol label) const {
  for (const Edge& e : out_edges(s))
    if (e.label == label) return &e;
  return nullptr;
}

// ---------------------------------------------------------------------------
// validation

bool ValidationReport::ok() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.pass; });
}

std::string ValidationReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.pass) return c.name + ": " + c.witness;
  return {};
}

namespace {

std::vector<bool> reachable_from(const NoiseFsm& fsm, StateIndex root) {
  std::vector<bool> seen(fsm.state_count(), false);
  std::vector<StateIndex> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    StateIndex s = stack.back();
    stack.pop_back();
    for (const Edge& e : fsm.out_edges(s)) {
      if (!seen[e.to]) {
        seen[e.to] = true;
        stack.push_back(e.to);
      }
    }
  }
  return seen;
}

}  // namespace

ValidationReport validate(const NoiseFsm& fsm) {
  ValidationReport report;
  const auto& names = fsm.states();

  ValidationCheck alphabet{"alphabet", fsm.q() >= 2, ""};
  if (!alphabet.pass) alphabet.witness = "q = " + std::to_string(fsm.q()) + " < 2";
  report.checks.push_back(alphabet);

  ValidationCheck nonempty{"nonempty", fsm.state_count() > 0, ""};
  if (!nonempty.pass) nonempty.witness = "no states declared";
  report.checks.push_back(nonempty);

  ValidationCheck unique_names{"unique_state_names", true, ""};
  {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (!seen.insert(n).second) {
        unique_names.pass = false;
        unique_names.witness = "duplicate state " + n;
        break;
      }
    }
  }
  report.checks.push_back(unique_names);

  ValidationCheck range{"labels_in_range", true, ""};
  for (const Edge& e : fsm.edges()) {
    if (e.label < 0 || e.label >= fsm.q()) {
      range.pass = false;
      range.witness = "label " + std::to_string(e.label) + " on edge " + names[e.from] + "->" +
                      names[e.to] + " outside [0," + std::to_string(fsm.q()) + ")";
      break;
    }
  }
  report.checks.push_back(range);

  ValidationCheck distinct{"distinct_labels", true, ""};
  ValidationCheck degree{"out_degree", true, ""};
  for (StateIndex s = 0; s < fsm.state_count(); ++s) {
    auto out = fsm.out_edges(s);
    for (std::size_t k = 1; k < out.size() && distinct.pass; ++k) {
      if (out[k].label == out[k - 1].label) {
        distinct.pass = false;
        distinct.witness = "duplicate label " + std::to_string(out[k].label) + " at " + names[s];
      }
    }
    if (degree.pass && (out.empty() || out.size() > static_cast<std::size_t>(std::max(fsm.q(), 0)))) {
      degree.pass = false;
      degree.witness = "state " + names[s] + " has out-degree " + std::to_string(out.size());
    }
  }
  report.checks.push_back(distinct);
  report.checks.push_back(degree);

  ValidationCheck connected{"strongly_connected", true, ""};
  for (StateIndex s = 0; s < fsm.state_count() && connected.pass; ++s) {
    auto seen = reachable_from(fsm, s);
    for (StateIndex t = 0; t < fsm.state_count(); ++t) {
      if (!seen[t]) {
        connected.pass = false;
        connected.witness = "(" + names[s] + ", " + names[t] + "): " + names[t] +
                            " unreachable from " + names[s];
        break;
      }
    }
  }
  report.checks.push_back(connected);
  return report;
}

void require_valid(const NoiseFsm& fsm) {
  auto report = validate(fsm);
  if (!report.ok()) throw InputError("invalid channel '" + fsm.name() + "': " + report.first_failure());
}

// ---------------------------------------------------------------------------
// JSON

NoiseFsm channel_from_json(const json& doc) {
  if (!doc.is_object()) throw InputError("channel spec: top level must be an object");
  auto need = [&](const char* key) -> const json& {
    if (!doc.contains(key)) throw InputError(std::string("channel spec: missing field '") + key + "'");
    return doc.at(key);
  };
  const json& jq = need("q");
  if (!jq.is_number_integer()) throw InputError("channel spec: 'q' must be an integer");
  const json& jstates = need("states");
  const json& jedges = need("edges");
  if (!jstates.is_array()) throw InputError("channel spec: 'states' must be an array");
  if (!jedges.is_array()) throw InputError("channel spec: 'edges' must be an array");

  std::string name = doc.contains("name") && doc.at("name").is_string() ? doc.at("name").get<std::string>() : "";
  std::vector<std::string> states;
  std::map<std::string, StateIndex> index;
  for (std::size_t k = 0; k < jstates.size(); ++k) {
    if (!jstates[k].is_string()) throw InputError("channel spec: states[" + std::to_string(k) + "] must be a string");
    auto s = jstates[k].get<std::string>();
    if (!index.emplace(s, states.size()).second) throw InputError("channel spec: duplicate state '" + s + "'");
    states.push_back(std::move(s));
  }

  std::vector<Edge> edges;
  for (std::size_t k = 0; k < jedges.size(); ++k) {
    const json& je = jedges[k];
    std::string where = "edges[" + std::to_string(k) + "]";
    if (!je.is_object() || !je.contains("from") || !je.contains("to") || !je.contains("z"))
      throw InputError("channel spec: " + where + " needs 'from', 'to' and 'z'");
    if (!je.at("from").is_string() || !je.at("to").is_string() || !je.at("z").is_number_integer())
      throw InputError("channel spec: " + where + " has mistyped fields");
    auto from = je.at("from").get<std::string>();
    auto to = je.at("to").get<std::string>();
    auto f = index.find(from);
    auto t = index.find(to);
    if (f == index.end()) throw InputError("channel spec: " + where + " unknown state '" + from + "'");
    if (t == index.end()) throw InputError("channel spec: " + where + " unknown state '" + to + "'");
    edges.push_back({f->second, t->second, je.at("z").get<int>()});
  }
  NoiseFsm fsm(std::move(name), jq.get<int>(), std::move(states), std::move(edges));
  require_valid(fsm);
  return fsm;
}

NoiseFsm parse_channel_spec(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("channel spec: syntax error: ") + e.what());
  }
  return channel_from_json(doc);
}

json channel_to_json(const NoiseFsm& fsm) {
  json edges = json::array();
  for (const Edge& e : fsm.edges())
    edges.push_back({{"from", fsm.state_name(e.from)}, {"to", fsm.state_name(e.to)}, {"z", e.label}});
  return {{"name", fsm.name()}, {"q", fsm.q()}, {"states", fsm.states()}, {"edges", std::move(edges)}};
}

std::string serialize_channel_spec(const NoiseFsm& fsm) { return channel_to_json(fsm).dump(2) + "\n"; }

NoiseFsm with_alphabet(const NoiseFsm& fsm, int q) {
  NoiseFsm out(fsm.name(), q, fsm.states(), fsm.edges());
  require_valid(out);
  return out;
}

// ---------------------------------------------------------------------------
// enumeration

std::uint64_t predicted_sequence_count(const NoiseFsm& fsm, StartSet start, std::size_t n) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  // ways[s] = number of walks of the remaining length leaving s.
  std::vector<std::uint64_t> ways(fsm.state_count(), 1), next(fsm.state_count());
  for (std::size_t step = 0; step < n; ++step) {
    for (StateIndex s = 0; s < fsm.state_count(); ++s) {
      std::uint64_t acc = 0;
      for (const Edge& e : fsm.out_edges(s)) acc = (kMax - acc < ways[e.to]) ? kMax : acc + ways[e.to];
      next[s] = acc;
    }
    ways.swap(next);
  }
  if (start) return ways.at(*start);
  std::uint64_t total = 0;
  for (auto w : ways) total = (kMax - total < w) ? kMax : total + w;
  return total;
}

void for_each_walk(const NoiseFsm& fsm, StartSet start, std::size_t n,
                   const std::function<void(StateIndex, const Word&)>& visit, std::uint64_t cap) {
  std::uint64_t predicted = predicted_sequence_count(fsm, start, n);
  if (predicted > cap)
    throw GuardExceeded("walk enumeration of length " + std::to_string(n) + " predicts " +
                        std::to_string(predicted) + " walks, above the cap of " + std::to_string(cap));
  Word word(n);
  std::function<void(StateIndex, StateIndex, std::size_t)> rec = [&](StateIndex origin, StateIndex s,
                                                                     std::size_t depth) {
    if (depth == n) {
      visit(origin, word);
      return;
    }
    for (const Edge& e : fsm.out_edges(s)) {
      word[depth] = e.label;
      rec(origin, e.to, depth + 1);
    }
  };
  if (start) {
    rec(*start, *start, 0);
  } else {
    for (StateIndex s = 0; s < fsm.state_count(); ++s) rec(s, s, 0);
  }
}

std::vector<Word> enumerate_noise_sequences(const NoiseFsm& fsm, StartSet start, std::size_t n, std::uint64_t cap) {
  if (n == 0) throw InputError("enumerate_noise_sequences: length must be at least 1");
  std::vector<Word> out;
  for_each_walk(fsm, start, n, [&](StateIndex, const Word& w) { out.push_back(w); }, cap);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_noise_sequence(const NoiseFsm& fsm, StartSet start, std::span<const Symbol> labels) {
  std::vector<char> cur(fsm.state_count(), 0), next(fsm.state_count());
  if (start) {
    cur.at(*start) = 1;
  } else {
    std::fill(cur.begin(), cur.end(), 1);
  }
  for (Symbol z : labels) {
    std::fill(next.begin(), next.end(), 0);
    bool any = false;
    for (StateIndex s = 0; s < fsm.state_count(); ++s) {
      if (!cur[s]) continue;
      if (const Edge* e = fsm.edge_for(s, z)) {
        next[e->to] = 1;
        any = true;
      }
    }
    if (!any) return false;
    cur.swap(next);
  }
  return true;
}

Word add_words(std::span<const Symbol> x, std::span<const Symbol> z, int q) {
  Word out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] + z[k]) % q;
  return out;
}

Word sub_words(std::span<const Symbol> x, std::span<const Symbol> z, int q) {
  Word out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = ((x[k] - z[k]) % q + q) % q;
  return out;
}

std::string word_to_string(std::span<const Symbol> w) {
  std::ostringstream os;
  bool wide = std::any_of(w.begin(), w.end(), [](Symbol s) { return s > 9; });
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (wide && k) os << ',';
    os << w[k];
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// stepping

ChannelState::ChannelState(const NoiseFsm& owner, StateIndex start) : fsm(&owner), current(start) {
  if (start >= owner.state_count()) throw InputError("channel state index out of range");
}

NoisePolicy NoisePolicy::random(std::uint64_t seed) {
  NoisePolicy p(PolicyKind::random);
  p.seed_ = seed;
  p.rng_.seed(seed);
  return p;
}

NoisePolicy NoisePolicy::replay(std::vector<Symbol> labels) {
  NoisePolicy p(PolicyKind::replay);
  p.replay_ = std::move(labels);
  return p;
}

NoisePolicy NoisePolicy::adversarial_greedy(std::string objective, Scorer scorer) {
  NoisePolicy p(PolicyKind::adversarial_greedy);
  p.objective_ = std::move(objective);
  p.scorer_ = std::move(scorer);
  return p;
}

NoisePolicy NoisePolicy::exhaustive(std::uint64_t seed) {
  NoisePolicy p = random(seed);
  p.kind_ = PolicyKind::exhaustive;
  return p;
}

const Edge& NoisePolicy::choose(const ChannelState& cs) {
  auto out = cs.fsm->out_edges(cs.current);
  switch (kind_) {
    case PolicyKind::random:
    case PolicyKind::exhaustive:
      return out[static_cast<std::size_t>(rng_() % out.size())];
    case PolicyKind::replay: {
      if (replay_pos_ >= replay_.size()) throw InputError("replay policy exhausted");
      Symbol z = replay_[replay_pos_];
      const Edge* e = cs.fsm->edge_for(cs.current, z);
      if (!e)
        throw InputError("replay label " + std::to_string(z) + " at position " + std::to_string(replay_pos_) +
                         " is not available at state " + cs.fsm->state_name(cs.current));
      ++replay_pos_;
      return *e;
    }
    case PolicyKind::adversarial_greedy: {
      if (!scorer_) return out.front();
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < out.size(); ++k) {
        double score = scorer_(cs, out[k]);
        if (score > best_score) {
          best_score = score;
          best = k;
        }
      }
      return out[best];
    }
  }
  throw ContractViolation("unknown policy kind");
}

StepResult channel_step(ChannelState& cs, Symbol input, NoisePolicy& policy) {
  const int q = cs.fsm->q();
  if (input < 0 || input >= q) throw InputError("channel input " + std::to_string(input) + " outside the alphabet");
  const Edge& e = policy.choose(cs);
  StepResult r{(input + e.label) % q, e.label, cs.current, e.to};
  cs.current = e.to;
  return r;
}

}  // namespace zec
