#include "zec/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "zec/bundled.hpp"
#include "zec/capacity.hpp"
#include "zec/codes.hpp"
#include "zec/control.hpp"
#include "zec/coupled.hpp"
#include "zec/error.hpp"
#include "zec/spectral.hpp"

namespace zec::cli {

using nlohmann::json;

json canonical(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = canonical(it.value());
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(canonical(v));
    return out;
  }
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (!std::isfinite(v)) return nullptr;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::strtod(buf, nullptr);
  }
  return j;
}

std::string canonical_dump(const json& j) { return canonical(j).dump(2) + "\n"; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void atomic_write(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + tmp.string());
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw InputError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot rename onto " + path + ": " + ec.message());
  }
}

namespace {

/// Raised by a subcommand to end with a non-zero status after its report has
/// been emitted.
struct ExitStatus {
  int code;
};

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string timestamp() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v, int digits = 7) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct LoadedChannel {
  NoiseFsm fsm;
  std::string source;
  std::string hash;
};

/// A path on disk, or the name of a bundled channel with or without ".json".
LoadedChannel load_channel(const std::string& where) {
  namespace fs = std::filesystem;
  std::string bytes;
  std::string source = where;
  if (fs::exists(where)) {
    std::ifstream is(where, std::ios::binary);
    if (!is) throw InputError("cannot read " + where);
    std::ostringstream ss;
    ss << is.rdbuf();
    bytes = ss.str();
    return {parse_channel_spec(bytes), source, "fnv1a64:" + hex64(fnv1a64(bytes))};
  }
  std::string name = fs::path(where).filename().string();
  try {
    const NoiseFsm& fsm = bundled_channel(name);
    bytes = serialize_channel_spec(fsm);
    return {fsm, "bundled:" + name, "fnv1a64:" + hex64(fnv1a64(bytes))};
  } catch (const InputError&) {
    throw InputError("channel file not found: " + where);
  }
}

json read_json_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

struct Globals {
  bool json_out = false;
  std::string out_path;
  std::uint64_t guard_max = kDefaultEnumerationCap;
  std::uint64_t seed = 1;
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(const std::vector<std::string>& args);

 private:
  json manifest(const CLI::App* sub, const std::vector<std::string>& channel_hashes, const json& seeds) const;
  void emit(json report, const std::string& text);
  void add_channel(const LoadedChannel& ch) { hashes_.push_back(ch.source + "=" + ch.hash); }

  void cmd_analyze();
  void cmd_entropy();
  void cmd_zero_test();
  void cmd_code_search();
  void cmd_fcode_build();
  void cmd_fcode_verify();
  void cmd_sim(Scheme scheme);
  void cmd_oracle();
  void cmd_examples();

  std::ostream& out_;
  std::ostream& err_;
  Globals g_;
  const CLI::App* active_ = nullptr;
  std::string command_;
  std::vector<std::string> hashes_;
  json seeds_ = json::array();

  // Subcommand arguments.
  std::string channel_;
  std::optional<double> hlin_;
  std::vector<double> plant_a_;
  double tol_ = 1e-12;
  std::size_t oracle_n_ = 8;
  std::size_t zero_states_ = kDefaultZeroTestMaxStates;
  std::size_t block_n_ = 0;
  bool exact_ = false;
  std::size_t exact_cap_ = kDefaultExactSearchCap;
  std::uint64_t messages_ = 0;
  std::size_t max_n_ = kDefaultMaxBlocklength;
  std::string spec_path_;
  std::size_t priming_ = 3;
  // sim
  std::vector<double> a_, b_;
  double D_ = 0.01, Dx_ = 1;
  std::size_t r_ = 9;
  double rho_ = 0.5;
  std::size_t T_ = 1800;
  std::string policy_ = "random";
  std::size_t seeds_n_ = 1;
  std::string trace_path_, summary_path_, code_path_;
  std::string plant_noise_ = "uniform";
  std::size_t exhaustive_epochs_ = 1;
  std::optional<double> delta_star_, delta_1_, gamma_;
  // oracle
  std::vector<std::string> channels_;
  bool bundled_ = false;
  bool inject_fault_ = false;
  std::string dir_ = ".";
};

json Runner::manifest(const CLI::App* sub, const std::vector<std::string>& channel_hashes, const json& seeds) const {
  json flags = json::object();
  std::vector<const CLI::App*> apps;
  for (const CLI::App* a = sub; a; a = a->get_parent()) apps.push_back(a);
  for (const CLI::App* a : apps) {
    for (const CLI::Option* opt : a->get_options()) {
      std::string name = opt->get_single_name();
      if (name.empty() || name == "help" || flags.contains(name)) continue;
      const bool is_flag = opt->get_expected_max() == 0;
      if (opt->count() > 0) {
        auto res = opt->results();
        if (is_flag) {
          flags[name] = true;
        } else if (res.size() == 1) {
          flags[name] = res.front();
        } else {
          flags[name] = res;
        }
      } else if (is_flag) {
        flags[name] = false;
      } else {
        flags[name] = opt->get_default_str();
      }
    }
  }
  json m{{"command", command_},
         {"flags", flags},
         {"channel_hash", channel_hashes},
         {"tool_version", kToolVersion},
         {"seeds", seeds},
         {"timestamp", timestamp()}};
  return m;
}

void Runner::emit(json report, const std::string& text) {
  report["manifest"] = manifest(active_, hashes_, seeds_);
  std::string doc = canonical_dump(report);
  if (!g_.out_path.empty()) atomic_write(g_.out_path, doc);
  if (g_.json_out)
    out_ << doc;
  else
    out_ << text;
}

// ---------------------------------------------------------------------------

void Runner::cmd_analyze() {
  auto ch = load_channel(channel_);
  add_channel(ch);
  std::optional<double> h_lin = hlin_;
  if (!plant_a_.empty()) {
    LtiSystem sys{plant_a_, Vec(plant_a_.size(), 1.0), 1, 0};
    h_lin = lin_topological_entropy(sys);
  }
  auto rep = analyze(ch.fsm, h_lin, zero_states_);
  json j = report_to_json(rep);
  j["channel"] = ch.fsm.name();
  std::ostringstream os;
  os << "channel " << ch.fsm.name() << " (q=" << rep.q << ", " << ch.fsm.state_count() << (ch.fsm.state_count() == 1 ? " state)\n" : " states)\n")
     << "  h_ch          " << fmt(rep.h_ch) << "\n"
     << "  C0f           " << fmt(rep.c0f) << (rep.is_zero ? "  (zero test: zero)" : "") << "\n"
     << "  C0 lower raw  " << fmt(rep.c0_lower_raw) << "\n"
     << "  C0 lower      " << fmt(rep.c0_lower) << "\n";
  if (rep.witness) os << "  witness       " << word_to_string(*rep.witness) << "\n";
  int status = 0;
  if (h_lin) {
    os << "  h_lin         " << fmt(*h_lin) << "\n  margin        " << fmt(*rep.margin) << "\n";
    std::string advisory;
    if (rep.is_zero) {
      advisory = "refusal: zero test reports C0f = 0, so no scheme achieves uniformly bounded stabilization with h_lin = " +
                 fmt(*h_lin);
    } else if (!(*rep.margin > 0) || rep.boundary) {
      advisory = "refusal: h_lin + h_ch >= log2 q (margin " + fmt(*rep.margin) +
                 "); the small-entropy condition fails";
    }
    if (!advisory.empty()) {
      j["advisory"] = advisory;
      os << "  " << advisory << "\n";
      status = 4;
    }
  }
  emit(j, os.str());
  if (status) throw ExitStatus{status};
}

void Runner::cmd_entropy() {
  auto ch = load_channel(channel_);
  add_channel(ch);
  require_valid(ch.fsm);
  auto sr = perron_value(adjacency_matrix(ch.fsm), tol_);
  double h = std::log2(sr.lambda);
  json ev = json::object();
  for (std::size_t s = 0; s < ch.fsm.state_count(); ++s) ev[ch.fsm.state_name(s)] = sr.eigenvector[s];
  json j{{"channel", ch.fsm.name()}, {"lambda", sr.lambda},         {"h_ch", h},
         {"alpha", sr.alpha},        {"beta", sr.beta},             {"eigenvector", ev},
         {"iterations", sr.iterations}, {"residual", sr.residual}, {"tol", tol_}};
  std::ostringstream os;
  os << "lambda " << fmt(sr.lambda, 10) << "\nh_ch   " << fmt(h, 10) << "\nalpha  " << fmt(sr.alpha) << "\nbeta   "
     << fmt(sr.beta) << "\neigenvector";
  for (std::size_t s = 0; s < ch.fsm.state_count(); ++s) os << " " << ch.fsm.state_name(s) << "=" << fmt(sr.eigenvector[s]);
  os << "\n";
  emit(j, os.str());
}

void Runner::cmd_zero_test() {
  auto ch = load_channel(channel_);
  add_channel(ch);
  require_valid(ch.fsm);
  auto zt = zero_capacity_test(coupled_graph(ch.fsm), zero_states_);
  json rows = json::array();
  bool agree = true;
  std::string disagreement;
  for (std::size_t n = 1; n <= oracle_n_; ++n) {
    auto res = difference_set_oracle(ch.fsm, n, g_.guard_max);
    bool expect_complete = zt.is_zero || n < zt.witness->size();
    bool ok = res.complete == expect_complete;
    if (ok && !zt.is_zero && n == zt.witness->size()) ok = res.missing == zt.witness;
    json row{{"n", n}, {"complete", res.complete}, {"agrees", ok}};
    row["missing"] = res.missing ? json(word_to_string(*res.missing)) : json(nullptr);
    rows.push_back(row);
    if (!ok && agree) {
      agree = false;
      disagreement = "n=" + std::to_string(n);
    }
  }
  json j{{"channel", ch.fsm.name()},
         {"is_zero", zt.is_zero},
         {"subsets_explored", zt.subsets_explored},
         {"oracle", rows},
         {"oracle_n", oracle_n_},
         {"oracle_agrees", agree}};
  j["witness"] = zt.witness ? json(word_to_string(*zt.witness)) : json(nullptr);
  std::ostringstream os;
  os << "channel " << ch.fsm.name() << ": " << (zt.is_zero ? "zero" : "nonzero") << " zero-error feedback capacity\n";
  if (zt.witness) os << "  witness " << word_to_string(*zt.witness) << " (length " << zt.witness->size() << ")\n";
  os << "  brute-force difference sets n<=" << oracle_n_ << ": " << (agree ? "agree" : "DISAGREE at " + disagreement)
     << "\n";
  emit(j, os.str());
  if (!agree) throw ExitStatus{5};
}

json code_to_json(const ZeroErrorCode& c) {
  json words = json::array();
  for (const auto& w : c.codewords) words.push_back(word_to_string(w));
  return {{"n", c.n}, {"size", c.size()}, {"rate", c.rate()}, {"method", c.method}, {"codewords", words}};
}

void Runner::cmd_code_search() {
  auto ch = load_channel(channel_);
  add_channel(ch);
  auto code = search_zero_error_code(ch.fsm, block_n_, exact_ ? SearchMode::exact : SearchMode::greedy, exact_cap_);
  auto verdict = verify_zero_error_code(ch.fsm, code, g_.guard_max);
  json j = code_to_json(code);
  j["channel"] = ch.fsm.name();
  j["verified"] = verdict.ok;
  j["verification_cases"] = verdict.cases;
  j["counterexample"] = verdict.ok ? json(nullptr) : json(verdict.counterexample);
  std::ostringstream os;
  os << code.method << " search, n=" << code.n << ": " << code.size() << " codewords, rate " << fmt(code.rate()) << "\n  ";
  for (const auto& w : code.codewords) os << word_to_string(w) << " ";
  os << "\n  verification: " << (verdict.ok ? "ok" : "FAILED: " + verdict.counterexample) << "\n";
  emit(j, os.str());
  if (!verdict.ok) throw ExitStatus{5};
}

void Runner::cmd_fcode_build() {
  auto ch = load_channel(channel_);
  add_channel(ch);
  FeedbackBuildOptions opt;
  opt.max_blocklength = max_n_;
  opt.exact_cap = exact_cap_;
  opt.enumeration_cap = g_.guard_max;
  opt.zero_test_max_states = zero_states_;
  auto spec = build_feedback_code(ch.fsm, messages_, opt);
  json j = feedback_spec_to_json(spec);
  j["rate"] = spec.rate();
  std::ostringstream os;
  os << "feedback code for M=" << spec.message_count << " over " << ch.fsm.name() << ": length " << spec.total_length
     << ", rate " << fmt(spec.rate()) << "\n";
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const auto& st = spec.stages[i];
    os << "  stage " << i << ": " << (st.kind == StageKind::raw ? "raw" : "block code") << ", length " << st.length
       << ", carries " << st.index_set_size << " values\n";
  }
  emit(j, os.str());
}

void Runner::cmd_fcode_verify() {
  json doc = read_json_file(spec_path_);
  auto spec = feedback_spec_from_json(doc);
  hashes_.push_back(spec_path_ + "=fnv1a64:" + hex64(fnv1a64(doc.dump())));
  auto v = verify_feedback_code(spec.channel, spec, g_.guard_max);
  Verdict u;
  if (v.ok) u = verify_uniformity(spec.channel, spec, g_.guard_max, priming_);
  double c0f = analyze(spec.channel).c0f;
  bool rate_ok = spec.rate() <= c0f + 1e-9;
  json j{{"channel", spec.channel.name()}, {"message_count", spec.message_count}, {"length", spec.total_length},
         {"rate", spec.rate()},             {"c0f", c0f},                         {"rate_within_c0f", rate_ok},
         {"verified", v.ok},                {"cases", v.cases},                   {"uniform", v.ok && u.ok},
         {"uniformity_cases", u.cases},     {"priming_max", priming_}};
  std::string ce = !v.ok ? v.counterexample : (!u.ok ? u.counterexample : "");
  j["counterexample"] = ce.empty() ? json(nullptr) : json(ce);
  std::ostringstream os;
  os << "feedback code M=" << spec.message_count << ", length " << spec.total_length << " on " << spec.channel.name()
     << "\n  exhaustive decoding: " << (v.ok ? "ok" : "FAILED") << " (" << v.cases << " cases)\n"
     << "  uniformity (priming <= " << priming_ << "): " << (v.ok ? (u.ok ? "ok" : "FAILED") : "skipped") << "\n"
     << "  rate " << fmt(spec.rate()) << (rate_ok ? " <= " : " > ") << "C0f " << fmt(c0f) << "\n";
  if (!ce.empty()) os << "  counterexample: " << ce << "\n";
  emit(j, os.str());
  if (!v.ok || !u.ok || !rate_ok) throw ExitStatus{5};
}

PlantNoise parse_plant_noise(const std::string& s) {
  if (s == "uniform") return PlantNoise::uniform;
  if (s == "extremes") return PlantNoise::extremes;
  if (s == "max_positive") return PlantNoise::max_positive;
  throw InputError("unknown plant noise '" + s + "'");
}

void Runner::cmd_sim(Scheme scheme) {
  auto ch = load_channel(channel_);
  add_channel(ch);
  require_valid(ch.fsm);
  if (a_.empty()) throw InputError("--a is required");
  LtiSystem sys{a_, b_.empty() ? Vec(a_.size(), 1.0) : b_, Dx_, D_};
  validate_system(sys, scheme == Scheme::stabilization);
  // Refuse before any code construction.
  double margin = require_scheme_margin(sys, ch.fsm);

  FeedbackBuildOptions opt;
  opt.enumeration_cap = g_.guard_max;
  opt.zero_test_max_states = zero_states_;
  CoderConfig cfg = default_coder_config(sys, ch.fsm, r_, rho_, scheme, opt);
  if (!code_path_.empty()) cfg.feedback_code = feedback_spec_from_json(read_json_file(code_path_));
  if (delta_star_) cfg.delta_star = *delta_star_;
  if (delta_1_) cfg.delta_1 = *delta_1_;
  if (gamma_) cfg.gamma = *gamma_;
  check_coder_config(sys, ch.fsm, cfg, scheme);

  PlantNoise pn = parse_plant_noise(plant_noise_);
  if (policy_ != "random" && policy_ != "greedy" && policy_ != "exhaustive")
    throw InputError("unknown policy '" + policy_ + "' (random, greedy, exhaustive)");
  std::size_t runs = policy_ == "greedy" ? 1 : std::max<std::size_t>(seeds_n_, 1);

  SimSummary agg;
  agg.scheme = scheme;
  agg.margin = margin;
  agg.bounds = theoretical_bounds(sys, cfg, scheme);
  json per_seed = json::array();
  std::string trace;
  bool violated = false;
  for (std::size_t k = 0; k < runs; ++k) {
    std::uint64_t seed = g_.seed + k;
    seeds_.push_back(seed);
    SimOptions so;
    so.seed = seed;
    so.plant_noise = pn;
    so.exhaustive_epochs = exhaustive_epochs_;
    so.keep_steps = k == 0 && !trace_path_.empty();
    NoisePolicy pol = policy_ == "greedy"
                          ? NoisePolicy::adversarial_greedy(scheme == Scheme::estimation ? "diameter" : "state")
                          : policy_ == "exhaustive" ? NoisePolicy::exhaustive(seed) : NoisePolicy::random(seed);
    SimTrace tr = scheme == Scheme::estimation ? run_estimation(sys, ch.fsm, cfg, std::move(pol), T_, so)
                                               : run_stabilization(sys, ch.fsm, cfg, std::move(pol), T_, so);
    const auto& s = tr.summary;
    if (so.keep_steps) trace = trace_csv(tr, ch.fsm);
    agg.steps += s.steps;
    agg.epochs += s.epochs;
    agg.decoded_epochs += s.decoded_epochs;
    agg.decode_failures += s.decode_failures;
    agg.signaling_ambiguities += s.signaling_ambiguities;
    agg.recovery_errors += s.recovery_errors;
    agg.exhaustive_branches += s.exhaustive_branches;
    agg.exhaustive_failures += s.exhaustive_failures;
    agg.sup_boundary = std::max(agg.sup_boundary, s.sup_boundary);
    agg.sup_all = std::max(agg.sup_all, s.sup_all);
    agg.sup_delta = std::max(agg.sup_delta, s.sup_delta);
    agg.max_eps = std::max(agg.max_eps, s.max_eps);
    agg.max_comm_residual = std::max(agg.max_comm_residual, s.max_comm_residual);
    violated = violated || s.violated;
    per_seed.push_back({{"seed", seed},
                        {"decode_failures", s.decode_failures},
                        {"sup_all", s.sup_all},
                        {"sup_boundary", s.sup_boundary},
                        {"violated", s.violated}});
  }
  agg.violated = violated;

  json j = summary_to_json(agg);
  j["runs"] = runs;
  j["per_seed"] = per_seed;
  j["policy"] = policy_;
  j["channel"] = ch.fsm.name();
  j["h_lin"] = lin_topological_entropy(sys);
  j["config"] = {{"r", cfg.r},
                 {"rho_target", cfg.rho_target},
                 {"rho", cfg.quantizer.rho},
                 {"levels", cfg.quantizer.levels},
                 {"M", cfg.quantizer.M},
                 {"delta_star", cfg.delta_star},
                 {"delta_1", cfg.delta_1},
                 {"gamma", cfg.gamma},
                 {"code_length", cfg.feedback_code ? cfg.feedback_code->total_length : 0}};
  if (scheme == Scheme::stabilization)
    j["config"]["signaling"] = {{"axis", cfg.signaling.axis}, {"spacing", cfg.signaling.spacing}, {"offsets", cfg.signaling.offsets}};

  if (!trace_path_.empty()) {
    json m = manifest(active_, hashes_, seeds_);
    atomic_write(trace_path_, "# " + canonical(m).dump() + "\n" + trace);
  }
  if (!summary_path_.empty()) {
    json s = j;
    s["manifest"] = manifest(active_, hashes_, seeds_);
    atomic_write(summary_path_, canonical_dump(s));
  }

  const auto& b = agg.bounds;
  std::ostringstream os;
  os << (scheme == Scheme::estimation ? "estimation" : "stabilization") << " over " << ch.fsm.name() << ", " << runs
     << " run(s) of T=" << T_ << ", policy " << policy_ << "\n"
     << "  margin " << fmt(margin) << ", M=" << cfg.quantizer.M << ", code length "
     << (cfg.feedback_code ? cfg.feedback_code->total_length : 0) << ", rho " << fmt(cfg.quantizer.rho) << "\n"
     << "  decode failures " << agg.decode_failures << " / " << agg.decoded_epochs << " epochs\n";
  if (policy_ == "exhaustive")
    os << "  exhaustive branches " << agg.exhaustive_branches << ", failures " << agg.exhaustive_failures << "\n";
  if (scheme == Scheme::estimation) {
    os << "  sup |x - xhat| at epoch starts " << fmt(agg.sup_boundary) << " <= " << fmt(b.boundary_ceiling) << "\n"
       << "  sup |x - xhat| all steps       " << fmt(agg.sup_all) << " <= " << fmt(b.intra_epoch_ceiling) << "\n";
  } else {
    os << "  signaling ambiguities " << agg.signaling_ambiguities << ", recovery errors " << agg.recovery_errors
       << ", cancellation residual " << fmt(agg.max_comm_residual, 3) << "\n"
       << "  sup |x| at epoch starts " << fmt(agg.sup_boundary) << " <= " << fmt(b.boundary_ceiling) << "\n"
       << "  sup |x| all steps       " << fmt(agg.sup_all) << " <= " << fmt(b.intra_epoch_ceiling) << "\n";
  }
  os << "  sup delta " << fmt(agg.sup_delta) << " < " << fmt(b.delta_ceiling) << "\n"
     << "  " << (violated ? "VIOLATED" : "ok") << "\n";
  emit(j, os.str());
  if (violated) throw ExitStatus{5};
}

// ---------------------------------------------------------------------------
// Oracle matrix

struct Row {
  std::string check;
  std::string status;  // pass | fail | skipped
  std::string witness;
};

Row check_counts(const NoiseFsm& counted, const NoiseFsm& enumerated, std::size_t N, std::uint64_t cap) {
  Row row{"walk_count_vs_enumeration", "pass", ""};
  for (std::size_t n = 1; n <= N; ++n) {
    std::vector<StartSet> starts{kAllStates};
    for (StateIndex s = 0; s < enumerated.state_count(); ++s) starts.push_back(s);
    for (auto st : starts) {
      auto seqs = enumerate_noise_sequences(enumerated, st, n, cap);
      BigInt c = count_walks(counted, st, n);
      if (c != BigInt(seqs.size())) {
        // Name a sequence on which the two sides disagree.
        std::string w;
        for (const auto& z : seqs)
          if (!is_noise_sequence(counted, st, z)) {
            w = word_to_string(z);
            break;
          }
        if (w.empty()) {
          for (const auto& z : enumerate_noise_sequences(counted, st, n, cap))
            if (!std::binary_search(seqs.begin(), seqs.end(), z)) {
              w = word_to_string(z);
              break;
            }
        }
        row.status = "fail";
        row.witness = "n=" + std::to_string(n) + " start=" + (st ? enumerated.state_name(*st) : std::string("ALL")) +
                      " count=" + c.str() + " enumerated=" + std::to_string(seqs.size()) + " sequence=" + w;
        return row;
      }
    }
  }
  return row;
}

Row check_sandwich(const NoiseFsm& fsm, std::size_t N) {
  Row row{"count_sandwich", "pass", ""};
  auto b = output_count_bounds(fsm);
  for (std::size_t n = 1; n <= N; ++n)
    for (StateIndex s = 0; s < fsm.state_count(); ++s) {
      double c = static_cast<double>(count_walks(fsm, s, n));
      double ln = std::pow(b.lambda, static_cast<double>(n));
      if (c < b.alpha * ln * (1 - 1e-9) || c > b.beta * ln * (1 + 1e-9)) {
        row.status = "fail";
        row.witness = "n=" + std::to_string(n) + " start=" + fsm.state_name(s) + " count=" + fmt(c, 12);
        return row;
      }
    }
  return row;
}

Row check_zero_test(const NoiseFsm& fsm, std::size_t N, std::uint64_t cap) {
  Row row{"zero_test_vs_difference_sets", "pass", ""};
  auto zt = zero_capacity_test(coupled_graph(fsm));
  for (std::size_t n = 1; n <= N; ++n) {
    auto res = difference_set_oracle(fsm, n, cap);
    bool expect_complete = zt.is_zero || n < zt.witness->size();
    bool ok = res.complete == expect_complete;
    if (ok && !zt.is_zero && n == zt.witness->size()) ok = res.missing == zt.witness;
    if (!ok) {
      row.status = "fail";
      row.witness = "n=" + std::to_string(n) + " test=" + (zt.is_zero ? "zero" : "nonzero") +
                    " oracle_missing=" + (res.missing ? word_to_string(*res.missing) : "none");
      return row;
    }
  }
  return row;
}

Row check_codes(const NoiseFsm& fsm, std::size_t N, std::uint64_t cap) {
  Row row{"code_closure", "pass", ""};
  for (std::size_t n = 1; n <= std::min<std::size_t>(N, 4); ++n) {
    double words = std::pow(static_cast<double>(fsm.q()), static_cast<double>(n));
    if (words > kDefaultConfusabilityCap) break;
    auto mode = words <= kDefaultExactSearchCap ? SearchMode::exact : SearchMode::greedy;
    auto code = search_zero_error_code(fsm, n, mode);
    auto v = verify_zero_error_code(fsm, code, cap);
    if (!v.ok) {
      row.status = "fail";
      row.witness = "n=" + std::to_string(n) + " " + v.counterexample;
      return row;
    }
  }
  return row;
}

Row check_feedback(const NoiseFsm& fsm, std::uint64_t cap) {
  Row row{"feedback_code_decoding", "pass", ""};
  auto rep = analyze(fsm);
  if (rep.is_zero) {
    row.status = "skipped";
    row.witness = "zero capacity";
    return row;
  }
  auto spec = build_feedback_code(fsm, static_cast<std::uint64_t>(fsm.q()) + 1);
  auto v = verify_feedback_code(fsm, spec, cap);
  if (v.ok) v = verify_uniformity(fsm, spec, cap);
  if (!v.ok || spec.rate() > rep.c0f + 1e-9) {
    row.status = "fail";
    row.witness = v.ok ? "rate " + fmt(spec.rate()) + " exceeds C0f" : v.counterexample;
  }
  return row;
}

/// Copy of `fsm` with one edge pointed at a different state, chosen so that
/// its walk counts differ from the original within N steps.
std::optional<NoiseFsm> faulty_copy(const NoiseFsm& fsm, std::size_t N) {
  if (fsm.state_count() < 2) return std::nullopt;
  for (std::size_t k = 0; k < fsm.edges().size(); ++k) {
    auto edges = fsm.edges();
    edges[k].to = static_cast<StateIndex>((edges[k].to + 1) % fsm.state_count());
    NoiseFsm copy(fsm.name() + "+fault", fsm.q(), fsm.states(), edges);
    if (!validate(copy).ok()) continue;
    for (std::size_t n = 1; n <= N; ++n)
      if (count_walks(copy, kAllStates, n) != count_walks(fsm, kAllStates, n)) return copy;
  }
  return std::nullopt;
}

void Runner::cmd_oracle() {
  std::vector<std::pair<std::string, NoiseFsm>> list;
  for (const auto& c : channels_) {
    auto ch = load_channel(c);
    add_channel(ch);
    list.emplace_back(ch.fsm.name(), ch.fsm);
  }
  if (bundled_)
    for (const auto& b : bundled_channels()) list.emplace_back(b.fsm.name(), b.fsm);

  json matrix = json::array();
  std::ostringstream os;
  bool any_fail = false;
  auto run_check = [&](const std::function<Row()>& f, const std::string& name) {
    try {
      return f();
    } catch (const GuardExceeded& e) {
      return Row{name, "skipped", e.what()};
    }
  };
  for (const auto& [name, fsm] : list) {
    require_valid(fsm);
    std::vector<Row> rows;
    rows.push_back(run_check([&] { return check_counts(fsm, fsm, oracle_n_, g_.guard_max); }, "walk_count_vs_enumeration"));
    rows.push_back(run_check([&] { return check_sandwich(fsm, oracle_n_); }, "count_sandwich"));
    rows.push_back(run_check([&] { return check_zero_test(fsm, oracle_n_, g_.guard_max); }, "zero_test_vs_difference_sets"));
    rows.push_back(run_check([&] { return check_codes(fsm, oracle_n_, g_.guard_max); }, "code_closure"));
    rows.push_back(run_check([&] { return check_feedback(fsm, g_.guard_max); }, "feedback_code_decoding"));
    std::vector<std::pair<std::string, std::vector<Row>>> entries{{name, rows}};
    if (inject_fault_) {
      if (auto bad = faulty_copy(fsm, oracle_n_)) {
        // Counting runs on the corrupted copy, enumeration on the original.
        entries.push_back({bad->name(), {run_check([&] { return check_counts(*bad, fsm, oracle_n_, g_.guard_max); },
                                                   "walk_count_vs_enumeration")}});
      }
    }
    for (const auto& [ename, erows] : entries) {
      json jr = json::array();
      os << ename << "\n";
      for (const auto& r : erows) {
        jr.push_back({{"check", r.check}, {"status", r.status}, {"witness", r.witness}});
        any_fail = any_fail || r.status == "fail";
        os << "  " << r.check << ": " << r.status << (r.witness.empty() ? "" : " (" + r.witness + ")") << "\n";
      }
      matrix.push_back({{"channel", ename}, {"rows", jr}});
    }
  }
  if (list.empty()) os << "no channels given\n";
  json j{{"matrix", matrix}, {"n_max", oracle_n_}, {"all_pass", !any_fail}};
  emit(j, os.str());
  if (any_fail) throw ExitStatus{5};
}

// ---------------------------------------------------------------------------
// Bundled examples

struct Expected {
  const char* file;
  double h_ch;
  double c0f;
  double tol;
};

const std::vector<Expected>& expected_rows() {
  static const std::vector<Expected> rows = [] {
    const double phi = (1 + std::sqrt(5.0)) / 2;
    const double lphi = std::log2(phi);
    // Largest root of x^3 = x^2 + x + 1.
    const double trib = std::log2((1 + std::cbrt(19 + 3 * std::sqrt(33.0)) + std::cbrt(19 - 3 * std::sqrt(33.0))) / 3);
    return std::vector<Expected>{
        {"fig3_no_consecutive.json", lphi, 0.0, 1e-6},
        {"ex2_three_state.json", trib, std::log2(3.0) - trib, 1e-6},
        {"pentagon_memoryless.json", 1.0, std::log2(5.0) - 1, 1e-9},
        {"gilbert_elliott_q5.json", lphi, std::log2(5.0) - lphi, 1e-6},
        {"sliding_window_3_1.json", NAN, 0.449, 5e-4},
        {"noiseless.json", 0.0, 1.0, 1e-9},
        {"fig3_no_consecutive_q3.json", lphi, std::log2(3.0) - lphi, 1e-6},
    };
  }();
  return rows;
}

void Runner::cmd_examples() {
  namespace fs = std::filesystem;
  json rows = json::array();
  std::ostringstream os;
  bool all_match = true;
  for (const auto& b : bundled_channels()) {
    std::string path = (fs::path(dir_) / b.file).string();
    atomic_write(path, serialize_channel_spec(b.fsm));
    auto rep = analyze(b.fsm);
    json row{{"name", b.fsm.name()},     {"file", b.file},     {"q", rep.q},
             {"h_ch", rep.h_ch},         {"c0f", rep.c0f},     {"c0_lower_raw", rep.c0_lower_raw},
             {"is_zero", rep.is_zero}};
    row["witness"] = rep.witness ? json(word_to_string(*rep.witness)) : json(nullptr);
    bool match = true;
    for (const auto& e : expected_rows()) {
      if (b.file != e.file) continue;
      if (!std::isnan(e.h_ch)) match = match && std::abs(rep.h_ch - e.h_ch) <= e.tol;
      match = match && std::abs(rep.c0f - e.c0f) <= e.tol;
      row["expected"] = {{"h_ch", std::isnan(e.h_ch) ? json(nullptr) : json(e.h_ch)}, {"c0f", e.c0f}, {"tol", e.tol}};
    }
    row["match"] = match;
    all_match = all_match && match;
    rows.push_back(row);
    char line[200];
    std::snprintf(line, sizeof line, "%-30s q=%d  h_ch=%.7f  C0f=%.7f  C0 lower raw=%+.7f  %s\n", b.file.c_str(), rep.q,
                  rep.h_ch, rep.c0f, rep.c0_lower_raw, match ? "ok" : "MISMATCH");
    os << line;
  }
  json j{{"rows", rows}, {"all_match", all_match}};
  json stamped = j;
  stamped["manifest"] = manifest(active_, hashes_, seeds_);
  atomic_write((fs::path(dir_) / "expected_results.json").string(), canonical_dump(stamped));
  emit(j, os.str());
  if (!all_match) throw ExitStatus{5};
}

// ---------------------------------------------------------------------------

int Runner::run(const std::vector<std::string>& args) {
  CLI::App app{"Zero-error capacity of finite-state additive noise channels, and control over them", "zec"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_flag("--json", g_.json_out, "print the JSON report instead of text");
  app.add_option("--out", g_.out_path, "also write the JSON report to this file");
  app.add_option("--guard-max", g_.guard_max, "cap on enumerated sequences and brute-force cases")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g_.seed, "base random seed");

  auto channel_opt = [&](CLI::App* s) {
    s->add_option("--channel", channel_, "channel JSON file or bundled channel name")->required();
  };

  auto* analyze_cmd = app.add_subcommand("analyze", "capacity report for a channel");
  channel_opt(analyze_cmd);
  auto* hl = analyze_cmd->add_option("--hlin", hlin_, "plant topological entropy in bits")->check(CLI::NonNegativeNumber);
  analyze_cmd->add_option("--plant-a", plant_a_, "plant eigenvalues (comma separated)")->delimiter(',')->excludes(hl);
  analyze_cmd->add_option("--zero-test-states", zero_states_, "state cap for the zero test");

  auto* entropy_cmd = app.add_subcommand("entropy", "Perron value and topological entropy");
  channel_opt(entropy_cmd);
  entropy_cmd->add_option("--tol", tol_, "relative stopping tolerance")->check(CLI::PositiveNumber);

  auto* zt_cmd = app.add_subcommand("zero-test", "decide whether C0f = 0");
  channel_opt(zt_cmd);
  zt_cmd->add_option("--oracle-n", oracle_n_, "brute-force cross-check up to this length");
  zt_cmd->add_option("--zero-test-states", zero_states_, "state cap for the zero test");

  auto* code_cmd = app.add_subcommand("code", "zero-error block codes");
  code_cmd->require_subcommand(1);
  auto* search_cmd = code_cmd->add_subcommand("search", "search for a zero-error code");
  channel_opt(search_cmd);
  search_cmd->add_option("--n", block_n_, "block length")->required()->check(CLI::PositiveNumber);
  search_cmd->add_flag("--exact", exact_, "maximum independent set instead of greedy");
  search_cmd->add_option("--exact-cap", exact_cap_, "vertex cap for exact search");

  auto* fcode_cmd = app.add_subcommand("fcode", "zero-error feedback codes");
  fcode_cmd->require_subcommand(1);
  auto* build_cmd = fcode_cmd->add_subcommand("build", "build a staged feedback code");
  channel_opt(build_cmd);
  build_cmd->add_option("--messages", messages_, "number of messages M")->required();
  build_cmd->add_option("--max-n", max_n_, "largest block length tried for the final stage");
  build_cmd->add_option("--exact-cap", exact_cap_, "vertex cap for exact search");
  build_cmd->add_option("--zero-test-states", zero_states_, "state cap for the zero test");
  auto* verify_cmd = fcode_cmd->add_subcommand("verify", "exhaustively verify a feedback code");
  verify_cmd->add_option("--spec", spec_path_, "feedback code JSON")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--priming", priming_, "longest priming walk for the uniformity check");

  auto* sim_cmd = app.add_subcommand("sim", "closed-loop simulations");
  sim_cmd->require_subcommand(1);
  std::vector<CLI::App*> sims{sim_cmd->add_subcommand("est", "state estimation"),
                              sim_cmd->add_subcommand("ctl", "stabilization")};
  for (auto* s : sims) {
    channel_opt(s);
    s->add_option("--a", a_, "plant diagonal (comma separated)")->delimiter(',')->required();
    s->add_option("--b", b_, "input gains (comma separated, default 1)")->delimiter(',');
    s->add_option("--D", D_, "plant noise bound")->check(CLI::NonNegativeNumber);
    s->add_option("--Dx", Dx_, "initial state bound")->check(CLI::PositiveNumber);
    s->add_option("--r", r_, "epoch length")->check(CLI::PositiveNumber);
    s->add_option("--rho", rho_, "target contraction rate in (0, 1)");
    s->add_option("--T", T_, "horizon");
    s->add_option("--policy", policy_, "random | greedy | exhaustive");
    s->add_option("--seeds", seeds_n_, "number of seeds, starting at --seed");
    s->add_option("--trace", trace_path_, "CSV trace of the first run");
    s->add_option("--summary", summary_path_, "summary JSON");
    s->add_option("--plant-noise", plant_noise_, "uniform | extremes | max_positive");
    s->add_option("--exhaustive-epochs", exhaustive_epochs_, "epochs branched under the exhaustive policy");
    s->add_option("--code", code_path_, "feedback code JSON to use instead of building one")->check(CLI::ExistingFile);
    s->add_option("--delta-star", delta_star_, "override delta_*");
    s->add_option("--delta1", delta_1_, "override delta_1");
    s->add_option("--gamma", gamma_, "override gamma");
    s->add_option("--zero-test-states", zero_states_, "state cap for the zero test");
  }

  auto* oracle_cmd = app.add_subcommand("oracle", "cross-check library results against brute force");
  oracle_cmd->add_option("--channel", channels_, "channel files or names (repeatable)");
  oracle_cmd->add_flag("--bundled", bundled_, "include every bundled channel");
  oracle_cmd->add_option("--n", oracle_n_, "largest sequence length checked");
  oracle_cmd->add_flag("--inject-fault", inject_fault_, "add a corrupted copy of each channel");

  auto* examples_cmd = app.add_subcommand("examples", "write bundled channels and expected results");
  examples_cmd->add_option("--dir", dir_, "output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out_, err_);
    return code == 0 ? 0 : 2;
  }

  auto pick = [&](CLI::App* s) { return s->parsed(); };
  try {
    if (pick(analyze_cmd)) {
      active_ = analyze_cmd, command_ = "analyze";
      cmd_analyze();
    } else if (pick(entropy_cmd)) {
      active_ = entropy_cmd, command_ = "entropy";
      cmd_entropy();
    } else if (pick(zt_cmd)) {
      active_ = zt_cmd, command_ = "zero-test";
      cmd_zero_test();
    } else if (pick(search_cmd)) {
      active_ = search_cmd, command_ = "code search";
      cmd_code_search();
    } else if (pick(build_cmd)) {
      active_ = build_cmd, command_ = "fcode build";
      cmd_fcode_build();
    } else if (pick(verify_cmd)) {
      active_ = verify_cmd, command_ = "fcode verify";
      cmd_fcode_verify();
    } else if (pick(sims[0])) {
      active_ = sims[0], command_ = "sim est";
      cmd_sim(Scheme::estimation);
    } else if (pick(sims[1])) {
      active_ = sims[1], command_ = "sim ctl";
      cmd_sim(Scheme::stabilization);
    } else if (pick(oracle_cmd)) {
      active_ = oracle_cmd, command_ = "oracle";
      cmd_oracle();
    } else if (pick(examples_cmd)) {
      active_ = examples_cmd, command_ = "examples";
      cmd_examples();
    }
  } catch (const ExitStatus& s) {
    return s.code;
  } catch (const Refusal& e) {
    err_ << "zec: " << e.what() << "\n";
    if (g_.json_out) out_ << canonical_dump({{"refused", true}, {"margin", e.margin()}, {"reason", e.what()}});
    return e.exit_code();
  } catch (const Error& e) {
    err_ << "zec: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err_ << "zec: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Runner r(out, err);
  return r.run(args);
}

}  // namespace zec::cli
