#include "zec/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "zec/capacity.hpp"
#include "zec/error.hpp"

namespace zec {

double LtiSystem::norm_a() const {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

void validate_system(const LtiSystem& sys, bool stabilizing) {
  if (sys.a.empty()) throw InputError("plant: dynamics must have at least one axis");
  if (sys.b.size() != sys.a.size()) throw InputError("plant: a and b must have the same number of axes");
  for (std::size_t i = 0; i < sys.a.size(); ++i) {
    if (!std::isfinite(sys.a[i]) || !std::isfinite(sys.b[i])) throw InputError("plant: a and b must be finite");
    if (stabilizing && std::abs(sys.a[i]) >= 1 && sys.b[i] == 0)
      throw InputError("plant: axis " + std::to_string(i) + " is unstable but has b = 0 (not stabilizable)");
  }
  if (!(sys.D_x > 0) || !std::isfinite(sys.D_x)) throw InputError("plant: D_x must be positive");
  if (!(sys.D >= 0) || !std::isfinite(sys.D)) throw InputError("plant: D must be non-negative");
}

double lin_topological_entropy(const LtiSystem& sys) {
  double h = 0;
  for (double v : sys.a)
    if (std::abs(v) >= 1) h += std::log2(std::abs(v));
  return h;
}

// ---------------------------------------------------------------------------
// Quantizer

Quantizer build_contracted_quantizer(const LtiSystem& sys, std::size_t r, double rho_target) {
  validate_system(sys, false);
  if (r == 0) throw InputError("quantizer: r must be at least 1");
  if (!(rho_target > 0 && rho_target < 1)) throw InputError("quantizer: rho must lie in (0, 1)");
  Quantizer qz;
  qz.r = r;
  qz.rho_target = rho_target;
  for (double a : sys.a) {
    double grow = std::pow(std::abs(a), static_cast<double>(r));
    double want = std::ceil(grow / rho_target);
    if (want > 1e15) throw GuardExceeded("quantizer: level count overflows");
    auto levels = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(want));
    qz.levels.push_back(levels);
    if (qz.M > (std::uint64_t{1} << 62) / levels) throw GuardExceeded("quantizer: level count overflows");
    qz.M *= levels;
    qz.rho = std::max(qz.rho, grow / static_cast<double>(levels));
  }
  return qz;
}

QuantizedValue quantize(const Quantizer& qz, const Vec& eps) {
  if (eps.size() != qz.levels.size()) throw InputError("quantize: dimension mismatch");
  QuantizedValue out;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(std::abs(eps[i]) <= 1 + 1e-12))
      throw ContractViolation("quantize: scaled value " + std::to_string(eps[i]) + " outside the unit ball");
    auto levels = qz.levels[i];
    double w = 2.0 / static_cast<double>(levels);
    double pos = std::floor((std::clamp(eps[i], -1.0, 1.0) + 1) / w);
    auto k = static_cast<std::uint64_t>(std::clamp(pos, 0.0, static_cast<double>(levels - 1)));
    out.index = out.index * levels + k;
    out.centroid.push_back(-1 + (static_cast<double>(k) + 0.5) * w);
  }
  return out;
}

Vec centroid_of(const Quantizer& qz, std::uint64_t index) {
  if (index >= qz.M) throw InputError("centroid_of: index out of range");
  Vec c(qz.levels.size());
  for (std::size_t i = qz.levels.size(); i-- > 0;) {
    auto levels = qz.levels[i];
    auto k = index % levels;
    index /= levels;
    double w = 2.0 / static_cast<double>(levels);
    c[i] = -1 + (static_cast<double>(k) + 0.5) * w;
  }
  return c;
}

std::vector<Vec> deadbeat_program(const LtiSystem& sys, const Vec& xhat) {
  if (xhat.size() != sys.dim()) throw InputError("deadbeat: dimension mismatch");
  std::vector<Vec> program(sys.dim(), Vec(sys.dim(), 0.0));
  for (std::size_t i = 0; i < sys.dim(); ++i) {
    if (sys.b[i] != 0) {
      program[0][i] = -(sys.a[i] / sys.b[i]) * xhat[i] + 0.0;  // no negative zero
    } else if (std::abs(sys.a[i]) >= 1 && xhat[i] != 0) {
      throw InputError("deadbeat: axis " + std::to_string(i) + " is unstable with b = 0");
    }
  }
  return program;
}

// ---------------------------------------------------------------------------
// Signaling

Signaling signaling_alphabet(const LtiSystem& sys, std::size_t y_count, double margin) {
  validate_system(sys, false);
  if (y_count == 0) throw InputError("signaling: need at least one symbol");
  if (!(margin > 0)) throw InputError("signaling: margin must be positive");
  Signaling sig;
  double best = 0;
  for (std::size_t i = 0; i < sys.dim(); ++i)
    if (std::abs(sys.b[i]) > best) best = std::abs(sys.b[i]), sig.axis = i;
  if (best == 0) throw InputError("signaling: every input gain is zero");
  sig.spacing = std::max(2 * sys.D * (1 + margin), kSignalingFloor);
  for (std::size_t y = 0; y < y_count; ++y)
    sig.offsets.push_back(static_cast<double>(y) * sig.spacing / sys.b[sig.axis]);
  return sig;
}

Recovery recover_y(const LtiSystem& sys, const Signaling& sig, const Vec& x_next, const Vec& x, const Vec& u_basic) {
  const std::size_t k = sig.axis;
  double base = sys.a[k] * x[k] + sys.b[k] * u_basic[k];
  double tol = sys.D + 1e-12 * (1 + std::abs(x_next[k]) + std::abs(base));
  Recovery rec;
  rec.residual = INFINITY;
  int within = 0;
  for (std::size_t y = 0; y < sig.offsets.size(); ++y) {
    double res = std::abs(x_next[k] - (base + sys.b[k] * sig.offsets[y]));
    if (res <= tol) ++within;
    if (res < rec.residual) rec.residual = res, rec.y = static_cast<Symbol>(y);
  }
  rec.ambiguous = within > 1;
  return rec;
}

// ---------------------------------------------------------------------------
// Configuration and bounds

namespace {

double geometric_sum(double g, std::size_t from, std::size_t to) {  // sum_{k=from}^{to-1} g^k
  double s = 0;
  for (std::size_t k = from; k < to; ++k) s += std::pow(g, static_cast<double>(k));
  return s;
}

bool same_graph(const NoiseFsm& a, const NoiseFsm& b) {
  return a.q() == b.q() && a.state_count() == b.state_count() && a.edges() == b.edges();
}

std::size_t code_length_limit(const LtiSystem& sys, std::size_t r, Scheme scheme) {
  if (scheme == Scheme::estimation) return r;
  return r > sys.dim() ? r - sys.dim() : 0;
}

}  // namespace

CoderConfig default_coder_config(const LtiSystem& sys, const NoiseFsm& fsm, std::size_t r, double rho_target,
                                 Scheme scheme, const FeedbackBuildOptions& options) {
  validate_system(sys, scheme == Scheme::stabilization);
  CoderConfig cfg;
  cfg.r = r;
  cfg.rho_target = rho_target;
  cfg.quantizer = build_contracted_quantizer(sys, r, rho_target);
  cfg.gamma = 1.01 * sys.norm_a();
  if (cfg.gamma == 0) cfg.gamma = 0.01;
  double noise = std::max(std::pow(cfg.gamma, static_cast<double>(r)), geometric_sum(cfg.gamma, 0, r));
  cfg.delta_star = sys.D > 0 ? 1.01 * sys.D * noise : 1e-9 * sys.D_x;
  cfg.delta_1 = 1.01 * sys.D_x;
  if (cfg.quantizer.M >= 2) {
    cfg.feedback_code = build_feedback_code(fsm, cfg.quantizer.M, options);
  }
  if (scheme == Scheme::stabilization) cfg.signaling = signaling_alphabet(sys, static_cast<std::size_t>(fsm.q()));
  return cfg;
}

void check_coder_config(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, Scheme scheme) {
  validate_system(sys, scheme == Scheme::stabilization);
  if (cfg.r == 0) throw InputError("config: r must be at least 1");
  if (cfg.quantizer.r != cfg.r || cfg.quantizer.levels.size() != sys.dim())
    throw InputError("config: quantizer does not match r or the plant dimension");
  if (!(cfg.quantizer.rho > 0 && cfg.quantizer.rho < 1)) throw InputError("config: quantizer rho must lie in (0, 1)");
  if (!(cfg.gamma > sys.norm_a())) throw InputError("config: gamma must exceed |A|");
  if (!(cfg.delta_1 > sys.D_x)) throw InputError("config: delta_1 must exceed D_x");
  double dgr = sys.D * std::pow(cfg.gamma, static_cast<double>(cfg.r));
  if (!(cfg.delta_star > dgr) || !(cfg.delta_star > 0)) throw InputError("config: delta_* must exceed D gamma^r");
  double acc = 0;
  for (double a : sys.a) acc = std::max(acc, sys.D * geometric_sum(std::abs(a), 0, cfg.r));
  if (!(cfg.delta_star > acc))
    throw InputError("config: delta_* must exceed the r-step noise accumulation " + std::to_string(acc));
  if (cfg.quantizer.M >= 2) {
    if (!cfg.feedback_code) throw InputError("config: a feedback code is required");
    const auto& spec = *cfg.feedback_code;
    if (!same_graph(spec.channel, fsm)) throw InputError("config: feedback code was built for a different channel");
    if (spec.message_count < cfg.quantizer.M)
      throw InputError("config: feedback code carries " + std::to_string(spec.message_count) + " messages, quantizer needs " +
                       std::to_string(cfg.quantizer.M));
    std::size_t limit = code_length_limit(sys, cfg.r, scheme);
    if (spec.total_length > limit)
      throw InputError("config: feedback code length " + std::to_string(spec.total_length) + " exceeds the limit " +
                       std::to_string(limit) + (scheme == Scheme::stabilization ? " (r - n_x)" : " (r)"));
  }
  if (scheme == Scheme::stabilization) {
    const auto& sig = cfg.signaling;
    if (sig.axis >= sys.dim() || sys.b[sig.axis] == 0) throw InputError("config: signaling axis has no input gain");
    if (sig.offsets.size() < static_cast<std::size_t>(fsm.q())) throw InputError("config: signaling alphabet too small");
    for (std::size_t y = 1; y < sig.offsets.size(); ++y) {
      double sep = std::abs(sys.b[sig.axis] * (sig.offsets[y] - sig.offsets[y - 1]));
      if (!(sep > 2 * sys.D)) throw InputError("config: signaling offsets are not separated by more than 2D");
    }
  }
}

BoundReport theoretical_bounds(const LtiSystem& sys, const CoderConfig& cfg, Scheme scheme) {
  BoundReport b;
  const double rho = cfg.quantizer.rho;
  const std::size_t r = cfg.r;
  b.delta_ceiling = cfg.delta_1 + cfg.delta_star / (1 - rho);
  for (double a : sys.a) {
    double s = 0;
    for (std::size_t k = 1; k < r; ++k) s += std::pow(a, static_cast<double>(k));
    b.D_r = std::max(b.D_r, sys.D * std::abs(s));
    b.noise_accumulation = std::max(b.noise_accumulation, sys.D * geometric_sum(std::abs(a), 0, r));
  }
  b.estimation_ceiling = rho * b.delta_ceiling + b.noise_accumulation;
  const double e_max = std::max(sys.D_x, b.estimation_ceiling);

  if (scheme == Scheme::estimation) {
    b.boundary_ceiling = e_max;
    for (double a : sys.a) {
      double g = std::abs(a);
      for (std::size_t j = 0; j < r; ++j)
        b.intra_epoch_ceiling =
            std::max(b.intra_epoch_ceiling, std::pow(g, static_cast<double>(j)) * e_max + sys.D * geometric_sum(g, 0, j));
    }
    return b;
  }

  std::size_t L = cfg.feedback_code ? cfg.feedback_code->total_length : 0;
  std::size_t last = r > sys.dim() ? r - sys.dim() : 0;  // offset of the canceling slot
  double comm_step = cfg.signaling.offsets.empty()
                         ? 0
                         : std::abs(sys.b[cfg.signaling.axis] * cfg.signaling.offsets.back());
  for (std::size_t i = 0; i < sys.dim(); ++i) {
    double g = std::abs(sys.a[i]);
    if (sys.b[i] == 0) {
      // Uncontrolled stable axis.
      double bound = sys.D_x + sys.D / (1 - g);
      b.boundary_ceiling = std::max(b.boundary_ceiling, bound);
      b.intra_epoch_ceiling = std::max(b.intra_epoch_ceiling, bound);
      continue;
    }
    double boundary = std::max(sys.D_x, std::pow(g, static_cast<double>(r)) * e_max + sys.D * geometric_sum(g, 0, r));
    b.boundary_ceiling = std::max(b.boundary_ceiling, boundary);
    b.intra_epoch_ceiling = std::max(b.intra_epoch_ceiling, boundary);
    for (std::size_t j = 1; j < r; ++j) {
      double comm = 0;
      if (i == cfg.signaling.axis && j <= last)
        for (std::size_t th = 0; th < std::min(j, L); ++th) comm += std::pow(g, static_cast<double>(j - 1 - th)) * comm_step;
      double v = std::pow(g, static_cast<double>(j)) * e_max + comm + sys.D * geometric_sum(g, 0, j);
      b.intra_epoch_ceiling = std::max(b.intra_epoch_ceiling, v);
    }
  }
  return b;
}

double require_scheme_margin(const LtiSystem& sys, const NoiseFsm& fsm) {
  double h_lin = lin_topological_entropy(sys);
  auto rep = analyze(fsm, h_lin);
  char buf[256];
  if (rep.is_zero) {
    std::snprintf(buf, sizeof buf,
                  "refused: zero-error feedback capacity is zero (zero test: no unwalkable difference sequence), "
                  "so C0f = 0 <= h_lin = %.6f",
                  h_lin);
    throw Refusal(buf, -h_lin);
  }
  double margin = *rep.margin;
  if (!(margin > 0) || rep.boundary) {
    std::snprintf(buf, sizeof buf,
                  "refused: h_lin + h_ch >= log2 q (h_lin = %.6f, h_ch = %.6f, log2 q = %.6f, margin = %.6f); "
                  "C0f = %.6f does not exceed h_lin",
                  h_lin, rep.h_ch, rep.log2_q, margin, rep.c0f);
    throw Refusal(buf, margin);
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

using Mask = std::uint64_t;

Mask step_mask(const NoiseFsm& fsm, Mask m, Symbol z) {
  Mask out = 0;
  for (StateIndex s = 0; s < fsm.state_count(); ++s)
    if (m >> s & 1)
      if (const Edge* e = fsm.edge_for(s, z)) out |= Mask{1} << e->to;
  return out;
}

Vec draw_noise(const LtiSystem& sys, PlantNoise kind, std::mt19937_64& rng) {
  Vec v(sys.dim());
  std::uniform_real_distribution<double> uni(-sys.D, sys.D);
  std::bernoulli_distribution coin(0.5);
  for (auto& x : v) {
    switch (kind) {
      case PlantNoise::uniform: x = sys.D > 0 ? uni(rng) : 0; break;
      case PlantNoise::extremes: x = coin(rng) ? sys.D : -sys.D; break;
      case PlantNoise::max_positive: x = sys.D; break;
    }
  }
  return v;
}

double inf_norm(const Vec& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Every noise walk of length r from every start state for message m; returns
// the number of walks and counts those that do not decode to m.
void exhaustive_epoch(const NoiseFsm& fsm, const FeedbackCodeSpec& spec, std::uint64_t m, std::size_t r,
                      SimSummary& summary) {
  const std::size_t L = spec.total_length;
  Word outputs(L);
  std::function<void(StateIndex, const FeedbackEncoder&, std::size_t, bool)> rec =
      [&](StateIndex s, const FeedbackEncoder& enc, std::size_t depth, bool ok) {
        if (depth == L && L > 0) {
          auto d = decode_feedback(spec, outputs);
          ok = d.ok && d.message == m;
        }
        if (depth == r) {
          ++summary.exhaustive_branches;
          if (!ok) ++summary.exhaustive_failures;
          return;
        }
        for (const Edge& e : fsm.out_edges(s)) {
          if (depth < L) {
            outputs[depth] = (enc.next_input() + e.label) % fsm.q();
            FeedbackEncoder next = enc;
            next.observe_output(outputs[depth]);
            rec(e.to, next, depth + 1, ok);
          } else {
            rec(e.to, enc, depth + 1, ok);
          }
        }
      };
  for (StateIndex s = 0; s < fsm.state_count(); ++s) rec(s, FeedbackEncoder(spec, m), 0, L == 0);
}

struct Candidate {
  std::uint64_t m;
  FeedbackEncoder enc;
  Mask states;
};

class Simulator {
 public:
  Simulator(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, NoisePolicy policy, const SimOptions& opt,
            Scheme scheme)
      : sys_(sys), fsm_(fsm), cfg_(cfg), policy_(std::move(policy)), opt_(opt), scheme_(scheme), rng_(opt.seed),
        channel_(fsm, 0) {
    if (fsm.state_count() > 63) throw GuardExceeded("simulation: channels above 63 states are not supported");
    check_coder_config(sys, fsm, cfg, scheme);
    trace_.summary.scheme = scheme;
    trace_.summary.margin = require_scheme_margin(sys, fsm);
    trace_.summary.bounds = theoretical_bounds(sys, cfg, scheme);
    std::uniform_int_distribution<StateIndex> pick(0, fsm.state_count() - 1);
    channel_.current = opt.channel_start ? *opt.channel_start : pick(rng_);
    if (channel_.current >= fsm.state_count()) throw InputError("simulation: channel start state out of range");
    if (opt.x1) {
      if (opt.x1->size() != sys.dim() || inf_norm(*opt.x1) > sys.D_x)
        throw InputError("simulation: x1 must match the plant dimension and satisfy |x1| <= D_x");
      x1_ = *opt.x1;
    } else {
      std::uniform_real_distribution<double> uni(-sys.D_x, sys.D_x);
      x1_.resize(sys.dim());
      for (auto& x : x1_) x = uni(rng_);
    }
    code_len_ = cfg.feedback_code ? cfg.feedback_code->total_length : 0;
    for (std::uint64_t m = 0; m < cfg.quantizer.M; ++m) centroids_.push_back(centroid_of(cfg.quantizer, m));
  }

  SimTrace run(std::size_t T);

 private:
  // Decoder-side candidate messages given the outputs seen so far in the epoch.
  void reset_candidates() {
    candidates_.clear();
    if (!cfg_.feedback_code) return;
    Mask all = fsm_.state_count() == 64 ? ~Mask{0} : (Mask{1} << fsm_.state_count()) - 1;
    for (std::uint64_t m = 0; m < cfg_.quantizer.M; ++m)
      candidates_.push_back({m, FeedbackEncoder(*cfg_.feedback_code, m), all});
  }

  std::pair<double, std::size_t> candidate_spread(Symbol y, bool commit) {
    std::vector<std::uint64_t> alive;
    std::vector<Candidate> kept;
    for (auto& c : candidates_) {
      Symbol z = ((y - c.enc.next_input()) % fsm_.q() + fsm_.q()) % fsm_.q();
      Mask next = step_mask(fsm_, c.states, z);
      if (!next) continue;
      alive.push_back(c.m);
      if (commit) {
        c.states = next;
        c.enc.observe_output(y);
        kept.push_back(std::move(c));
      }
    }
    if (commit) candidates_ = std::move(kept);
    double diameter = 0;
    for (std::size_t axis = 0; axis < sys_.dim() && !alive.empty(); ++axis) {
      double lo = INFINITY, hi = -INFINITY;
      for (auto m : alive) lo = std::min(lo, centroids_[m][axis]), hi = std::max(hi, centroids_[m][axis]);
      diameter = std::max(diameter, hi - lo);
    }
    return {diameter, alive.size()};
  }

  void record_epoch_decode(EpochRecord& ep, const Word& outputs) {
    auto d = decode_feedback(*cfg_.feedback_code, outputs);
    ep.decode_ok = d.ok && d.message == ep.sent;
    ep.decoded = d.ok && d.message < cfg_.quantizer.M ? d.message : 0;
    ++trace_.summary.decoded_epochs;
    if (!ep.decode_ok) ++trace_.summary.decode_failures;
  }

  void push_step(StepRecord rec) {
    if (opt_.keep_steps) trace_.steps.push_back(std::move(rec));
  }

  SimTrace run_estimation(std::size_t T);
  SimTrace run_stabilization(std::size_t T);

  const LtiSystem& sys_;
  const NoiseFsm& fsm_;
  const CoderConfig& cfg_;
  NoisePolicy policy_;
  SimOptions opt_;
  Scheme scheme_;
  std::mt19937_64 rng_;
  ChannelState channel_;
  Vec x1_;
  std::size_t code_len_ = 0;
  std::vector<Vec> centroids_;
  std::vector<Candidate> candidates_;
  SimTrace trace_;
};

SimTrace Simulator::run(std::size_t T) {
  return scheme_ == Scheme::estimation ? run_estimation(T) : run_stabilization(T);
}

SimTrace Simulator::run_estimation(std::size_t T) {
  const std::size_t n = sys_.dim(), r = cfg_.r;
  const double rho = cfg_.quantizer.rho;
  auto& sum = trace_.summary;

  // x and xhat leave double range for long unstable runs; the estimation
  // error is propagated through its own recursion.
  std::vector<long double> x(x1_.begin(), x1_.end()), xhat(n, 0.0L);
  Vec e = x1_;
  Vec ar(n);
  for (std::size_t i = 0; i < n; ++i) ar[i] = std::pow(sys_.a[i], static_cast<double>(r));

  double delta = cfg_.delta_1;
  std::optional<FeedbackEncoder> enc;
  Word outputs;
  Vec pending;  // delta_i * centroid of the decoded index, applied at the next epoch start

  if (policy_.kind() == PolicyKind::adversarial_greedy && !policy_.objective().empty() &&
      policy_.objective() != "diameter")
    throw InputError("estimation adversary objective must be 'diameter'");
  if (policy_.kind() == PolicyKind::adversarial_greedy) {
    policy_.set_scorer([this, &enc](const ChannelState&, const Edge& edge) {
      if (!enc || enc->done()) return 0.0;
      Symbol y = (enc->next_input() + edge.label) % fsm_.q();
      auto [diameter, count] = candidate_spread(y, false);
      return std::round(diameter * 1e6) * 1e6 + static_cast<double>(count);
    });
  }

  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t i = (t - 1) / r, j = (t - 1) % r;
    if (j == 0) {
      if (i > 0) {
        for (std::size_t k = 0; k < n; ++k) {
          double jump = ar[k] * pending[k];
          e[k] -= jump;
          xhat[k] += static_cast<long double>(jump);
        }
        delta = rho * delta + cfg_.delta_star;
      }
      EpochRecord ep;
      ep.index = i;
      ep.tau = t;
      ep.delta = delta;
      ep.boundary_norm = inf_norm(e);
      Vec eps(n);
      for (std::size_t k = 0; k < n; ++k) eps[k] = e[k] / delta;
      ep.eps_norm = inf_norm(eps);
      // Only a wrong decode earlier on can push eps out of the unit ball.
      for (auto& v : eps) v = std::clamp(v, -1.0, 1.0);
      auto qv = quantize(cfg_.quantizer, eps);
      ep.sent = qv.index;
      ep.decoded = qv.index;
      ep.decode_ok = true;
      trace_.epochs.push_back(ep);
      sum.sup_boundary = std::max(sum.sup_boundary, ep.boundary_norm);
      sum.sup_delta = std::max(sum.sup_delta, delta);
      sum.max_eps = std::max(sum.max_eps, ep.eps_norm);
      outputs.clear();
      pending.assign(n, 0.0);
      if (code_len_ > 0) {
        enc.emplace(*cfg_.feedback_code, qv.index);
        if (policy_.kind() == PolicyKind::adversarial_greedy) reset_candidates();
        if (policy_.kind() == PolicyKind::exhaustive && i < opt_.exhaustive_epochs)
          exhaustive_epoch(fsm_, *cfg_.feedback_code, qv.index, r, sum);
      } else {
        enc.reset();
        for (std::size_t k = 0; k < n; ++k) pending[k] = delta * centroids_[qv.index][k];
      }
    }
    sum.sup_all = std::max(sum.sup_all, inf_norm(e));

    StepRecord rec;
    rec.t = t;
    rec.epoch = i;
    rec.x = x;
    rec.xhat = xhat;
    rec.delta = delta;
    rec.s_channel = channel_.current;
    rec.u_basic.assign(n, 0.0);
    rec.u_comm.assign(n, 0.0);

    Symbol input = (enc && !enc->done()) ? enc->next_input() : 0;
    auto step = channel_step(channel_, input, policy_);
    rec.q_in = input;
    rec.y_out = step.output;
    rec.z = step.noise;
    if (enc && !enc->done()) {
      if (policy_.kind() == PolicyKind::adversarial_greedy) candidate_spread(step.output, true);
      enc->observe_output(step.output);  // explicit unit-delay feedback
      outputs.push_back(step.output);
      if (enc->done()) {
        auto& ep = trace_.epochs.back();
        record_epoch_decode(ep, outputs);
        rec.decode_ok = ep.decode_ok;
        for (std::size_t k = 0; k < n; ++k) pending[k] = delta * centroids_[ep.decoded][k];
      }
    }
    push_step(std::move(rec));

    Vec v = draw_noise(sys_, opt_.plant_noise, rng_);
    for (std::size_t k = 0; k < n; ++k) {
      e[k] = sys_.a[k] * e[k] + v[k];
      x[k] = static_cast<long double>(sys_.a[k]) * x[k] + v[k];
      xhat[k] = static_cast<long double>(sys_.a[k]) * xhat[k];
    }
    ++sum.steps;
  }
  sum.epochs = trace_.epochs.size();
  const auto& b = sum.bounds;
  sum.violated = sum.decode_failures > 0 || sum.exhaustive_failures > 0 || sum.sup_boundary > b.boundary_ceiling ||
                 sum.sup_all > b.intra_epoch_ceiling || !(sum.sup_delta < b.delta_ceiling) || sum.max_eps > 1;
  return std::move(trace_);
}

SimTrace Simulator::run_stabilization(std::size_t T) {
  const std::size_t n = sys_.dim(), r = cfg_.r;
  const std::size_t cancel_at = r - n;  // offset of the canceling slot
  const double rho = cfg_.quantizer.rho;
  const auto& sig = cfg_.signaling;
  auto& sum = trace_.summary;

  Vec x = x1_;
  Vec ar(n), ar1(n);
  for (std::size_t k = 0; k < n; ++k) {
    ar[k] = std::pow(sys_.a[k], static_cast<double>(r));
    ar1[k] = std::pow(sys_.a[k], static_cast<double>(r - 1));
  }

  double delta = cfg_.delta_1;
  Vec pred(n, 0.0);      // controller's prediction of x at the epoch start
  Vec enc_pred(n, 0.0);  // encoder's copy, built from the index it sent
  Vec next_pred(n, 0.0), enc_next_pred(n, 0.0);
  Vec xhat(n, 0.0);      // controller's noise-free propagation inside the epoch
  Vec ub_tau(n, 0.0);
  Vec xi(n, 0.0);        // influence of communication controls so far
  Vec resid(n, 0.0), scale(n, 0.0);
  std::optional<FeedbackEncoder> enc;
  Word outputs;
  std::uint64_t sent = 0;

  if (policy_.kind() == PolicyKind::adversarial_greedy && !policy_.objective().empty() &&
      policy_.objective() != "state")
    throw InputError("stabilization adversary objective must be 'state'");

  Vec u_basic(n, 0.0), u_comm(n, 0.0);
  std::size_t cur_j = 0;
  if (policy_.kind() == PolicyKind::adversarial_greedy) {
    policy_.set_scorer([&](const ChannelState&, const Edge& edge) {
      Vec uc = u_comm;
      if (enc && !enc->done() && cur_j < code_len_) {
        Symbol y = (enc->next_input() + edge.label) % fsm_.q();
        uc[sig.axis] = sig.offsets[y];
      }
      double m = 0;
      for (std::size_t k = 0; k < n; ++k)
        m = std::max(m, std::abs(sys_.a[k] * x[k] + sys_.b[k] * (u_basic[k] + uc[k])));
      return m;
    });
  }

  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t i = (t - 1) / r, j = (t - 1) % r;
    cur_j = j;
    if (j == 0) {
      if (i > 0) {
        // Close the previous epoch.
        auto& prev = trace_.epochs.back();
        double worst = 0;
        for (std::size_t k = 0; k < n; ++k)
          if (scale[k] > 0) worst = std::max(worst, std::abs(resid[k]) / scale[k]);
        prev.comm_residual = worst;
        sum.max_comm_residual = std::max(sum.max_comm_residual, worst);
        pred = next_pred;
        enc_pred = enc_next_pred;
        delta = rho * delta + cfg_.delta_star;
      }
      EpochRecord ep;
      ep.index = i;
      ep.tau = t;
      ep.delta = delta;
      ep.boundary_norm = inf_norm(x);
      Vec eps(n);
      for (std::size_t k = 0; k < n; ++k) eps[k] = (x[k] - enc_pred[k]) / delta;
      ep.eps_norm = inf_norm(eps);
      // Only a wrong decode earlier on can push eps out of the unit ball.
      for (auto& v : eps) v = std::clamp(v, -1.0, 1.0);
      auto qv = quantize(cfg_.quantizer, eps);
      sent = qv.index;
      ep.sent = sent;
      ep.decoded = sent;
      ep.decode_ok = true;
      trace_.epochs.push_back(ep);
      sum.sup_boundary = std::max(sum.sup_boundary, ep.boundary_norm);
      sum.sup_delta = std::max(sum.sup_delta, delta);
      sum.max_eps = std::max(sum.max_eps, ep.eps_norm);

      // Deadbeat on the prediction; zero in the bootstrap epoch.
      ub_tau = deadbeat_program(sys_, pred)[0];
      std::fill(xi.begin(), xi.end(), 0.0);
      std::fill(resid.begin(), resid.end(), 0.0);
      std::fill(scale.begin(), scale.end(), 0.0);
      xhat = pred;
      outputs.clear();
      for (std::size_t k = 0; k < n; ++k) {
        enc_next_pred[k] = ar[k] * (enc_pred[k] + delta * qv.centroid[k]) + ar1[k] * sys_.b[k] * ub_tau[k];
        next_pred[k] = enc_next_pred[k];  // replaced on decoding
      }
      if (code_len_ > 0) {
        enc.emplace(*cfg_.feedback_code, sent);
        if (policy_.kind() == PolicyKind::exhaustive && i < opt_.exhaustive_epochs)
          exhaustive_epoch(fsm_, *cfg_.feedback_code, sent, r, sum);
      } else {
        enc.reset();
      }
    }
    sum.sup_all = std::max(sum.sup_all, inf_norm(x));

    u_basic = j == 0 ? ub_tau : Vec(n, 0.0);
    std::fill(u_comm.begin(), u_comm.end(), 0.0);
    if (j == cancel_at)
      for (std::size_t k = 0; k < n; ++k)
        if (sys_.b[k] != 0) u_comm[k] = -(sys_.a[k] / sys_.b[k]) * xi[k];

    StepRecord rec;
    rec.t = t;
    rec.epoch = i;
    rec.x.assign(x.begin(), x.end());
    rec.xhat.assign(xhat.begin(), xhat.end());
    rec.delta = delta;
    rec.s_channel = channel_.current;

    const bool coding = enc && !enc->done() && j < code_len_;
    Symbol input = coding ? enc->next_input() : 0;
    auto step = channel_step(channel_, input, policy_);
    rec.q_in = input;
    rec.y_out = step.output;
    rec.z = step.noise;
    if (coding) {
      u_comm[sig.axis] = sig.offsets[step.output];  // controller signals the received symbol
      outputs.push_back(step.output);
      if (outputs.size() == code_len_) {
        auto& ep = trace_.epochs.back();
        record_epoch_decode(ep, outputs);
        rec.decode_ok = ep.decode_ok;
        Vec c = centroids_[ep.decoded];
        for (std::size_t k = 0; k < n; ++k)
          next_pred[k] = ar[k] * (pred[k] + delta * c[k]) + ar1[k] * sys_.b[k] * ub_tau[k];
      }
    }
    rec.u_basic = u_basic;
    rec.u_comm = u_comm;

    Vec v = draw_noise(sys_, opt_.plant_noise, rng_);
    Vec x_next(n);
    for (std::size_t k = 0; k < n; ++k) {
      x_next[k] = sys_.a[k] * x[k] + sys_.b[k] * (u_basic[k] + u_comm[k]) + v[k];
      xi[k] = sys_.a[k] * xi[k] + sys_.b[k] * u_comm[k];
      resid[k] = sys_.a[k] * resid[k] + sys_.b[k] * u_comm[k];
      scale[k] = std::abs(sys_.a[k]) * scale[k] + std::abs(sys_.b[k] * u_comm[k]);
      xhat[k] = sys_.a[k] * xhat[k] + sys_.b[k] * (u_basic[k] + u_comm[k]);
    }

    if (coding) {
      // Virtual feedback: the encoder reads y off the state transition.
      auto got = recover_y(sys_, sig, x_next, x, u_basic);
      if (got.ambiguous) ++sum.signaling_ambiguities;
      if (got.y != step.output) ++sum.recovery_errors;
      enc->observe_output(got.y);
      if (enc->done()) {
        // The encoder runs the decoder on what it recovered.
        auto d = decode_feedback(*cfg_.feedback_code, outputs);
        Vec c = centroids_[d.ok && d.message < cfg_.quantizer.M ? d.message : 0];
        for (std::size_t k = 0; k < n; ++k)
          enc_next_pred[k] = ar[k] * (enc_pred[k] + delta * c[k]) + ar1[k] * sys_.b[k] * ub_tau[k];
      }
    }
    push_step(std::move(rec));
    x = std::move(x_next);
    ++sum.steps;
  }
  if (!trace_.epochs.empty() && T % r == 0) {
    auto& last = trace_.epochs.back();
    double worst = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (scale[k] > 0) worst = std::max(worst, std::abs(resid[k]) / scale[k]);
    last.comm_residual = worst;
    sum.max_comm_residual = std::max(sum.max_comm_residual, worst);
  }
  sum.sup_all = std::max(sum.sup_all, inf_norm(x));
  sum.epochs = trace_.epochs.size();
  const auto& b = sum.bounds;
  sum.violated = sum.decode_failures > 0 || sum.exhaustive_failures > 0 || sum.signaling_ambiguities > 0 ||
                 sum.recovery_errors > 0 || sum.sup_boundary > b.boundary_ceiling ||
                 sum.sup_all > b.intra_epoch_ceiling || !(sum.sup_delta < b.delta_ceiling) || sum.max_eps > 1 ||
                 !(sum.max_comm_residual < 1e-9);
  return std::move(trace_);
}

}  // namespace

SimTrace run_estimation(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, NoisePolicy policy,
                        std::size_t T, const SimOptions& options) {
  return Simulator(sys, fsm, cfg, std::move(policy), options, Scheme::estimation).run(T);
}

SimTrace run_stabilization(const LtiSystem& sys, const NoiseFsm& fsm, const CoderConfig& cfg, NoisePolicy policy,
                           std::size_t T, const SimOptions& options) {
  if (cfg.r <= sys.dim()) throw InputError("stabilization: r must exceed the plant dimension");
  return Simulator(sys, fsm, cfg, std::move(policy), options, Scheme::stabilization).run(T);
}

// ---------------------------------------------------------------------------
// Output

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  char buf[64];
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.10Lg", static_cast<long double>(v[k]));
    if (k) s += ';';
    s += buf;
  }
  return s;
}

}  // namespace

std::string trace_csv(const SimTrace& trace, const NoiseFsm& fsm) {
  std::ostringstream os;
  os << "t,epoch,x,xhat,delta,q_in,y_out,z,s_channel,u_basic,u_comm,decode_ok\n";
  char buf[64];
  for (const auto& s : trace.steps) {
    std::snprintf(buf, sizeof buf, "%.10g", s.delta);
    os << s.t << ',' << s.epoch << ',' << join(s.x) << ',' << join(s.xhat) << ',' << buf << ',' << s.q_in << ','
       << s.y_out << ',' << s.z << ',' << fsm.state_name(s.s_channel) << ',' << join(s.u_basic) << ','
       << join(s.u_comm) << ',' << (s.decode_ok < 0 ? "" : std::to_string(s.decode_ok)) << '\n';
  }
  return os.str();
}

nlohmann::json bounds_to_json(const BoundReport& b) {
  return {{"delta_ceiling", b.delta_ceiling},
          {"D_r", b.D_r},
          {"noise_accumulation", b.noise_accumulation},
          {"estimation_ceiling", b.estimation_ceiling},
          {"boundary_ceiling", b.boundary_ceiling},
          {"intra_epoch_ceiling", b.intra_epoch_ceiling}};
}

nlohmann::json summary_to_json(const SimSummary& s) {
  return {{"scheme", s.scheme == Scheme::estimation ? "estimation" : "stabilization"},
          {"steps", s.steps},
          {"epochs", s.epochs},
          {"decoded_epochs", s.decoded_epochs},
          {"decode_failures", s.decode_failures},
          {"signaling_ambiguities", s.signaling_ambiguities},
          {"recovery_errors", s.recovery_errors},
          {"exhaustive_branches", s.exhaustive_branches},
          {"exhaustive_failures", s.exhaustive_failures},
          {"sup_boundary", s.sup_boundary},
          {"sup_all", s.sup_all},
          {"sup_delta", s.sup_delta},
          {"max_eps", s.max_eps},
          {"max_comm_residual", s.max_comm_residual},
          {"margin", s.margin},
          {"bounds", bounds_to_json(s.bounds)},
          {"violated", s.violated}};
}

}  // namespace zec
