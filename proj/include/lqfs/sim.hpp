#pragma once

// Stochastic simulation of the r-th system under LQFS-LB: arrivals go to the
// least-loaded compatible pool with a free server, freed servers take the
// longest compatible queue. Two engines share the routing rules: an
// event-driven CTMC with aggregate per-edge clocks, and the uniformized chain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/linstab.hpp"
#include "lqfs/model.hpp"
#include "lqfs/rng.hpp"
#include "lqfs/spp.hpp"
#include "lqfs/stats.hpp"

namespace lqfs {

enum class Engine { event, uniformized };

inline const char* to_string(Engine e) { return e == Engine::event ? "event" : "uniformized"; }

inline Engine parse_engine(const std::string& s) {
  if (s == "event") return Engine::event;
  if (s == "uniformized") return Engine::uniformized;
  throw InvalidInput("unknown engine '" + s + "' (expected event or uniformized)");
}

// Precomputed rates and centering of the r-th system.
struct SimSystem {
  std::size_t I = 0, J = 0, E = 0;
  double r = 1.0;
  Regime regime = Regime::underload;
  std::vector<std::int64_t> N;       // pool sizes
  std::vector<double> lambda_r;      // per class
  std::vector<double> mu;            // per edge
  std::vector<std::size_t> edge_cls, edge_pool;
  std::vector<std::vector<std::size_t>> class_edges, pool_edges;
  std::vector<double> psi_star;      // per edge, fluid scale
  std::vector<double> beta;
  double rho = 0.0;
  double mu_star = 0.0;
  double total_lambda = 0.0;

  static SimSystem build(const SystemSpec& spec, double r) {
    require_valid(spec);
    if (!(r > 0.0)) throw InvalidInput("scaling parameter r must be positive");
    SimSystem s;
    s.I = spec.num_classes();
    s.J = spec.num_pools();
    s.E = spec.num_edges();
    s.r = r;
    s.beta = spec.beta;
    const auto spp = solve_spp(spec);
    s.rho = spp.rho;
    s.psi_star = spp.psi_star;
    s.regime = spec.scaling ? spec.scaling->regime : Regime::underload;
    if (s.regime == Regime::halfin_whitt) {
      s.lambda_r = hw_load(spec, spp, r).lambda_r;
      for (std::size_t i = 0; i < s.I; ++i)
        if (!(s.lambda_r[i] > 0.0)) throw InvalidInput("arrival rate of class " + spec.classes[i] + " is nonpositive at r = " + std::to_string(r));
    } else {
      s.lambda_r.resize(s.I);
      for (std::size_t i = 0; i < s.I; ++i) s.lambda_r[i] = r * spec.lambda[i];
    }
    s.total_lambda = std::accumulate(s.lambda_r.begin(), s.lambda_r.end(), 0.0);
    s.N.resize(s.J);
    for (std::size_t j = 0; j < s.J; ++j) {
      s.N[j] = std::llround(r * spec.beta[j]);
      if (s.N[j] < 1) throw InvalidInput("pool " + spec.pools[j] + " has no servers at r = " + std::to_string(r));
    }
    s.class_edges.resize(s.I);
    s.pool_edges.resize(s.J);
    for (std::size_t e = 0; e < s.E; ++e) {
      const auto& ed = spec.edges[e];
      s.mu.push_back(ed.mu);
      s.edge_cls.push_back(ed.cls);
      s.edge_pool.push_back(ed.pool);
      s.class_edges[ed.cls].push_back(e);
      s.pool_edges[ed.pool].push_back(e);
      s.mu_star = std::max(s.mu_star, ed.mu);
    }
    return s;
  }

  // Total event rate of the uniformized chain.
  double uniform_rate() const {
    double s = total_lambda;
    for (auto n : N) s += static_cast<double>(n) * mu_star;
    return s;
  }
};

struct SimState {
  std::vector<std::int64_t> Psi;   // per edge
  std::vector<std::int64_t> Q;     // per class
  std::vector<std::int64_t> busy;  // per pool, sum of Psi
  double t = 0.0;
  std::uint64_t events = 0;
  std::uint64_t virtual_events = 0;
};

// Psi_ij(0) = round(r psi*_ij), reduced where a pool would overflow by
// removing servers from the edges that rounding pushed up the most.
inline SimState initial_state(const SimSystem& sys) {
  SimState st;
  st.Psi.resize(sys.E);
  st.Q.assign(sys.I, 0);
  st.busy.assign(sys.J, 0);
  for (std::size_t e = 0; e < sys.E; ++e) st.Psi[e] = std::llround(sys.r * sys.psi_star[e]);
  for (std::size_t j = 0; j < sys.J; ++j) {
    std::int64_t b = 0;
    for (auto e : sys.pool_edges[j]) b += st.Psi[e];
    while (b > sys.N[j]) {
      std::size_t best = sys.pool_edges[j].front();
      double best_up = -std::numeric_limits<double>::infinity();
      for (auto e : sys.pool_edges[j]) {
        if (st.Psi[e] == 0) continue;
        const double up = static_cast<double>(st.Psi[e]) - sys.r * sys.psi_star[e];
        if (up > best_up) {
          best_up = up;
          best = e;
        }
      }
      if (st.Psi[best] == 0) throw Error("initial state repair failed", ExitCode::numeric);
      --st.Psi[best];
      --b;
    }
    st.busy[j] = b;
  }
  return st;
}

// Pool sizes and per-pool busy counts are consistent; no class waits while a
// compatible server is free.
inline bool state_invariants_hold(const SimSystem& sys, const SimState& st) {
  for (std::size_t j = 0; j < sys.J; ++j) {
    std::int64_t b = 0;
    for (auto e : sys.pool_edges[j]) {
      if (st.Psi[e] < 0) return false;
      b += st.Psi[e];
    }
    if (b != st.busy[j] || b > sys.N[j]) return false;
  }
  for (std::size_t i = 0; i < sys.I; ++i) {
    if (st.Q[i] < 0) return false;
    if (st.Q[i] > 0)
      for (auto e : sys.class_edges[i])
        if (st.busy[sys.edge_pool[e]] < sys.N[sys.edge_pool[e]]) return false;
  }
  return true;
}

namespace detail {

// Arrival of class i: least-loaded pool (busy/N, compared exactly) among
// those with a free server; uniform among ties. Queues if none is free.
inline void route_arrival(const SimSystem& sys, SimState& st, std::size_t i, CounterRng& rng) {
  std::size_t chosen = sys.E;
  std::uint64_t ties = 0;
  for (auto e : sys.class_edges[i]) {
    const auto j = sys.edge_pool[e];
    if (st.busy[j] >= sys.N[j]) continue;
    if (chosen == sys.E) {
      chosen = e;
      ties = 1;
      continue;
    }
    const auto k = sys.edge_pool[chosen];
    const std::int64_t lhs = st.busy[j] * sys.N[k], rhs = st.busy[k] * sys.N[j];
    if (lhs < rhs) {
      chosen = e;
      ties = 1;
    } else if (lhs == rhs) {
      ++ties;
      if (rng.below(ties) == 0) chosen = e;
    }
  }
  if (chosen == sys.E) {
    ++st.Q[i];
    return;
  }
  ++st.Psi[chosen];
  ++st.busy[sys.edge_pool[chosen]];
}

// Completion on edge e: the freed server takes the longest compatible queue.
inline void complete_service(const SimSystem& sys, SimState& st, std::size_t e, CounterRng& rng) {
  const auto j = sys.edge_pool[e];
  --st.Psi[e];
  --st.busy[j];
  std::size_t chosen = sys.E;
  std::uint64_t ties = 0;
  std::int64_t longest = 0;
  for (auto f : sys.pool_edges[j]) {
    const auto q = st.Q[sys.edge_cls[f]];
    if (q <= 0) continue;
    if (q > longest) {
      longest = q;
      chosen = f;
      ties = 1;
    } else if (q == longest) {
      ++ties;
      if (rng.below(ties) == 0) chosen = f;
    }
  }
  if (chosen == sys.E) return;
  --st.Q[sys.edge_cls[chosen]];
  ++st.Psi[chosen];
  ++st.busy[j];
}

// Applies the transition selected by u in [0, total): arrivals first, then
// per-edge completions; anything beyond is a virtual transition.
inline void apply_transition(const SimSystem& sys, SimState& st, double u, CounterRng& rng) {
  for (std::size_t i = 0; i < sys.I; ++i) {
    if (u < sys.lambda_r[i]) {
      route_arrival(sys, st, i, rng);
      return;
    }
    u -= sys.lambda_r[i];
  }
  for (std::size_t e = 0; e < sys.E; ++e) {
    const double rate = sys.mu[e] * static_cast<double>(st.Psi[e]);
    if (u < rate) {
      complete_service(sys, st, e, rng);
      return;
    }
    u -= rate;
  }
  ++st.virtual_events;
}

inline double service_rate(const SimSystem& sys, const SimState& st) {
  double s = 0.0;
  for (std::size_t e = 0; e < sys.E; ++e) s += sys.mu[e] * static_cast<double>(st.Psi[e]);
  return s;
}

}  // namespace detail

// Next event of the CTMC by competing exponential clocks.
inline void step_event(const SimSystem& sys, SimState& st, CounterRng& rng) {
  const double total = sys.total_lambda + detail::service_rate(sys, st);
  st.t += rng.exponential(total);
  const double u = rng.uniform() * total;
  detail::apply_transition(sys, st, std::min(u, std::nextafter(total, 0.0)), rng);
  ++st.events;
}

// One transition of the uniformized chain at constant total rate
// sum_i lambda^r_i + sum_j N_j mu*.
inline void step_uniformized(const SimSystem& sys, SimState& st, CounterRng& rng) {
  const double total = sys.uniform_rate();
  st.t += rng.exponential(total);
  detail::apply_transition(sys, st, std::min(rng.uniform() * total, std::nextafter(total, 0.0)), rng);
  ++st.events;
}

struct ScaledSeries {
  double r = 0.0;
  double burn_in = 0.0;
  double sample_dt = 0.0;
  std::uint64_t seed = 0;
  Engine engine = Engine::event;
  Regime regime = Regime::underload;
  std::size_t I = 0, J = 0, E = 0;
  std::vector<double> t;
  std::vector<double> psi_hat;  // row-major, size() x E
  std::vector<double> q_hat;    // size() x I
  std::vector<double> z_hat;    // size() x J
  std::vector<double> beta;
  std::uint64_t events = 0;
  std::uint64_t virtual_events = 0;
  bool invariants_ok = true;

  std::size_t size() const { return t.size(); }
  double psi(std::size_t k, std::size_t e) const { return psi_hat[k * E + e]; }
  double q(std::size_t k, std::size_t i) const { return q_hat[k * I + i]; }
  double z(std::size_t k, std::size_t j) const { return z_hat[k * J + j]; }
};

struct ReplicationOptions {
  bool check_every_event = false;
};

// Simulates to time T from the rounded nominal point and records diffusion-
// scaled observables every sample_dt after burn_in.
inline ScaledSeries run_replication(const SystemSpec& spec, double r, double T, double burn_in, double sample_dt, std::uint64_t seed,
                                    Engine engine, ReplicationOptions opt = {}) {
  if (!(T >= burn_in) || burn_in < 0.0) throw InvalidInput("need 0 <= burn_in <= T");
  if (!(sample_dt > 0.0)) throw InvalidInput("sample_dt must be positive");
  const auto sys = SimSystem::build(spec, r);
  auto st = initial_state(sys);
  CounterRng rng(seed, static_cast<std::uint64_t>(std::llround(r * 1024.0)) ^ (engine == Engine::event ? 0 : 0x8000000000000000ULL));

  ScaledSeries out;
  out.r = r;
  out.burn_in = burn_in;
  out.sample_dt = sample_dt;
  out.seed = seed;
  out.engine = engine;
  out.regime = sys.regime;
  out.I = sys.I;
  out.J = sys.J;
  out.E = sys.E;
  out.beta = sys.beta;
  const double sr = std::sqrt(r);

  auto record = [&](double time) {
    out.t.push_back(time);
    for (std::size_t e = 0; e < sys.E; ++e) out.psi_hat.push_back((static_cast<double>(st.Psi[e]) - r * sys.psi_star[e]) / sr);
    for (std::size_t i = 0; i < sys.I; ++i) out.q_hat.push_back(static_cast<double>(st.Q[i]) / sr);
    for (std::size_t j = 0; j < sys.J; ++j) {
      const double centre = sys.regime == Regime::halfin_whitt ? static_cast<double>(sys.N[j]) : r * sys.beta[j] * sys.rho;
      out.z_hat.push_back((static_cast<double>(st.busy[j]) - centre) / sr);
    }
  };

  const auto nsamples = burn_in < T ? static_cast<std::size_t>(std::floor((T - burn_in) / sample_dt + 1e-9)) : 0;
  std::size_t next = 1;
  auto sample_time = [&](std::size_t k) { return burn_in + static_cast<double>(k) * sample_dt; };
  // State is piecewise constant: sample times falling before the next
  // transition see the current state.
  while (true) {
    const double total = engine == Engine::event ? sys.total_lambda + detail::service_rate(sys, st) : sys.uniform_rate();
    const double t_next = st.t + rng.exponential(total);
    while (next <= nsamples && sample_time(next) < t_next) {
      record(sample_time(next));
      ++next;
    }
    if (t_next >= T) break;
    st.t = t_next;
    const double u = rng.uniform() * total;
    detail::apply_transition(sys, st, std::min(u, std::nextafter(total, 0.0)), rng);
    ++st.events;
    if (opt.check_every_event && !state_invariants_hold(sys, st)) out.invariants_ok = false;
  }
  out.events = st.events;
  out.virtual_events = st.virtual_events;
  return out;
}

// Fraction of samples with Euclidean norm of the scaled edge deviations <= K.
inline double mass_in_ball(const ScaledSeries& s, double K) {
  if (s.size() == 0) throw InvalidInput("mass_in_ball needs a nonempty sample");
  std::size_t inside = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double n2 = 0.0;
    for (std::size_t e = 0; e < s.E; ++e) n2 += s.psi(k, e) * s.psi(k, e);
    if (std::sqrt(n2) <= K) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(s.size());
}

inline std::vector<double> ball_indicator(const ScaledSeries& s, double K) {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    double n2 = 0.0;
    for (std::size_t e = 0; e < s.E; ++e) n2 += s.psi(k, e) * s.psi(k, e);
    out[k] = std::sqrt(n2) <= K ? 1.0 : 0.0;
  }
  return out;
}

// 2 min_i lambda_i / (sum_i lambda_i + max mu * sum_j beta_j).
inline double theta0(const SystemSpec& spec) {
  const double lmin = *std::min_element(spec.lambda.begin(), spec.lambda.end());
  const double lsum = std::accumulate(spec.lambda.begin(), spec.lambda.end(), 0.0);
  double mu_max = 0.0;
  for (const auto& e : spec.edges) mu_max = std::max(mu_max, e.mu);
  return 2.0 * lmin / (lsum + mu_max * spec.total_beta());
}

// Sample values of sum_i exp(theta Q_i) + sum_j beta_j exp(theta Z_j / beta_j).
inline std::vector<double> lyapunov_values(const ScaledSeries& s, double theta) {
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    double v = 0.0;
    for (std::size_t i = 0; i < s.I; ++i) v += std::exp(theta * s.q(k, i));
    for (std::size_t j = 0; j < s.J; ++j) v += s.beta[j] * std::exp(theta * s.z(k, j) / s.beta[j]);
    out[k] = v;
  }
  return out;
}

// Empirical mean of the Lyapunov function; +inf if any term overflows.
inline Estimate lyapunov_moment(const ScaledSeries& s, double theta) {
  if (s.regime != Regime::halfin_whitt) throw RegimeError("lyapunov_moment expects Halfin-Whitt samples");
  if (s.size() == 0) throw InvalidInput("lyapunov_moment needs a nonempty sample");
  const auto v = lyapunov_values(s, theta);
  for (double x : v)
    if (!std::isfinite(x)) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  return batch_means(v);
}

// Stationary law of the one-dimensional limit for mu_ij = mu_j systems:
// drift -kappa (c + min(x, 0)) and variance s, with kappa = sum beta_j mu_j /
// sum beta_j, c = C sum beta_j, s = 2 sum lambda_i. Exponential with rate
// 2 kappa c / s on x >= 0, Gaussian with mean -c and variance s/(2 kappa) on
// x <= 0, joined continuously at 0.
struct ConcatenatedDensity {
  double kappa = 0.0, c = 0.0, s = 0.0;

  double gamma() const { return 2.0 * kappa * c / s; }
  double sigma() const { return std::sqrt(s / (2.0 * kappa)); }
  // Unnormalized Gaussian mass on x <= 0 together with the exponential mass.
  double gauss_mass() const {
    const double sg = sigma(), z = c / sg;
    return sg * std::sqrt(2.0 * M_PI) * 0.5 * std::erfc(-z / std::sqrt(2.0)) * std::exp(0.5 * z * z);
  }
  double norm() const { return 1.0 / gamma() + gauss_mass(); }

  double pdf(double x) const {
    if (x >= 0.0) return std::exp(-gamma() * x) / norm();
    const double sg = sigma();
    return std::exp(-((x + c) * (x + c) - c * c) / (2.0 * sg * sg)) / norm();
  }
  double cdf(double x) const {
    const double sg = sigma(), z = c / sg;
    if (x <= 0.0)
      return sg * std::sqrt(2.0 * M_PI) * 0.5 * std::erfc(-(x + c) / (sg * std::sqrt(2.0))) * std::exp(0.5 * z * z) / norm();
    return (gauss_mass() + (1.0 - std::exp(-gamma() * x)) / gamma()) / norm();
  }
  // Drift of the diffusion at x.
  double drift(double x) const { return -kappa * (c + std::min(x, 0.0)); }
};

// Returns mu_j when every edge into pool j has the same rate, for all pools.
inline std::optional<std::vector<double>> pool_rates(const SystemSpec& spec, double rel_tol = 1e-12) {
  std::vector<double> mu(spec.num_pools(), -1.0);
  for (const auto& e : spec.edges) {
    if (mu[e.pool] < 0.0)
      mu[e.pool] = e.mu;
    else if (std::abs(mu[e.pool] - e.mu) > rel_tol * e.mu)
      return std::nullopt;
  }
  return mu;
}

inline ConcatenatedDensity concatenated_density(const SystemSpec& spec) {
  if (!spec.scaling || spec.scaling->regime != Regime::halfin_whitt)
    throw RegimeError("the one-dimensional limit needs a halfin_whitt scaling family");
  const auto mu = pool_rates(spec);
  if (!mu) throw InvalidInput("the one-dimensional limit needs service rates that depend on the pool only");
  const auto spp = solve_spp(spec);
  if (!spp.hw_C || !(*spp.hw_C > 0.0)) throw RegimeError("halfin_whitt regime needs C > 0");
  ConcatenatedDensity d;
  const double B = spec.total_beta();
  double bm = 0.0;
  for (std::size_t j = 0; j < spec.num_pools(); ++j) bm += spec.beta[j] * (*mu)[j];
  d.kappa = bm / B;
  d.c = *spp.hw_C * B;
  d.s = 2.0 * std::accumulate(spec.lambda.begin(), spec.lambda.end(), 0.0);
  return d;
}

// Y = sum_i Q_i + sum_j Z_j for every sample.
inline std::vector<double> aggregate_Y(const ScaledSeries& s) {
  std::vector<double> y(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    double v = 0.0;
    for (std::size_t i = 0; i < s.I; ++i) v += s.q(k, i);
    for (std::size_t j = 0; j < s.J; ++j) v += s.z(k, j);
    y[k] = v;
  }
  return y;
}

struct DensityReport {
  double ks = 0.0;
  std::vector<double> bin_edges;
  std::vector<double> empirical;  // density estimate per bin
  std::vector<double> analytic;   // analytic density at bin centres
  ConcatenatedDensity model;
};

inline DensityReport stationary_density_1d(const ScaledSeries& s, const SystemSpec& spec, std::size_t bins = 40) {
  if (s.regime != Regime::halfin_whitt) throw RegimeError("stationary_density_1d expects Halfin-Whitt samples");
  if (s.size() == 0) throw InvalidInput("stationary_density_1d needs a nonempty sample");
  DensityReport rep;
  rep.model = concatenated_density(spec);
  const auto y = aggregate_Y(s);
  const auto& m = rep.model;
  rep.ks = ks_statistic(y, [&](double x) { return m.cdf(x); });
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  const double lo = *lo_it, hi = *hi_it + 1e-12;
  const double w = (hi - lo) / static_cast<double>(bins);
  rep.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) rep.bin_edges[b] = lo + w * static_cast<double>(b);
  rep.empirical.assign(bins, 0.0);
  for (double v : y) rep.empirical[std::min(bins - 1, static_cast<std::size_t>((v - lo) / w))] += 1.0;
  for (auto& c : rep.empirical) c /= static_cast<double>(y.size()) * w;
  for (std::size_t b = 0; b < bins; ++b) rep.analytic.push_back(m.pdf(lo + w * (static_cast<double>(b) + 0.5)));
  return rep;
}

// Heuristic burn-in: max(100, 20 / spectral gap) using the drift matrix of
// the regime; unstable systems fall back to 100.
inline double default_burn_in(const SystemSpec& spec) {
  const auto spp = solve_spp(spec);
  const bool critical = std::abs(spp.rho - 1.0) < 1e-9;
  const auto A = critical ? build_Ac(spec) : build_Au(spec);
  const auto v = eigen_analysis(A, critical ? SpectrumKind::critical : SpectrumKind::underload);
  if (v.classification != Classification::stable) return 100.0;
  return std::max(100.0, 20.0 / -v.max_real_part);
}

}  // namespace lqfs
