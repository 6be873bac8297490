#pragma once

// Fluid-scale dynamics: the collapsed linear ODEs near equilibrium, an
// explicit water-filling integrator for the full fluid model, and
// Euler-Maruyama integrators for the limiting diffusions.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/linstab.hpp"
#include "lqfs/model.hpp"
#include "lqfs/rng.hpp"
#include "lqfs/spp.hpp"

namespace lqfs {

struct Trajectory {
  std::vector<std::string> columns;  // not including the leading time column
  std::vector<double> t;
  std::vector<std::vector<double>> rows;

  void push(double time, std::vector<double> row) {
    t.push_back(time);
    rows.push_back(std::move(row));
  }
  std::size_t size() const { return t.size(); }
  std::size_t column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InvalidInput("no trajectory column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
  std::vector<double> series(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) out[k] = rows[k][c];
    return out;
  }

  void write_csv(std::ostream& os) const {
    os << "t";
    for (const auto& c : columns) os << ',' << c;
    os << '\n';
    char buf[32];
    for (std::size_t k = 0; k < t.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", t[k]);
      os << buf;
      for (double v : rows[k]) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ',' << buf;
      }
      os << '\n';
    }
  }
};

namespace detail {

inline std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(prefix + id);
  return out;
}

inline std::vector<std::string> edge_ids(const SystemSpec& spec) {
  std::vector<std::string> out;
  for (std::size_t e = 0; e < spec.num_edges(); ++e) out.push_back(spec.edge_name(e));
  return out;
}

inline void append(std::vector<std::string>& a, const std::vector<std::string>& b) { a.insert(a.end(), b.begin(), b.end()); }

inline std::vector<double> concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  std::vector<double> out(a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

inline double max_mu(const SystemSpec& spec) {
  double m = 0.0;
  for (const auto& e : spec.edges) m = std::max(m, e.mu);
  return m;
}

}  // namespace detail

// psi_I(t) - psi*_I = exp(A_u t) y0 on the grid; edge deviations are M y.
// Columns: y_<class>..., d_<edge>...
inline Trajectory linear_ode_underload(const SystemSpec& spec, const DriftMatrices& dm, const Eigen::VectorXd& y0,
                                       const std::vector<double>& t_grid) {
  const double rho = solve_spp(spec).rho;
  if (!(rho < 1.0 - 1e-12)) throw RegimeError("linear_ode_underload requires rho < 1, got rho = " + std::to_string(rho));
  if (y0.size() != dm.Au.rows()) throw InvalidInput("initial deviation has the wrong dimension");
  Trajectory tr;
  tr.columns = detail::prefixed("y_", spec.classes);
  detail::append(tr.columns, detail::prefixed("d_", detail::edge_ids(spec)));
  for (double t : t_grid) {
    const Eigen::VectorXd y = (dm.Au * t).exp() * y0;
    tr.push(t, detail::concat(y, dm.M * y));
  }
  return tr;
}

// Critical load: y(t) = exp(A_c t) y0 with y0 in L, and the common queue
// q(t) = q0 + (1/I) int 1'A_u y ds obtained from an augmented exponential.
// Columns: y_<class>..., d_<edge>..., q
inline Trajectory linear_ode_critical(const SystemSpec& spec, const DriftMatrices& dm, const Eigen::VectorXd& y0,
                                      const std::vector<double>& t_grid, double q0 = 1.0) {
  const double rho = solve_spp(spec).rho;
  if (std::abs(rho - 1.0) > 1e-9) throw RegimeError("linear_ode_critical requires rho = 1, got rho = " + std::to_string(rho));
  const auto I = dm.Ac.rows();
  if (y0.size() != I) throw InvalidInput("initial deviation has the wrong dimension");
  if (std::abs(y0.sum()) > 1e-10 * std::max(1.0, y0.cwiseAbs().maxCoeff()))
    throw InvalidInput("initial deviation must sum to zero (got " + std::to_string(y0.sum()) + ")");
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(I + 1, I + 1);
  B.topLeftCorner(I, I) = dm.Ac;
  B.block(I, 0, 1, I) = Eigen::RowVectorXd::Ones(I) * dm.Au / static_cast<double>(I);
  Eigen::VectorXd z0(I + 1);
  z0 << y0, q0;
  Trajectory tr;
  tr.columns = detail::prefixed("y_", spec.classes);
  detail::append(tr.columns, detail::prefixed("d_", detail::edge_ids(spec)));
  tr.columns.push_back("q");
  for (double t : t_grid) {
    const Eigen::VectorXd z = (B * t).exp() * z0;
    const Eigen::VectorXd y = z.head(I);
    auto row = detail::concat(y, dm.M * y);
    row.push_back(z(I));
    tr.push(t, std::move(row));
  }
  return tr;
}

struct FluidState {
  std::vector<double> psi_edge;
  std::vector<double> q;
  double t = 0.0;
};

// Nominal point: psi* from the SPP and a common queue level (zero in underload).
inline FluidState equilibrium_state(const SystemSpec& spec, double q_level = 0.0) {
  const auto spp = solve_spp(spec);
  return {spp.psi_star, std::vector<double>(spec.num_classes(), q_level), 0.0};
}

namespace detail {

// Increments w_k * clamp(L - v_k, 0, cap_k) summing to `amount` (or every cap
// filled if the total capacity is smaller).
inline std::vector<double> waterfill(const std::vector<double>& v, const std::vector<double>& w, const std::vector<double>& cap,
                                     double amount) {
  const std::size_t n = v.size();
  std::vector<double> inc(n, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) total += w[k] * cap[k];
  if (!(amount > 0.0) || total <= 0.0) return inc;
  if (amount >= total) {
    for (std::size_t k = 0; k < n; ++k) inc[k] = w[k] * cap[k];
    return inc;
  }
  std::vector<double> bp;
  for (std::size_t k = 0; k < n; ++k)
    if (w[k] > 0.0 && cap[k] > 0.0) {
      bp.push_back(v[k]);
      bp.push_back(v[k] + cap[k]);
    }
  std::sort(bp.begin(), bp.end());
  auto g = [&](double L) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (cap[k] > 0.0) s += w[k] * std::clamp(L - v[k], 0.0, cap[k]);
    return s;
  };
  double level = bp.back();
  for (std::size_t m = 1; m < bp.size(); ++m) {
    const double g1 = g(bp[m]);
    if (g1 >= amount) {
      const double g0 = g(bp[m - 1]);
      level = g1 > g0 ? bp[m - 1] + (amount - g0) * (bp[m] - bp[m - 1]) / (g1 - g0) : bp[m];
      break;
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    if (cap[k] > 0.0) inc[k] = w[k] * std::clamp(level - v[k], 0.0, cap[k]);
  return inc;
}

struct FluidWork {
  const SystemSpec& spec;
  const ActivityTree& tree;
  std::vector<std::vector<std::size_t>> class_edges, pool_edges;

  FluidWork(const SystemSpec& s, const ActivityTree& t)
      : spec(s), tree(t), class_edges(s.num_classes()), pool_edges(s.num_pools()) {
    for (std::size_t e = 0; e < s.num_edges(); ++e) {
      class_edges[s.edges[e].cls].push_back(e);
      pool_edges[s.edges[e].pool].push_back(e);
    }
  }

  std::vector<double> pool_totals(const std::vector<double>& psi) const {
    std::vector<double> P(spec.num_pools(), 0.0);
    for (std::size_t e = 0; e < psi.size(); ++e) P[spec.edges[e].pool] += psi[e];
    return P;
  }

  // Tree solve of sum_j x_ij = c_i, sum_i x_ij = p_j (conv 1).
  std::vector<double> tree_solve(const std::vector<double>& c, const std::vector<double>& p) const {
    Eigen::MatrixXd cr(static_cast<Eigen::Index>(c.size()), 1), pr(static_cast<Eigen::Index>(p.size()), 1);
    for (std::size_t i = 0; i < c.size(); ++i) cr(static_cast<Eigen::Index>(i), 0) = c[i];
    for (std::size_t j = 0; j < p.size(); ++j) pr(static_cast<Eigen::Index>(j), 0) = p[j];
    const auto res = peel_solve(tree, cr, pr, std::vector<double>(spec.num_edges(), 1.0));
    std::vector<double> x(spec.num_edges());
    for (std::size_t e = 0; e < x.size(); ++e) x[e] = res.edge_values(static_cast<Eigen::Index>(e), 0);
    return x;
  }

  // Freed capacity goes to the longest compatible queues, jointly over pools.
  std::vector<double> drain(const std::vector<double>& free_cap, const std::vector<double>& q) const {
    const std::size_t I = spec.num_classes(), J = spec.num_pools();
    std::vector<double> w(spec.num_edges(), 0.0);
    double sum_q = 0.0, sum_f = 0.0, scale = 0.0;
    for (double v : q) {
      sum_q += v;
      scale = std::max(scale, v);
    }
    for (double f : free_cap) sum_f += f;
    if (sum_q <= 0.0 || sum_f <= 0.0) return w;

    // All queues end at one common level: exact when the tree solution is nonnegative.
    const double level = (sum_q - sum_f) / static_cast<double>(I);
    if (level >= 0.0) {
      std::vector<double> c(I);
      for (std::size_t i = 0; i < I; ++i) c[i] = q[i] - level;
      auto x = tree_solve(c, free_cap);
      if (std::all_of(x.begin(), x.end(), [&](double v) { return v >= -1e-14 * (1.0 + scale); })) {
        for (double& v : x) v = std::max(v, 0.0);
        return x;
      }
    }

    std::vector<double> rem(q);
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double change = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        if (free_cap[j] <= 0.0) continue;
        const auto& pe = pool_edges[j];
        std::vector<double> v(pe.size()), ones(pe.size(), 1.0), cap(pe.size());
        for (std::size_t k = 0; k < pe.size(); ++k) {
          const auto i = spec.edges[pe[k]].cls;
          rem[i] += w[pe[k]];
          cap[k] = std::max(rem[i], 0.0);
          v[k] = -rem[i];
        }
        const auto inc = waterfill(v, ones, cap, free_cap[j]);
        for (std::size_t k = 0; k < pe.size(); ++k) {
          change = std::max(change, std::abs(inc[k] - w[pe[k]]));
          w[pe[k]] = inc[k];
          rem[spec.edges[pe[k]].cls] -= inc[k];
        }
      }
      if (change <= 1e-16 * (1.0 + scale)) break;
    }
    return w;
  }

  // Arrival amounts water-filled into the least-loaded compatible pools with
  // free capacity, jointly over classes. Returns per-edge admissions.
  std::vector<double> admit(const std::vector<double>& P, const std::vector<double>& a) const {
    const std::size_t I = spec.num_classes(), J = spec.num_pools();
    double sumP = 0.0, sumA = 0.0, sumB = spec.total_beta(), scale = 0.0;
    for (double v : P) sumP += v;
    for (double v : a) {
      sumA += v;
      scale = std::max(scale, v);
    }
    std::vector<double> z(spec.num_edges(), 0.0);
    if (sumA <= 0.0) return z;

    const double level = (sumP + sumA) / sumB;
    if (level <= 1.0) {
      std::vector<double> p(J);
      for (std::size_t j = 0; j < J; ++j) p[j] = spec.beta[j] * level - P[j];
      auto x = tree_solve(a, p);
      if (std::all_of(x.begin(), x.end(), [&](double v) { return v >= -1e-14 * (1.0 + scale); })) {
        for (double& v : x) v = std::max(v, 0.0);
        return x;
      }
    }

    std::vector<double> tot(P);
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double change = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        const auto& ce = class_edges[i];
        std::vector<double> v(ce.size()), w(ce.size()), cap(ce.size());
        for (std::size_t k = 0; k < ce.size(); ++k) {
          const auto j = spec.edges[ce[k]].pool;
          tot[j] -= z[ce[k]];
          v[k] = tot[j] / spec.beta[j];
          w[k] = spec.beta[j];
          cap[k] = std::max(1.0 - v[k], 0.0);
        }
        const auto inc = waterfill(v, w, cap, a[i]);
        for (std::size_t k = 0; k < ce.size(); ++k) {
          change = std::max(change, std::abs(inc[k] - z[ce[k]]));
          z[ce[k]] = inc[k];
          tot[spec.edges[ce[k]].pool] += inc[k];
        }
      }
      if (change <= 1e-16 * (1.0 + scale)) break;
    }
    return z;
  }
};

}  // namespace detail

struct FluidRun {
  Trajectory trajectory;  // columns psi_<edge>..., q_<class>...
  FluidState final_state;
  double mass_balance_residual = 0.0;
  std::size_t steps = 0;
};

struct FluidOptions {
  double record_interval = 0.0;  // 0: every step
  double tolerance = 1e-9;       // invariant slack, relative to pool sizes
};

// Explicit Euler on the fluid model. Each step: departures; arrivals of
// waiting classes join their queues; freed capacity goes to the longest
// queues; remaining arrivals are water-filled into the least-loaded pools
// with overflow joining the queue.
inline FluidRun fluid_integrate(const SystemSpec& spec, const FluidState& state0, double dt, double T, FluidOptions opt = {}) {
  require_valid(spec);
  if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidInput("fluid_integrate needs dt > 0 and T >= 0");
  if (state0.psi_edge.size() != spec.num_edges() || state0.q.size() != spec.num_classes())
    throw InvalidInput("fluid state has the wrong dimensions");
  const ActivityTree tree(spec);
  const detail::FluidWork work(spec, tree);
  const std::size_t I = spec.num_classes(), J = spec.num_pools(), E = spec.num_edges();
  const double tol = opt.tolerance;

  FluidState s = state0;
  std::vector<double> x0(I, 0.0), departed(I, 0.0);
  for (std::size_t e = 0; e < E; ++e) x0[spec.edges[e].cls] += s.psi_edge[e];
  for (std::size_t i = 0; i < I; ++i) x0[i] += s.q[i];

  auto check = [&](const char* where, bool work_conserving) {
    auto P = work.pool_totals(s.psi_edge);
    for (std::size_t e = 0; e < E; ++e)
      if (s.psi_edge[e] < -tol * spec.beta[spec.edges[e].pool])
        throw IntegratorAbort(std::string("negative occupancy on edge ") + spec.edge_name(e) + " at t = " + std::to_string(s.t) +
                              " (" + where + "); reduce dt");
    for (std::size_t j = 0; j < J; ++j)
      if (P[j] > spec.beta[j] * (1.0 + tol))
        throw IntegratorAbort("pool " + spec.pools[j] + " over capacity at t = " + std::to_string(s.t) + " (" + where + ")");
    for (std::size_t i = 0; i < I; ++i) {
      if (s.q[i] < -tol) throw IntegratorAbort("negative queue for class " + spec.classes[i] + " at t = " + std::to_string(s.t));
      if (work_conserving && s.q[i] > tol)
        for (auto e : work.class_edges[i]) {
          const auto j = spec.edges[e].pool;
          if (P[j] < spec.beta[j] * (1.0 - tol))
            throw IntegratorAbort("class " + spec.classes[i] + " queues while pool " + spec.pools[j] + " has free capacity at t = " +
                                  std::to_string(s.t) + " (" + where + ")");
        }
    }
  };
  check("initial state", true);

  FluidRun run;
  run.trajectory.columns = detail::prefixed("psi_", detail::edge_ids(spec));
  detail::append(run.trajectory.columns, detail::prefixed("q_", spec.classes));
  auto record = [&] {
    std::vector<double> row = s.psi_edge;
    row.insert(row.end(), s.q.begin(), s.q.end());
    run.trajectory.push(s.t, std::move(row));
  };
  record();

  const auto nsteps = static_cast<std::size_t>(std::llround(T / dt));
  const std::size_t every = opt.record_interval > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.record_interval / dt))) : 1;
  std::vector<double> a(I);
  for (std::size_t i = 0; i < I; ++i) a[i] = spec.lambda[i] * dt;

  for (std::size_t n = 1; n <= nsteps; ++n) {
    for (std::size_t e = 0; e < E; ++e) {
      const double d = spec.edges[e].mu * s.psi_edge[e] * dt;
      s.psi_edge[e] -= d;
      departed[spec.edges[e].cls] += d;
    }
    s.t = static_cast<double>(n) * dt;
    check("after departures", false);

    // Arrivals of classes that are already waiting join their queue; the freed
    // capacity then goes to the longest queues.
    std::vector<double> fresh = a;
    for (std::size_t i = 0; i < I; ++i)
      if (s.q[i] > tol) {
        s.q[i] += a[i];
        fresh[i] = 0.0;
      }

    auto P = work.pool_totals(s.psi_edge);
    std::vector<double> free_cap(J);
    for (std::size_t j = 0; j < J; ++j) free_cap[j] = std::max(spec.beta[j] - P[j], 0.0);
    const auto w = work.drain(free_cap, s.q);
    for (std::size_t e = 0; e < E; ++e) {
      s.psi_edge[e] += w[e];
      s.q[spec.edges[e].cls] -= w[e];
      P[spec.edges[e].pool] += w[e];
    }
    for (double& v : s.q)
      if (v < 0.0 && v > -tol) v = 0.0;

    const auto z = work.admit(P, fresh);
    std::vector<double> overflow = fresh;
    for (std::size_t e = 0; e < E; ++e) {
      s.psi_edge[e] += z[e];
      overflow[spec.edges[e].cls] -= z[e];
    }
    for (std::size_t i = 0; i < I; ++i)
      if (overflow[i] > 1e-15 * (1.0 + fresh[i])) s.q[i] += overflow[i];
    check("after admission", true);
    if (n % every == 0 || n == nsteps) record();
  }

  std::vector<double> x(I, 0.0);
  for (std::size_t e = 0; e < E; ++e) x[spec.edges[e].cls] += s.psi_edge[e];
  for (std::size_t i = 0; i < I; ++i) {
    x[i] += s.q[i];
    const double expected = x0[i] + spec.lambda[i] * s.t - departed[i];
    run.mass_balance_residual = std::max(run.mass_balance_residual, std::abs(x[i] - expected));
  }
  run.final_state = s;
  run.steps = nsteps;
  return run;
}

struct SdeOptions {
  std::size_t record_every = 1;  // steps between recorded rows
  double noise_scale = 1.0;      // multiplies the diffusion coefficient
};

struct SdeRun {
  Trajectory trajectory;
  std::uint64_t seed = 0;
  double dt = 0.0;
};

namespace detail {

inline Eigen::VectorXd sde_noise_coeff(const SystemSpec& spec, double scale) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(spec.num_classes()));
  for (std::size_t i = 0; i < spec.num_classes(); ++i) s(static_cast<Eigen::Index>(i)) = scale * std::sqrt(2.0 * spec.lambda[i]);
  return s;
}

}  // namespace detail

// dy = A_u y dt + diag(sqrt(2 lambda)) dB. Columns y_<class>..., d_<edge>...
inline SdeRun sde_underload(const SystemSpec& spec, const DriftMatrices& dm, const Eigen::VectorXd& y0, double dt, double T,
                            std::uint64_t seed, SdeOptions opt = {}) {
  if (y0.size() != dm.Au.rows()) throw InvalidInput("initial deviation has the wrong dimension");
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  CounterRng rng(seed, 0x5de0);
  std::normal_distribution<double> gauss;
  const Eigen::VectorXd sig = detail::sde_noise_coeff(spec, opt.noise_scale) * std::sqrt(dt);
  SdeRun run{{}, seed, dt};
  run.trajectory.columns = detail::prefixed("y_", spec.classes);
  detail::append(run.trajectory.columns, detail::prefixed("d_", detail::edge_ids(spec)));
  Eigen::VectorXd y = y0, dB(y0.size());
  run.trajectory.push(0.0, detail::concat(y, dm.M * y));
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  const std::size_t every = std::max<std::size_t>(1, opt.record_every);
  for (std::size_t k = 1; k <= n; ++k) {
    for (Eigen::Index i = 0; i < dB.size(); ++i) dB(i) = gauss(rng);
    y += dm.Au * y * dt + sig.cwiseProduct(dB);
    if (k % every == 0 || k == n) run.trajectory.push(static_cast<double>(k) * dt, detail::concat(y, dm.M * y));
  }
  return run;
}

// F[y] = pi y when sum y > 0, else y.
inline Eigen::VectorXd hw_F(const Eigen::VectorXd& y) {
  if (y.sum() > 0.0) return y.array() - y.mean();
  return y;
}

// dX = (l + A_u F[X]) dt + diag(sqrt(2 lambda)) dB. Columns x_<class>...,
// psi_<edge>... (M F[X]), Y (sum of X).
inline SdeRun sde_halfin_whitt(const SystemSpec& spec, const DriftMatrices& dm, const Eigen::VectorXd& x0, double dt, double T,
                               std::uint64_t seed, SdeOptions opt = {}) {
  if (!spec.scaling || spec.scaling->regime != Regime::halfin_whitt)
    throw RegimeError("sde_halfin_whitt requires a halfin_whitt scaling family");
  if (x0.size() != dm.Au.rows()) throw InvalidInput("initial state has the wrong dimension");
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  Eigen::VectorXd l(x0.size());
  for (Eigen::Index i = 0; i < l.size(); ++i) l(i) = spec.scaling->l[static_cast<std::size_t>(i)];
  CounterRng rng(seed, 0x5de1);
  std::normal_distribution<double> gauss;
  const Eigen::VectorXd sig = detail::sde_noise_coeff(spec, opt.noise_scale) * std::sqrt(dt);
  SdeRun run{{}, seed, dt};
  run.trajectory.columns = detail::prefixed("x_", spec.classes);
  detail::append(run.trajectory.columns, detail::prefixed("psi_", detail::edge_ids(spec)));
  run.trajectory.columns.push_back("Y");
  auto row = [&](const Eigen::VectorXd& x) {
    auto r = detail::concat(x, dm.M * hw_F(x));
    r.push_back(x.sum());
    return r;
  };
  Eigen::VectorXd x = x0, dB(x0.size());
  run.trajectory.push(0.0, row(x));
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  const std::size_t every = std::max<std::size_t>(1, opt.record_every);
  for (std::size_t k = 1; k <= n; ++k) {
    for (Eigen::Index i = 0; i < dB.size(); ++i) dB(i) = gauss(rng);
    x += (l + dm.Au * hw_F(x)) * dt + sig.cwiseProduct(dB);
    if (k % every == 0 || k == n) run.trajectory.push(static_cast<double>(k) * dt, row(x));
  }
  return run;
}

}  // namespace lqfs
