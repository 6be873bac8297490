#pragma once

// Replication grid over (r, seed). Cells run on a fixed-size thread pool and
// are merged in grid order, so results do not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/model.hpp"
#include "lqfs/sim.hpp"
#include "lqfs/stats.hpp"

namespace lqfs {

struct ThetaSpec {
  std::string label;
  double value = 0.0;
};

// Accepts a plain number, "theta0" or "<factor>theta0".
inline ThetaSpec parse_theta(const std::string& text, const SystemSpec& spec) {
  const std::string key = "theta0";
  const auto pos = text.find(key);
  try {
    if (pos == std::string::npos) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return {text, v};
    }
    if (pos + key.size() != text.size()) throw std::invalid_argument(text);
    double factor = 1.0;
    if (pos > 0) {
      std::size_t used = 0;
      factor = std::stod(text.substr(0, pos), &used);
      if (used != pos) throw std::invalid_argument(text);
    }
    return {text, factor * theta0(spec)};
  } catch (const std::logic_error&) {
    throw InvalidInput("bad theta '" + text + "': expected a number, 'theta0' or '<factor>theta0'");
  }
}

inline std::size_t thread_cap() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LQFS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

// Runs fn(k) for k in [0, n) on at most `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) fn(k);
    });
  for (auto& th : pool) th.join();
}

struct SweepConfig {
  std::vector<double> r_values;
  double T = 500.0;
  std::optional<double> burn_in;  // default_burn_in when unset
  double sample_dt = 0.1;
  std::vector<double> K = {10.0};
  std::vector<ThetaSpec> theta;
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  Engine engine = Engine::event;
  bool density = false;  // KS against the one-dimensional limit when applicable
  std::size_t threads = 0;  // 0 selects thread_cap()
};

struct SweepCell {
  double r = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t samples = 0;
  std::uint64_t events = 0;
  std::vector<Estimate> mass;  // per K, batch-means error
  std::vector<Estimate> lyapunov;  // per theta
  std::optional<double> ks;
};

struct SweepRow {
  double r = 0.0;
  std::size_t ok_cells = 0;
  std::vector<Estimate> mass;      // across seeds (batch means with one seed)
  std::vector<Estimate> lyapunov;
  std::optional<Estimate> ks;
};

struct MassTrend {
  double K = 0.0;
  bool strictly_decreasing = false;  // every pair separated by > 3 pooled SE
  double min_gap_in_se = 0.0;
  double min_mass = 0.0;
};

struct LyapunovTrend {
  std::string label;
  double theta = 0.0;
  double max_min_ratio = 0.0;
};

struct SweepResult {
  SweepConfig config;
  double burn_in = 0.0;
  std::vector<SweepCell> cells;  // r-major, then seed
  std::vector<SweepRow> rows;
  std::vector<MassTrend> mass_trends;
  std::vector<LyapunovTrend> lyapunov_trends;
  std::size_t failed_cells = 0;
};

inline Estimate pooled_over(const std::vector<Estimate>& per_seed) {
  std::vector<double> m;
  for (const auto& e : per_seed) m.push_back(e.mean);
  if (m.size() == 1) return per_seed.front();
  return across(m);
}

inline SweepResult run_sweep(const SystemSpec& spec, const SweepConfig& cfg) {
  if (cfg.seeds == 0) throw InvalidInput("--seeds must be at least 1");
  if (cfg.r_values.empty()) throw InvalidInput("sweep needs at least one r value");
  for (double r : cfg.r_values)
    if (!(r > 0.0)) throw InvalidInput("r values must be positive");
  if (!(cfg.T > 0.0)) throw InvalidInput("T must be positive");
  require_valid(spec);

  SweepResult res;
  res.config = cfg;
  res.burn_in = cfg.burn_in ? *cfg.burn_in : std::min(default_burn_in(spec), 0.5 * cfg.T);
  if (!(res.burn_in < cfg.T)) throw InvalidInput("burn_in must be below T");
  const bool hw = spec.scaling && spec.scaling->regime == Regime::halfin_whitt;
  const bool density = cfg.density && hw && pool_rates(spec).has_value();

  const std::size_t R = cfg.r_values.size();
  res.cells.resize(R * cfg.seeds);
  parallel_for(res.cells.size(), cfg.threads ? cfg.threads : thread_cap(), [&](std::size_t k) {
    SweepCell& c = res.cells[k];
    c.r = cfg.r_values[k / cfg.seeds];
    c.seed = cfg.base_seed + k % cfg.seeds;
    try {
      const auto s = run_replication(spec, c.r, cfg.T, res.burn_in, cfg.sample_dt, c.seed, cfg.engine);
      if (s.size() == 0) throw InvalidInput("no samples after burn-in");
      c.samples = s.size();
      c.events = s.events;
      for (double K : cfg.K) c.mass.push_back(batch_means(ball_indicator(s, K)));
      if (hw)
        for (const auto& th : cfg.theta) c.lyapunov.push_back(lyapunov_moment(s, th.value));
      if (density) c.ks = stationary_density_1d(s, spec).ks;
      c.ok = true;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });

  for (const auto& c : res.cells)
    if (!c.ok) ++res.failed_cells;

  for (std::size_t a = 0; a < R; ++a) {
    SweepRow row;
    row.r = cfg.r_values[a];
    std::vector<const SweepCell*> good;
    for (std::size_t s = 0; s < cfg.seeds; ++s)
      if (res.cells[a * cfg.seeds + s].ok) good.push_back(&res.cells[a * cfg.seeds + s]);
    row.ok_cells = good.size();
    if (!good.empty()) {
      for (std::size_t q = 0; q < cfg.K.size(); ++q) {
        std::vector<Estimate> v;
        for (const auto* c : good) v.push_back(c->mass[q]);
        row.mass.push_back(pooled_over(v));
      }
      for (std::size_t q = 0; q < good.front()->lyapunov.size(); ++q) {
        std::vector<Estimate> v;
        for (const auto* c : good) v.push_back(c->lyapunov[q]);
        row.lyapunov.push_back(pooled_over(v));
      }
      if (good.front()->ks) {
        std::vector<double> v;
        for (const auto* c : good) v.push_back(*c->ks);
        row.ks = across(v);
      }
    }
    res.rows.push_back(std::move(row));
  }

  const bool complete = std::all_of(res.rows.begin(), res.rows.end(), [](const SweepRow& r) { return r.ok_cells > 0; });
  if (complete) {
    for (std::size_t q = 0; q < cfg.K.size(); ++q) {
      MassTrend t;
      t.K = cfg.K[q];
      t.min_gap_in_se = std::numeric_limits<double>::infinity();
      t.min_mass = 1.0;
      for (std::size_t a = 0; a < R; ++a) {
        t.min_mass = std::min(t.min_mass, res.rows[a].mass[q].mean);
        for (std::size_t b = a + 1; b < R; ++b) {
          const auto& x = res.rows[a].mass[q];
          const auto& y = res.rows[b].mass[q];
          const double se = std::sqrt(x.se * x.se + y.se * y.se);
          const double gap = x.mean - y.mean;
          const double z = se > 0.0 ? gap / se : (gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
          t.min_gap_in_se = std::min(t.min_gap_in_se, z);
        }
      }
      if (R < 2) t.min_gap_in_se = 0.0;
      t.strictly_decreasing = R >= 2 && t.min_gap_in_se > 3.0;
      res.mass_trends.push_back(t);
    }
    for (std::size_t q = 0; q < res.rows.front().lyapunov.size(); ++q) {
      LyapunovTrend t;
      t.label = cfg.theta[q].label;
      t.theta = cfg.theta[q].value;
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (const auto& row : res.rows) {
        lo = std::min(lo, row.lyapunov[q].mean);
        hi = std::max(hi, row.lyapunov[q].mean);
      }
      t.max_min_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
      res.lyapunov_trends.push_back(t);
    }
  }
  return res;
}

}  // namespace lqfs
