#pragma once

// JSON for specs and reports, CSV for trajectories and scaled series.
// Objects are nlohmann::ordered_json so key order follows insertion.

#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lqfs/error.hpp"
#include "lqfs/fluid.hpp"
#include "lqfs/linstab.hpp"
#include "lqfs/model.hpp"
#include "lqfs/sim.hpp"
#include "lqfs/spp.hpp"
#include "lqfs/sweep.hpp"

namespace lqfs {

using Json = nlohmann::ordered_json;

namespace detail {

inline void require_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed,
                         std::initializer_list<const char*> required) {
  if (!obj.is_object()) throw InvalidInput(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw InvalidInput(where + ": unknown field '" + it.key() + "'");
  for (const char* k : required)
    if (!obj.contains(k)) throw InvalidInput(where + ": missing field '" + k + "'");
}

inline double get_number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw InvalidInput(where + ": expected a number");
  return v.get<double>();
}

inline std::string get_string(const Json& v, const std::string& where) {
  if (!v.is_string()) throw InvalidInput(where + ": expected a string");
  return v.get<std::string>();
}

inline const Json& get_array(const Json& v, const std::string& where) {
  if (!v.is_array()) throw InvalidInput(where + ": expected an array");
  return v;
}

// Line and column (1-based) of a byte offset.
inline std::pair<std::size_t, std::size_t> locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < text.size() && k + 1 < byte; ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline Json parse_json_text(const std::string& text, const std::string& source = "<input>") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::locate(text, e.byte);
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    if (pos != std::string::npos) msg = msg.substr(pos);
    throw InvalidInput(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json spec_to_json(const SystemSpec& s) {
  Json j;
  j["classes"] = s.classes;
  Json pools = Json::array();
  for (std::size_t p = 0; p < s.num_pools(); ++p) pools.push_back(Json{{"id", s.pools[p]}, {"beta", s.beta[p]}});
  j["pools"] = pools;
  Json edges = Json::array();
  for (const auto& e : s.edges) edges.push_back(Json{{"class", s.classes[e.cls]}, {"pool", s.pools[e.pool]}, {"mu", e.mu}});
  j["edges"] = edges;
  Json lam = Json::object();
  for (std::size_t i = 0; i < s.num_classes(); ++i) lam[s.classes[i]] = s.lambda[i];
  j["lambda"] = lam;
  if (s.scaling) {
    Json sc;
    sc["r"] = s.scaling->r_values;
    Json l = Json::object();
    for (std::size_t i = 0; i < s.num_classes() && i < s.scaling->l.size(); ++i) l[s.classes[i]] = s.scaling->l[i];
    sc["l"] = l;
    sc["regime"] = to_string(s.scaling->regime);
    j["scaling"] = sc;
  }
  return j;
}

inline SystemSpec spec_from_json(const Json& j) {
  using namespace detail;
  require_keys(j, "spec", {"classes", "pools", "edges", "lambda", "scaling"}, {"classes", "pools", "edges", "lambda"});
  SystemSpec s;
  const auto& classes = get_array(j["classes"], "classes");
  for (std::size_t k = 0; k < classes.size(); ++k) {
    auto id = get_string(classes[k], "classes[" + std::to_string(k) + "]");
    if (s.class_index(id)) throw InvalidInput("classes: duplicate id '" + id + "'");
    s.classes.push_back(id);
  }
  const auto& pools = get_array(j["pools"], "pools");
  for (std::size_t k = 0; k < pools.size(); ++k) {
    const std::string where = "pools[" + std::to_string(k) + "]";
    require_keys(pools[k], where, {"id", "beta"}, {"id", "beta"});
    auto id = get_string(pools[k]["id"], where + ".id");
    if (s.pool_index(id)) throw InvalidInput("pools: duplicate id '" + id + "'");
    s.pools.push_back(id);
    s.beta.push_back(get_number(pools[k]["beta"], where + ".beta"));
  }
  const auto& edges = get_array(j["edges"], "edges");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const std::string where = "edges[" + std::to_string(k) + "]";
    require_keys(edges[k], where, {"class", "pool", "mu"}, {"class", "pool", "mu"});
    const auto c = get_string(edges[k]["class"], where + ".class");
    const auto p = get_string(edges[k]["pool"], where + ".pool");
    const auto ci = s.class_index(c);
    const auto pi = s.pool_index(p);
    if (!ci) throw InvalidInput(where + ".class: unknown class '" + c + "'");
    if (!pi) throw InvalidInput(where + ".pool: unknown pool '" + p + "'");
    s.edges.push_back({*ci, *pi, get_number(edges[k]["mu"], where + ".mu")});
  }
  const auto& lam = j["lambda"];
  if (!lam.is_object()) throw InvalidInput("lambda: expected an object keyed by class id");
  s.lambda.assign(s.num_classes(), 0.0);
  std::vector<bool> seen(s.num_classes(), false);
  for (auto it = lam.begin(); it != lam.end(); ++it) {
    const auto ci = s.class_index(it.key());
    if (!ci) throw InvalidInput("lambda: unknown class '" + it.key() + "'");
    s.lambda[*ci] = get_number(it.value(), "lambda." + it.key());
    seen[*ci] = true;
  }
  for (std::size_t i = 0; i < s.num_classes(); ++i)
    if (!seen[i]) throw InvalidInput("lambda: missing rate for class '" + s.classes[i] + "'");

  if (j.contains("scaling")) {
    const auto& sc = j["scaling"];
    require_keys(sc, "scaling", {"r", "l", "regime"}, {"r", "regime"});
    ScalingFamily f;
    const auto& rv = get_array(sc["r"], "scaling.r");
    for (std::size_t k = 0; k < rv.size(); ++k) f.r_values.push_back(get_number(rv[k], "scaling.r[" + std::to_string(k) + "]"));
    const auto regime = get_string(sc["regime"], "scaling.regime");
    if (regime == "underload") {
      f.regime = Regime::underload;
    } else if (regime == "halfin_whitt") {
      f.regime = Regime::halfin_whitt;
    } else {
      throw InvalidInput("scaling.regime: expected 'underload' or 'halfin_whitt', got '" + regime + "'");
    }
    f.l.assign(s.num_classes(), 0.0);
    if (sc.contains("l")) {
      const auto& l = sc["l"];
      if (!l.is_object()) throw InvalidInput("scaling.l: expected an object keyed by class id");
      for (auto it = l.begin(); it != l.end(); ++it) {
        const auto ci = s.class_index(it.key());
        if (!ci) throw InvalidInput("scaling.l: unknown class '" + it.key() + "'");
        f.l[*ci] = get_number(it.value(), "scaling.l." + it.key());
      }
    }
    s.scaling = f;
  }
  return s;
}

inline SystemSpec parse_spec(const std::string& text, const std::string& source = "<input>") {
  return spec_from_json(parse_json_text(text, source));
}

inline SystemSpec load_spec(const std::string& path) { return parse_spec(read_file(path), path); }

// FNV-1a over the compact serialization.
inline std::string spec_hash(const SystemSpec& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : spec_to_json(s).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Json matrix_to_json(const Eigen::MatrixXd& A) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < A.cols(); ++k) row.push_back(A(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline Json eigenvalues_to_json(const std::vector<std::complex<double>>& v) {
  Json out = Json::array();
  for (const auto& z : v) out.push_back(Json::array({z.real(), z.imag()}));
  return out;
}

inline Json validation_to_json(const ValidationReport& r) {
  Json j;
  j["ok"] = r.ok;
  j["violations"] = r.violations;
  return j;
}

inline Json spp_to_json(const SystemSpec& spec, const SppSolution& sol) {
  Json j;
  j["rho"] = sol.rho;
  Json edges = Json::array();
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    const auto& ed = spec.edges[e];
    edges.push_back(Json{{"class", spec.classes[ed.cls]},
                         {"pool", spec.pools[ed.pool]},
                         {"mu", ed.mu},
                         {"lambda", sol.lambda_edge[e]},
                         {"psi_star", sol.psi_star[e]}});
  }
  j["edges"] = edges;
  Json nu = Json::object();
  for (std::size_t i = 0; i < spec.num_classes(); ++i) nu[spec.classes[i]] = sol.nu[i];
  j["nu"] = nu;
  Json alpha = Json::object();
  for (std::size_t p = 0; p < spec.num_pools(); ++p) alpha[spec.pools[p]] = sol.alpha[p];
  j["alpha"] = alpha;
  j["hw_C"] = sol.hw_C ? Json(*sol.hw_C) : Json(nullptr);
  j["residuals"] = Json{{"demand", sol.demand_residual},
                        {"load", sol.load_residual},
                        {"dual", sol.dual_residual},
                        {"workload", sol.workload_residual}};
  return j;
}

inline Json verdict_to_json(const StabilityVerdict& v) {
  Json j;
  j["classification"] = to_string(v.classification);
  j["max_real_part"] = v.max_real_part;
  j["eigenvalues"] = eigenvalues_to_json(v.eigenvalues);
  j["convergent_subspace_dim"] = v.convergent_subspace_dim;
  j["zero_eigen_residual"] = v.zero_eigen_residual;
  j["norm"] = v.norm;
  return j;
}

inline bool is_critical(const SppSolution& sol) { return std::abs(sol.rho - 1.0) <= 1e-9; }

// Full analysis: SPP, duals, drift matrices and both stability verdicts.
// The critical verdict is fatal only when the system is critically loaded.
inline Json analyze_report(const SystemSpec& spec) {
  require_valid(spec);
  const auto sol = solve_spp(spec);
  const auto dm = build_drift_matrices(spec);
  const bool critical = is_critical(sol);

  Json j;
  j["spec"] = spec_to_json(spec);
  j["regime"] = critical ? "critical" : "underload";
  j["spp"] = spp_to_json(spec, sol);
  Json mats;
  mats["M"] = matrix_to_json(dm.M);
  mats["M_closed_form_residual"] = (dm.M - build_M_components(spec)).cwiseAbs().maxCoeff();
  mats["G"] = matrix_to_json(dm.G);
  mats["Au"] = matrix_to_json(dm.Au);
  mats["pi"] = matrix_to_json(dm.pi);
  mats["Ac"] = matrix_to_json(dm.Ac);
  j["matrices"] = mats;

  Json stab;
  stab["underload"] = verdict_to_json(eigen_analysis(dm.Au, SpectrumKind::underload));
  try {
    auto crit = verdict_to_json(eigen_analysis(dm.Ac, SpectrumKind::critical));
    if (spec.num_classes() > 1) {
      const auto restricted = eigen_analysis(restrict_to_L(dm.Ac), SpectrumKind::underload);
      crit["restricted_max_real_part"] = restricted.max_real_part;
      crit["restricted_classification"] = to_string(restricted.classification);
    }
    stab["critical"] = crit;
  } catch (const DegenerateSpectrum& e) {
    if (critical) throw;
    stab["critical"] = Json{{"error", e.what()}};
  }
  j["stability"] = stab;

  if (spec.num_classes() <= 8) {
    const auto cp = char_poly(dm.Au);
    j["char_poly_Au"] = cp;
    if (cp.size() == 4) j["routh_Au"] = to_string(routh3(-cp[2], cp[1], -cp[0]));
  }
  return j;
}

inline Json sde_sidecar(const SystemSpec& spec, const std::string& mode, std::uint64_t seed, double dt, double T) {
  Json j;
  j["mode"] = mode;
  j["seed"] = seed;
  j["dt"] = dt;
  j["T"] = T;
  j["spec_hash"] = spec_hash(spec);
  return j;
}

inline Json series_metadata(const SystemSpec& spec, const ScaledSeries& s) {
  Json j;
  j["spec_hash"] = spec_hash(spec);
  j["r"] = s.r;
  j["seed"] = s.seed;
  j["engine"] = to_string(s.engine);
  j["burn_in"] = s.burn_in;
  j["sample_dt"] = s.sample_dt;
  j["regime"] = to_string(s.regime);
  j["samples"] = s.size();
  j["events"] = s.events;
  j["virtual_events"] = s.virtual_events;
  j["invariants_ok"] = s.invariants_ok;
  return j;
}

inline void write_series_csv(std::ostream& os, const SystemSpec& spec, const ScaledSeries& s) {
  os << "t";
  for (std::size_t e = 0; e < s.E; ++e) os << ",psi_" << spec.edge_name(e);
  for (std::size_t i = 0; i < s.I; ++i) os << ",q_" << spec.classes[i];
  for (std::size_t p = 0; p < s.J; ++p) os << ",z_" << spec.pools[p];
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < s.size(); ++k) {
    put(s.t[k]);
    for (std::size_t e = 0; e < s.E; ++e) os << ",", put(s.psi(k, e));
    for (std::size_t i = 0; i < s.I; ++i) os << ",", put(s.q(k, i));
    for (std::size_t p = 0; p < s.J; ++p) os << ",", put(s.z(k, p));
    os << "\n";
  }
}

// Non-finite values become the strings "inf", "-inf" or "nan".
inline Json number_or_marker(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json estimate_to_json(const Estimate& e) { return Json{{"mean", number_or_marker(e.mean)}, {"se", number_or_marker(e.se)}}; }

inline Json sweep_to_json(const SystemSpec& spec, const SweepResult& res) {
  const auto& cfg = res.config;
  Json j;
  j["spec_hash"] = spec_hash(spec);
  j["engine"] = to_string(cfg.engine);
  j["T"] = cfg.T;
  j["burn_in"] = res.burn_in;
  j["sample_dt"] = cfg.sample_dt;
  j["seeds"] = cfg.seeds;
  j["base_seed"] = cfg.base_seed;
  j["r"] = cfg.r_values;
  j["K"] = cfg.K;
  Json th = Json::array();
  for (const auto& t : cfg.theta) th.push_back(Json{{"label", t.label}, {"value", t.value}});
  j["theta"] = th;

  Json rows = Json::array();
  for (const auto& row : res.rows) {
    Json o;
    o["r"] = row.r;
    o["ok_cells"] = row.ok_cells;
    Json mass = Json::array();
    for (const auto& m : row.mass) mass.push_back(estimate_to_json(m));
    o["mass"] = mass;
    Json ly = Json::array();
    for (const auto& m : row.lyapunov) ly.push_back(estimate_to_json(m));
    o["lyapunov"] = ly;
    o["ks"] = row.ks ? estimate_to_json(*row.ks) : Json(nullptr);
    rows.push_back(o);
  }
  j["rows"] = rows;

  Json trends;
  Json mt = Json::array();
  for (const auto& t : res.mass_trends)
    mt.push_back(Json{{"K", t.K},
                      {"strictly_decreasing", t.strictly_decreasing},
                      {"min_gap_in_se", number_or_marker(t.min_gap_in_se)},
                      {"min_mass", t.min_mass}});
  trends["mass"] = mt;
  Json lt = Json::array();
  for (const auto& t : res.lyapunov_trends)
    lt.push_back(Json{{"label", t.label}, {"theta", t.theta}, {"max_min_ratio", number_or_marker(t.max_min_ratio)}});
  trends["lyapunov"] = lt;
  j["trends"] = trends;

  Json cells = Json::array();
  for (const auto& c : res.cells) {
    Json o;
    o["r"] = c.r;
    o["seed"] = c.seed;
    o["ok"] = c.ok;
    if (!c.ok) {
      o["error"] = c.error;
    } else {
      o["samples"] = c.samples;
      o["events"] = c.events;
      Json mass = Json::array();
      for (const auto& m : c.mass) mass.push_back(estimate_to_json(m));
      o["mass"] = mass;
      Json ly = Json::array();
      for (const auto& m : c.lyapunov) ly.push_back(estimate_to_json(m));
      o["lyapunov"] = ly;
      o["ks"] = c.ks ? Json(*c.ks) : Json(nullptr);
    }
    cells.push_back(o);
  }
  j["cells"] = cells;
  j["failed_cells"] = res.failed_cells;
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
}

}  // namespace lqfs
