#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lqfs/lqfs.hpp"

namespace {

using lqfs::Json;

struct Source {
  std::string config;
  std::string example;
};

void add_source(CLI::App* cmd, Source& src) {
  auto* c = cmd->add_option("--config", src.config, "System spec JSON file");
  auto* e = cmd->add_option("--example", src.example, "Registry example name");
  c->excludes(e);
}

lqfs::SystemSpec load(const Source& src) {
  if (!src.config.empty()) return lqfs::load_spec(src.config);
  if (!src.example.empty()) return lqfs::get_example(src.example).spec;
  throw lqfs::InvalidInput("one of --config or --example is required");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << "\n";
  return s;
}

void emit(const Json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    lqfs::write_text(out, text);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) x(static_cast<Eigen::Index>(k)) = v[k];
  return x;
}

// Alternating +-1 pattern with zero sum when `centred`, scaled to `amp`.
Eigen::VectorXd default_deviation(std::size_t I, double amp, bool centred) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(I));
  for (std::size_t i = 0; i < I; ++i) y(static_cast<Eigen::Index>(i)) = i % 2 ? -1.0 : 1.0;
  if (centred) y.array() -= y.mean();
  if (y.norm() == 0.0) return y;
  return amp * y / y.norm();
}

std::vector<double> uniform_grid(double T, double dt) {
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  for (std::size_t k = 0; k <= n; ++k) g.push_back(static_cast<double>(k) * dt);
  return g;
}

void write_csv_with_sidecar(const lqfs::Trajectory& tr, const Json& meta, const std::string& out) {
  if (out.empty()) {
    tr.write_csv(std::cout);
    std::cerr << meta.dump() << "\n";
    return;
  }
  std::ostringstream ss;
  tr.write_csv(ss);
  lqfs::write_text(out, ss.str());
  lqfs::write_text(out + ".json", meta.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability analysis and simulation of many-server systems with tree routing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // examples
  auto* ex = app.add_subcommand("examples", "List or show registry examples");
  ex->require_subcommand(1);
  auto* ex_list = ex->add_subcommand("list", "List example names");
  auto* ex_show = ex->add_subcommand("show", "Print an example spec as JSON");
  std::string show_name;
  ex_show->add_option("name", show_name, "Example name")->required();

  // validate
  Source val_src;
  auto* val = app.add_subcommand("validate", "Check a spec against the model invariants");
  add_source(val, val_src);

  // analyze
  Source an_src;
  std::string an_out;
  auto* an = app.add_subcommand("analyze", "Solve the SPP and classify local stability");
  add_source(an, an_src);
  an->add_option("--out", an_out, "Write the report here instead of stdout");

  // fluid
  Source fl_src;
  std::string fl_mode = "linear", fl_out;
  double fl_T = 10.0, fl_dt = 1e-3, fl_q = 1.0, fl_record = 0.01;
  std::optional<double> fl_perturb;
  std::vector<double> fl_y0;
  std::optional<std::uint64_t> fl_seed;
  auto* fl = app.add_subcommand("fluid", "Integrate linear ODEs, the full fluid model or the limiting SDE");
  add_source(fl, fl_src);
  fl->add_option("--mode", fl_mode, "linear | full | sde")->check(CLI::IsMember({"linear", "full", "sde"}));
  fl->add_option("--t", fl_T, "Time horizon")->check(CLI::PositiveNumber);
  fl->add_option("--dt", fl_dt, "Step or grid spacing")->check(CLI::PositiveNumber);
  fl->add_option("--record", fl_record, "Recording interval (full and sde modes)")->check(CLI::NonNegativeNumber);
  fl->add_option("--perturb", fl_perturb, "Size of the default initial deviation");
  fl->add_option("--y0", fl_y0, "Explicit initial deviation per class");
  fl->add_option("--q0", fl_q, "Initial common queue in critical load");
  fl->add_option("--seed", fl_seed, "Seed for the sde mode");
  fl->add_option("--out", fl_out, "CSV path; metadata goes to <path>.json");

  // simulate
  Source sim_src;
  double sim_r = 100.0, sim_T = 500.0, sim_dt = 0.1;
  std::optional<double> sim_burn;
  std::string sim_engine = "event", sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::vector<double> sim_K = {10.0};
  std::vector<std::string> sim_theta;
  auto* sim = app.add_subcommand("simulate", "Run one CTMC replication");
  add_source(sim, sim_src);
  sim->add_option("--r", sim_r, "Scaling parameter")->check(CLI::PositiveNumber);
  sim->add_option("--T", sim_T, "Simulated time")->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", sim_burn, "Discarded prefix");
  sim->add_option("--sample-dt", sim_dt, "Sampling interval")->check(CLI::PositiveNumber);
  sim->add_option("--engine", sim_engine, "event | uniformized")->check(CLI::IsMember({"event", "uniformized"}));
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--K", sim_K, "Ball radii for mass_in_ball");
  sim->add_option("--theta", sim_theta, "Lyapunov exponents (number or <f>theta0)");
  sim->add_option("--out", sim_out, "CSV path for the scaled series; metadata goes to <path>.json");

  // sweep
  Source sw_src;
  std::vector<double> sw_r;
  std::vector<double> sw_K = {10.0};
  std::vector<std::string> sw_theta;
  double sw_T = 500.0, sw_dt = 0.1;
  std::optional<double> sw_burn;
  long long sw_seeds = 20;
  std::optional<std::uint64_t> sw_seed;
  std::string sw_engine = "event", sw_out;
  bool sw_density = false;
  auto* sw = app.add_subcommand("sweep", "Replications over an (r, seed) grid");
  add_source(sw, sw_src);
  sw->add_option("--r", sw_r, "Comma-separated r values")->delimiter(',');
  sw->add_option("--K", sw_K, "Ball radii")->delimiter(',');
  sw->add_option("--theta", sw_theta, "Lyapunov exponents")->delimiter(',');
  sw->add_option("--T", sw_T, "Simulated time per replication")->check(CLI::PositiveNumber);
  sw->add_option("--burn-in", sw_burn, "Discarded prefix");
  sw->add_option("--sample-dt", sw_dt, "Sampling interval")->check(CLI::PositiveNumber);
  sw->add_option("--seeds", sw_seeds, "Replications per r");
  sw->add_option("--seed", sw_seed, "Base seed");
  sw->add_option("--engine", sw_engine, "event | uniformized")->check(CLI::IsMember({"event", "uniformized"}));
  sw->add_flag("--density", sw_density, "KS distance to the one-dimensional limit where applicable");
  sw->add_option("--out", sw_out, "Write the summary here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(lqfs::ExitCode::input);
  }

  try {
    if (*ex_list) {
      for (const auto& n : lqfs::example_names()) std::cout << n << "\t" << lqfs::get_example(n).description << "\n";
    } else if (*ex_show) {
      emit(lqfs::spec_to_json(lqfs::get_example(show_name).spec), "");
    } else if (*val) {
      const auto spec = load(val_src);
      auto rep = lqfs::validate(spec);
      if (spec.scaling) {
        const auto sr = lqfs::validate_scaling(spec);
        for (const auto& v : sr.violations) rep.fail(v);
      }
      emit(lqfs::validation_to_json(rep), "");
      if (!rep.ok) return static_cast<int>(lqfs::ExitCode::input);
    } else if (*an) {
      emit(lqfs::analyze_report(load(an_src)), an_out);
    } else if (*fl) {
      const auto spec = load(fl_src);
      lqfs::require_valid(spec);
      const auto sol = lqfs::solve_spp(spec);
      const bool critical = lqfs::is_critical(sol);
      const auto I = spec.num_classes();
      Json meta;
      meta["mode"] = fl_mode;
      meta["regime"] = critical ? "critical" : "underload";
      meta["T"] = fl_T;
      meta["dt"] = fl_dt;
      meta["spec_hash"] = lqfs::spec_hash(spec);
      if (fl_mode == "linear") {
        const auto dm = lqfs::build_drift_matrices(spec);
        const auto y0 = fl_y0.empty() ? default_deviation(I, fl_perturb.value_or(1e-2), critical) : to_vector(fl_y0);
        const auto grid = uniform_grid(fl_T, fl_dt);
        const auto tr = critical ? lqfs::linear_ode_critical(spec, dm, y0, grid, fl_q) : lqfs::linear_ode_underload(spec, dm, y0, grid);
        write_csv_with_sidecar(tr, meta, fl_out);
      } else if (fl_mode == "full") {
        auto st = lqfs::equilibrium_state(spec, critical ? fl_q : 0.0);
        const double p = fl_perturb.value_or(0.0);
        if (p != 0.0) st.psi_edge[0] *= 1.0 + p;
        lqfs::FluidOptions opt;
        opt.record_interval = fl_record;
        const auto run = lqfs::fluid_integrate(spec, st, fl_dt, fl_T, opt);
        meta["mass_balance_residual"] = run.mass_balance_residual;
        meta["steps"] = run.steps;
        write_csv_with_sidecar(run.trajectory, meta, fl_out);
      } else {
        const auto seed = resolve_seed(fl_seed);
        const auto dm = lqfs::build_drift_matrices(spec);
        const bool hw = spec.scaling && spec.scaling->regime == lqfs::Regime::halfin_whitt;
        const auto x0 = fl_y0.empty() ? default_deviation(I, fl_perturb.value_or(0.0), false) : to_vector(fl_y0);
        lqfs::SdeOptions opt;
        opt.record_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fl_record / fl_dt)));
        const auto run = hw ? lqfs::sde_halfin_whitt(spec, dm, x0, fl_dt, fl_T, seed, opt) : lqfs::sde_underload(spec, dm, x0, fl_dt, fl_T, seed, opt);
        Json side = lqfs::sde_sidecar(spec, hw ? "sde_halfin_whitt" : "sde_underload", run.seed, run.dt, fl_T);
        write_csv_with_sidecar(run.trajectory, side, fl_out);
      }
    } else if (*sim) {
      const auto spec = load(sim_src);
      lqfs::require_valid(spec);
      const auto seed = resolve_seed(sim_seed);
      const double burn = sim_burn ? *sim_burn : std::min(lqfs::default_burn_in(spec), 0.5 * sim_T);
      const auto s = lqfs::run_replication(spec, sim_r, sim_T, burn, sim_dt, seed, lqfs::parse_engine(sim_engine));
      Json rep = lqfs::series_metadata(spec, s);
      if (s.size() > 0) {
        Json mass = Json::array();
        for (double K : sim_K) mass.push_back(Json{{"K", K}, {"mass", lqfs::estimate_to_json(lqfs::batch_means(lqfs::ball_indicator(s, K)))}});
        rep["mass_in_ball"] = mass;
        if (s.regime == lqfs::Regime::halfin_whitt) {
          Json ly = Json::array();
          for (const auto& t : sim_theta) {
            const auto th = lqfs::parse_theta(t, spec);
            ly.push_back(Json{{"label", th.label}, {"theta", th.value}, {"moment", lqfs::estimate_to_json(lqfs::lyapunov_moment(s, th.value))}});
          }
          rep["lyapunov"] = ly;
          if (lqfs::pool_rates(spec)) rep["density_ks"] = lqfs::stationary_density_1d(s, spec).ks;
        }
      }
      if (!sim_out.empty()) {
        std::ostringstream ss;
        lqfs::write_series_csv(ss, spec, s);
        lqfs::write_text(sim_out, ss.str());
        lqfs::write_text(sim_out + ".json", lqfs::series_metadata(spec, s).dump(2) + "\n");
      }
      emit(rep, "");
    } else if (*sw) {
      const auto spec = load(sw_src);
      if (sw_seeds < 1) throw lqfs::InvalidInput("--seeds must be at least 1");
      lqfs::SweepConfig cfg;
      cfg.r_values = sw_r;
      if (cfg.r_values.empty() && spec.scaling) cfg.r_values = spec.scaling->r_values;
      cfg.T = sw_T;
      cfg.burn_in = sw_burn;
      cfg.sample_dt = sw_dt;
      cfg.K = sw_K;
      for (const auto& t : sw_theta) cfg.theta.push_back(lqfs::parse_theta(t, spec));
      cfg.seeds = static_cast<std::size_t>(sw_seeds);
      cfg.base_seed = resolve_seed(sw_seed);
      cfg.engine = lqfs::parse_engine(sw_engine);
      cfg.density = sw_density;
      const auto res = lqfs::run_sweep(spec, cfg);
      emit(lqfs::sweep_to_json(spec, res), sw_out);
      if (res.failed_cells == res.cells.size()) {
        std::cerr << "error: every cell failed: " << res.cells.front().error << "\n";
        return static_cast<int>(lqfs::ExitCode::numeric);
      }
    }
  } catch (const lqfs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(lqfs::ExitCode::numeric);
  }
  return 0;
}
