#pragma once

// Static planning problem on a tree: optimal routing rates, common pool load,
// nominal occupancies and the dual workloads/capacities.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/model.hpp"

namespace lqfs {

namespace detail {

// Leaf elimination on the tree for the linear system
//   sum_j x_ij            = c_i   (class nodes)
//   sum_i x_ij / conv_ij  = p_j   (pool nodes)
// where the right-hand sides are rows of coefficient matrices (each column is
// an independent right-hand side, so affine/linear families solve in one pass).
// Returns per-edge rows; `root_residual` is what is left at the last node and
// must vanish for a consistent right-hand side.
struct PeelResult {
  Eigen::MatrixXd edge_values;
  Eigen::RowVectorXd root_residual;
};

inline PeelResult peel_solve(const ActivityTree& tree, Eigen::MatrixXd class_rhs, Eigen::MatrixXd pool_rhs,
                             const std::vector<double>& conv) {
  const auto k = class_rhs.cols();
  PeelResult out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tree.num_edges()), k), Eigen::RowVectorXd()};
  for (const auto& step : tree.peel_order()) {
    const auto e = static_cast<Eigen::Index>(step.edge);
    const auto i = static_cast<Eigen::Index>(tree.class_of(step.edge));
    const auto j = static_cast<Eigen::Index>(tree.pool_of(step.edge));
    if (tree.is_class(step.leaf)) {
      out.edge_values.row(e) = class_rhs.row(i);
      pool_rhs.row(j) -= class_rhs.row(i) / conv[step.edge];
      class_rhs.row(i).setZero();
    } else {
      out.edge_values.row(e) = pool_rhs.row(j) * conv[step.edge];
      class_rhs.row(i) -= out.edge_values.row(e);
      pool_rhs.row(j).setZero();
    }
  }
  const auto root = tree.peel_root();
  out.root_residual = tree.is_class(root) ? Eigen::RowVectorXd(class_rhs.row(static_cast<Eigen::Index>(root)))
                                          : Eigen::RowVectorXd(pool_rhs.row(static_cast<Eigen::Index>(root - tree.num_classes())));
  return out;
}

}  // namespace detail

struct Duals {
  std::vector<double> nu;     // per class workload
  std::vector<double> alpha;  // per pool capacity, sums to one
};

struct SppSolution {
  std::vector<double> lambda_edge;
  double rho = 0.0;
  std::vector<double> psi_star;
  std::vector<double> nu;
  std::vector<double> alpha;
  std::optional<double> hw_C;

  // Max relative residuals of the primal constraints and dual relations.
  double demand_residual = 0.0;
  double load_residual = 0.0;
  double dual_residual = 0.0;
  double workload_residual = 0.0;

  std::vector<double> psi_class(const SystemSpec& spec) const {
    std::vector<double> out(spec.num_classes(), 0.0);
    for (std::size_t e = 0; e < spec.num_edges(); ++e) out[spec.edges[e].cls] += psi_star[e];
    return out;
  }
};

// nu_i beta_j mu_ij = alpha_j on every edge, propagated from class 0 and then
// normalized to sum_j alpha_j = 1.
inline Duals solve_duals(const SystemSpec& spec, const ActivityTree& tree) {
  const std::size_t I = spec.num_classes(), J = spec.num_pools();
  std::vector<double> node_val(I + J, 0.0);
  std::vector<char> seen(I + J, 0);
  std::vector<std::size_t> stack{0};
  node_val[0] = 1.0;
  seen[0] = 1;
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    for (const auto& l : tree.neighbors(n)) {
      if (seen[l.node]) continue;
      const auto& ed = spec.edges[l.edge];
      const double scale = spec.beta[ed.pool] * ed.mu;
      node_val[l.node] = tree.is_class(n) ? node_val[n] * scale : node_val[n] / scale;
      seen[l.node] = 1;
      stack.push_back(l.node);
    }
  }
  double sum_alpha = 0.0;
  for (std::size_t j = 0; j < J; ++j) sum_alpha += node_val[I + j];
  Duals d;
  d.nu.resize(I);
  d.alpha.resize(J);
  for (std::size_t i = 0; i < I; ++i) d.nu[i] = node_val[i] / sum_alpha;
  for (std::size_t j = 0; j < J; ++j) d.alpha[j] = node_val[I + j] / sum_alpha;
  return d;
}

inline Duals solve_duals(const SystemSpec& spec, const SppSolution& /*spp*/) {
  return solve_duals(spec, ActivityTree(spec));
}

inline SppSolution solve_spp(const SystemSpec& spec) {
  const ActivityTree tree(spec);
  const auto I = static_cast<Eigen::Index>(spec.num_classes());
  const auto J = static_cast<Eigen::Index>(spec.num_pools());

  std::vector<double> conv(spec.num_edges());
  for (std::size_t e = 0; e < spec.num_edges(); ++e) conv[e] = spec.edges[e].mu;

  // Unknowns are affine in rho: column 0 is the constant part, column 1 the rho
  // coefficient. Solves sum_j x_ij = c_i, sum_i x_ij/mu_ij = p_j + beta_j rho.
  auto solve = [&](const std::vector<double>& c, const std::vector<double>& p, std::vector<double>& x, double& rho) {
    Eigen::MatrixXd class_rhs = Eigen::MatrixXd::Zero(I, 2);
    Eigen::MatrixXd pool_rhs = Eigen::MatrixXd::Zero(J, 2);
    for (Eigen::Index i = 0; i < I; ++i) class_rhs(i, 0) = c[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < J; ++j) {
      pool_rhs(j, 0) = p[static_cast<std::size_t>(j)];
      pool_rhs(j, 1) = spec.beta[static_cast<std::size_t>(j)];
    }
    const auto peeled = detail::peel_solve(tree, class_rhs, pool_rhs, conv);
    const double a = peeled.root_residual(0), b = peeled.root_residual(1);
    if (std::abs(b) <= 1e-300) throw InvalidInput("static planning system is singular");
    rho = -a / b;
    x.resize(spec.num_edges());
    for (std::size_t e = 0; e < spec.num_edges(); ++e) {
      const auto row = peeled.edge_values.row(static_cast<Eigen::Index>(e));
      x[e] = row(0) + row(1) * rho;
    }
  };

  SppSolution sol;
  solve(spec.lambda, std::vector<double>(spec.num_pools(), 0.0), sol.lambda_edge, sol.rho);

  sol.psi_star.resize(spec.num_edges());
  for (std::size_t e = 0; e < spec.num_edges(); ++e) sol.psi_star[e] = sol.lambda_edge[e] / spec.edges[e].mu;
  for (std::size_t e = 0; e < spec.num_edges(); ++e)
    if (!(sol.lambda_edge[e] > 0.0))
      throw CrpViolation("CRP violated: routing rate on edge " + spec.edge_name(e) + " is " +
                         std::to_string(sol.lambda_edge[e]) + " (must be > 0)");

  std::vector<double> demand(spec.num_classes(), 0.0), load(spec.num_pools(), 0.0);
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    demand[spec.edges[e].cls] += sol.lambda_edge[e];
    load[spec.edges[e].pool] += sol.lambda_edge[e] / (spec.beta[spec.edges[e].pool] * spec.edges[e].mu);
  }
  for (std::size_t i = 0; i < demand.size(); ++i)
    sol.demand_residual = std::max(sol.demand_residual, std::abs(demand[i] - spec.lambda[i]) / spec.lambda[i]);
  for (double l : load) sol.load_residual = std::max(sol.load_residual, std::abs(l - sol.rho) / sol.rho);

  auto duals = solve_duals(spec, tree);
  sol.nu = std::move(duals.nu);
  sol.alpha = std::move(duals.alpha);
  for (const auto& ed : spec.edges) {
    const double lhs = sol.nu[ed.cls] * spec.beta[ed.pool] * ed.mu;
    sol.dual_residual = std::max(sol.dual_residual, std::abs(lhs - sol.alpha[ed.pool]) / sol.alpha[ed.pool]);
  }
  double workload = 0.0;
  for (std::size_t i = 0; i < spec.num_classes(); ++i) workload += spec.lambda[i] * sol.nu[i];
  sol.workload_residual = std::abs(workload - sol.rho) / sol.rho;

  if (spec.scaling && spec.scaling->regime == Regime::halfin_whitt && spec.scaling->l.size() == spec.num_classes()) {
    double s = 0.0;
    for (std::size_t i = 0; i < spec.num_classes(); ++i) s += spec.scaling->l[i] * sol.nu[i];
    sol.hw_C = -s;
  }
  return sol;
}

struct HwLoad {
  double rho_r = 1.0;
  std::vector<double> lambda_r;  // per class arrival rates of the r-th system
};

// Load of the r-th Halfin-Whitt system, rho^r = 1 + (sum_i l_i nu_i) / sqrt(r).
inline HwLoad hw_load(const SystemSpec& spec, const SppSolution& spp, double r) {
  if (!spec.scaling || spec.scaling->regime != Regime::halfin_whitt)
    throw RegimeError("hw_load requires a halfin_whitt scaling family");
  if (std::abs(spp.rho - 1.0) > 1e-8) throw RegimeError("hw_load requires a critically loaded system (rho = 1), got rho = " + std::to_string(spp.rho));
  if (!(r > 0.0)) throw InvalidInput("scaling parameter r must be positive");
  const auto& l = spec.scaling->l;
  double s = 0.0;
  for (std::size_t i = 0; i < spec.num_classes(); ++i) s += l[i] * spp.nu[i];
  if (!(s < 0.0)) throw RegimeError("halfin_whitt regime needs sum_i l_i nu_i < 0, got " + std::to_string(s));
  HwLoad out;
  out.rho_r = 1.0 + s / std::sqrt(r);
  out.lambda_r.resize(spec.num_classes());
  for (std::size_t i = 0; i < spec.num_classes(); ++i) out.lambda_r[i] = r * spec.lambda[i] + std::sqrt(r) * l[i];
  return out;
}

}  // namespace lqfs
