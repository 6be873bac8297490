#pragma once

// Prebuilt systems: the small shapes and the instability counterexamples.

#include <cmath>
#include <map>
#include <tuple>
#include <string>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/model.hpp"

namespace lqfs {

struct ExampleEntry {
  std::string name;
  std::string description;
  SystemSpec spec;
};

namespace detail {

inline SystemSpec make_tree(std::vector<std::string> classes, std::vector<std::string> pools, std::vector<double> beta,
                            const std::vector<std::tuple<std::string, std::string, double>>& edges) {
  SystemSpec s;
  s.classes = std::move(classes);
  s.pools = std::move(pools);
  s.beta = std::move(beta);
  for (const auto& [c, p, mu] : edges) s.edges.push_back({*s.class_index(c), *s.pool_index(p), mu});
  s.lambda.assign(s.classes.size(), 1.0);
  return s;
}

inline SystemSpec at_load(SystemSpec s, double load) { return auto_lambda(s, even_split_seed(s, load)); }

inline ExampleEntry fig1() {
  auto s = make_tree({"A", "B"}, {"1", "2"}, {0.6, 0.4}, {{"A", "1", 1.0}, {"A", "2", 2.0}, {"B", "2", 3.0}});
  return {"fig1", "two classes, two pools, edges A1 A2 B2; underload at 0.8", at_load(s, 0.8)};
}

// Classes are declared C, B, A so that the drift matrix appears in the
// published row order (the leaf at pool 4 first).
inline ExampleEntry example1() {
  auto s = make_tree({"C", "B", "A"}, {"1", "2", "3", "4"}, {0.97, 0.01, 0.01, 0.01},
                     {{"A", "1", 1.0}, {"A", "2", 100.0}, {"B", "2", 1.0}, {"B", "3", 100.0}, {"C", "3", 1.0}, {"C", "4", 100.0}});
  return {"example1", "path 1-A-2-B-3-C-4 with a dominant pool 1; unstable underload equilibrium (load 0.9)", at_load(s, 0.9)};
}

inline std::vector<std::tuple<std::string, std::string, double>> example2_edges() {
  return {{"A", "1", 1.0},   {"B", "1", 100.0}, {"B", "2", 1.0},     {"C", "2", 100.0},
          {"C", "3", 1.0},   {"D", "3", 100.0}, {"D", "4", 10000.0}, {"E", "4", 100.0}};
}

inline ExampleEntry example2() {
  auto s = make_tree({"A", "B", "C", "D", "E"}, {"1", "2", "3", "4"}, {1.0, 1.0, 1.0, 1.0}, example2_edges());
  return {"example2", "path A-1-B-2-C-3-D-4-E; unstable critical-load equilibrium", at_load(s, 1.0)};
}

inline ExampleEntry combined() {
  auto edges = example2_edges();
  edges.insert(edges.begin(), {"A", "0", 100.0});
  auto s = make_tree({"A", "B", "C", "D", "E"}, {"0", "1", "2", "3", "4"}, {0.01, 0.01, 0.01, 0.96, 0.01}, edges);
  return {"combined", "example2 with pool 0 attached to A; unstable in underload (0.9) and in critical load", at_load(s, 0.9)};
}

inline ExampleEntry fig5_star() {
  auto s = make_tree({"A", "B", "C", "D"}, {"1"}, {1.0}, {{"A", "1", 1.0}, {"B", "1", 2.0}, {"C", "1", 3.0}, {"D", "1", 4.0}});
  return {"fig5_star", "four classes sharing one pool; critical load", at_load(s, 1.0)};
}

inline ExampleEntry fig5_path() {
  auto s = make_tree({"A", "B", "C", "D"}, {"1", "2", "3"}, {1.0, 1.0, 1.0},
                     {{"A", "1", 1.0}, {"B", "1", 100.0}, {"B", "2", 1.0}, {"C", "2", 100.0}, {"C", "3", 1.0}, {"D", "3", 100.0}});
  return {"fig5_path", "path A-1-B-2-C-3-D; critical load", at_load(s, 1.0)};
}

// Pool-dependent service rates (mu_ij = mu_j) in the Halfin-Whitt regime with C = 1.
inline ExampleEntry hw_pooled() {
  auto s = make_tree({"A", "B", "C"}, {"1", "2"}, {0.5, 0.5}, {{"A", "1", 1.0}, {"B", "1", 1.0}, {"B", "2", 2.0}, {"C", "2", 2.0}});
  s = at_load(s, 1.0);
  s.scaling = ScalingFamily{{100.0, 400.0, 1600.0}, {-0.5, -0.5, -0.5}, Regime::halfin_whitt};
  return {"hw_pooled", "mu_ij = mu_j, Halfin-Whitt scaling with C = 1; tight diffusion-scaled stationary laws", s};
}

// Example 2 with mu_D3 = 100 - eps and leaves 0 (at A) and 5 (at E) added.
// Occupancies are chosen so that every lambda_i is equal, which makes
// (1,...,1) an eigenvector of A_u; delta1 is fixed by psi*_D = psi*_A.
struct HwEvanescentParams {
  double eps = 20.0;
  double delta = 0.0;  // 0 selects half of the admissible upper bound
  double scale = 10.0;
};

inline double hw_evanescent_delta_bound(double eps) { return (1.0 / (100.0 - eps) - 1.0 / 100.0) / 99.0; }

inline ExampleEntry hw_evanescent(HwEvanescentParams p = {}) {
  if (!(p.eps > 0.0 && p.eps < 100.0)) throw InvalidInput("hw_evanescent: eps must lie in (0, 100)");
  const double bound = hw_evanescent_delta_bound(p.eps);
  const double delta = p.delta > 0.0 ? p.delta : 0.5 * bound;
  if (!(delta < bound)) throw InvalidInput("hw_evanescent: delta must be below " + std::to_string(bound));
  const double psi_A = 0.01 + 99.0 * delta;
  const double muD3 = 100.0 - p.eps, muD4 = 1e4;
  const double delta1 = (psi_A - 1.0 / muD3) / (1.0 / muD4 - 1.0 / muD3);

  const std::vector<std::tuple<std::string, std::string, double>> edges = {
      {"A", "0", 100.0}, {"A", "1", 1.0}, {"B", "1", 100.0}, {"B", "2", 1.0},  {"C", "2", 100.0},
      {"C", "3", 1.0},   {"D", "3", muD3}, {"D", "4", muD4}, {"E", "4", 100.0}, {"E", "5", 1.0}};
  const std::vector<double> psi = {0.01 - delta, 100.0 * delta, 0.01 - delta, 100.0 * delta, 0.01 - delta,
                                   100.0 * delta, (1.0 - delta1) / muD3, delta1 / muD4, 0.01 - delta, 100.0 * delta};
  std::vector<double> beta(6, 0.0);
  const std::vector<std::size_t> pool_of = {0, 1, 1, 2, 2, 3, 3, 4, 4, 5};
  for (std::size_t e = 0; e < psi.size(); ++e) beta[pool_of[e]] += psi[e];

  auto s = make_tree({"A", "B", "C", "D", "E"}, {"0", "1", "2", "3", "4", "5"}, beta, edges);
  std::vector<double> seed = psi;
  for (double& b : s.beta) b *= p.scale;
  for (double& v : seed) v *= p.scale;
  s = auto_lambda(s, seed);
  s.scaling = ScalingFamily{{100.0, 400.0, 1600.0}, {-1.0, -1.0, -1.0, -1.0, -1.0}, Regime::halfin_whitt};
  return {"hw_evanescent",
          "equal arrival rates on the extended critical example (eps = " + std::to_string(p.eps) + "); unstable A_c under Halfin-Whitt scaling",
          s};
}

}  // namespace detail

inline std::vector<std::string> example_names() {
  return {"fig1", "example1", "example2", "combined", "fig5_star", "fig5_path", "hw_pooled", "hw_evanescent"};
}

inline ExampleEntry get_example(const std::string& name) {
  if (name == "fig1") return detail::fig1();
  if (name == "example1") return detail::example1();
  if (name == "example2") return detail::example2();
  if (name == "combined") return detail::combined();
  if (name == "fig5_star") return detail::fig5_star();
  if (name == "fig5_path") return detail::fig5_path();
  if (name == "hw_pooled") return detail::hw_pooled();
  if (name == "hw_evanescent") return detail::hw_evanescent();
  throw InvalidInput("unknown example '" + name + "'");
}

}  // namespace lqfs
