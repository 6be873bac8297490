#pragma once

// System description: customer classes, server pools and the basic activity
// tree connecting them, plus the structural reductions used to simplify
// stability questions (leaf removal, server expansion).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "lqfs/error.hpp"

namespace lqfs {

enum class Regime { underload, halfin_whitt };

inline const char* to_string(Regime r) {
  return r == Regime::underload ? "underload" : "halfin_whitt";
}

struct ScalingFamily {
  std::vector<double> r_values;
  std::vector<double> l;  // per class, second-order arrival coefficients
  Regime regime = Regime::underload;

  bool operator==(const ScalingFamily&) const = default;
};

struct Edge {
  std::size_t cls = 0;
  std::size_t pool = 0;
  double mu = 0.0;

  bool operator==(const Edge&) const = default;
};

struct SystemSpec {
  std::vector<std::string> classes;
  std::vector<std::string> pools;
  std::vector<double> beta;    // per pool
  std::vector<Edge> edges;     // basic activities, in declaration order
  std::vector<double> lambda;  // per class
  std::optional<ScalingFamily> scaling;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_pools() const { return pools.size(); }
  std::size_t num_edges() const { return edges.size(); }

  double total_beta() const { return std::accumulate(beta.begin(), beta.end(), 0.0); }

  std::optional<std::size_t> class_index(const std::string& id) const {
    auto it = std::find(classes.begin(), classes.end(), id);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  }
  std::optional<std::size_t> pool_index(const std::string& id) const {
    auto it = std::find(pools.begin(), pools.end(), id);
    if (it == pools.end()) return std::nullopt;
    return static_cast<std::size_t>(it - pools.begin());
  }
  std::optional<std::size_t> edge_index(std::size_t i, std::size_t j) const {
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (edges[e].cls == i && edges[e].pool == j) return e;
    return std::nullopt;
  }
  std::string edge_name(std::size_t e) const {
    return classes[edges[e].cls] + pools[edges[e].pool];
  }

  bool operator==(const SystemSpec&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;

  void fail(std::string msg) {
    ok = false;
    violations.push_back(std::move(msg));
  }
};

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace detail

inline ValidationReport validate(const SystemSpec& spec) {
  ValidationReport rep;
  const std::size_t I = spec.num_classes();
  const std::size_t J = spec.num_pools();
  if (I == 0) rep.fail("no customer classes");
  if (J == 0) rep.fail("no server pools");
  if (spec.beta.size() != J) rep.fail("beta has " + std::to_string(spec.beta.size()) + " entries, expected " + std::to_string(J));
  if (spec.lambda.size() != I) rep.fail("lambda has " + std::to_string(spec.lambda.size()) + " entries, expected " + std::to_string(I));

  for (std::size_t a = 0; a < I; ++a)
    for (std::size_t b = a + 1; b < I; ++b)
      if (spec.classes[a] == spec.classes[b]) rep.fail("duplicate class id '" + spec.classes[a] + "'");
  for (std::size_t a = 0; a < J; ++a)
    for (std::size_t b = a + 1; b < J; ++b)
      if (spec.pools[a] == spec.pools[b]) rep.fail("duplicate pool id '" + spec.pools[a] + "'");

  for (std::size_t i = 0; i < std::min(I, spec.lambda.size()); ++i)
    if (!(spec.lambda[i] > 0.0)) rep.fail("nonpositive rate: lambda[" + spec.classes[i] + "]");
  for (std::size_t j = 0; j < std::min(J, spec.beta.size()); ++j)
    if (!(spec.beta[j] > 0.0)) rep.fail("nonpositive rate: beta[" + spec.pools[j] + "]");

  bool indices_ok = true;
  for (std::size_t e = 0; e < spec.edges.size(); ++e) {
    const Edge& ed = spec.edges[e];
    if (ed.cls >= I || ed.pool >= J) {
      rep.fail("edge " + std::to_string(e) + " references an unknown class or pool");
      indices_ok = false;
      continue;
    }
    if (!(ed.mu > 0.0)) rep.fail("nonpositive rate: mu[" + spec.edge_name(e) + "]");
    for (std::size_t f = 0; f < e; ++f)
      if (spec.edges[f].cls == ed.cls && spec.edges[f].pool == ed.pool)
        rep.fail("duplicate edge " + spec.edge_name(e));
  }

  if (I + J == 0 || !indices_ok) return rep;
  if (spec.edges.size() != I + J - 1)
    rep.fail("edge count " + std::to_string(spec.edges.size()) + " != I+J-1 = " + std::to_string(I + J - 1));

  detail::UnionFind uf(I + J);
  bool cycle = false;
  for (const Edge& ed : spec.edges)
    if (!uf.unite(ed.cls, I + ed.pool)) cycle = true;
  if (cycle) rep.fail("cycle found in activity graph");
  std::size_t comps = 0;
  for (std::size_t n = 0; n < I + J; ++n)
    if (uf.find(n) == n) ++comps;
  if (comps > 1) rep.fail("activity graph is disconnected (" + std::to_string(comps) + " components)");
  return rep;
}

inline void require_valid(const SystemSpec& spec) {
  auto rep = validate(spec);
  if (rep.ok) return;
  std::string msg = "invalid system:";
  for (const auto& v : rep.violations) msg += " " + v + ";";
  throw InvalidInput(msg);
}

// Pool sizes must be at least one server for every r of the scaling family.
inline ValidationReport validate_scaling(const SystemSpec& spec) {
  ValidationReport rep;
  if (!spec.scaling) return rep;
  const auto& sc = *spec.scaling;
  if (sc.l.size() != spec.num_classes())
    rep.fail("scaling.l has " + std::to_string(sc.l.size()) + " entries, expected " + std::to_string(spec.num_classes()));
  for (std::size_t k = 0; k < sc.r_values.size(); ++k) {
    if (!(sc.r_values[k] > 0.0)) rep.fail("scaling.r must be positive");
    if (k > 0 && !(sc.r_values[k] > sc.r_values[k - 1])) rep.fail("scaling.r must be increasing");
    for (std::size_t j = 0; j < spec.num_pools() && j < spec.beta.size(); ++j)
      if (std::llround(sc.r_values[k] * spec.beta[j]) < 1)
        rep.fail("pool " + spec.pools[j] + " has no servers at r=" + std::to_string(sc.r_values[k]));
  }
  return rep;
}

// Adjacency view of a validated activity tree. Nodes 0..I-1 are classes,
// I..I+J-1 are pools.
class ActivityTree {
 public:
  struct Link {
    std::size_t node;
    std::size_t edge;
  };
  struct PeelStep {
    std::size_t leaf;
    std::size_t edge;
  };

  explicit ActivityTree(const SystemSpec& spec)
      : I_(spec.num_classes()), J_(spec.num_pools()), adj_(I_ + J_) {
    require_valid(spec);
    for (std::size_t e = 0; e < spec.edges.size(); ++e) {
      const auto& ed = spec.edges[e];
      adj_[ed.cls].push_back({I_ + ed.pool, e});
      adj_[I_ + ed.pool].push_back({ed.cls, e});
      edges_.push_back({ed.cls, ed.pool});
    }
    compute_sides();
    compute_peel();
  }

  std::size_t num_classes() const { return I_; }
  std::size_t num_pools() const { return J_; }
  std::size_t num_nodes() const { return I_ + J_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool is_class(std::size_t node) const { return node < I_; }
  std::size_t pool_node(std::size_t j) const { return I_ + j; }

  const std::vector<Link>& neighbors(std::size_t node) const { return adj_[node]; }
  std::size_t class_of(std::size_t e) const { return edges_[e].first; }
  std::size_t pool_of(std::size_t e) const { return edges_[e].second; }

  // After deleting edge e, does `node` lie in the component of e's class?
  bool on_class_side(std::size_t e, std::size_t node) const { return class_side_[e][node] != 0; }

  // Edge at class i whose removal separates i from class k (k != i).
  std::size_t first_edge_towards(std::size_t i, std::size_t k) const {
    for (const auto& l : adj_[i])
      if (!on_class_side(l.edge, k)) return l.edge;
    throw InvalidInput("classes are not connected");
  }

  // Degree-1 nodes peeled in deterministic order until one node (root) remains.
  const std::vector<PeelStep>& peel_order() const { return peel_; }
  std::size_t peel_root() const { return root_; }

 private:
  void compute_sides() {
    class_side_.assign(edges_.size(), std::vector<char>(num_nodes(), 0));
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      auto& side = class_side_[e];
      std::vector<std::size_t> stack{edges_[e].first};
      side[edges_[e].first] = 1;
      while (!stack.empty()) {
        std::size_t n = stack.back();
        stack.pop_back();
        for (const auto& l : adj_[n]) {
          if (l.edge == e || side[l.node]) continue;
          side[l.node] = 1;
          stack.push_back(l.node);
        }
      }
    }
  }

  void compute_peel() {
    std::vector<std::size_t> degree(num_nodes());
    for (std::size_t n = 0; n < num_nodes(); ++n) degree[n] = adj_[n].size();
    std::vector<char> edge_alive(edges_.size(), 1);
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> leaves;
    for (std::size_t n = 0; n < num_nodes(); ++n)
      if (degree[n] == 1) leaves.push(n);
    while (peel_.size() < edges_.size()) {
      std::size_t n = leaves.top();
      leaves.pop();
      if (degree[n] != 1) continue;
      for (const auto& l : adj_[n]) {
        if (!edge_alive[l.edge]) continue;
        edge_alive[l.edge] = 0;
        degree[n] = 0;
        peel_.push_back({n, l.edge});
        if (--degree[l.node] == 1) leaves.push(l.node);
        break;
      }
    }
    // The last peeled edge leaves its other endpoint isolated: that is the root.
    const auto& last = peel_.back();
    const auto [c, p] = edges_[last.edge];
    root_ = (last.leaf == c) ? I_ + p : c;
  }

  std::size_t I_, J_;
  std::vector<std::vector<Link>> adj_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<char>> class_side_;
  std::vector<PeelStep> peel_;
  std::size_t root_ = 0;
};

// Sets lambda_i = sum_j psi_ij mu_ij for a strictly positive per-edge seed with
// equal pool loads sum_i psi_ij / beta_j. The returned system has psi_seed as
// its nominal occupancy.
inline SystemSpec auto_lambda(SystemSpec spec, const std::vector<double>& psi_seed) {
  if (psi_seed.size() != spec.num_edges())
    throw InvalidInput("psi_seed has " + std::to_string(psi_seed.size()) + " entries, expected " +
                       std::to_string(spec.num_edges()));
  for (std::size_t e = 0; e < psi_seed.size(); ++e)
    if (!(psi_seed[e] > 0.0)) throw InvalidInput("psi_seed must be strictly positive on edge " + spec.edge_name(e));

  std::vector<double> load(spec.num_pools(), 0.0);
  for (std::size_t e = 0; e < psi_seed.size(); ++e) load[spec.edges[e].pool] += psi_seed[e];
  for (std::size_t j = 0; j < load.size(); ++j) load[j] /= spec.beta[j];
  const double ref = load.front();
  for (std::size_t j = 1; j < load.size(); ++j)
    if (std::abs(load[j] - ref) > 1e-10 * std::abs(ref))
      throw InvalidInput("psi_seed gives unequal pool loads (" + spec.pools[0] + ": " + std::to_string(ref) + ", " +
                         spec.pools[j] + ": " + std::to_string(load[j]) + ")");

  spec.lambda.assign(spec.num_classes(), 0.0);
  for (std::size_t e = 0; e < psi_seed.size(); ++e) spec.lambda[spec.edges[e].cls] += psi_seed[e] * spec.edges[e].mu;
  return spec;
}

// Seed of the form psi_ij = load * beta_j * w_ij where w splits each pool evenly
// among its classes. Handy for building examples at a prescribed load.
inline std::vector<double> even_split_seed(const SystemSpec& spec, double load) {
  std::vector<std::size_t> deg(spec.num_pools(), 0);
  for (const auto& e : spec.edges) ++deg[e.pool];
  std::vector<double> psi(spec.num_edges());
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    const auto j = spec.edges[e].pool;
    psi[e] = load * spec.beta[j] / static_cast<double>(deg[j]);
  }
  return psi;
}

namespace detail {

inline std::size_t degree_of_class(const SystemSpec& s, std::size_t i) {
  return static_cast<std::size_t>(std::count_if(s.edges.begin(), s.edges.end(), [&](const Edge& e) { return e.cls == i; }));
}
inline std::size_t degree_of_pool(const SystemSpec& s, std::size_t j) {
  return static_cast<std::size_t>(std::count_if(s.edges.begin(), s.edges.end(), [&](const Edge& e) { return e.pool == j; }));
}

}  // namespace detail

// Deletes customer leaf i and its edge. Rates of remaining classes are kept.
inline SystemSpec remove_customer_leaf(const SystemSpec& spec, std::size_t i) {
  if (i >= spec.num_classes()) throw InvalidInput("class index out of range");
  if (detail::degree_of_class(spec, i) != 1) throw InvalidInput("class " + spec.classes[i] + " is not a leaf");
  if (spec.num_classes() == 1) throw InvalidInput("removing class " + spec.classes[i] + " would leave no classes");

  SystemSpec out = spec;
  out.classes.erase(out.classes.begin() + static_cast<std::ptrdiff_t>(i));
  out.lambda.erase(out.lambda.begin() + static_cast<std::ptrdiff_t>(i));
  out.edges.clear();
  for (const auto& e : spec.edges) {
    if (e.cls == i) continue;
    out.edges.push_back({e.cls > i ? e.cls - 1 : e.cls, e.pool, e.mu});
  }
  if (out.scaling && out.scaling->l.size() == spec.num_classes())
    out.scaling->l.erase(out.scaling->l.begin() + static_cast<std::ptrdiff_t>(i));
  return out;
}

// Deletes server leaf j and its edge (i,j); lambda_i drops by beta_j mu_ij.
inline SystemSpec remove_server_leaf(const SystemSpec& spec, std::size_t j) {
  if (j >= spec.num_pools()) throw InvalidInput("pool index out of range");
  if (detail::degree_of_pool(spec, j) != 1) throw InvalidInput("pool " + spec.pools[j] + " is not a leaf");
  if (spec.num_pools() == 1) throw InvalidInput("removing pool " + spec.pools[j] + " would leave no pools");

  SystemSpec out = spec;
  out.pools.erase(out.pools.begin() + static_cast<std::ptrdiff_t>(j));
  out.beta.erase(out.beta.begin() + static_cast<std::ptrdiff_t>(j));
  out.edges.clear();
  for (const auto& e : spec.edges) {
    if (e.pool == j) {
      out.lambda[e.cls] -= spec.beta[j] * e.mu;
      if (!(out.lambda[e.cls] > 0.0))
        throw InvalidInput("removing pool " + spec.pools[j] + " makes lambda[" + spec.classes[e.cls] + "] = " +
                           std::to_string(out.lambda[e.cls]) + " nonpositive");
      continue;
    }
    out.edges.push_back({e.cls, e.pool > j ? e.pool - 1 : e.pool, e.mu});
  }
  return out;
}

// Splits pool j into j' (keeps j's slot, id j + "'") and j'' (appended, id
// j + "''"). The anchor class connects to both; each other neighbor goes to
// exactly one side. beta_j' = fraction * beta_j.
inline SystemSpec expand_server(const SystemSpec& spec, std::size_t j, std::size_t anchor,
                                const std::vector<std::size_t>& to_first, const std::vector<std::size_t>& to_second,
                                double fraction = 0.5) {
  if (j >= spec.num_pools()) throw InvalidInput("pool index out of range");
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("expansion fraction must lie in (0,1)");
  auto anchor_edge = spec.edge_index(anchor, j);
  if (!anchor_edge) throw InvalidInput("anchor class is not adjacent to pool " + spec.pools[j]);

  std::vector<std::size_t> others;
  for (const auto& e : spec.edges)
    if (e.pool == j && e.cls != anchor) others.push_back(e.cls);
  std::vector<std::size_t> given = to_first;
  given.insert(given.end(), to_second.begin(), to_second.end());
  std::sort(given.begin(), given.end());
  std::sort(others.begin(), others.end());
  if (given != others) throw InvalidInput("partition does not split the other neighbors of pool " + spec.pools[j]);

  SystemSpec out = spec;
  const std::size_t j2 = spec.num_pools();
  out.pools[j] = spec.pools[j] + "'";
  out.pools.push_back(spec.pools[j] + "''");
  out.beta[j] = fraction * spec.beta[j];
  out.beta.push_back((1.0 - fraction) * spec.beta[j]);
  for (auto& e : out.edges)
    if (e.pool == j && std::find(to_second.begin(), to_second.end(), e.cls) != to_second.end()) e.pool = j2;
  out.edges.push_back({anchor, j2, spec.edges[*anchor_edge].mu});
  return out;
}

}  // namespace lqfs
