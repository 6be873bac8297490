#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqfs/model.hpp"

namespace oracle {

// Classic fourth-order Runge-Kutta for y' = A y.
inline Eigen::VectorXd rk4_linear(const Eigen::MatrixXd& A, Eigen::VectorXd y, double T, std::size_t steps) {
  const double h = T / static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const Eigen::VectorXd k1 = A * y;
    const Eigen::VectorXd k2 = A * (y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = A * (y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = A * (y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

// Dense two-phase simplex with Bland's rule: min c'x s.t. Ax = b, x >= 0.
struct LpResult {
  bool feasible = false;
  std::vector<double> x;
  double objective = 0.0;
};

inline LpResult simplex(std::vector<std::vector<double>> A, std::vector<double> b, const std::vector<double>& c) {
  const std::size_t m = A.size(), n = c.size();
  for (std::size_t i = 0; i < m; ++i)
    if (b[i] < 0.0) {
      for (auto& v : A[i]) v = -v;
      b[i] = -b[i];
    }
  // Tableau columns: n originals, m artificials, rhs.
  const std::size_t W = n + m + 1;
  std::vector<std::vector<double>> T(m + 1, std::vector<double>(W, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) T[i][k] = A[i][k];
    T[i][n + i] = 1.0;
    T[i][W - 1] = b[i];
    basis[i] = n + i;
  }
  auto pivot = [&](std::size_t r, std::size_t col) {
    const double p = T[r][col];
    for (auto& v : T[r]) v /= p;
    for (std::size_t i = 0; i <= m; ++i)
      if (i != r && T[i][col] != 0.0) {
        const double f = T[i][col];
        for (std::size_t k = 0; k < W; ++k) T[i][k] -= f * T[r][k];
      }
    basis[r] = col;
  };
  auto run = [&](std::size_t ncols) {
    for (int iter = 0; iter < 10000; ++iter) {
      std::size_t col = ncols;
      for (std::size_t k = 0; k < ncols; ++k)
        if (T[m][k] < -1e-12) {
          col = k;
          break;
        }
      if (col == ncols) return;
      std::size_t row = m;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i)
        if (T[i][col] > 1e-12) {
          const double ratio = T[i][W - 1] / T[i][col];
          if (row == m || ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && basis[i] < basis[row])) {
            best = ratio;
            row = i;
          }
        }
      if (row == m) return;  // unbounded; not expected here
      pivot(row, col);
    }
  };
  // Phase one: minimize the sum of artificials.
  for (std::size_t k = 0; k < W; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += T[i][k];
    T[m][k] = (k >= n && k < n + m) ? 0.0 : -s;
  }
  run(n + m);
  LpResult res;
  if (-T[m][W - 1] > 1e-9) return res;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] >= n)
      for (std::size_t k = 0; k < n; ++k)
        if (std::abs(T[i][k]) > 1e-12) {
          pivot(i, k);
          break;
        }
  // Phase two on the original objective, artificials barred.
  for (std::size_t k = 0; k < W; ++k) T[m][k] = k < n ? c[k] : 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n && T[m][basis[i]] != 0.0) {
      const double f = T[m][basis[i]];
      for (std::size_t k = 0; k < W; ++k) T[m][k] -= f * T[i][k];
    }
  run(n);
  res.feasible = true;
  res.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = T[i][W - 1];
  for (std::size_t k = 0; k < n; ++k) res.objective += c[k] * res.x[k];
  return res;
}

// min rho over edge flows: sum_j f_ij = lambda_i, sum_i f_ij / mu_ij <= beta_j rho.
// Returns {rho, flows}.
inline std::pair<double, std::vector<double>> spp_by_simplex(const lqfs::SystemSpec& s) {
  const std::size_t E = s.num_edges(), I = s.num_classes(), J = s.num_pools();
  const std::size_t n = E + 1 + J;  // flows, rho, slacks
  std::vector<std::vector<double>> A;
  std::vector<double> b;
  for (std::size_t i = 0; i < I; ++i) {
    std::vector<double> row(n, 0.0);
    for (std::size_t e = 0; e < E; ++e)
      if (s.edges[e].cls == i) row[e] = 1.0;
    A.push_back(row);
    b.push_back(s.lambda[i]);
  }
  for (std::size_t j = 0; j < J; ++j) {
    std::vector<double> row(n, 0.0);
    for (std::size_t e = 0; e < E; ++e)
      if (s.edges[e].pool == j) row[e] = 1.0 / s.edges[e].mu;
    row[E] = -s.beta[j];
    row[E + 1 + j] = 1.0;
    A.push_back(row);
    b.push_back(0.0);
  }
  std::vector<double> c(n, 0.0);
  c[E] = 1.0;
  const auto res = simplex(A, b, c);
  return {res.x[E], std::vector<double>(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(E))};
}

// Stationary law of the number of busy servers in an M/M/N queue with offered
// load a = lambda/mu < N.
inline std::vector<double> mmn_busy_distribution(std::size_t N, double a) {
  std::vector<double> p(N + 1);
  double term = 1.0;
  p[0] = 1.0;
  for (std::size_t k = 1; k <= N; ++k) {
    term *= a / static_cast<double>(k);
    p[k] = term;
  }
  p[N] /= 1.0 - a / static_cast<double>(N);
  double z = 0.0;
  for (double v : p) z += v;
  for (double& v : p) v /= z;
  return p;
}

enum class RateShape { general, by_pool, by_class };

// Random bipartite tree: each new node attaches to a uniformly chosen earlier
// node of the other kind. Loads are equalized through an even split seed.
inline lqfs::SystemSpec random_tree(std::mt19937_64& g, std::size_t I, std::size_t J, RateShape shape, double load) {
  lqfs::SystemSpec s;
  for (std::size_t i = 0; i < I; ++i) s.classes.push_back("c" + std::to_string(i));
  for (std::size_t j = 0; j < J; ++j) s.pools.push_back("p" + std::to_string(j));
  std::uniform_real_distribution<double> beta_d(0.2, 2.0), mu_d(0.3, 5.0);
  for (std::size_t j = 0; j < J; ++j) s.beta.push_back(beta_d(g));
  std::vector<double> class_mu(I), pool_mu(J);
  for (auto& v : class_mu) v = mu_d(g);
  for (auto& v : pool_mu) v = mu_d(g);
  auto rate = [&](std::size_t i, std::size_t j) {
    switch (shape) {
      case RateShape::by_pool: return pool_mu[j];
      case RateShape::by_class: return class_mu[i];
      default: return mu_d(g);
    }
  };
  // Nodes 0..I-1 classes, I.. pools; order places class 0 and pool 0 first.
  std::vector<std::size_t> order;
  for (std::size_t k = 1; k < I; ++k) order.push_back(k);
  for (std::size_t k = 1; k < J; ++k) order.push_back(I + k);
  std::shuffle(order.begin(), order.end(), g);
  std::vector<std::size_t> placed_classes = {0}, placed_pools = {0};
  s.edges.push_back({0, 0, rate(0, 0)});
  for (std::size_t node : order) {
    if (node < I) {
      const auto j = placed_pools[std::uniform_int_distribution<std::size_t>(0, placed_pools.size() - 1)(g)];
      s.edges.push_back({node, j, rate(node, j)});
      placed_classes.push_back(node);
    } else {
      const auto j = node - I;
      const auto i = placed_classes[std::uniform_int_distribution<std::size_t>(0, placed_classes.size() - 1)(g)];
      s.edges.push_back({i, j, rate(i, j)});
      placed_pools.push_back(j);
    }
  }
  s.lambda.assign(I, 1.0);
  return lqfs::auto_lambda(s, lqfs::even_split_seed(s, load));
}

inline std::size_t non_leaf_classes(const lqfs::SystemSpec& s) {
  std::vector<std::size_t> deg(s.num_classes(), 0);
  for (const auto& e : s.edges) ++deg[e.cls];
  return static_cast<std::size_t>(std::count_if(deg.begin(), deg.end(), [](std::size_t d) { return d > 1; }));
}

// Roots of a monic polynomial given by ascending coefficients c_0..c_{n-1}
// via the companion matrix.
inline std::vector<std::complex<double>> poly_roots(const std::vector<double>& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) C(k, k - 1) = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) C(k, n - 1) = -c[static_cast<std::size_t>(k)];
  Eigen::EigenSolver<Eigen::MatrixXd> es(C);
  std::vector<std::complex<double>> out;
  for (Eigen::Index k = 0; k < n; ++k) out.push_back(es.eigenvalues()(k));
  return out;
}

// Solves A X + X A' + Q = 0 through the Kronecker form.
inline Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const auto n = A.rows();
  const Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        K(i * n + j, k * n + j) += A(i, k);
        K(i * n + j, i * n + k) += A(j, k);
      }
  Eigen::VectorXd q(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) q(i * n + j) = -Q(i, j);
  const Eigen::VectorXd x = K.fullPivLu().solve(q);
  Eigen::MatrixXd X(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) X(i, j) = x(i * n + j);
  return X;
}

// Least-squares slope of log(y) against t.
inline double log_slope(const std::vector<double>& t, const std::vector<double>& y) {
  double st = 0, sl = 0, stt = 0, stl = 0;
  const double n = static_cast<double>(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double l = std::log(y[k]);
    st += t[k];
    sl += l;
    stt += t[k] * t[k];
    stl += t[k] * l;
  }
  return (n * stl - st * sl) / (n * stt - st * st);
}

}  // namespace oracle
