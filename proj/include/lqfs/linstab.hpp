#pragma once

// Linearized fluid dynamics near equilibrium: the load-balancing map M, the
// drift matrices A_u (underload) and A_c (critical load), their spectra and
// stability classification, and the low-degree polynomial stability tests.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "lqfs/error.hpp"
#include "lqfs/model.hpp"
#include "lqfs/spp.hpp"

namespace lqfs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// (I+J-1) x I matrix taking per-class occupancies to the unique per-edge
// occupancies with equal pool loads. Computed by leaf elimination.
inline MatrixXd build_M(const SystemSpec& spec) {
  const ActivityTree tree(spec);
  const auto I = static_cast<Eigen::Index>(spec.num_classes());
  const auto J = static_cast<Eigen::Index>(spec.num_pools());
  const double B = spec.total_beta();
  MatrixXd pool_rhs(J, I);
  for (Eigen::Index j = 0; j < J; ++j) pool_rhs.row(j).setConstant(spec.beta[static_cast<std::size_t>(j)] / B);
  const std::vector<double> unit(spec.num_edges(), 1.0);
  return detail::peel_solve(tree, MatrixXd::Identity(I, I), pool_rhs, unit).edge_values;
}

// Same matrix from the component formula: for edge (i0,j0), column i is
// beta(j0 side)/B if class i sits on the i0 side and -beta(i0 side)/B otherwise.
inline MatrixXd build_M_components(const SystemSpec& spec) {
  const ActivityTree tree(spec);
  const std::size_t I = spec.num_classes(), J = spec.num_pools();
  const double B = spec.total_beta();
  MatrixXd M(static_cast<Eigen::Index>(spec.num_edges()), static_cast<Eigen::Index>(I));
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    double beta_class_side = 0.0;
    for (std::size_t j = 0; j < J; ++j)
      if (tree.on_class_side(e, tree.pool_node(j))) beta_class_side += spec.beta[j];
    const double beta_pool_side = B - beta_class_side;
    for (std::size_t i = 0; i < I; ++i)
      M(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(i)) =
          tree.on_class_side(e, i) ? beta_pool_side / B : -beta_class_side / B;
  }
  return M;
}

// I x (I+J-1): row i sums the edges of class i.
inline MatrixXd build_Mprime(const SystemSpec& spec) {
  MatrixXd Mp = MatrixXd::Zero(static_cast<Eigen::Index>(spec.num_classes()), static_cast<Eigen::Index>(spec.num_edges()));
  for (std::size_t e = 0; e < spec.num_edges(); ++e) Mp(static_cast<Eigen::Index>(spec.edges[e].cls), static_cast<Eigen::Index>(e)) = 1.0;
  return Mp;
}

inline MatrixXd build_G(const SystemSpec& spec) {
  MatrixXd G = MatrixXd::Zero(static_cast<Eigen::Index>(spec.num_classes()), static_cast<Eigen::Index>(spec.num_edges()));
  for (std::size_t e = 0; e < spec.num_edges(); ++e)
    G(static_cast<Eigen::Index>(spec.edges[e].cls), static_cast<Eigen::Index>(e)) = -spec.edges[e].mu;
  return G;
}

inline MatrixXd build_Au(const SystemSpec& spec) { return build_G(spec) * build_M(spec); }

// Entry formulas for A_u: diagonal -(1/B) sum_{j in S(i)} mu_ij beta(pool side of ij),
// off-diagonal (A_u)_ii' = (A_u)_ii + mu_{i j} for the edge at i leading to i'.
inline MatrixXd build_Au_closed_form(const SystemSpec& spec) {
  const ActivityTree tree(spec);
  const std::size_t I = spec.num_classes(), J = spec.num_pools();
  const double B = spec.total_beta();
  MatrixXd A(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(I));
  for (std::size_t i = 0; i < I; ++i) {
    double diag = 0.0;
    for (const auto& l : tree.neighbors(i)) {
      double beta_pool_side = 0.0;
      for (std::size_t j = 0; j < J; ++j)
        if (!tree.on_class_side(l.edge, tree.pool_node(j))) beta_pool_side += spec.beta[j];
      diag -= spec.edges[l.edge].mu * beta_pool_side;
    }
    diag /= B;
    const auto ii = static_cast<Eigen::Index>(i);
    A(ii, ii) = diag;
    for (std::size_t k = 0; k < I; ++k) {
      if (k == i) continue;
      A(ii, static_cast<Eigen::Index>(k)) = diag + spec.edges[tree.first_edge_towards(i, k)].mu;
    }
  }
  return A;
}

// Orthogonal projection onto L = {y : sum y = 0}.
inline MatrixXd projection_L(std::size_t I) {
  const auto n = static_cast<Eigen::Index>(I);
  return MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / static_cast<double>(I));
}

// I x (I-1) orthonormal basis of L.
inline MatrixXd basis_L(std::size_t I) {
  const auto n = static_cast<Eigen::Index>(I);
  if (I < 2) return MatrixXd(n, 0);
  MatrixXd raw(n, n - 1);
  for (Eigen::Index k = 0; k < n - 1; ++k) {
    raw.col(k).setZero();
    raw(k, k) = 1.0;
    raw(k + 1, k) = -1.0;
  }
  Eigen::HouseholderQR<MatrixXd> qr(raw);
  return qr.householderQ() * MatrixXd::Identity(n, n - 1);
}

inline MatrixXd build_Ac(const SystemSpec& spec) { return projection_L(spec.num_classes()) * build_Au(spec); }

struct DriftMatrices {
  MatrixXd M, Mprime, G, Au, pi, Ac;
};

inline DriftMatrices build_drift_matrices(const SystemSpec& spec) {
  DriftMatrices dm;
  dm.M = build_M(spec);
  dm.Mprime = build_Mprime(spec);
  dm.G = build_G(spec);
  dm.Au = dm.G * dm.M;
  dm.pi = projection_L(spec.num_classes());
  dm.Ac = dm.pi * dm.Au;
  return dm;
}

enum class Classification { stable, unstable, marginal };
enum class SpectrumKind { underload, critical };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::stable: return "stable";
    case Classification::unstable: return "unstable";
    default: return "marginal";
  }
}

struct StabilityVerdict {
  Classification classification = Classification::marginal;
  double max_real_part = -std::numeric_limits<double>::infinity();
  double zero_eigen_residual = 0.0;
  std::size_t convergent_subspace_dim = 0;
  std::vector<std::complex<double>> eigenvalues;  // sorted by decreasing real part
  MatrixXd convergent_basis;                      // orthonormal columns spanning Re < 0 eigenvectors
  double norm = 0.0;                              // spectral norm of the analysed matrix
};

inline double spectral_norm(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(A);
  return svd.singularValues()(0);
}

struct Balanced {
  MatrixXd matrix;
  VectorXd scale;  // A = D B D^{-1} with D = diag(scale)
};

// Parlett-Reinsch diagonal similarity with power-of-two scaling.
inline Balanced balance(const MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Balanced b{A, VectorXd::Ones(n)};
  constexpr double radix = 2.0;
  bool converged = false;
  while (!converged) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0, r = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        c += std::abs(b.matrix(k, i));
        r += std::abs(b.matrix(i, k));
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix, f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        converged = false;
        b.scale(i) *= f;
        b.matrix.row(i) /= f;
        b.matrix.col(i) *= f;
      }
    }
  }
  return b;
}

struct Spectrum {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // right eigenvectors of the original matrix
};

inline Spectrum eigen_decompose(const MatrixXd& A) {
  Spectrum s;
  if (A.rows() == 0) return s;
  const auto bal = balance(A);
  Eigen::EigenSolver<MatrixXd> es(bal.matrix, true);
  if (es.info() != Eigen::Success) throw DegenerateSpectrum("eigenvalue iteration did not converge");
  s.values = es.eigenvalues();
  s.vectors = bal.scale.asDiagonal() * es.eigenvectors();
  for (Eigen::Index k = 0; k < s.vectors.cols(); ++k) s.vectors.col(k).normalize();
  return s;
}

namespace detail {

inline MatrixXd orthonormal_span(const MatrixXd& raw, double tol) {
  if (raw.cols() == 0) return MatrixXd(raw.rows(), 0);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(raw);
  qr.setThreshold(tol);
  const auto rank = qr.rank();
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(raw.rows(), raw.rows());
  return Q.leftCols(rank);
}

}  // namespace detail

// Spectrum and stability verdict. For critical matrices the single eigenvalue
// closest to zero must lie within 1e-8 ||A|| and is excluded from the verdict.
inline StabilityVerdict eigen_analysis(const MatrixXd& A, SpectrumKind kind) {
  if (A.rows() != A.cols()) throw InvalidInput("eigen_analysis needs a square matrix");
  StabilityVerdict v;
  v.norm = spectral_norm(A);
  const double tol = 1e-8 * v.norm;
  const auto spec = eigen_decompose(A);
  const auto n = spec.values.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (spec.values(a).real() != spec.values(b).real()) return spec.values(a).real() > spec.values(b).real();
    return spec.values(a).imag() > spec.values(b).imag();
  });
  for (auto k : order) v.eigenvalues.push_back(spec.values(k));

  Eigen::Index zero_index = -1;
  if (kind == SpectrumKind::critical) {
    std::size_t near_zero = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double m = std::abs(spec.values(k));
      if (m <= tol) ++near_zero;
      if (m < best) {
        best = m;
        zero_index = k;
      }
    }
    if (near_zero != 1 && !(n == 1 && v.norm == 0.0))
      throw DegenerateSpectrum("critical-load matrix has " + std::to_string(near_zero) +
                               " eigenvalues within the zero tolerance (expected exactly one)");
    v.zero_eigen_residual = v.norm > 0.0 ? best / v.norm : best;
  }

  std::vector<VectorXd> conv_cols;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k == zero_index) continue;
    const auto lam = spec.values(k);
    v.max_real_part = std::max(v.max_real_part, lam.real());
    if (lam.real() < 0.0) {
      conv_cols.push_back(spec.vectors.col(k).real());
      if (lam.imag() != 0.0) conv_cols.push_back(spec.vectors.col(k).imag());
    }
  }
  MatrixXd raw(A.rows(), static_cast<Eigen::Index>(conv_cols.size()));
  for (std::size_t c = 0; c < conv_cols.size(); ++c) raw.col(static_cast<Eigen::Index>(c)) = conv_cols[c];
  v.convergent_basis = detail::orthonormal_span(raw, 1e-10);
  v.convergent_subspace_dim = static_cast<std::size_t>(v.convergent_basis.cols());

  if (v.max_real_part < -tol)
    v.classification = Classification::stable;
  else if (v.max_real_part > tol)
    v.classification = Classification::unstable;
  else
    v.classification = Classification::marginal;
  return v;
}

// A_c restricted to L in an orthonormal basis: its spectrum is the spectrum
// of A_c with the structural zero removed.
inline MatrixXd restrict_to_L(const MatrixXd& Ac) {
  const MatrixXd U = basis_L(static_cast<std::size_t>(Ac.rows()));
  return U.transpose() * Ac * U;
}

// Coefficients of det(xI - A), ascending: result[k] multiplies x^k, result[n] = 1.
inline std::vector<double> char_poly(const MatrixXd& A) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw InvalidInput("char_poly needs a square matrix");
  if (n > 8) throw InvalidInput("char_poly is limited to dimension 8 (got " + std::to_string(n) + ")");
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[static_cast<std::size_t>(n)] = 1.0;
  MatrixXd Mk = MatrixXd::Zero(n, n);
  const MatrixXd Id = MatrixXd::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    Mk = A * Mk + c[static_cast<std::size_t>(n - k + 1)] * Id;
    c[static_cast<std::size_t>(n - k)] = -(A * Mk).trace() / static_cast<double>(k);
  }
  return c;
}

enum class RouthVerdict { stable, boundary, unstable };

inline const char* to_string(RouthVerdict v) {
  switch (v) {
    case RouthVerdict::stable: return "stable";
    case RouthVerdict::boundary: return "boundary";
    default: return "unstable";
  }
}

// Cubic x^3 - c2 x^2 + c1 x - c0.
inline RouthVerdict routh3(double c2, double c1, double c0) {
  const bool signs = (-c2 > 0.0) && (c1 > 0.0) && (-c0 > 0.0);
  if (!signs) return RouthVerdict::unstable;
  const double lhs = c2 * c1;
  const double scale = std::max(std::abs(lhs), std::abs(c0));
  if (std::abs(lhs - c0) <= 1e-12 * scale) return RouthVerdict::boundary;
  return lhs < c0 ? RouthVerdict::stable : RouthVerdict::unstable;
}

// Quartic x^4 - c1 x^3 + c2 x^2 - c3 x + c4: the residual vanishes whenever the
// quartic has a purely imaginary root pair (necessary, not sufficient).
inline double quartic_imaginary_condition(double c1, double c2, double c3, double c4) {
  return c4 * c1 * c1 + c3 * c3 - c1 * c2 * c3;
}

}  // namespace lqfs
