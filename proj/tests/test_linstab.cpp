#include <gtest/gtest.h>

#include <random>

#include "lqfs/linstab.hpp"
#include "lqfs/registry.hpp"
#include "oracles.hpp"

using namespace lqfs;
using cd = std::complex<double>;

namespace {

// Greedy nearest matching; returns the largest mismatch.
double spectrum_distance(std::vector<cd> got, const std::vector<cd>& want) {
  double worst = 0.0;
  for (const auto& w : want) {
    auto it = std::min_element(got.begin(), got.end(), [&](cd a, cd b) { return std::abs(a - w) < std::abs(b - w); });
    if (it == got.end()) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(*it - w));
    got.erase(it);
  }
  return worst;
}

std::vector<cd> eigenvalues(const MatrixXd& A) {
  Eigen::EigenSolver<MatrixXd> es(A);
  std::vector<cd> v;
  for (Eigen::Index k = 0; k < A.rows(); ++k) v.push_back(es.eigenvalues()(k));
  return v;
}

SystemSpec fig1_with_beta(double b1, double b2) {
  auto s = get_example("fig1").spec;
  s.beta = {b1, b2};
  return s;
}

}  // namespace

TEST(BuildM, Fig1ClosedForm) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int k = 0; k < 20; ++k) {
    const double b1 = u(g), b2 = u(g), f = b1 / (b1 + b2);
    MatrixXd want(3, 2);
    want << f, f, 1.0 - f, -f, 0.0, 1.0;
    EXPECT_LT((build_M(fig1_with_beta(b1, b2)) - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BuildM, PeelAgreesWithComponentFormula) {
  std::mt19937_64 g(4);
  for (int k = 0; k < 100; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 6, 1 + g() % 6, oracle::RateShape::general, 0.8);
    ASSERT_LT((build_M(s) - build_M_components(s)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BuildM, EqualizesPoolLoads) {
  std::mt19937_64 g(9);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 50; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 6, 1 + g() % 6, oracle::RateShape::general, 0.8);
    VectorXd psi(static_cast<Eigen::Index>(s.num_classes()));
    for (auto& v : psi) v = n01(g);
    const VectorXd edge = build_M(s) * psi;
    std::vector<double> cls(s.num_classes(), 0.0), load(s.num_pools(), 0.0);
    for (std::size_t e = 0; e < s.num_edges(); ++e) {
      cls[s.edges[e].cls] += edge(static_cast<Eigen::Index>(e));
      load[s.edges[e].pool] += edge(static_cast<Eigen::Index>(e)) / s.beta[s.edges[e].pool];
    }
    for (std::size_t i = 0; i < cls.size(); ++i) EXPECT_NEAR(cls[i], psi(static_cast<Eigen::Index>(i)), 1e-10);
    for (double l : load) EXPECT_NEAR(l, load[0], 1e-10);
  }
}

TEST(BuildAu, ProductAgreesWithClosedForm) {
  std::mt19937_64 g(12);
  for (int k = 0; k < 100; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 6, 1 + g() % 6, oracle::RateShape::general, 0.8);
    const MatrixXd a = build_Au(s), b = build_Au_closed_form(s);
    ASSERT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
}

TEST(BuildAu, Example1Published) {
  MatrixXd want(3, 3);
  want << -1.99, -0.99, -0.99, 97.02, -2.98, -1.98, 96.03, 96.03, -3.97;
  const MatrixXd A = build_Au(get_example("example1").spec);
  EXPECT_LT((A - want).cwiseAbs().maxCoeff(), 1e-9);
  const auto v = eigen_analysis(A, SpectrumKind::underload);
  EXPECT_EQ(v.classification, Classification::unstable);
  EXPECT_LT(spectrum_distance(v.eigenvalues, {cd(-17.8, 0), cd(4.45, 23.4), cd(4.45, -23.4)}), 0.05);
}

TEST(BuildAc, Example2Published) {
  MatrixXd want(5, 5);
  want << 9389, 9805, 10201, 10597, -29003, 10894, 9290, 9706, 10102, -29498, 10399, 10795, 9191, 9607, -29993, -40091, -39695,
      -39299, -40903, 119497, 9409, 9805, 10201, 10597, -31003;
  want /= 20.0;
  const MatrixXd A = build_Ac(get_example("example2").spec);
  EXPECT_LT((A - want).cwiseAbs().maxCoeff(), 1e-9);
  const auto v = eigen_analysis(A, SpectrumKind::critical);
  EXPECT_EQ(v.classification, Classification::unstable);
  EXPECT_LT(v.zero_eigen_residual, 1e-8);
  EXPECT_EQ(v.eigenvalues.size(), 5u);
  EXPECT_LT(spectrum_distance(v.eigenvalues, {cd(0, 0)}), 1e-8 * v.norm);
  for (cd w : {cd(-16.88, 0), cd(-2190.05, 0), cd(2.565, 23.23), cd(2.565, -23.23)})
    EXPECT_LT(spectrum_distance(v.eigenvalues, {w}), std::max(0.05, 1e-3 * std::abs(w))) << w;
}

TEST(BuildAu, CombinedPublished) {
  MatrixXd want(4, 4);
  want << -1.99, -0.99, -0.99, -0.99, 97.02, -2.98, -1.98, -1.98, 96.03, 96.03, -3.97, -2.97, -99, -99, -99, -199;
  const auto full = get_example("combined").spec;
  const auto reduced = remove_customer_leaf(full, *full.class_index("E"));
  const MatrixXd A = build_Au(reduced);
  EXPECT_LT((A - want).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((build_Au(full).topLeftCorner(4, 4) - want).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(spectrum_distance(eigenvalues(A), {cd(-14.6, 0), cd(-201.1, 0), cd(3.91, 18.1), cd(3.91, -18.1)}), 0.1);
  EXPECT_EQ(eigen_analysis(build_Au(full), SpectrumKind::underload).classification, Classification::unstable);
  EXPECT_EQ(eigen_analysis(build_Ac(full), SpectrumKind::critical).classification, Classification::unstable);
}

TEST(BuildAu, LambdaIndependent) {
  auto s = get_example("example1").spec;
  const MatrixXd a = build_Au(s);
  for (double& l : s.lambda) l *= 10.0;
  EXPECT_TRUE(build_Au(s) == a);
}

TEST(BuildAu, DiagonalNegative) {
  std::mt19937_64 g(13);
  for (int k = 0; k < 50; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 6, 1 + g() % 6, oracle::RateShape::general, 0.8);
    const MatrixXd A = build_Au(s);
    for (Eigen::Index i = 0; i < A.rows(); ++i) EXPECT_LT(A(i, i), 0.0);
  }
}

TEST(BuildAc, ColumnSumsVanish) {
  std::mt19937_64 g(14);
  for (int k = 0; k < 50; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 6, 1 + g() % 6, oracle::RateShape::general, 1.0);
    const MatrixXd A = build_Ac(s);
    EXPECT_LT(A.colwise().sum().cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, A.cwiseAbs().maxCoeff()));
  }
}

TEST(BuildAc, BetaInvariantOnL) {
  std::mt19937_64 g(15);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int k = 0; k < 50; ++k) {
    auto s = oracle::random_tree(g, 2 + g() % 5, 1 + g() % 6, oracle::RateShape::general, 1.0);
    const MatrixXd pi = projection_L(s.num_classes());
    const MatrixXd a = pi * build_Ac(s) * pi;
    for (double& b : s.beta) b = u(g);
    const MatrixXd b = pi * build_Ac(s) * pi;
    EXPECT_LT((a - b).norm(), 1e-9 * std::max(a.norm(), b.norm()));
  }
}

TEST(EigenAnalysis, RestrictionAgrees) {
  std::mt19937_64 g(16);
  for (int k = 0; k < 50; ++k) {
    const auto s = oracle::random_tree(g, 2 + g() % 5, 1 + g() % 6, oracle::RateShape::general, 1.0);
    const MatrixXd Ac = build_Ac(s);
    const auto full = eigen_analysis(Ac, SpectrumKind::critical);
    const auto red = eigen_analysis(restrict_to_L(Ac), SpectrumKind::underload);
    EXPECT_EQ(full.classification, red.classification);
    EXPECT_LT(spectrum_distance(full.eigenvalues, red.eigenvalues), 1e-6 * std::max(1.0, full.norm));
  }
}

TEST(EigenAnalysis, MarginalAndDegenerate) {
  MatrixXd rot(2, 2);
  rot << 0, 1, -1, 0;
  EXPECT_EQ(eigen_analysis(rot, SpectrumKind::underload).classification, Classification::marginal);
  MatrixXd two_zeros = MatrixXd::Zero(3, 3);
  two_zeros(2, 2) = -1.0;
  EXPECT_THROW(eigen_analysis(two_zeros, SpectrumKind::critical), DegenerateSpectrum);
  MatrixXd no_zero = MatrixXd::Identity(2, 2) * -1.0;
  EXPECT_THROW(eigen_analysis(no_zero, SpectrumKind::critical), DegenerateSpectrum);
  const auto v = eigen_analysis(MatrixXd::Zero(1, 1), SpectrumKind::critical);
  EXPECT_EQ(v.classification, Classification::stable);
}

TEST(EigenAnalysis, ConvergentSubspace) {
  MatrixXd A(3, 3);
  A << -1, 0, 0, 0, 2, 0, 0, 0, -3;
  const auto v = eigen_analysis(A, SpectrumKind::underload);
  EXPECT_EQ(v.convergent_subspace_dim, 2u);
  EXPECT_NEAR(v.max_real_part, 2.0, 1e-12);
  EXPECT_NEAR(v.convergent_basis.col(0).dot(v.convergent_basis.col(1)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(v.convergent_basis(1, 0)) + std::abs(v.convergent_basis(1, 1)), 0.0, 1e-12);
}

TEST(EigenAnalysis, BalancingHandlesBadScaling) {
  MatrixXd A(3, 3);
  A << -1, 1e6, 0, 1e-6, -2, 1e5, 0, 1e-5, -3;
  const auto v = eigen_analysis(A, SpectrumKind::underload);
  std::vector<double> cp = char_poly(A);
  cp.pop_back();
  EXPECT_LT(spectrum_distance(v.eigenvalues, oracle::poly_roots(cp)), 1e-6);
}

TEST(CharPoly, MatchesEigenvalues) {
  std::mt19937_64 g(17);
  for (int k = 0; k < 50; ++k) {
    const auto s = oracle::random_tree(g, 1 + g() % 5, 1 + g() % 5, oracle::RateShape::general, 0.8);
    const MatrixXd A = build_Au(s);
    auto cp = char_poly(A);
    ASSERT_DOUBLE_EQ(cp.back(), 1.0);
    cp.pop_back();
    EXPECT_LT(spectrum_distance(eigenvalues(A), oracle::poly_roots(cp)), 1e-6 * std::max(1.0, A.norm()));
  }
  EXPECT_THROW(char_poly(MatrixXd::Identity(9, 9)), InvalidInput);
}

TEST(Routh, CubicAgreesWithRoots) {
  std::mt19937_64 g(18);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  int stable = 0, unstable = 0;
  for (int k = 0; k < 2000; ++k) {
    // x^3 + a2 x^2 + a1 x + a0 = x^3 - c2 x^2 + c1 x - c0
    const double a2 = u(g), a1 = u(g), a0 = u(g);
    const auto roots = oracle::poly_roots({a0, a1, a2});
    double mr = -1e300;
    for (auto z : roots) mr = std::max(mr, z.real());
    const auto v = routh3(-a2, a1, -a0);
    if (std::abs(mr) < 1e-6) continue;
    EXPECT_EQ(v == RouthVerdict::stable, mr < 0.0) << a2 << " " << a1 << " " << a0;
    (mr < 0.0 ? stable : unstable)++;
  }
  EXPECT_GT(stable, 50);
  EXPECT_GT(unstable, 50);
}

TEST(Routh, BoundaryHasImaginaryPair) {
  // (x + 2)(x^2 + 9) = x^3 + 2x^2 + 9x + 18
  EXPECT_EQ(routh3(-2.0, 9.0, -18.0), RouthVerdict::boundary);
  EXPECT_EQ(routh3(-2.0, 9.0, -17.0), RouthVerdict::stable);
  EXPECT_EQ(routh3(-2.0, 9.0, -19.0), RouthVerdict::unstable);
}

TEST(Quartic, VanishesOnImaginaryPair) {
  // (x^2 + w^2)(x^2 + p x + q), written as x^4 - c1 x^3 + c2 x^2 - c3 x + c4.
  std::mt19937_64 g(19);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  for (int k = 0; k < 100; ++k) {
    const double w2 = u(g), p = u(g), q = u(g);
    const double c1 = -p, c2 = q + w2, c3 = -p * w2, c4 = q * w2;
    EXPECT_NEAR(quartic_imaginary_condition(c1, c2, c3, c4), 0.0, 1e-10 * (1.0 + c4 * c1 * c1 + c3 * c3));
  }
  // No imaginary roots: (x+1)(x+2)(x+3)(x+4).
  EXPECT_GT(std::abs(quartic_imaginary_condition(-10.0, 35.0, -50.0, 24.0)), 1.0);
}
