#include <gtest/gtest.h>

#include <random>

#include "lqfs/registry.hpp"
#include "lqfs/sim.hpp"
#include "oracles.hpp"

using namespace lqfs;

namespace {

SystemSpec one_class_two_pools() {
  SystemSpec s;
  s.classes = {"A"};
  s.pools = {"1", "2"};
  s.beta = {1.0, 1.0};
  s.edges = {{0, 0, 1.0}, {0, 1, 1.0}};
  s.lambda = {1.0};
  return s;
}

SimState empty_state(const SimSystem& sys) {
  SimState st;
  st.Psi.assign(sys.E, 0);
  st.Q.assign(sys.I, 0);
  st.busy.assign(sys.J, 0);
  return st;
}

SystemSpec mm1(double lambda) {
  SystemSpec s;
  s.classes = {"a"};
  s.pools = {"1"};
  s.beta = {1.0};
  s.edges = {{0, 0, 1.0}};
  s.lambda = {lambda};
  return s;
}

std::vector<double> column(const ScaledSeries& s, std::size_t e, std::size_t stride = 1) {
  std::vector<double> v;
  for (std::size_t k = 0; k < s.size(); k += stride) v.push_back(s.psi(k, e));
  return v;
}

}  // namespace

TEST(Routing, FirstArrivalTakesAServer) {
  const auto spec = mm1(0.5);
  const auto sys = SimSystem::build(spec, 10.0);
  auto st = empty_state(sys);
  CounterRng rng(1);
  detail::route_arrival(sys, st, 0, rng);
  EXPECT_EQ(st.Psi[0], 1);
  EXPECT_EQ(st.busy[0], 1);
  EXPECT_EQ(st.Q[0], 0);
  EXPECT_TRUE(state_invariants_hold(sys, st));
}

TEST(Routing, TiesSplitEvenly) {
  const auto sys = SimSystem::build(one_class_two_pools(), 20.0);
  CounterRng rng(2);
  int first = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    auto st = empty_state(sys);
    detail::route_arrival(sys, st, 0, rng);
    first += static_cast<int>(st.Psi[0]);
  }
  EXPECT_NEAR(first / static_cast<double>(n), 0.5, 0.02);
}

TEST(Routing, LeastLoadedPoolWins) {
  auto spec = one_class_two_pools();
  spec.beta = {1.0, 2.0};
  const auto sys = SimSystem::build(spec, 10.0);  // N = (10, 20)
  auto st = empty_state(sys);
  st.Psi = {6, 11};
  st.busy = {6, 11};
  CounterRng rng(3);
  detail::route_arrival(sys, st, 0, rng);
  EXPECT_EQ(st.Psi[1], 12);  // 11/20 < 6/10
  st.Psi = {10, 19};
  st.busy = {10, 19};
  detail::route_arrival(sys, st, 0, rng);
  EXPECT_EQ(st.Psi[1], 20);
  detail::route_arrival(sys, st, 0, rng);
  EXPECT_EQ(st.Q[0], 1);
}

TEST(Routing, FreedServerTakesLongestQueue) {
  SystemSpec spec;
  spec.classes = {"A", "B"};
  spec.pools = {"1"};
  spec.beta = {1.0};
  spec.edges = {{0, 0, 1.0}, {1, 0, 2.0}};
  spec.lambda = {0.2, 0.2};
  const auto sys = SimSystem::build(spec, 5.0);
  auto st = empty_state(sys);
  st.Psi = {3, 2};
  st.busy = {5};
  st.Q = {3, 7};
  CounterRng rng(4);
  detail::complete_service(sys, st, 0, rng);
  EXPECT_EQ(st.Q[0], 3);
  EXPECT_EQ(st.Q[1], 6);
  EXPECT_EQ(st.Psi[0], 2);
  EXPECT_EQ(st.Psi[1], 3);
  EXPECT_TRUE(state_invariants_hold(sys, st));
}

TEST(Uniformized, VirtualProbabilityWhenIdle) {
  const auto spec = get_example("fig1").spec;
  const auto sys = SimSystem::build(spec, 10.0);
  CounterRng rng(5);
  const int n = 100000;
  int virt = 0;
  for (int k = 0; k < n; ++k) {
    auto st = empty_state(sys);
    step_uniformized(sys, st, rng);
    virt += static_cast<int>(st.virtual_events);
  }
  const double p = 1.0 - sys.total_lambda / sys.uniform_rate();
  EXPECT_NEAR(virt / static_cast<double>(n), p, 4.0 * std::sqrt(p * (1.0 - p) / n));
}

TEST(Replication, SingleServerBusyFraction) {
  const auto spec = mm1(0.5);
  for (auto engine : {Engine::event, Engine::uniformized}) {
    const auto s = run_replication(spec, 1.0, 100000.0, 10.0, 0.5, 6, engine);
    double busy = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) busy += s.z(k, 0) + 0.5;
    EXPECT_NEAR(busy / static_cast<double>(s.size()), 0.5, 0.01) << to_string(engine);
  }
}

TEST(Replication, InvariantsHoldOnRandomSystems) {
  std::mt19937_64 g(31);
  std::uint64_t events = 0;
  for (int k = 0; k < 8; ++k) {
    const auto spec = oracle::random_tree(g, 1 + g() % 5, 1 + g() % 5, oracle::RateShape::general, 0.6 + 0.4 * (k % 2));
    const auto engine = k % 3 == 0 ? Engine::uniformized : Engine::event;
    const auto s = run_replication(spec, 50.0, 400.0, 0.0, 1.0, 100 + static_cast<std::uint64_t>(k), engine, {true});
    EXPECT_TRUE(s.invariants_ok) << "case " << k;
    events += s.events;
  }
  EXPECT_GE(events, 1000000u);
}

TEST(Replication, SeedDeterminism) {
  const auto spec = get_example("fig1").spec;
  const auto a = run_replication(spec, 100.0, 50.0, 10.0, 0.5, 9, Engine::event);
  const auto b = run_replication(spec, 100.0, 50.0, 10.0, 0.5, 9, Engine::event);
  const auto c = run_replication(spec, 100.0, 50.0, 10.0, 0.5, 10, Engine::event);
  EXPECT_EQ(a.psi_hat, b.psi_hat);
  EXPECT_EQ(a.q_hat, b.q_hat);
  EXPECT_NE(a.psi_hat, c.psi_hat);
}

TEST(Replication, EnginesAgreeInDistribution) {
  const auto spec = get_example("fig1").spec;
  const auto a = run_replication(spec, 100.0, 6000.0, 100.0, 0.5, 12, Engine::event);
  const auto b = run_replication(spec, 100.0, 6000.0, 100.0, 0.5, 13, Engine::uniformized);
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    const auto ea = batch_means(column(a, e)), eb = batch_means(column(b, e));
    EXPECT_LT(std::abs(ea.mean - eb.mean), 3.0 * std::hypot(ea.se, eb.se)) << "edge " << e;
    const auto ta = column(a, e, 20), tb = column(b, e, 20);
    EXPECT_GT(ks_two_sample_pvalue(ks_two_sample(ta, tb), ta.size(), tb.size()), 0.01) << "edge " << e;
  }
  EXPECT_GT(b.virtual_events, 0u);
  EXPECT_EQ(a.virtual_events, 0u);
}

TEST(Replication, NoSamplesWhenBurnInIsT) {
  const auto spec = get_example("fig1").spec;
  const auto s = run_replication(spec, 10.0, 20.0, 20.0, 0.5, 1, Engine::event);
  EXPECT_EQ(s.size(), 0u);
  EXPECT_THROW(mass_in_ball(s, 1.0), InvalidInput);
  EXPECT_THROW(run_replication(spec, 10.0, 5.0, 20.0, 0.5, 1, Engine::event), InvalidInput);
}

TEST(Replication, HalfinWhittSigns) {
  const auto spec = get_example("hw_pooled").spec;
  const auto s = run_replication(spec, 400.0, 100.0, 10.0, 0.1, 14, Engine::event);
  ASSERT_GT(s.size(), 0u);
  for (std::size_t k = 0; k < s.size(); ++k) {
    for (std::size_t j = 0; j < s.J; ++j) EXPECT_LE(s.z(k, j), 0.0);
    for (std::size_t i = 0; i < s.I; ++i) EXPECT_GE(s.q(k, i), 0.0);
  }
}

TEST(Replication, UnderloadDeviationsCentred) {
  const auto spec = get_example("fig1").spec;
  const auto s = run_replication(spec, 400.0, 3000.0, 100.0, 0.5, 15, Engine::event);
  for (std::size_t e = 0; e < spec.num_edges(); ++e) {
    const auto est = batch_means(column(s, e));
    EXPECT_LT(std::abs(est.mean), 3.0 * est.se + 0.05) << "edge " << e;
  }
  EXPECT_DOUBLE_EQ(mass_in_ball(s, 1e6), 1.0);
  for (std::size_t k = 0; k < s.size(); ++k)
    for (std::size_t i = 0; i < s.I; ++i) EXPECT_EQ(s.q(k, i), 0.0);
}

TEST(Estimators, BallIndicatorMatchesMass) {
  const auto spec = get_example("fig1").spec;
  const auto s = run_replication(spec, 100.0, 200.0, 20.0, 0.5, 16, Engine::event);
  for (double K : {0.5, 1.0, 2.0}) EXPECT_DOUBLE_EQ(mean_of(ball_indicator(s, K)), mass_in_ball(s, K));
}

TEST(Estimators, Theta0Formula) {
  const auto spec = get_example("fig1").spec;
  double lmin = 1e300, lsum = 0.0, mu = 0.0;
  for (double l : spec.lambda) {
    lmin = std::min(lmin, l);
    lsum += l;
  }
  for (const auto& e : spec.edges) mu = std::max(mu, e.mu);
  EXPECT_DOUBLE_EQ(theta0(spec), 2.0 * lmin / (lsum + mu * spec.total_beta()));
}

TEST(Estimators, LyapunovAtZeroAndOverflow) {
  const auto spec = get_example("hw_pooled").spec;
  const auto s = run_replication(spec, 100.0, 200.0, 20.0, 0.5, 17, Engine::event);
  const double want = static_cast<double>(spec.num_classes()) + spec.total_beta();
  for (double v : lyapunov_values(s, 0.0)) EXPECT_NEAR(v, want, 1e-12);
  EXPECT_NEAR(lyapunov_moment(s, 0.0).mean, want, 1e-12);
  EXPECT_TRUE(std::isinf(lyapunov_moment(s, -1e6).mean));
  const auto u = run_replication(get_example("fig1").spec, 100.0, 50.0, 10.0, 0.5, 1, Engine::event);
  EXPECT_THROW(lyapunov_moment(u, 0.1), RegimeError);
}

TEST(Density, IntegratesToOne) {
  const auto d = concatenated_density(get_example("hw_pooled").spec);
  const double lo = -d.c - 40.0 * d.sigma(), hi = 60.0 / d.gamma();
  const std::size_t n = 400000;
  const double h = (hi - lo) / static_cast<double>(n);
  double sum = d.pdf(lo) + d.pdf(hi);
  for (std::size_t k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * d.pdf(lo + h * static_cast<double>(k));
  EXPECT_NEAR(sum * h / 3.0, 1.0, 1e-8);
  EXPECT_NEAR(d.pdf(-1e-12), d.pdf(1e-12), 1e-9);
  EXPECT_NEAR(d.cdf(hi), 1.0, 1e-12);
  EXPECT_NEAR(d.cdf(lo), 0.0, 1e-12);
}

TEST(Density, CdfIsIntegralOfPdf) {
  const auto d = concatenated_density(get_example("hw_pooled").spec);
  for (double x : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
    const double lo = -d.c - 40.0 * d.sigma();
    const std::size_t n = 200000;
    const double h = (x - lo) / static_cast<double>(n);
    double sum = d.pdf(lo) + d.pdf(x);
    for (std::size_t k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * d.pdf(lo + h * static_cast<double>(k));
    EXPECT_NEAR(d.cdf(x), sum * h / 3.0, 1e-8) << x;
  }
}

TEST(Density, DoublingCShiftsGaussianPart) {
  auto spec = get_example("hw_pooled").spec;
  const auto d1 = concatenated_density(spec);
  for (double& l : spec.scaling->l) l *= 2.0;
  const auto d2 = concatenated_density(spec);
  EXPECT_NEAR(d2.c, 2.0 * d1.c, 1e-12);
  EXPECT_NEAR(d2.gamma(), 2.0 * d1.gamma(), 1e-12);
  EXPECT_DOUBLE_EQ(d2.sigma(), d1.sigma());
  // On x <= 0 the density is a Gaussian centred at -c.
  const double m = -d2.c;
  EXPECT_NEAR(d2.pdf(m - 0.3) / d2.pdf(m + 0.3), 1.0, 1e-12);
}

TEST(Density, NeedsPoolRates) {
  EXPECT_THROW(concatenated_density(get_example("hw_evanescent").spec), InvalidInput);
  EXPECT_THROW(concatenated_density(get_example("fig1").spec), RegimeError);
  EXPECT_TRUE(pool_rates(get_example("hw_pooled").spec).has_value());
}
