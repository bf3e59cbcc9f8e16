#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mfpf/bundled_cases.hpp"
#include "mfpf/powerflow.hpp"
#include "test_support.hpp"

namespace mfpf {
namespace {

NetworkCase two_bus() {
  NetworkCase c;
  c.name = "two_bus";
  c.base_mva = 100.0;
  c.buses = {{0, BusKind::Slack, 100.0, 1.0, 0.0}, {1, BusKind::PQ, 100.0, 1.0, 0.0}};
  c.lines = {{0, 0, 1, 0.0, 0.1, 0.0, 10.0}};
  c.generators = {{0, 0.0, 1.0}};
  c.loads = {{1, 1.0, 0.0}};
  return c;
}

Injections zero_injections(const NetworkCase& c) {
  auto inj = Injections::from_case(c).scaled(0.0);
  for (auto& v : inj.gen_v) v = 1.0;
  return inj;
}

TopologyVector random_topology(const NetworkCase& c, std::mt19937_64& rng, int k) {
  std::vector<int> idx(c.n_lines());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(k));
  return TopologyVector::with_outages(c.n_lines(), idx);
}

void expect_matches_reference(const NetworkCase& c, const TopologyVector& tau, const nlohmann::json& ref,
                              int max_iter) {
  NrConfig cfg;
  cfg.tol = 1e-8;
  const auto sol = solve_nr(c, tau, Injections::from_case(c), cfg);
  ASSERT_TRUE(sol.converged);
  EXPECT_LE(sol.iterations, max_iter);
  double dvm = 0.0, dva = 0.0, dp = 0.0, di = 0.0, dl = 0.0;
  for (std::size_t i = 0; i < c.n_buses(); ++i) {
    dvm = std::max(dvm, std::abs(sol.vm[i] - ref["vm"][i].get<double>()));
    dva = std::max(dva, std::abs(sol.va[i] - ref["va"][i].get<double>()));
  }
  for (std::size_t k = 0; k < c.n_lines(); ++k) {
    dp = std::max(dp, std::abs(sol.p_li[k] - ref["p_li"][k].get<double>()));
    di = std::max(di, std::abs(sol.i_li[k] - ref["i_from"][k].get<double>()));
    dl = std::max(dl, std::abs(sol.theta_li[k] - ref["loading"][k].get<double>()));
  }
  EXPECT_LE(dvm, 1e-6);
  EXPECT_LE(dva, 1e-6);
  EXPECT_LE(dp, 1e-5);
  EXPECT_LE(di, 1e-5);
  EXPECT_LE(dl, 1e-7);
}

TEST(SolveDc, TwoBusHandSolution) {
  const auto c = two_bus();
  const auto sol = solve_dc(c, TopologyVector::all_in_service(1), Injections::from_case(c));
  EXPECT_NEAR(sol.va[1], -0.1, 1e-15);
  EXPECT_NEAR(sol.p_li[0], 1.0, 1e-14);
  EXPECT_NEAR(sol.i_li[0], 1.0, 1e-14);
  EXPECT_DOUBLE_EQ(sol.v_li[0], 1.0);
  EXPECT_NEAR(sol.theta_li[0], 0.1, 1e-15);
  EXPECT_EQ(sol.fidelity, Fidelity::DC);
}

TEST(SolveDc, ZeroInjectionsGiveZeroFlows) {
  const auto c = bundled_case("ieee118");
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto tau = random_topology(c, rng, 2);
    const auto sol = solve_dc(c, tau, zero_injections(c));
    for (double a : sol.va) EXPECT_EQ(a, 0.0);
    for (double p : sol.p_li) EXPECT_EQ(p, 0.0);
  }
}

TEST(SolveDc, LinearInInjections) {
  const auto c = bundled_case("ieee14");
  const auto inj = Injections::from_case(c);
  const auto tau = TopologyVector::with_outages(15, {4});
  const auto one = solve_dc(c, tau, inj);
  const auto two = solve_dc(c, tau, inj.scaled(2.0));
  for (std::size_t k = 0; k < 15; ++k) EXPECT_NEAR(two.p_li[k], 2.0 * one.p_li[k], 1e-12);
  for (std::size_t i = 0; i < 14; ++i) EXPECT_NEAR(two.va[i], 2.0 * one.va[i], 1e-12);
}

TEST(SolveDc, SlackAbsorbsImbalance) {
  const auto c = bundled_case("ieee14");
  const auto inj = Injections::from_case(c);
  const auto tau = TopologyVector::with_outages(15, {2, 9});
  const auto sol = solve_dc(c, tau, inj);
  const auto net = apply_topology(c, tau);
  const int slack = c.slack_bus();
  double slack_out = 0.0;
  for (const auto& br : net.branches) {
    const double f = (sol.va[br.from_bus] - sol.va[br.to_bus]) / br.x;
    if (br.from_bus == slack) slack_out += f;
    if (br.to_bus == slack) slack_out -= f;
  }
  double others = 0.0;
  for (std::size_t g = 0; g < c.generators.size(); ++g)
    if (c.generators[g].bus != slack) others += inj.gen_p[g];
  for (std::size_t l = 0; l < c.loads.size(); ++l)
    if (c.loads[l].bus != slack) others -= inj.load_p[l];
  EXPECT_NEAR(others + slack_out, 0.0, 1e-12);
}

TEST(SolveDc, IslandedBusesAreZeroed) {
  const auto c = bundled_case("ieee14");
  const auto tau = TopologyVector::with_outages(15, {11, 14});  // isolates bus 13
  const auto sol = solve_dc(c, tau, Injections::from_case(c));
  EXPECT_EQ(sol.vm[13], 0.0);
  EXPECT_EQ(sol.va[13], 0.0);
  EXPECT_EQ(sol.v_li[11], 1.0);  // from-end bus 8 is still energized
}

TEST(SolveNr, FlatNoLoadNetwork) {
  auto c = bundled_case("ieee14");
  for (auto& l : c.lines) l.b = 0.0;
  for (auto& b : c.buses) b.vm_init = 1.0;
  const auto sol = solve_nr(c, TopologyVector::all_in_service(15), zero_injections(c));
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.iterations, 1);
  for (std::size_t i = 0; i < 14; ++i) {
    EXPECT_NEAR(sol.vm[i], 1.0, 1e-12);
    EXPECT_NEAR(sol.va[i], 0.0, 1e-12);
  }
  for (double p : sol.p_li) EXPECT_NEAR(p, 0.0, 1e-12);
  EXPECT_NEAR(verify_power_balance(c, TopologyVector::all_in_service(15), sol, zero_injections(c)), 0.0, 1e-12);
}

TEST(SolveNr, Matches14BusReferenceSolver) {
  const auto c = bundled_case("ieee14");
  const auto ref = test::load_reference("ieee14");
  expect_matches_reference(c, TopologyVector::all_in_service(15), ref["base"], 6);
  for (const auto& o : ref["outages"])
    expect_matches_reference(c, TopologyVector::with_outages(15, o["lines"].get<std::vector<int>>()),
                             o["solution"], 10);
}

TEST(SolveNr, Matches118BusReferenceSolver) {
  const auto c = bundled_case("ieee118");
  const auto ref = test::load_reference("ieee118");
  expect_matches_reference(c, TopologyVector::all_in_service(173), ref["base"], 10);
  for (const auto& o : ref["outages"])
    expect_matches_reference(c, TopologyVector::with_outages(173, o["lines"].get<std::vector<int>>()),
                             o["solution"], 10);
}

TEST(SolveNr, WarmStartAgreesWithFlatStart) {
  for (const auto& name : bundled_case_names()) {
    const auto c = bundled_case(name);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 10; ++t) {
      const auto tau = random_topology(c, rng, 1 + t % 2);
      NrConfig flat, warm;
      warm.init = NrInit::DcWarmStart;
      const auto a = solve_nr(c, tau, Injections::from_case(c), flat);
      const auto b = solve_nr(c, tau, Injections::from_case(c), warm);
      if (!a.converged || !b.converged) continue;
      for (std::size_t i = 0; i < c.n_buses(); ++i) EXPECT_NEAR(a.vm[i], b.vm[i], 1e-8);
    }
  }
}

TEST(SolveNr, OutagedLinesCarryNoFlowInEitherSolver) {
  const auto c = bundled_case("ieee118");
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto tau = random_topology(c, rng, 2);
    const auto nr = solve_nr(c, tau, Injections::from_case(c));
    const auto dc = solve_dc(c, tau, Injections::from_case(c));
    for (int k : tau.outages()) {
      EXPECT_EQ(nr.p_li[k], 0.0);
      EXPECT_EQ(nr.i_li[k], 0.0);
      EXPECT_EQ(nr.theta_li[k], 0.0);
      EXPECT_EQ(dc.p_li[k], 0.0);
      EXPECT_EQ(dc.theta_li[k], 0.0);
    }
    if (nr.converged) {
      EXPECT_LE(verify_power_balance(c, tau, nr), 1e-8);
      for (std::size_t k = 0; k < c.n_lines(); ++k) {
        if (tau[k]) {
          EXPECT_GT(nr.v_li[k], 0.0);
        }
      }
    }
  }
}

TEST(SolveNr, NonConvergenceIsReportedNotThrown) {
  const auto c = bundled_case("ieee14");
  NrConfig cfg;
  cfg.max_iter = 8;
  const auto sol = solve_nr(c, TopologyVector::all_in_service(15), Injections::from_case(c).scaled(25.0), cfg);
  EXPECT_FALSE(sol.converged);
  EXPECT_EQ(sol.vm.size(), 14u);
}

TEST(SolveNr, InvalidConfigRejected) {
  const auto c = two_bus();
  NrConfig cfg;
  cfg.tol = 0.0;
  EXPECT_THROW(solve_nr(c, TopologyVector::all_in_service(1), Injections::from_case(c), cfg), ValidationError);
  cfg = NrConfig{};
  cfg.max_iter = 0;
  EXPECT_THROW(solve_nr(c, TopologyVector::all_in_service(1), Injections::from_case(c), cfg), ValidationError);
}

TEST(VerifyPowerBalance, ConvergedSolutionWithinTolerance) {
  const auto c = bundled_case("ieee14");
  const auto tau = TopologyVector::all_in_service(15);
  const auto sol = solve_nr(c, tau, Injections::from_case(c));
  ASSERT_TRUE(sol.converged);
  EXPECT_LE(verify_power_balance(c, tau, sol), 1e-8);
}

TEST(VerifyPowerBalance, DcSolutionViolatesAcBalance) {
  const auto c = bundled_case("ieee14");
  const auto tau = TopologyVector::all_in_service(15);
  const auto dc = solve_dc(c, tau, Injections::from_case(c));
  auto shifted = dc;
  for (auto& a : shifted.va) a += c.buses[c.slack_bus()].va_init;
  EXPECT_GT(verify_power_balance(c, tau, shifted), 1e-3);
}

TEST(Injections, ShapeChecked) {
  const auto c = bundled_case("ieee14");
  auto inj = Injections::from_case(c);
  inj.load_p.pop_back();
  EXPECT_THROW(solve_dc(c, TopologyVector::all_in_service(15), inj), ShapeError);
}

}  // namespace
}  // namespace mfpf
