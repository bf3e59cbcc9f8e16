#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "mfpf/bundled_cases.hpp"
#include "mfpf/dataset_io.hpp"
#include "mfpf/scenario.hpp"

namespace mfpf {
namespace {

const NetworkCase& ieee14() {
  static const NetworkCase c = resolve_case("ieee14");
  return c;
}

ScenarioConfig small_config(int n_low, double omega, std::uint64_t seed = 7) {
  ScenarioConfig cfg;
  cfg.n_low = n_low;
  cfg.omega = omega;
  cfg.seed = seed;
  return cfg;
}

TEST(SampleTopology, RhoZeroNeverFails) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(sample_topology(15, 3, 0.0, rng).outages().empty());
}

TEST(SampleTopology, RhoOneFailsExactlyK) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(sample_topology(15, 1, 1.0, rng).outages().size(), 1u);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(sample_topology(15, 2, 1.0, rng).outages().size(), 2u);
}

TEST(SampleTopology, OutageFractionMatchesRho) {
  Rng rng(3);
  int hits = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto out = sample_topology(15, 2, 0.3, rng).outages();
    ASSERT_TRUE(out.empty() || out.size() == 2);
    hits += out.size() == 2;
  }
  EXPECT_NEAR(hits / double(n), 0.30, 0.015);
}

TEST(SampleTopology, LinesChosenUniformly) {
  // each line should fail in about k/n of k-outage draws
  Rng rng(4);
  const int n = 30000;
  std::vector<int> count(10, 0);
  for (int i = 0; i < n; ++i)
    for (int l : sample_topology(10, 3, 1.0, rng).outages()) ++count[static_cast<std::size_t>(l)];
  const double p = 0.3, sd = std::sqrt(p * (1 - p) / n);
  for (int c : count) EXPECT_NEAR(c / double(n), p, 5 * sd);
}

TEST(SampleTopology, RejectsTooManyOutages) {
  Rng rng(5);
  EXPECT_THROW(sample_topology(3, 4, 0.5, rng), ValidationError);
  EXPECT_NO_THROW(sample_topology(3, 3, 0.5, rng));
}

TEST(SampleInjections, ZeroSigmaReturnsSetpoints) {
  ScenarioConfig cfg;
  cfg.sigma_pg = cfg.sigma_vg = cfg.sigma_pl = cfg.sigma_ql = 0.0;
  Rng rng(6);
  const auto inj = sample_injections(ieee14(), cfg, rng);
  const auto ref = Injections::from_case(ieee14());
  EXPECT_EQ(inj.gen_p, ref.gen_p);
  EXPECT_EQ(inj.gen_v, ref.gen_v);
  EXPECT_EQ(inj.load_p, ref.load_p);
  EXPECT_EQ(inj.load_q, ref.load_q);
}

TEST(SampleInjections, LoadMomentsMatchSigma) {
  ScenarioConfig cfg;
  cfg.sigma_pl = 0.1;
  Rng rng(8);
  const double set = ieee14().loads[0].p_set;
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = sample_injections(ieee14(), cfg, rng).load_p[0];
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  EXPECT_LE(std::abs(mean - set), 0.005 * std::abs(set));
  EXPECT_LE(std::abs(sd - 0.1 * std::abs(set)), 0.03 * 0.1 * std::abs(set));
}

TEST(SampleInjections, GeneratorVoltageClamped) {
  ScenarioConfig cfg;
  cfg.sigma_vg = 0.5;
  Rng rng(9);
  bool low = false, high = false;
  for (int i = 0; i < 2000; ++i)
    for (double v : sample_injections(ieee14(), cfg, rng).gen_v) {
      EXPECT_GE(v, 0.9);
      EXPECT_LE(v, 1.1);
      low |= v == 0.9;
      high |= v == 1.1;
    }
  EXPECT_TRUE(low);
  EXPECT_TRUE(high);
}

TEST(SampleInjections, FeatureLayoutRoundTrips) {
  Rng rng(10);
  const auto inj = sample_injections(ieee14(), ScenarioConfig{}, rng);
  const auto x = feature_vector(inj);
  ASSERT_EQ(x.size(), 2 * 5 + 2 * 11u);
  EXPECT_EQ(x[5], inj.gen_v[0]);
  EXPECT_EQ(x[10], inj.load_p[0]);
  const auto back = injections_from_features(ieee14(), x);
  EXPECT_EQ(back.gen_p, inj.gen_p);
  EXPECT_EQ(back.load_q, inj.load_q);
  EXPECT_THROW(injections_from_features(ieee14(), std::vector<double>(3)), ShapeError);
}

class GeneratedDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ds_ = new Dataset(generate_dataset(ieee14(), small_config(1000, 0.3))); }
  static void TearDownTestSuite() { delete ds_; }
  static Dataset* ds_;
};
Dataset* GeneratedDataset::ds_ = nullptr;

TEST_F(GeneratedDataset, LabelCountsFollowOmega) {
  std::size_t n_low = 0, n_high = 0;
  for (const auto& s : ds_->scenarios) {
    n_low += s.y_low.has_value();
    n_high += s.y_high.has_value();
    if (s.y_high) {
      EXPECT_TRUE(s.y_low.has_value());
    }
    EXPECT_TRUE(s.valid);
  }
  EXPECT_EQ(n_low, 1000u);
  EXPECT_EQ(n_high, 300u);
}

TEST_F(GeneratedDataset, LabelsMatchDirectSolves) {
  for (std::size_t i = 0; i < ds_->scenarios.size(); i += 97) {
    const auto& s = ds_->scenarios[i];
    const auto inj = injections_from_features(ieee14(), s.x);
    EXPECT_EQ(*s.y_low, solve_dc(ieee14(), s.tau, inj).targets());
    if (s.y_high) {
      EXPECT_EQ(*s.y_high, solve_nr(ieee14(), s.tau, inj, ds_->cfg.nr).targets());
    }
  }
  for (const auto& s : ds_->scenarios) {
    if (!s.y_high) continue;
    const auto inj = injections_from_features(ieee14(), s.x);
    const auto nr = solve_nr(ieee14(), s.tau, inj, ds_->cfg.nr);
    EXPECT_LE(verify_power_balance(ieee14(), s.tau, nr, inj), 1e-8);
  }
}

TEST_F(GeneratedDataset, OutagesKeepSlackComponentWhole) {
  int contingency = 0;
  for (const auto& s : ds_->scenarios) {
    const auto labels = component_labels(apply_topology(ieee14(), s.tau));
    EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
    const auto out = s.tau.outages().size();
    EXPECT_TRUE(out == 0 || out == 1);
    contingency += out == 1;
  }
  // no single line outage islands the 14-bus grid, so the share stays near rho = 0.8
  EXPECT_GT(contingency, 700);
  EXPECT_LT(contingency, 860);
}

TEST_F(GeneratedDataset, SplitsPartitionScenarios) {
  const auto& sp = ds_->split;
  EXPECT_EQ(sp.train.size(), 800u);
  EXPECT_EQ(sp.val.size(), 100u);
  EXPECT_EQ(sp.test.size(), 100u);
  std::set<int> all(sp.train.begin(), sp.train.end());
  all.insert(sp.val.begin(), sp.val.end());
  all.insert(sp.test.begin(), sp.test.end());
  EXPECT_EQ(all.size(), 1000u);
  for (int i : sp.test) EXPECT_TRUE(ds_->scenarios[static_cast<std::size_t>(i)].y_truth.has_value());
  for (int i : sp.train) EXPECT_FALSE(ds_->scenarios[static_cast<std::size_t>(i)].y_truth.has_value());
}

TEST_F(GeneratedDataset, NormalizationUsesTrainSplitOnly) {
  const auto norm = normalize(*ds_);
  ASSERT_TRUE(norm.normalized);
  const auto nx = ds_->n_features();
  for (std::size_t j = 0; j < nx; ++j) {
    double m = 0.0;
    for (int i : norm.split.train) m += norm.scenarios[static_cast<std::size_t>(i)].x[j];
    EXPECT_LE(std::abs(m / double(norm.split.train.size())), 1e-10);
    EXPECT_GT(ds_->norm.x_std[j], 0.0);
  }
  for (std::size_t i = 0; i < norm.scenarios.size(); ++i) EXPECT_EQ(norm.scenarios[i].tau, ds_->scenarios[i].tau);
  for (std::size_t i = 0; i < norm.scenarios.size(); i += 13) {
    const auto back = denormalize(*norm.scenarios[i].y_low, norm.norm);
    for (std::size_t j = 0; j < back.size(); ++j) EXPECT_NEAR(back[j], (*ds_->scenarios[i].y_low)[j], 1e-12);
  }
}

TEST_F(GeneratedDataset, SerializationRoundTripsExactly) {
  const auto text = serialize_dataset(*ds_);
  const auto back = parse_dataset(text);
  EXPECT_EQ(back.scenarios, ds_->scenarios);
  EXPECT_EQ(back.split, ds_->split);
  EXPECT_EQ(back.norm, ds_->norm);
  EXPECT_EQ(back.case_hash, ieee14().line_order_hash());
  EXPECT_EQ(serialize_dataset(back), text);
  EXPECT_EQ(text.rfind("mfpf-data v1\n", 0), 0u);
}

TEST_F(GeneratedDataset, NestedHighFidelitySubsets) {
  const auto small = restrict_high_fidelity(*ds_, 0.1);
  const auto tiny = restrict_high_fidelity(*ds_, 0.05);
  EXPECT_EQ(small.n_high(), 100u);
  EXPECT_EQ(tiny.n_high(), 50u);
  for (std::size_t i = 0; i < ds_->scenarios.size(); ++i) {
    if (tiny.scenarios[i].y_high) {
      EXPECT_TRUE(small.scenarios[i].y_high.has_value());
    }
    if (small.scenarios[i].y_high) {
      EXPECT_TRUE(ds_->scenarios[i].y_high.has_value());
    }
  }
  EXPECT_THROW(restrict_high_fidelity(*ds_, 0.5), ValidationError);
}

TEST(GenerateDataset, OmegaOneLabelsEverything) {
  const auto ds = generate_dataset(ieee14(), small_config(60, 1.0));
  for (const auto& s : ds.scenarios) {
    EXPECT_TRUE(s.y_low.has_value());
    EXPECT_TRUE(s.y_high.has_value());
  }
}

TEST(GenerateDataset, SerialAndParallelAreByteIdentical) {
  const auto cfg = small_config(200, 0.5, 11);
  const auto a = serialize_dataset(generate_dataset(ieee14(), cfg, 1));
  const auto b = serialize_dataset(generate_dataset(ieee14(), cfg, 4));
  EXPECT_EQ(a, b);
  const auto c = serialize_dataset(generate_dataset(ieee14(), small_config(200, 0.5, 12), 1));
  EXPECT_NE(a, c);
}

TEST(GenerateDataset, RhoExtremes) {
  auto cfg = small_config(100, 0.5);
  cfg.rho = 1.0;
  cfg.k = 2;
  for (const auto& s : generate_dataset(ieee14(), cfg).scenarios) EXPECT_EQ(s.tau.outages().size(), 2u);
  cfg.rho = 0.0;
  for (const auto& s : generate_dataset(ieee14(), cfg).scenarios) EXPECT_TRUE(s.tau.outages().empty());
}

TEST(GenerateDataset, RetryBudgetExhaustionIsReported) {
  auto cfg = small_config(3, 0.5);
  cfg.rho = 1.0;
  cfg.k = 15;
  cfg.max_retries = 5;
  try {
    generate_dataset(ieee14(), cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("5 islanding"), std::string::npos) << e.what();
  }
  cfg.k = 16;
  EXPECT_THROW(generate_dataset(ieee14(), cfg), ValidationError);
}

TEST(GenerateDataset, OutOfSampleTestHoldsOutTopologies) {
  auto cfg = small_config(300, 0.5, 5);
  cfg.rho = 1.0;
  cfg.k = 2;
  cfg.out_of_sample_test = true;
  const auto ds = generate_dataset(ieee14(), cfg);
  std::set<TopologyVector> seen;
  for (int i : ds.split.train) seen.insert(ds.scenarios[static_cast<std::size_t>(i)].tau);
  for (int i : ds.split.val) seen.insert(ds.scenarios[static_cast<std::size_t>(i)].tau);
  ASSERT_FALSE(ds.split.test.empty());
  EXPECT_GE(ds.split.test.size(), 30u);
  for (int i : ds.split.test) EXPECT_EQ(seen.count(ds.scenarios[static_cast<std::size_t>(i)].tau), 0u);
}

TEST(Normalization, ConstantFeatureGetsUnitStd) {
  std::vector<Scenario> sc(4);
  for (std::size_t i = 0; i < sc.size(); ++i) {
    sc[i].x = {3.0, double(i)};
    sc[i].y_low = std::vector<double>{double(i), 1.0, 2.0, 5.0};
  }
  const auto n = compute_norm(sc, {0, 1, 2, 3}, 2, 4);
  EXPECT_EQ(n.x_std[0], 1.0);
  EXPECT_EQ(n.normalize_x(sc[2].x)[0], 0.0);
  EXPECT_NEAR(n.x_std[1], std::sqrt(1.25), 1e-15);
  EXPECT_EQ(n.y_std[1], 1.0);
}

TEST(Normalization, RoundTripOnRandomData) {
  Rng rng(21);
  std::normal_distribution<double> z(0.0, 50.0);
  NormStats n;
  for (int j = 0; j < 40; ++j) {
    n.y_mean.push_back(z(rng));
    n.y_std.push_back(std::abs(z(rng)) + 1e-3);
  }
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> y(40);
    for (auto& v : y) v = z(rng);
    const auto back = n.denormalize_y(n.normalize_y(y));
    for (std::size_t j = 0; j < y.size(); ++j) worst = std::max(worst, std::abs(back[j] - y[j]));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(DatasetIo, RejectsMalformedInput) {
  EXPECT_THROW(parse_dataset("mfpf-data v2\n{}\n"), ParseError);
  EXPECT_THROW(parse_dataset("mfpf-data v1\nnot json\n"), ParseError);
  auto text = serialize_dataset(generate_dataset(ieee14(), small_config(10, 0.5)));
  text.resize(text.size() / 2);
  EXPECT_THROW(parse_dataset(text), ParseError);
}

TEST(ScenarioConfigJson, RoundTripsAndRejectsUnknownKeys) {
  auto cfg = small_config(123, 0.25, 99);
  cfg.k = 2;
  cfg.nr.init = NrInit::DcWarmStart;
  const auto back = scenario_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_THROW(scenario_config_from_json(Json{{"bogus", 1}}), ValidationError);
  ScenarioConfig bad;
  bad.rho = 1.5;
  EXPECT_THROW(bad.check(), ValidationError);
}

}  // namespace
}  // namespace mfpf
