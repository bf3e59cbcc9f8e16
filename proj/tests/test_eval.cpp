#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "mfpf/bundled_cases.hpp"
#include "mfpf/eval.hpp"

namespace mfpf {
namespace {

const NetworkCase& ieee14() {
  static const NetworkCase c = resolve_case("ieee14");
  return c;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.arch.width = 8;
  t.arch.depth = 1;
  t.arch.linear_width = 8;
  t.epochs = 3;
  t.batch_size = 32;
  return t;
}

class EvalFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ScenarioConfig sc;
    sc.n_low = 300;
    sc.omega = 0.5;
    sc.seed = 21;
    ds_ = new Dataset(generate_dataset(ieee14(), sc));
    model_ = new MfnnModel(train(*ds_, quick_train()).model);
  }
  static void TearDownTestSuite() {
    delete ds_;
    delete model_;
  }
  static Dataset* ds_;
  static MfnnModel* model_;
};
Dataset* EvalFixture::ds_ = nullptr;
MfnnModel* EvalFixture::model_ = nullptr;

// Runs Newton-Raphson on every row: a perfect high-fidelity surrogate.
Predictor nr_oracle(const NetworkCase& c) {
  return [&c](const Matrix& x, const Matrix& tau) {
    Matrix y(x.rows(), static_cast<Eigen::Index>(4 * c.n_lines()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      std::vector<double> feat(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index j = 0; j < x.cols(); ++j) feat[static_cast<std::size_t>(j)] = x(r, j);
      std::vector<std::uint8_t> status(c.n_lines());
      for (std::size_t l = 0; l < c.n_lines(); ++l) status[l] = tau(r, static_cast<Eigen::Index>(l)) != 0.0;
      const auto v = solve_nr(c, TopologyVector(status), injections_from_features(c, feat)).targets();
      for (std::size_t j = 0; j < v.size(); ++j) y(r, static_cast<Eigen::Index>(j)) = v[j];
    }
    return y;
  };
}

TEST_F(EvalFixture, ExactOracleHasZeroError) {
  const auto r = evaluate(nr_oracle(ieee14()), *ds_, ieee14());
  for (int g = 0; g < 4; ++g) {
    EXPECT_EQ(r.group[g].mfnn, 0.0) << kGroupNames[g];
    EXPECT_GT(r.group[g].dc, 0.0) << kGroupNames[g];
  }
  EXPECT_EQ(r.v_max_rel_dev, 0.0);
  EXPECT_EQ(r.n_scenarios, ds_->split.test.size());
}

TEST_F(EvalFixture, GroupMseMatchesElementwiseRecomputation) {
  const auto& c = ieee14();
  const auto r = evaluate(*model_, *ds_, c);
  const auto n = c.n_lines();
  double dc[4] = {0, 0, 0, 0}, nn[4] = {0, 0, 0, 0};
  for (int i : ds_->split.test) {
    const auto& s = ds_->scenarios[static_cast<std::size_t>(i)];
    Matrix x(1, static_cast<Eigen::Index>(s.x.size())), tau(1, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < s.x.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = s.x[j];
    for (std::size_t l = 0; l < n; ++l) tau(0, static_cast<Eigen::Index>(l)) = s.tau[l];
    const Matrix y = model_->predict(x, tau);
    for (int g = 0; g < 4; ++g)
      for (std::size_t l = 0; l < n; ++l) {
        const double kv = c.buses[static_cast<std::size_t>(c.lines[l].from_bus)].base_kv;
        const double unit[4] = {100.0, 100.0 / (std::sqrt(3.0) * kv), 1.0, 100.0};
        const std::size_t j = static_cast<std::size_t>(g) * n + l;
        const double truth = (*s.y_truth)[j];
        dc[g] += std::pow(((*s.y_low)[j] - truth) * unit[g], 2);
        nn[g] += std::pow((y(0, static_cast<Eigen::Index>(j)) - truth) * unit[g], 2);
      }
  }
  const double count = static_cast<double>(ds_->split.test.size() * n);
  for (int g = 0; g < 4; ++g) {
    EXPECT_NEAR(r.group[g].dc, dc[g] / count, 1e-12 * dc[g] / count) << kGroupNames[g];
    EXPECT_NEAR(r.group[g].mfnn, nn[g] / count, 1e-9 * nn[g] / count) << kGroupNames[g];
  }
}

TEST_F(EvalFixture, ReportIsDeterministicAndCarriesConfig) {
  auto a = evaluate(*model_, *ds_, ieee14());
  auto b = evaluate(*model_, *ds_, ieee14());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const auto j = a.to_json();
  EXPECT_EQ(j["tool"], kToolVersion);
  EXPECT_EQ(j["mse"]["i_li"]["unit"], "kA^2");
  EXPECT_NE(a.table().find("theta_li"), std::string::npos);
}

TEST_F(EvalFixture, RejectsEmptyOrMismatchedInput) {
  Dataset empty = *ds_;
  empty.split.test.clear();
  EXPECT_THROW(evaluate(*model_, empty, ieee14()), ValidationError);
  EXPECT_THROW(evaluate(*model_, *ds_, resolve_case("ieee118")), ValidationError);
  EXPECT_THROW(evaluate(*model_, normalize(*ds_), ieee14()), ValidationError);
}

TEST_F(EvalFixture, ScatterHasOneRowPerScenarioLineQuantity) {
  const auto& c = ieee14();
  const auto csv = scatter_csv(*model_, *ds_, c);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scenario,line,quantity,unit,nr,dc,mfnn");
  std::size_t rows = 0;
  const auto scale = physical_scale(c);
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string sid, lid, q, unit, nr;
    std::getline(f, sid, ',');
    std::getline(f, lid, ',');
    std::getline(f, q, ',');
    std::getline(f, unit, ',');
    std::getline(f, nr, ',');
    int g = 0;
    while (q != kGroupNames[g]) ++g;
    const std::size_t j = static_cast<std::size_t>(g) * c.n_lines() + std::stoul(lid);
    EXPECT_EQ(std::stod(nr), (*ds_->scenarios[std::stoul(sid)].y_truth)[j] * scale[j]);
    ++rows;
  }
  EXPECT_EQ(rows, ds_->split.test.size() * c.n_lines() * 4);
}

TEST(PhysicalScale, MatchesPerUnitBases) {
  const auto& c = ieee14();
  const auto s = physical_scale(c);
  const auto n = c.n_lines();
  // line 0 runs between 135 kV buses, line 7 on the 0.208 kV side
  EXPECT_DOUBLE_EQ(s[0], 100.0);
  EXPECT_NEAR(s[n + 0], 100.0 / (std::sqrt(3.0) * 135.0), 1e-15);
  EXPECT_NEAR(s[n + 7], 100.0 / (std::sqrt(3.0) * 0.208), 1e-12);
  EXPECT_EQ(s[2 * n + 3], 1.0);
  EXPECT_EQ(s[3 * n + 3], 100.0);
}

TEST(Sweep, DuplicatesAreDroppedWithWarning) {
  SweepConfig cfg;
  cfg.param = SweepParam::Omega;
  cfg.values = {0.5, 0.2, 0.5};
  cfg.replicates = 1;
  cfg.scenario.n_low = 60;
  cfg.train = quick_train();
  const auto r = sweep_omega(ieee14(), cfg);
  EXPECT_EQ(r.values, (std::vector<double>{0.5, 0.2}));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("duplicate"), std::string::npos);
  EXPECT_EQ(r.cells.size(), 2u);
  for (const auto& c : r.cells) EXPECT_TRUE(c.ok) << c.error;
  // both cells are scored on the same scenarios
  EXPECT_EQ(r.cells[0].report.group[0].dc, r.cells[1].report.group[0].dc);
}

TEST(Sweep, OmegaOutOfRangeRejected) {
  SweepConfig cfg;
  cfg.values = {0.005};
  EXPECT_THROW(sweep_omega(ieee14(), cfg), ValidationError);
  cfg.values = {1.5};
  cfg.param = SweepParam::Rho;
  EXPECT_THROW(sweep_rho(ieee14(), cfg), ValidationError);
}

TEST(Sweep, FailedCellsLeaveFlaggedGaps) {
  SweepConfig cfg;
  cfg.param = SweepParam::Omega;
  cfg.values = {0.1, 1.0};
  cfg.replicates = 1;
  cfg.scenario.n_low = 60;
  cfg.train = quick_train();
  cfg.train.batch_size = 0;  // rejected inside every cell
  const auto r = sweep_omega(ieee14(), cfg);
  ASSERT_EQ(r.cells.size(), 2u);
  for (const auto& c : r.cells) {
    EXPECT_FALSE(c.ok);
    EXPECT_FALSE(c.error.empty());
  }
  EXPECT_TRUE(std::isnan(r.median_mfnn(0.1, 0)));
  EXPECT_NE(r.table().find("failed"), std::string::npos);
}

TEST(Sweep, RhoCellsAreReproducibleAndShareTheTestSet) {
  SweepConfig cfg;
  cfg.param = SweepParam::Rho;
  cfg.values = {0.3, 1.0};
  cfg.replicates = 2;
  cfg.scenario.n_low = 80;
  cfg.test_size = 30;
  cfg.train = quick_train();
  const auto a = sweep_rho(ieee14(), cfg, 1);
  const auto b = sweep_rho(ieee14(), cfg, 3);
  EXPECT_EQ(a.csv(), b.csv());
  for (const auto& c : a.cells) {
    ASSERT_TRUE(c.ok) << c.error;
    EXPECT_EQ(c.report.n_scenarios, 30u);
    EXPECT_EQ(c.report.group[1].dc, a.cells[0].report.group[1].dc);
  }
  EXPECT_EQ(a.csv().find("rho,replicate,ok"), 0u);
}

TEST(Bench, ReportsAllMethodsOnTheSameWorkload) {
  ScenarioConfig sc;
  sc.n_low = 60;
  sc.k = 2;
  sc.rho = 1.0;
  const auto ds = generate_dataset(ieee14(), sc);
  const auto model = train(ds, quick_train()).model;
  std::vector<int> idx(ds.scenarios.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto r = bench_loadflow(ieee14(), ds, idx, &model, 5, 16);
  EXPECT_EQ(r.n_scenarios, 60u);
  ASSERT_EQ(r.methods.size(), 3u);
  for (const auto& m : r.methods) {
    EXPECT_EQ(m.per_rep_s.size(), 5u);
    EXPECT_GT(m.mean_s, 0.0);
    EXPECT_GT(m.median_s, 0.0);
    EXPECT_GE(m.stddev_s, 0.0);
  }
  EXPECT_LT(r.get("DC").median_s, r.get("NR").median_s);
  EXPECT_NE(r.table().find("MFNN"), std::string::npos);
  EXPECT_THROW(bench_loadflow(ieee14(), ds, {}, &model), ValidationError);
  EXPECT_THROW(bench_loadflow(ieee14(), ds, idx, &model, 0), ValidationError);
  const auto no_model = bench_loadflow(ieee14(), ds, idx, nullptr, 2);
  EXPECT_EQ(no_model.methods.size(), 2u);
}

}  // namespace
}  // namespace mfpf
