#pragma once

// Accuracy reports, parameter sweeps, scatter export and load-flow timing.
//
// Reported units: p_li in MW, i_li in kA, v_li in pu, theta_li in percent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mfpf/dataset_io.hpp"
#include "mfpf/mfnn.hpp"
#include "mfpf/powerflow.hpp"
#include "mfpf/scenario.hpp"

namespace mfpf {

inline constexpr const char* kGroupNames[4] = {"p_li", "i_li", "v_li", "theta_li"};
inline constexpr const char* kGroupUnits[4] = {"MW", "kA", "pu", "%"};

/// Per-target factor from per-unit to reporting units.
inline std::vector<double> physical_scale(const NetworkCase& c) {
  const auto n = c.n_lines();
  std::vector<double> s(4 * n);
  for (std::size_t l = 0; l < n; ++l) {
    const double kv = c.buses[static_cast<std::size_t>(c.lines[l].from_bus)].base_kv;
    s[l] = c.base_mva;
    s[n + l] = c.base_mva / (std::sqrt(3.0) * kv);
    s[2 * n + l] = 1.0;
    s[3 * n + l] = 100.0;
  }
  return s;
}

/// Raw features and topology of a scenario list, one row each.
struct Workload {
  Matrix x, tau;
  std::vector<int> index;  // scenario ids in the source dataset
};

inline Workload make_workload(const Dataset& ds, const std::vector<int>& idx) {
  if (ds.normalized) throw ValidationError("workloads are built from raw (unnormalized) datasets");
  Workload w;
  const auto nx = static_cast<Eigen::Index>(ds.n_features()), nl = static_cast<Eigen::Index>(ds.n_lines);
  w.x.resize(static_cast<Eigen::Index>(idx.size()), nx);
  w.tau.resize(static_cast<Eigen::Index>(idx.size()), nl);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& s = ds.scenarios[static_cast<std::size_t>(idx[r])];
    w.x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(s.x.data(), nx);
    for (Eigen::Index l = 0; l < nl; ++l) w.tau(static_cast<Eigen::Index>(r), l) = s.tau[static_cast<std::size_t>(l)];
  }
  w.index = idx;
  return w;
}

/// Maps raw features and topology rows to per-unit target rows.
using Predictor = std::function<Matrix(const Matrix& x, const Matrix& tau)>;

inline Predictor model_predictor(const MfnnModel& m) {
  return [&m](const Matrix& x, const Matrix& tau) { return m.predict(x, tau); };
}

struct GroupMse {
  double dc = 0.0;
  double mfnn = 0.0;
};

struct EvalReport {
  std::string case_name;
  std::size_t n_scenarios = 0;
  std::size_t n_lines = 0;
  GroupMse group[4];
  double v_max_rel_dev = 0.0;  // max |v_mfnn - v_nr| / v_nr over in-service lines
  Json config = Json::object();

  Json to_json() const {
    Json j;
    j["tool"] = kToolVersion;
    j["case"] = case_name;
    j["n_scenarios"] = n_scenarios;
    j["n_lines"] = n_lines;
    for (int g = 0; g < 4; ++g)
      j["mse"][kGroupNames[g]] = {{"unit", std::string(kGroupUnits[g]) + "^2"}, {"dc", group[g].dc}, {"mfnn", group[g].mfnn}};
    j["v_li_max_relative_deviation"] = v_max_rel_dev;
    j["config"] = config;
    return j;
  }

  std::string table() const {
    std::ostringstream os;
    os << "case " << case_name << ", " << n_scenarios << " held-out scenarios, MSE in physical units\n";
    os << std::left << std::setw(10) << "group" << std::setw(8) << "unit" << std::right << std::setw(16) << "DC"
       << std::setw(16) << "MFNN" << std::setw(12) << "DC/MFNN" << "\n";
    for (int g = 0; g < 4; ++g) {
      os << std::left << std::setw(10) << kGroupNames[g] << std::setw(8) << (std::string(kGroupUnits[g]) + "^2")
         << std::right << std::setw(16) << std::setprecision(6) << group[g].dc << std::setw(16) << group[g].mfnn
         << std::setw(12) << std::setprecision(4) << (group[g].mfnn > 0 ? group[g].dc / group[g].mfnn : 0.0) << "\n";
    }
    os << "max relative v_li deviation (MFNN vs NR): " << std::setprecision(4) << 100.0 * v_max_rel_dev << " %\n";
    return os.str();
  }
};

/// NR labels of the given scenarios (test scenarios keep them as y_truth).
inline const std::vector<double>& nr_label(const Scenario& s) {
  if (s.y_truth) return *s.y_truth;
  if (s.y_high) return *s.y_high;
  throw ValidationError("scenario has no Newton-Raphson label");
}

/// MSE of DC labels and of `predict` against NR labels, per output group,
/// in physical units, over the scenarios `idx` (default: the test split).
inline EvalReport evaluate(const Predictor& predict, const Dataset& ds, const NetworkCase& c,
                           std::vector<int> idx = {}) {
  if (ds.normalized) throw ValidationError("evaluate expects a raw dataset");
  if (ds.case_hash != c.line_order_hash()) throw ValidationError("dataset was generated for a different case");
  if (idx.empty()) idx = ds.split.test;
  if (idx.empty()) throw ValidationError("evaluation split is empty");
  const auto w = make_workload(ds, idx);
  const Matrix pred = predict(w.x, w.tau);
  const auto n_lines = ds.n_lines;
  if (pred.rows() != static_cast<Eigen::Index>(idx.size()) || pred.cols() != static_cast<Eigen::Index>(4 * n_lines))
    throw ShapeError("predictor returned the wrong shape");
  const auto scale = physical_scale(c);
  EvalReport r;
  r.case_name = ds.case_name;
  r.n_scenarios = idx.size();
  r.n_lines = n_lines;
  double sum_dc[4] = {0, 0, 0, 0}, sum_nn[4] = {0, 0, 0, 0};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& s = ds.scenarios[static_cast<std::size_t>(idx[k])];
    const auto& nr = nr_label(s);
    if (!s.y_low) throw ValidationError("scenario lacks its DC label");
    const auto& dc = *s.y_low;
    for (std::size_t j = 0; j < 4 * n_lines; ++j) {
      const std::size_t g = j / n_lines;
      const double e_dc = (dc[j] - nr[j]) * scale[j];
      const double e_nn = (pred(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - nr[j]) * scale[j];
      sum_dc[g] += e_dc * e_dc;
      sum_nn[g] += e_nn * e_nn;
      if (g == 2 && s.tau[j - 2 * n_lines] && nr[j] > 0)
        r.v_max_rel_dev = std::max(
            r.v_max_rel_dev, std::abs(pred(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - nr[j]) / nr[j]);
    }
  }
  const double n = static_cast<double>(idx.size() * n_lines);
  for (int g = 0; g < 4; ++g) r.group[g] = {sum_dc[g] / n, sum_nn[g] / n};
  return r;
}

inline EvalReport evaluate(const MfnnModel& m, const Dataset& ds, const NetworkCase& c, std::vector<int> idx = {}) {
  if (m.case_hash != ds.case_hash) throw ValidationError("model and dataset belong to different cases");
  return evaluate(model_predictor(m), ds, c, std::move(idx));
}

/// CSV rows (scenario, line, quantity, unit, nr, dc, mfnn) in physical units.
inline std::string scatter_csv(const MfnnModel& m, const Dataset& ds, const NetworkCase& c, std::vector<int> idx = {}) {
  if (idx.empty()) idx = ds.split.test;
  const auto w = make_workload(ds, idx);
  const Matrix pred = m.predict(w.x, w.tau);
  const auto scale = physical_scale(c);
  const auto n_lines = ds.n_lines;
  std::string out = "scenario,line,quantity,unit,nr,dc,mfnn\n";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& s = ds.scenarios[static_cast<std::size_t>(idx[k])];
    const auto& nr = nr_label(s);
    for (std::size_t g = 0; g < 4; ++g)
      for (std::size_t l = 0; l < n_lines; ++l) {
        const std::size_t j = g * n_lines + l;
        out += std::to_string(idx[k]) + "," + std::to_string(l) + "," + kGroupNames[g] + "," + kGroupUnits[g] + ",";
        detail::put_number(out, nr[j] * scale[j]);
        out += ',';
        detail::put_number(out, (*s.y_low)[j] * scale[j]);
        out += ',';
        detail::put_number(out, pred(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * scale[j]);
        out += '\n';
      }
  }
  return out;
}

inline void export_scatter(const MfnnModel& m, const Dataset& ds, const NetworkCase& c, const std::string& path,
                           std::vector<int> idx = {}) {
  write_text_file(path, scatter_csv(m, ds, c, std::move(idx)));
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParam { Rho, Omega };

struct SweepConfig {
  SweepParam param = SweepParam::Omega;
  std::vector<double> values;
  int replicates = 3;
  std::uint64_t seed = 1;
  ScenarioConfig scenario{};
  TrainConfig train{};
  int test_size = 200;  // fixed contingency test set used by the rho sweep
};

struct SweepCell {
  double value = 0.0;
  int replicate = 0;
  bool ok = false;
  std::string error;
  EvalReport report;          // on the shared held-out set
  EvalReport own_report;      // rho sweep: on the cell's own test split
};

struct SweepResult {
  SweepParam param = SweepParam::Omega;
  std::vector<double> values;
  std::vector<SweepCell> cells;
  std::vector<std::string> warnings;

  std::vector<const SweepCell*> cells_for(double v) const {
    std::vector<const SweepCell*> out;
    for (const auto& c : cells)
      if (c.value == v && c.ok) out.push_back(&c);
    return out;
  }

  /// Median over replicates of a cell statistic; NaN when no cell succeeded.
  double median(double v, const std::function<double(const SweepCell&)>& stat) const {
    std::vector<double> xs;
    for (const auto* c : cells_for(v)) xs.push_back(stat(*c));
    if (xs.empty()) return std::nan("");
    std::sort(xs.begin(), xs.end());
    const auto n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  }

  double median_mfnn(double v, int group) const {
    return median(v, [group](const SweepCell& c) { return c.report.group[group].mfnn; });
  }
  double median_dc(double v, int group) const {
    return median(v, [group](const SweepCell& c) { return c.report.group[group].dc; });
  }

  std::string table() const {
    std::ostringstream os;
    const char* name = param == SweepParam::Rho ? "rho" : "omega";
    os << std::left << std::setw(8) << name << std::right;
    for (int g = 0; g < 4; ++g)
      os << std::setw(15) << (std::string("MFNN ") + kGroupNames[g]) << std::setw(15) << (std::string("DC ") + kGroupNames[g]);
    os << std::setw(6) << "ok" << "\n";
    for (double v : values) {
      os << std::left << std::setw(8) << v << std::right << std::setprecision(5);
      for (int g = 0; g < 4; ++g) os << std::setw(15) << median_mfnn(v, g) << std::setw(15) << median_dc(v, g);
      std::size_t total = 0;
      for (const auto& c : cells) total += c.value == v;
      os << std::setw(6) << (std::to_string(cells_for(v).size()) + "/" + std::to_string(total)) << "\n";
    }
    for (const auto& c : cells)
      if (!c.ok) os << "# " << name << "=" << c.value << " replicate " << c.replicate << " failed: " << c.error << "\n";
    for (const auto& w : warnings) os << "# warning: " << w << "\n";
    return os.str();
  }

  std::string csv() const {
    std::ostringstream os;
    os << (param == SweepParam::Rho ? "rho" : "omega") << ",replicate,ok";
    for (int g = 0; g < 4; ++g) os << ",mfnn_" << kGroupNames[g] << ",dc_" << kGroupNames[g];
    if (param == SweepParam::Rho)
      for (int g = 0; g < 4; ++g) os << ",own_mfnn_" << kGroupNames[g] << ",own_dc_" << kGroupNames[g];
    os << ",error\n";
    os << std::setprecision(17);
    for (const auto& c : cells) {
      os << c.value << "," << c.replicate << "," << (c.ok ? 1 : 0);
      for (int g = 0; g < 4; ++g) {
        if (c.ok)
          os << "," << c.report.group[g].mfnn << "," << c.report.group[g].dc;
        else
          os << ",,";
      }
      if (param == SweepParam::Rho)
        for (int g = 0; g < 4; ++g) {
          if (c.ok)
            os << "," << c.own_report.group[g].mfnn << "," << c.own_report.group[g].dc;
          else
            os << ",,";
        }
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      os << "," << err << "\n";
    }
    return os.str();
  }
};

namespace detail {

inline std::vector<double> dedupe(const std::vector<double>& values, std::vector<std::string>& warnings) {
  std::vector<double> out;
  for (double v : values) {
    if (std::find(out.begin(), out.end(), v) != out.end()) {
      std::ostringstream os;
      os << "duplicate sweep value " << v << " ignored";
      warnings.push_back(os.str());
      continue;
    }
    out.push_back(v);
  }
  return out;
}

/// NR-labelled scenarios with exactly k outages (rho = 1), all in the test split.
inline Dataset contingency_test_set(const NetworkCase& c, ScenarioConfig cfg, int n, std::uint64_t seed) {
  cfg.rho = 1.0;
  cfg.omega = 1.0;
  cfg.n_low = n;
  cfg.seed = seed;
  cfg.out_of_sample_test = false;
  Dataset ds = generate_dataset(c, cfg);
  ds.split.train.clear();
  ds.split.val.clear();
  ds.split.test.resize(ds.scenarios.size());
  std::iota(ds.split.test.begin(), ds.split.test.end(), 0);
  for (auto& s : ds.scenarios) s.y_truth = s.y_high;
  return ds;
}

}  // namespace detail

inline std::uint64_t replicate_seed(std::uint64_t base, int replicate, std::string_view what) {
  return derive_seed(base, static_cast<std::uint64_t>(replicate), what);
}

/// Each rho value x replicate regenerates a dataset, trains from scratch and is
/// scored on (a) one fixed k-outage test set shared by every cell and (b) the
/// cell's own test split. Replicate r uses the same data and training seeds
/// for every rho value.
inline SweepResult sweep_rho(const NetworkCase& c, const SweepConfig& cfg, int jobs = 1) {
  SweepResult res;
  res.param = SweepParam::Rho;
  res.values = detail::dedupe(cfg.values, res.warnings);
  for (double v : res.values)
    if (!(v >= 0 && v <= 1)) throw ValidationError("rho values must lie in [0, 1]");
  const Dataset test = detail::contingency_test_set(c, cfg.scenario, cfg.test_size, derive_seed(cfg.seed, 0, "rho-test"));
  const auto n_cells = res.values.size() * static_cast<std::size_t>(cfg.replicates);
  res.cells.resize(n_cells);
  detail::parallel_for(n_cells, jobs, [&](std::size_t i) {
    auto& cell = res.cells[i];
    cell.value = res.values[i / static_cast<std::size_t>(cfg.replicates)];
    cell.replicate = static_cast<int>(i % static_cast<std::size_t>(cfg.replicates));
    try {
      auto sc = cfg.scenario;
      sc.rho = cell.value;
      sc.seed = replicate_seed(cfg.seed, cell.replicate, "data");
      const Dataset ds = generate_dataset(c, sc);
      auto tc = cfg.train;
      tc.seed = replicate_seed(cfg.seed, cell.replicate, "train");
      const auto trained = train(ds, tc);
      cell.report = evaluate(trained.model, test, c);
      cell.own_report = evaluate(trained.model, ds, c);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return res;
}

/// One shared scenario pool per replicate, generated at the largest omega;
/// smaller omega values keep a nested subset of its NR labels. All cells of a
/// replicate are scored on the same test split.
inline SweepResult sweep_omega(const NetworkCase& c, const SweepConfig& cfg, int jobs = 1) {
  SweepResult res;
  res.param = SweepParam::Omega;
  res.values = detail::dedupe(cfg.values, res.warnings);
  if (res.values.empty()) throw ValidationError("no omega values given");
  for (double v : res.values)
    if (!(v >= 0.01 && v <= 1)) throw ValidationError("omega values must lie in [0.01, 1]");
  const double top = *std::max_element(res.values.begin(), res.values.end());
  std::vector<Dataset> pools(static_cast<std::size_t>(cfg.replicates));
  for (int r = 0; r < cfg.replicates; ++r) {
    auto sc = cfg.scenario;
    sc.omega = top;
    sc.seed = replicate_seed(cfg.seed, r, "data");
    pools[static_cast<std::size_t>(r)] = generate_dataset(c, sc, jobs);
  }
  const auto n_cells = res.values.size() * static_cast<std::size_t>(cfg.replicates);
  res.cells.resize(n_cells);
  detail::parallel_for(n_cells, jobs, [&](std::size_t i) {
    auto& cell = res.cells[i];
    cell.value = res.values[i / static_cast<std::size_t>(cfg.replicates)];
    cell.replicate = static_cast<int>(i % static_cast<std::size_t>(cfg.replicates));
    try {
      const auto& pool = pools[static_cast<std::size_t>(cell.replicate)];
      const Dataset ds = restrict_high_fidelity(pool, cell.value);
      auto tc = cfg.train;
      tc.seed = replicate_seed(cfg.seed, cell.replicate, "train");
      cell.report = evaluate(train(ds, tc).model, ds, c);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return res;
}

// ---------------------------------------------------------------------------
// Timing

struct MethodTiming {
  std::string method;
  double mean_s = 0.0;    // per load flow, averaged over repetitions
  double median_s = 0.0;
  double stddev_s = 0.0;
  std::vector<double> per_rep_s;
};

struct TimingReport {
  std::string case_name;
  std::size_t n_scenarios = 0;
  int repetitions = 0;
  int batch_size = 0;
  std::vector<MethodTiming> methods;
  std::string hardware;

  const MethodTiming& get(const std::string& m) const {
    for (const auto& t : methods)
      if (t.method == m) return t;
    throw ValidationError("no timing for method '" + m + "'");
  }

  Json to_json() const {
    Json j;
    j["tool"] = kToolVersion;
    j["case"] = case_name;
    j["n_scenarios"] = n_scenarios;
    j["repetitions"] = repetitions;
    j["mfnn_batch_size"] = batch_size;
    j["hardware"] = hardware;
    for (const auto& m : methods)
      j["methods"][m.method] = {{"mean_s", m.mean_s}, {"median_s", m.median_s}, {"stddev_s", m.stddev_s},
                                {"per_repetition_s", m.per_rep_s}};
    return j;
  }

  std::string table() const {
    std::ostringstream os;
    os << "case " << case_name << ", " << n_scenarios << " scenarios x " << repetitions
       << " repetitions; MFNN batch-amortized (batch " << batch_size << "), NR/DC per solve\n";
    os << std::left << std::setw(8) << "method" << std::right << std::setw(14) << "mean [us]" << std::setw(14)
       << "median [us]" << std::setw(14) << "stddev [us]" << "\n";
    for (const auto& m : methods)
      os << std::left << std::setw(8) << m.method << std::right << std::fixed << std::setprecision(3) << std::setw(14)
         << 1e6 * m.mean_s << std::setw(14) << 1e6 * m.median_s << std::setw(14) << 1e6 * m.stddev_s << "\n"
         << std::defaultfloat;
    os << "hardware: " << hardware << "\n";
    return os.str();
  }
};

inline std::string hardware_note() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads, single-threaded timing";
}

namespace detail {

inline MethodTiming summarize(const std::string& name, std::vector<double> per_rep) {
  MethodTiming t;
  t.method = name;
  t.per_rep_s = per_rep;
  const double n = static_cast<double>(per_rep.size());
  t.mean_s = std::accumulate(per_rep.begin(), per_rep.end(), 0.0) / n;
  double var = 0.0;
  for (double v : per_rep) var += (v - t.mean_s) * (v - t.mean_s);
  t.stddev_s = per_rep.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  std::sort(per_rep.begin(), per_rep.end());
  const auto k = per_rep.size();
  t.median_s = k % 2 ? per_rep[k / 2] : 0.5 * (per_rep[k / 2 - 1] + per_rep[k / 2]);
  return t;
}

}  // namespace detail

/// Time NR and DC per solve and MFNN batch inference amortized per scenario,
/// all on the identical scenario list. One untimed warm-up pass per method.
inline TimingReport bench_loadflow(const NetworkCase& c, const Dataset& ds, const std::vector<int>& idx,
                                   const MfnnModel* model, int repetitions = 5, int batch_size = 256,
                                   NrConfig nr_cfg = {}) {
  if (repetitions < 1) throw ValidationError("repetitions must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (idx.empty()) throw ValidationError("timing workload is empty");
  if (ds.case_hash != c.line_order_hash()) throw ValidationError("dataset was generated for a different case");
  using clock = std::chrono::steady_clock;
  const auto w = make_workload(ds, idx);
  std::vector<Injections> inj;
  std::vector<TopologyVector> taus;
  for (int i : idx) {
    inj.push_back(injections_from_features(c, ds.scenarios[static_cast<std::size_t>(i)].x));
    taus.push_back(ds.scenarios[static_cast<std::size_t>(i)].tau);
  }
  const double n = static_cast<double>(idx.size());
  volatile double sink = 0.0;

  auto time_solver = [&](auto&& solve) {
    for (std::size_t k = 0; k < idx.size(); ++k) sink = sink + solve(k).p_li[0];
    std::vector<double> reps;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = clock::now();
      for (std::size_t k = 0; k < idx.size(); ++k) sink = sink + solve(k).p_li[0];
      reps.push_back(std::chrono::duration<double>(clock::now() - t0).count() / n);
    }
    return reps;
  };

  TimingReport rep;
  rep.case_name = c.name;
  rep.n_scenarios = idx.size();
  rep.repetitions = repetitions;
  rep.batch_size = batch_size;
  rep.hardware = hardware_note();
  rep.methods.push_back(detail::summarize(
      "NR", time_solver([&](std::size_t k) { return solve_nr(c, taus[k], inj[k], nr_cfg); })));
  rep.methods.push_back(
      detail::summarize("DC", time_solver([&](std::size_t k) { return solve_dc(c, taus[k], inj[k]); })));
  if (model) {
    if (model->case_hash != ds.case_hash) throw ValidationError("model and dataset belong to different cases");
    const auto rows = w.x.rows();
    auto run = [&] {
      for (Eigen::Index s = 0; s < rows; s += batch_size) {
        const auto b = std::min<Eigen::Index>(batch_size, rows - s);
        const Matrix y = model->predict(w.x.middleRows(s, b), w.tau.middleRows(s, b));
        sink = sink + y(0, 0);
      }
    };
    run();
    std::vector<double> reps;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = clock::now();
      run();
      reps.push_back(std::chrono::duration<double>(clock::now() - t0).count() / n);
    }
    rep.methods.push_back(detail::summarize("MFNN", reps));
  }
  return rep;
}

}  // namespace mfpf
