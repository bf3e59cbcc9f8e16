#pragma once

// Scenario sampling and multi-fidelity dataset assembly.
//
// Feature vector x = concat(p_g, v_g, p_l, q_l) in case order; the topology
// vector travels separately. Targets use PfSolution::targets() layout.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mfpf/error.hpp"
#include "mfpf/grid.hpp"
#include "mfpf/powerflow.hpp"
#include "mfpf/rng.hpp"

namespace mfpf {

struct ScenarioConfig {
  int k = 1;
  double rho = 0.8;
  double sigma_pg = 0.05;
  double sigma_vg = 0.01;
  double sigma_pl = 0.05;
  double sigma_ql = 0.05;
  int n_low = 2000;
  double omega = 0.5;
  std::uint64_t seed = 1;
  int max_retries = 100;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  bool out_of_sample_test = false;
  NrConfig nr{};

  void check() const {
    if (k < 0) throw ValidationError("k must be >= 0");
    if (!(rho >= 0 && rho <= 1)) throw ValidationError("rho must lie in [0, 1]");
    if (!(omega >= 0 && omega <= 1)) throw ValidationError("omega must lie in [0, 1]");
    if (sigma_pg < 0 || sigma_vg < 0 || sigma_pl < 0 || sigma_ql < 0) throw ValidationError("sigmas must be >= 0");
    if (n_low < 1) throw ValidationError("n_low must be >= 1");
    if (max_retries < 1) throw ValidationError("max_retries must be >= 1");
    if (!(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1))
      throw ValidationError("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
    nr.check();
  }
};

struct Scenario {
  std::vector<double> x;
  TopologyVector tau;
  std::optional<std::vector<double>> y_low;
  std::optional<std::vector<double>> y_high;
  // NR solution kept for held-out evaluation; never used for fitting.
  std::optional<std::vector<double>> y_truth;
  bool valid = true;
  bool operator==(const Scenario&) const = default;
};

/// z-score statistics. Constant columns get std = 1.
struct NormStats {
  std::vector<double> x_mean, x_std, y_mean, y_std;

  static NormStats identity(std::size_t nx, std::size_t ny) {
    return {std::vector<double>(nx, 0.0), std::vector<double>(nx, 1.0), std::vector<double>(ny, 0.0),
            std::vector<double>(ny, 1.0)};
  }

  std::vector<double> normalize_x(const std::vector<double>& x) const { return apply(x, x_mean, x_std, false); }
  std::vector<double> normalize_y(const std::vector<double>& y) const { return apply(y, y_mean, y_std, false); }
  std::vector<double> denormalize_y(const std::vector<double>& y) const { return apply(y, y_mean, y_std, true); }

  bool operator==(const NormStats&) const = default;

 private:
  static std::vector<double> apply(const std::vector<double>& v, const std::vector<double>& mean,
                                   const std::vector<double>& sd, bool inverse) {
    if (v.size() != mean.size()) throw ShapeError("normalization width mismatch");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = inverse ? v[i] * sd[i] + mean[i] : (v[i] - mean[i]) / sd[i];
    return out;
  }
};

struct Split {
  std::vector<int> train, val, test;
  bool operator==(const Split&) const = default;
};

struct Dataset {
  std::string case_name;
  std::uint64_t case_hash = 0;
  std::size_t n_lines = 0;
  ScenarioConfig cfg;
  std::vector<Scenario> scenarios;
  NormStats norm;
  Split split;
  bool normalized = false;

  std::size_t n_features() const { return scenarios.empty() ? 0 : scenarios.front().x.size(); }
  std::size_t n_targets() const { return 4 * n_lines; }
  std::size_t n_high() const {
    return static_cast<std::size_t>(
        std::count_if(scenarios.begin(), scenarios.end(), [](const Scenario& s) { return s.y_high.has_value(); }));
  }
};

/// With probability `rho` take `k` distinct lines out of service, chosen
/// uniformly; otherwise return the reference topology.
inline TopologyVector sample_topology(std::size_t n_lines, int k, double rho, Rng& rng) {
  if (k < 0 || static_cast<std::size_t>(k) > n_lines)
    throw ValidationError("contingency order k=" + std::to_string(k) + " exceeds " + std::to_string(n_lines) +
                          " lines");
  std::vector<std::uint8_t> s(n_lines, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < rho) {
    // partial Fisher-Yates
    std::vector<int> idx(n_lines);
    std::iota(idx.begin(), idx.end(), 0);
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(j), n_lines - 1);
      std::swap(idx[static_cast<std::size_t>(j)], idx[pick(rng)]);
      s[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] = 0;
    }
  }
  return TopologyVector(std::move(s));
}

inline constexpr double kGenVoltageMin = 0.9;
inline constexpr double kGenVoltageMax = 1.1;

/// Each setpoint drawn as setpoint * (1 + sigma * z), z ~ N(0, 1); generator
/// voltages clamped to [0.9, 1.1] pu.
inline Injections sample_injections(const NetworkCase& c, const ScenarioConfig& cfg, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Injections inj = Injections::from_case(c);
  for (auto& p : inj.gen_p) p *= 1.0 + cfg.sigma_pg * z(rng);
  for (auto& v : inj.gen_v) v = std::clamp(v * (1.0 + cfg.sigma_vg * z(rng)), kGenVoltageMin, kGenVoltageMax);
  for (auto& p : inj.load_p) p *= 1.0 + cfg.sigma_pl * z(rng);
  for (auto& q : inj.load_q) q *= 1.0 + cfg.sigma_ql * z(rng);
  return inj;
}

inline std::vector<double> feature_vector(const Injections& inj) {
  std::vector<double> x;
  x.reserve(2 * inj.gen_p.size() + 2 * inj.load_p.size());
  x.insert(x.end(), inj.gen_p.begin(), inj.gen_p.end());
  x.insert(x.end(), inj.gen_v.begin(), inj.gen_v.end());
  x.insert(x.end(), inj.load_p.begin(), inj.load_p.end());
  x.insert(x.end(), inj.load_q.begin(), inj.load_q.end());
  return x;
}

inline Injections injections_from_features(const NetworkCase& c, const std::vector<double>& x) {
  const auto ng = c.generators.size(), nl = c.loads.size();
  if (x.size() != 2 * ng + 2 * nl) throw ShapeError("feature vector does not match case '" + c.name + "'");
  Injections inj;
  auto it = x.begin();
  auto take = [&it](std::size_t n) {
    std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(n));
    it += static_cast<std::ptrdiff_t>(n);
    return v;
  };
  inj.gen_p = take(ng);
  inj.gen_v = take(ng);
  inj.load_p = take(nl);
  inj.load_q = take(nl);
  return inj;
}

/// Number of high-fidelity labels for a pool of n scenarios.
inline std::size_t high_fidelity_count(double omega, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::ceil(omega * static_cast<double>(n) - 1e-9)));
}

namespace detail {

struct SlotResult {
  Scenario scenario;
  int islanded = 0;
  int diverged = 0;
  std::vector<int> last_outages;
};

/// Draw until the topology keeps every bus on the slack component and NR
/// converges. Both labels are computed; the caller decides which to keep.
inline SlotResult draw_slot(const NetworkCase& c, const ScenarioConfig& cfg, std::size_t index,
                            std::vector<double>& nr_targets) {
  SlotResult res;
  auto rng = make_rng(cfg.seed, index, "scenario");
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    auto tau = sample_topology(c.n_lines(), cfg.k, cfg.rho, rng);
    auto inj = sample_injections(c, cfg, rng);
    res.last_outages = tau.outages();
    const auto labels = component_labels(apply_topology(c, tau));
    if (std::any_of(labels.begin(), labels.end(), [](int l) { return l != 0; })) {
      ++res.islanded;
      continue;
    }
    const auto nr = solve_nr(c, tau, inj, cfg.nr);
    if (!nr.converged) {
      ++res.diverged;
      continue;
    }
    res.scenario.x = feature_vector(inj);
    res.scenario.tau = std::move(tau);
    res.scenario.y_low = solve_dc(c, res.scenario.tau, inj).targets();
    nr_targets = nr.targets();
    res.scenario.valid = true;
    return res;
  }
  res.scenario.valid = false;
  return res;
}

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Split make_split(const std::vector<Scenario>& sc, const ScenarioConfig& cfg) {
  const auto n = sc.size();
  Split split;
  auto rng = make_rng(cfg.seed, 0, "split");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  if (!cfg.out_of_sample_test) {
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
      dst.push_back(order[i]);
    }
  } else {
    // hold out whole contingency patterns until the test share is reached
    const auto n_test = n - std::min(n, n_train + n_val);
    std::map<TopologyVector, std::vector<int>> by_pattern;
    for (int i : order)
      if (!sc[static_cast<std::size_t>(i)].tau.outages().empty()) by_pattern[sc[static_cast<std::size_t>(i)].tau].push_back(i);
    std::vector<const TopologyVector*> patterns;
    for (const auto& [tau, _] : by_pattern) patterns.push_back(&tau);
    std::shuffle(patterns.begin(), patterns.end(), rng);
    std::set<int> held;
    for (const auto* p : patterns) {
      if (held.size() >= n_test) break;
      for (int i : by_pattern[*p]) held.insert(i);
    }
    std::vector<int> rest;
    for (int i : order)
      if (held.count(i))
        split.test.push_back(i);
      else
        rest.push_back(i);
    const double denom = cfg.train_fraction + cfg.val_fraction;
    const auto rest_train =
        static_cast<std::size_t>(std::llround(cfg.train_fraction / denom * static_cast<double>(rest.size())));
    for (std::size_t i = 0; i < rest.size(); ++i) (i < rest_train ? split.train : split.val).push_back(rest[i]);
  }
  for (auto* v : {&split.train, &split.val, &split.test}) std::sort(v->begin(), v->end());
  return split;
}

}  // namespace detail

/// Rank of each scenario in the high-fidelity selection order. Scenarios with
/// rank < high_fidelity_count(omega, n) carry NR labels, so subsets for
/// increasing omega are nested.
inline std::vector<std::size_t> high_fidelity_ranks(std::uint64_t seed, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, 0, "high-fidelity");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;
  return rank;
}

/// Per-feature/target statistics over the training split. Target statistics
/// come from the low-fidelity labels so that the high-fidelity correction
/// stays small in normalized units. Topology is never normalized.
inline NormStats compute_norm(const std::vector<Scenario>& sc, const std::vector<int>& train, std::size_t nx,
                              std::size_t ny) {
  NormStats s;
  auto stats = [](const std::vector<const std::vector<double>*>& rows, std::size_t width, std::vector<double>& mean,
                  std::vector<double>& sd) {
    mean.assign(width, 0.0);
    sd.assign(width, 1.0);
    if (rows.empty()) return;
    for (const auto* r : rows)
      for (std::size_t j = 0; j < width; ++j) mean[j] += (*r)[j];
    for (auto& m : mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(width, 0.0);
    for (const auto* r : rows)
      for (std::size_t j = 0; j < width; ++j) var[j] += ((*r)[j] - mean[j]) * ((*r)[j] - mean[j]);
    for (std::size_t j = 0; j < width; ++j) {
      const double v = std::sqrt(var[j] / static_cast<double>(rows.size()));
      sd[j] = v > 1e-12 * std::max(1.0, std::abs(mean[j])) ? v : 1.0;
    }
  };
  std::vector<const std::vector<double>*> xs, ys;
  for (int i : train) {
    const auto& s_i = sc[static_cast<std::size_t>(i)];
    xs.push_back(&s_i.x);
    if (s_i.y_low) ys.push_back(&*s_i.y_low);
  }
  stats(xs, nx, s.x_mean, s.x_std);
  stats(ys, ny, s.y_mean, s.y_std);
  return s;
}

/// Draw `cfg.n_low` valid scenarios with DC labels; the high-fidelity subset
/// gets NR labels and the test split keeps its NR solution as ground truth.
/// Deterministic for a given (case, cfg) regardless of `jobs`.
inline Dataset generate_dataset(const NetworkCase& c, const ScenarioConfig& cfg, int jobs = 1) {
  cfg.check();
  if (static_cast<std::size_t>(cfg.k) > c.n_lines())
    throw ValidationError("contingency order exceeds the number of lines");
  const auto n = static_cast<std::size_t>(cfg.n_low);
  std::vector<Scenario> sc(n);
  std::vector<std::vector<double>> nr(n);
  std::vector<detail::SlotResult> failures(n);
  std::vector<char> failed(n, 0);
  detail::parallel_for(n, jobs, [&](std::size_t i) {
    auto res = detail::draw_slot(c, cfg, i, nr[i]);
    if (!res.scenario.valid) {
      failed[i] = 1;
      failures[i] = std::move(res);
      return;
    }
    sc[i] = std::move(res.scenario);
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!failed[i]) continue;
    std::ostringstream os;
    os << "retry budget of " << cfg.max_retries << " exhausted for scenario " << i << " (" << failures[i].islanded
       << " islanding topologies, " << failures[i].diverged << " NR failures; last outages:";
    for (int l : failures[i].last_outages) os << ' ' << l;
    os << ")";
    throw Error(os.str());
  }

  Dataset ds;
  ds.case_name = c.name;
  ds.case_hash = c.line_order_hash();
  ds.n_lines = c.n_lines();
  ds.cfg = cfg;
  ds.split = detail::make_split(sc, cfg);
  const auto rank = high_fidelity_ranks(cfg.seed, n);
  const auto n_high = high_fidelity_count(cfg.omega, n);
  for (std::size_t i = 0; i < n; ++i)
    if (rank[i] < n_high) sc[i].y_high = nr[i];
  for (int i : ds.split.test) sc[static_cast<std::size_t>(i)].y_truth = nr[static_cast<std::size_t>(i)];
  ds.scenarios = std::move(sc);
  ds.norm = compute_norm(ds.scenarios, ds.split.train, ds.n_features(), ds.n_targets());
  return ds;
}

/// Drop NR labels outside the first high_fidelity_count(omega, n) ranks. With
/// a dataset generated at a larger omega this yields the nested subsets used by
/// the omega sweep; normalization statistics are recomputed.
inline Dataset restrict_high_fidelity(const Dataset& ds, double omega) {
  if (!(omega >= 0 && omega <= ds.cfg.omega + 1e-12))
    throw ValidationError("omega must not exceed the dataset's own omega");
  if (ds.normalized) throw ValidationError("restrict_high_fidelity expects raw values");
  Dataset out = ds;
  const auto n = ds.scenarios.size();
  const auto rank = high_fidelity_ranks(ds.cfg.seed, n);
  const auto n_high = high_fidelity_count(omega, n);
  for (std::size_t i = 0; i < n; ++i)
    if (rank[i] >= n_high) out.scenarios[i].y_high.reset();
  out.cfg.omega = omega;
  out.norm = compute_norm(out.scenarios, out.split.train, out.n_features(), out.n_targets());
  return out;
}

/// z-score features and targets with the dataset's stored statistics.
inline Dataset normalize(const Dataset& ds) {
  if (ds.normalized) return ds;
  Dataset out = ds;
  for (auto& s : out.scenarios) {
    s.x = ds.norm.normalize_x(s.x);
    if (s.y_low) s.y_low = ds.norm.normalize_y(*s.y_low);
    if (s.y_high) s.y_high = ds.norm.normalize_y(*s.y_high);
    if (s.y_truth) s.y_truth = ds.norm.normalize_y(*s.y_truth);
  }
  out.normalized = true;
  return out;
}

inline std::vector<double> denormalize(const std::vector<double>& y, const NormStats& norm) {
  return norm.denormalize_y(y);
}

}  // namespace mfpf
