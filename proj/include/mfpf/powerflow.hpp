#pragma once

// Low-fidelity (DC approximation) and high-fidelity (polar Newton-Raphson)
// power flow, both reporting the same four per-line quantities:
//   p_li      active power entering the line at its from-end
//   i_li      from-end current magnitude
//   v_li      from-bus voltage magnitude
//   theta_li  loading: max(|I_from|, |I_to|) / i_max
// Only the slack bus's connected component is solved; buses outside it get
// vm = va = 0 and their lines are zeroed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mfpf/error.hpp"
#include "mfpf/grid.hpp"
#include "mfpf/linalg.hpp"

namespace mfpf {

/// Controllable quantities of one operating point, aligned with the case's
/// generator and load lists.
struct Injections {
  std::vector<double> gen_p;
  std::vector<double> gen_v;
  std::vector<double> load_p;
  std::vector<double> load_q;

  static Injections from_case(const NetworkCase& c) {
    Injections inj;
    for (const auto& g : c.generators) {
      inj.gen_p.push_back(g.p_set);
      inj.gen_v.push_back(g.v_set);
    }
    for (const auto& l : c.loads) {
      inj.load_p.push_back(l.p_set);
      inj.load_q.push_back(l.q_set);
    }
    return inj;
  }

  void check(const NetworkCase& c) const {
    if (gen_p.size() != c.generators.size() || gen_v.size() != c.generators.size() ||
        load_p.size() != c.loads.size() || load_q.size() != c.loads.size())
      throw ShapeError("injections do not match the generators/loads of case '" + c.name + "'");
  }

  /// All active and reactive setpoints multiplied by `k`; voltages unchanged.
  Injections scaled(double k) const {
    Injections out = *this;
    for (auto& v : out.gen_p) v *= k;
    for (auto& v : out.load_p) v *= k;
    for (auto& v : out.load_q) v *= k;
    return out;
  }
};

enum class Fidelity { DC, NR };

struct PfSolution {
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;
  Fidelity fidelity = Fidelity::DC;
  std::vector<double> vm;
  std::vector<double> va;
  std::vector<double> p_li;
  std::vector<double> i_li;
  std::vector<double> v_li;
  std::vector<double> theta_li;

  /// Target layout shared by both fidelities: concat(p_li, i_li, v_li, theta_li).
  std::vector<double> targets() const {
    std::vector<double> y;
    y.reserve(4 * p_li.size());
    y.insert(y.end(), p_li.begin(), p_li.end());
    y.insert(y.end(), i_li.begin(), i_li.end());
    y.insert(y.end(), v_li.begin(), v_li.end());
    y.insert(y.end(), theta_li.begin(), theta_li.end());
    return y;
  }
};

enum class NrInit { Flat, DcWarmStart };

struct NrConfig {
  double tol = 1e-8;
  int max_iter = 20;
  NrInit init = NrInit::Flat;

  void check() const {
    if (!(tol > 0)) throw ValidationError("NR tolerance must be positive");
    if (max_iter < 1) throw ValidationError("NR max_iter must be at least 1");
  }
};

namespace detail {

/// Bus-level view shared by both solvers.
struct BusSetup {
  std::vector<int> label;          // connected component per bus
  int slack = 0;
  std::vector<char> active;        // bus is in the slack component
  std::vector<double> p_spec;      // net specified injection per bus
  std::vector<double> q_spec;
  std::vector<double> v_set;       // voltage setpoint, voltage-controlled buses
};

inline BusSetup setup_buses(const NetworkCase& c, const EffectiveNetwork& net, const Injections& inj) {
  inj.check(c);
  BusSetup s;
  const auto n = c.n_buses();
  s.label = component_labels(net);
  s.slack = c.slack_bus();
  s.active.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) s.active[i] = s.label[i] == s.label[static_cast<std::size_t>(s.slack)];
  s.p_spec.assign(n, 0.0);
  s.q_spec.assign(n, 0.0);
  s.v_set.assign(n, 0.0);
  std::vector<char> has_v(n, 0);
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    const auto b = static_cast<std::size_t>(c.generators[g].bus);
    s.p_spec[b] += inj.gen_p[g];
    // the first generator at a bus sets its voltage
    if (!has_v[b]) {
      s.v_set[b] = inj.gen_v[g];
      has_v[b] = 1;
    }
  }
  for (std::size_t l = 0; l < c.loads.size(); ++l) {
    const auto b = static_cast<std::size_t>(c.loads[l].bus);
    s.p_spec[b] -= inj.load_p[l];
    s.q_spec[b] -= inj.load_q[l];
  }
  return s;
}

inline void fill_line_quantities(const NetworkCase& c, const BusSetup& s, const std::vector<double>& vm,
                                 const std::vector<double>& va, PfSolution& sol, const TopologyVector& tau) {
  using C = std::complex<double>;
  const auto nl = c.n_lines();
  sol.p_li.assign(nl, 0.0);
  sol.i_li.assign(nl, 0.0);
  sol.v_li.assign(nl, 0.0);
  sol.theta_li.assign(nl, 0.0);
  for (std::size_t k = 0; k < nl; ++k) {
    const auto& l = c.lines[k];
    const auto f = static_cast<std::size_t>(l.from_bus);
    const auto t = static_cast<std::size_t>(l.to_bus);
    sol.v_li[k] = vm[f];
    if (!tau.in_service(k) || !s.active[f]) continue;
    const C vf = std::polar(vm[f], va[f]);
    const C vt = std::polar(vm[t], va[t]);
    const C ys = 1.0 / C(l.r, l.x);
    const C ysh(0.0, l.b / 2.0);
    const C i_f = ys * (vf - vt) + ysh * vf;
    const C i_t = ys * (vt - vf) + ysh * vt;
    sol.p_li[k] = (vf * std::conj(i_f)).real();
    sol.i_li[k] = std::abs(i_f);
    sol.theta_li[k] = std::max(std::abs(i_f), std::abs(i_t)) / l.i_max;
  }
}

}  // namespace detail

/// DC approximation: B' theta = P over the non-slack buses of the slack's
/// component, theta_slack = 0. Flow proxies: v = 1 pu, i = |p|, loading = i/i_max.
inline PfSolution solve_dc(const NetworkCase& c, const TopologyVector& tau, const Injections& inj) {
  const auto net = apply_topology(c, tau);
  const auto s = detail::setup_buses(c, net, inj);
  const auto n = c.n_buses();

  std::vector<int> pos(n, -1);
  int m = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (s.active[i] && static_cast<int>(i) != s.slack) pos[i] = m++;

  PfSolution sol;
  sol.fidelity = Fidelity::DC;
  sol.vm.assign(n, 0.0);
  sol.va.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (s.active[i]) sol.vm[i] = 1.0;

  if (m > 0) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(net.branches.size() * 4);
    for (const auto& br : net.branches) {
      const auto f = static_cast<std::size_t>(br.from_bus);
      const auto t = static_cast<std::size_t>(br.to_bus);
      if (!s.active[f]) continue;
      const double bij = 1.0 / br.x;
      const int pf = pos[f], pt = pos[t];
      if (pf >= 0) trip.emplace_back(pf, pf, bij);
      if (pt >= 0) trip.emplace_back(pt, pt, bij);
      if (pf >= 0 && pt >= 0) {
        trip.emplace_back(pf, pt, -bij);
        trip.emplace_back(pt, pf, -bij);
      }
    }
    Eigen::SparseMatrix<double> bprime(m, m);
    bprime.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd p(m);
    for (std::size_t i = 0; i < n; ++i)
      if (pos[i] >= 0) p[pos[i]] = s.p_spec[i];
    LinearSolver solver(MatrixStructure::SymmetricPositiveDefinite);
    try {
      solver.factorize(bprime);
    } catch (const SolverError& e) {
      throw SolverError(std::string("DC susceptance matrix: ") + e.what());
    }
    const Eigen::VectorXd theta = solver.solve(p);
    for (std::size_t i = 0; i < n; ++i)
      if (pos[i] >= 0) sol.va[i] = theta[pos[i]];
  }

  const auto nl = c.n_lines();
  sol.p_li.assign(nl, 0.0);
  sol.i_li.assign(nl, 0.0);
  sol.v_li.assign(nl, 0.0);
  sol.theta_li.assign(nl, 0.0);
  for (std::size_t k = 0; k < nl; ++k) {
    const auto& l = c.lines[k];
    const auto f = static_cast<std::size_t>(l.from_bus);
    const auto t = static_cast<std::size_t>(l.to_bus);
    sol.v_li[k] = sol.vm[f];
    if (!tau.in_service(k) || !s.active[f]) continue;
    const double p = (sol.va[f] - sol.va[t]) / l.x;
    sol.p_li[k] = p;
    sol.i_li[k] = std::abs(p) / 1.0;
    sol.theta_li[k] = sol.i_li[k] / l.i_max;
  }
  sol.converged = true;
  sol.iterations = 1;
  return sol;
}

/// Full AC power flow by Newton-Raphson in polar coordinates. On failure to
/// converge the last iterate is returned with `converged == false`.
inline PfSolution solve_nr(const NetworkCase& c, const TopologyVector& tau, const Injections& inj,
                           const NrConfig& cfg = {}) {
  using C = std::complex<double>;
  cfg.check();
  const auto net = apply_topology(c, tau);
  const auto s = detail::setup_buses(c, net, inj);
  const auto n = c.n_buses();
  const auto ybus = build_ybus(net);

  // unknown ordering: angles of PV+PQ buses, then magnitudes of PQ buses
  std::vector<int> pos_a(n, -1), pos_m(n, -1);
  int n_a = 0, n_m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.active[i] || static_cast<int>(i) == s.slack) continue;
    pos_a[i] = n_a++;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.active[i] || c.buses[i].kind != BusKind::PQ) continue;
    pos_m[i] = n_a + n_m++;
  }
  const int dim = n_a + n_m;

  const double va_slack = c.buses[static_cast<std::size_t>(s.slack)].va_init;
  std::vector<double> vm(n, 0.0), va(n, 0.0);
  std::vector<double> dc_va;
  if (cfg.init == NrInit::DcWarmStart) dc_va = solve_dc(c, tau, inj).va;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.active[i]) continue;
    vm[i] = c.buses[i].kind == BusKind::PQ ? 1.0 : s.v_set[i];
    va[i] = va_slack + (dc_va.empty() ? 0.0 : dc_va[i]);
  }

  std::vector<C> v(n);
  auto refresh_v = [&] {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
  };
  std::vector<C> current(n);
  Eigen::VectorXd mismatch(dim);
  auto eval_mismatch = [&]() {
    refresh_v();
    std::fill(current.begin(), current.end(), C(0.0, 0.0));
    for (Eigen::Index k = 0; k < ybus.outerSize(); ++k)
      for (YbusMatrix::InnerIterator it(ybus, k); it; ++it)
        current[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(it.col())];
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_a[i] < 0) continue;
      const C si = v[i] * std::conj(current[i]);
      mismatch[pos_a[i]] = si.real() - s.p_spec[i];
      worst = std::max(worst, std::abs(mismatch[pos_a[i]]));
      if (pos_m[i] >= 0) {
        mismatch[pos_m[i]] = si.imag() - s.q_spec[i];
        worst = std::max(worst, std::abs(mismatch[pos_m[i]]));
      }
    }
    return dim == 0 ? 0.0 : worst;
  };

  PfSolution sol;
  sol.fidelity = Fidelity::NR;
  LinearSolver solver(MatrixStructure::General);
  std::vector<Eigen::Triplet<double>> trip;
  int iter = 0;
  double worst = eval_mismatch();
  bool ok = std::isfinite(worst) && worst < cfg.tol;
  while (!ok && iter < cfg.max_iter && std::isfinite(worst)) {
    trip.clear();
    // dS_i/dVa_k = -j V_i conj(Y_ik V_k) (+ j V_i conj(I_i) on the diagonal)
    // dS_i/dVm_k = V_i conj(Y_ik V_k / |V_k|) (+ conj(I_i) V_i / |V_i| on the diagonal)
    auto add = [&](std::size_t i, std::size_t k, C ds_dva, C ds_dvm) {
      const int ra = pos_a[i], rm = pos_m[i], ca = pos_a[k], cm = pos_m[k];
      if (ra >= 0) {
        if (ca >= 0) trip.emplace_back(ra, ca, ds_dva.real());
        if (cm >= 0) trip.emplace_back(ra, cm, ds_dvm.real());
      }
      if (rm >= 0) {
        if (ca >= 0) trip.emplace_back(rm, ca, ds_dva.imag());
        if (cm >= 0) trip.emplace_back(rm, cm, ds_dvm.imag());
      }
    };
    for (Eigen::Index kk = 0; kk < ybus.outerSize(); ++kk) {
      for (YbusMatrix::InnerIterator it(ybus, kk); it; ++it) {
        const auto i = static_cast<std::size_t>(it.row());
        const auto k = static_cast<std::size_t>(it.col());
        if (pos_a[i] < 0 || pos_a[k] < 0) continue;
        const C yv = it.value() * v[k];
        add(i, k, C(0.0, -1.0) * v[i] * std::conj(yv), v[i] * std::conj(yv / vm[k]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_a[i] < 0) continue;
      add(i, i, C(0.0, 1.0) * v[i] * std::conj(current[i]), std::conj(current[i]) * v[i] / vm[i]);
    }
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    Eigen::VectorXd dx;
    try {
      solver.factorize(jac);
      dx = solver.solve(-mismatch);
    } catch (const SolverError& e) {
      throw SolverError(std::string("singular Jacobian at iteration ") + std::to_string(iter + 1) + ": " + e.what());
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_a[i] >= 0) va[i] += dx[pos_a[i]];
      if (pos_m[i] >= 0) vm[i] += dx[pos_m[i]];
    }
    ++iter;
    worst = eval_mismatch();
    ok = std::isfinite(worst) && worst < cfg.tol;
  }

  sol.converged = ok;
  sol.iterations = iter;
  sol.max_mismatch = worst;
  sol.vm = vm;
  sol.va = va;
  detail::fill_line_quantities(c, s, vm, va, sol, tau);
  return sol;
}

/// Largest absolute deviation between the AC injections implied by the
/// solution's voltages and the specified injections, over the non-slack
/// buses of the slack component (P everywhere, Q at PQ buses).
inline double verify_power_balance(const NetworkCase& c, const TopologyVector& tau, const PfSolution& sol,
                                   const Injections& inj) {
  using C = std::complex<double>;
  const auto net = apply_topology(c, tau);
  const auto s = detail::setup_buses(c, net, inj);
  const auto n = c.n_buses();
  if (sol.vm.size() != n || sol.va.size() != n) throw ShapeError("solution does not match case");
  const auto ybus = build_ybus(net);
  std::vector<C> v(n), current(n, C(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(sol.vm[i], sol.va[i]);
  for (Eigen::Index k = 0; k < ybus.outerSize(); ++k)
    for (YbusMatrix::InnerIterator it(ybus, k); it; ++it)
      current[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(it.col())];
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.active[i] || static_cast<int>(i) == s.slack) continue;
    const C si = v[i] * std::conj(current[i]);
    worst = std::max(worst, std::abs(si.real() - s.p_spec[i]));
    if (c.buses[i].kind == BusKind::PQ) worst = std::max(worst, std::abs(si.imag() - s.q_spec[i]));
  }
  return worst;
}

inline double verify_power_balance(const NetworkCase& c, const TopologyVector& tau, const PfSolution& sol) {
  return verify_power_balance(c, tau, sol, Injections::from_case(c));
}

}  // namespace mfpf
