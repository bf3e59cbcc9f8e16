#pragma once

// Grid data model: buses, switchable lines, fixed transformer branches,
// generators and loads, all in per-unit on the case MVA base.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "mfpf/error.hpp"

namespace mfpf {

enum class BusKind { Slack, PV, PQ };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double base_kv = 1.0;
  double vm_init = 1.0;  // pu
  double va_init = 0.0;  // rad
  bool operator==(const Bus&) const = default;
};

/// Switchable line. `id` is its position in the topology vector.
struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;  // total shunt susceptance
  double i_max = 0.0;
  bool operator==(const Line&) const = default;
};

/// Fixed branch that is always in service and not part of the topology
/// vector. Modelled with the same pi-equivalent as a line, tap ratio 1.
struct Transformer {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;
  double i_max = 0.0;
  bool operator==(const Transformer&) const = default;
};

struct Generator {
  int bus = 0;
  double p_set = 0.0;
  double v_set = 1.0;
  bool operator==(const Generator&) const = default;
};

struct Load {
  int bus = 0;
  double p_set = 0.0;
  double q_set = 0.0;
  bool operator==(const Load&) const = default;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Transformer> transformers;
  std::vector<Generator> generators;
  std::vector<Load> loads;

  std::size_t n_buses() const { return buses.size(); }
  std::size_t n_lines() const { return lines.size(); }

  int slack_bus() const {
    for (const auto& b : buses)
      if (b.kind == BusKind::Slack) return b.id;
    throw ValidationError("case '" + name + "' has no slack bus");
  }

  /// FNV-1a over the bus count and the ordered line endpoints. Datasets and
  /// model checkpoints record it so that they cannot be paired with a case
  /// whose topology vector means something else.
  std::uint64_t line_order_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(buses.size());
    for (const auto& l : lines) {
      mix(static_cast<std::uint64_t>(l.from_bus));
      mix(static_cast<std::uint64_t>(l.to_bus));
    }
    return h;
  }

  bool operator==(const NetworkCase&) const = default;
};

/// Per-line service status: 1 in service, 0 out of service.
class TopologyVector {
 public:
  TopologyVector() = default;
  explicit TopologyVector(std::vector<std::uint8_t> status) : status_(std::move(status)) {
    for (auto s : status_)
      if (s > 1) throw ValidationError("topology entries must be 0 or 1");
  }

  static TopologyVector all_in_service(std::size_t n_lines) {
    return TopologyVector(std::vector<std::uint8_t>(n_lines, 1));
  }

  static TopologyVector with_outages(std::size_t n_lines, std::initializer_list<int> out) {
    return with_outages(n_lines, std::vector<int>(out));
  }

  static TopologyVector with_outages(std::size_t n_lines, const std::vector<int>& out) {
    std::vector<std::uint8_t> s(n_lines, 1);
    for (int l : out) {
      if (l < 0 || static_cast<std::size_t>(l) >= n_lines)
        throw ValidationError("outage index " + std::to_string(l) + " out of range");
      s[static_cast<std::size_t>(l)] = 0;
    }
    return TopologyVector(std::move(s));
  }

  std::size_t size() const { return status_.size(); }
  bool in_service(std::size_t i) const { return status_[i] != 0; }
  std::uint8_t operator[](std::size_t i) const { return status_[i]; }
  const std::vector<std::uint8_t>& status() const { return status_; }

  std::vector<int> outages() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < status_.size(); ++i)
      if (!status_[i]) out.push_back(static_cast<int>(i));
    return out;
  }

  bool operator==(const TopologyVector&) const = default;
  auto operator<=>(const TopologyVector&) const = default;

 private:
  std::vector<std::uint8_t> status_;
};

/// In-service branch as seen by the solvers. `line` is the topology index,
/// or -1 for a transformer.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;
  double i_max = 0.0;
  int line = -1;
};

/// A case with a topology applied. Holds a pointer to the case, which must
/// outlive it.
struct EffectiveNetwork {
  const NetworkCase* source = nullptr;
  TopologyVector tau;
  std::vector<Branch> branches;  // in-service lines (file order), then transformers

  std::size_t n_buses() const { return source->n_buses(); }
  std::size_t n_in_service_lines() const {
    return static_cast<std::size_t>(
        std::count_if(branches.begin(), branches.end(), [](const Branch& b) { return b.line >= 0; }));
  }
};

inline EffectiveNetwork apply_topology(const NetworkCase& c, const TopologyVector& tau) {
  if (tau.size() != c.n_lines())
    throw ShapeError("topology length " + std::to_string(tau.size()) + " does not match " +
                     std::to_string(c.n_lines()) + " lines of case '" + c.name + "'");
  EffectiveNetwork net{&c, tau, {}};
  net.branches.reserve(c.lines.size() + c.transformers.size());
  for (const auto& l : c.lines)
    if (tau.in_service(static_cast<std::size_t>(l.id)))
      net.branches.push_back({l.from_bus, l.to_bus, l.r, l.x, l.b, l.i_max, l.id});
  for (const auto& t : c.transformers)
    net.branches.push_back({t.from_bus, t.to_bus, t.r, t.x, t.b, t.i_max, -1});
  return net;
}

/// Label each bus with the index of its connected component. Components are
/// numbered in order of their smallest bus id.
inline std::vector<int> component_labels(const EffectiveNetwork& net) {
  const auto n = net.n_buses();
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : net.branches) {
    adj[static_cast<std::size_t>(br.from_bus)].push_back(br.to_bus);
    adj[static_cast<std::size_t>(br.to_bus)].push_back(br.from_bus);
  }
  std::vector<int> label(n, -1);
  int next = 0;
  std::queue<int> q;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    label[s] = next;
    q.push(static_cast<int>(s));
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[static_cast<std::size_t>(u)]) {
        if (label[static_cast<std::size_t>(v)] < 0) {
          label[static_cast<std::size_t>(v)] = next;
          q.push(v);
        }
      }
    }
    ++next;
  }
  return label;
}

inline std::vector<std::vector<int>> connected_components(const EffectiveNetwork& net) {
  const auto label = component_labels(net);
  int n_comp = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::vector<int>> comps(static_cast<std::size_t>(n_comp));
  for (std::size_t i = 0; i < label.size(); ++i)
    comps[static_cast<std::size_t>(label[i])].push_back(static_cast<int>(i));
  return comps;
}

using YbusMatrix = Eigen::SparseMatrix<std::complex<double>>;

inline YbusMatrix build_ybus(const EffectiveNetwork& net) {
  using C = std::complex<double>;
  const auto n = static_cast<Eigen::Index>(net.n_buses());
  std::vector<Eigen::Triplet<C>> trip;
  trip.reserve(net.branches.size() * 4);
  for (const auto& br : net.branches) {
    const C ys = 1.0 / C(br.r, br.x);
    const C ysh(0.0, br.b / 2.0);
    trip.emplace_back(br.from_bus, br.from_bus, ys + ysh);
    trip.emplace_back(br.to_bus, br.to_bus, ys + ysh);
    trip.emplace_back(br.from_bus, br.to_bus, -ys);
    trip.emplace_back(br.to_bus, br.from_bus, -ys);
  }
  YbusMatrix y(n, n);
  y.setFromTriplets(trip.begin(), trip.end());
  y.makeCompressed();
  return y;
}

/// Check structural invariants. Throws ValidationError on the first problem.
inline void validate(const NetworkCase& c) {
  auto fail = [&c](const std::string& msg) {
    throw ValidationError("case '" + c.name + "': " + msg);
  };
  if (!(c.base_mva > 0)) fail("base_mva must be positive");
  if (c.buses.empty()) fail("no buses");
  const int nb = static_cast<int>(c.buses.size());
  auto check_bus = [&](int b, const std::string& what) {
    if (b < 0 || b >= nb) fail(what + " references unknown bus " + std::to_string(b));
  };
  int n_slack = 0;
  for (int i = 0; i < nb; ++i) {
    const auto& b = c.buses[static_cast<std::size_t>(i)];
    if (b.id != i) fail("bus ids must be contiguous from 0 (found " + std::to_string(b.id) + ")");
    if (!(b.vm_init > 0)) fail("bus " + std::to_string(i) + " has non-positive vm_init");
    if (!(b.base_kv > 0)) fail("bus " + std::to_string(i) + " has non-positive base_kv");
    if (b.kind == BusKind::Slack) ++n_slack;
  }
  if (n_slack != 1) fail("expected exactly one slack bus, found " + std::to_string(n_slack));
  for (std::size_t i = 0; i < c.lines.size(); ++i) {
    const auto& l = c.lines[i];
    const auto tag = "line " + std::to_string(i);
    if (l.id != static_cast<int>(i)) fail("line ids must be contiguous from 0");
    check_bus(l.from_bus, tag);
    check_bus(l.to_bus, tag);
    if (l.from_bus == l.to_bus) fail(tag + " connects a bus to itself");
    if (l.x == 0.0) fail(tag + " has zero reactance");
    if (!(l.i_max > 0)) fail(tag + " has non-positive rating");
  }
  for (std::size_t i = 0; i < c.transformers.size(); ++i) {
    const auto& t = c.transformers[i];
    const auto tag = "transformer " + std::to_string(i);
    check_bus(t.from_bus, tag);
    check_bus(t.to_bus, tag);
    if (t.from_bus == t.to_bus) fail(tag + " connects a bus to itself");
    if (t.x == 0.0) fail(tag + " has zero reactance");
    if (!(t.i_max > 0)) fail(tag + " has non-positive rating");
  }
  std::vector<int> gen_count(static_cast<std::size_t>(nb), 0);
  for (const auto& g : c.generators) {
    check_bus(g.bus, "generator");
    if (c.buses[static_cast<std::size_t>(g.bus)].kind == BusKind::PQ)
      fail("generator at PQ bus " + std::to_string(g.bus));
    if (!(g.v_set > 0)) fail("generator at bus " + std::to_string(g.bus) + " has v_set <= 0");
    ++gen_count[static_cast<std::size_t>(g.bus)];
  }
  for (int i = 0; i < nb; ++i) {
    const auto kind = c.buses[static_cast<std::size_t>(i)].kind;
    if (kind != BusKind::PQ && gen_count[static_cast<std::size_t>(i)] == 0)
      fail("voltage-controlled bus " + std::to_string(i) + " has no generator");
  }
  for (const auto& l : c.loads) check_bus(l.bus, "load");

  const auto net = apply_topology(c, TopologyVector::all_in_service(c.n_lines()));
  const auto label = component_labels(net);
  if (std::any_of(label.begin(), label.end(), [](int v) { return v != 0; }))
    fail("reference topology is not connected");
}

}  // namespace mfpf
