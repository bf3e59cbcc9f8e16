#pragma once

// Dataset file (`mfpf-data v1`):
//
//   mfpf-data v1
//   {"case": ..., "case_hash": ..., "config": {...}, "norm": {...}, "split": {...}, ...}
//   <column name> <value for scenario 0> <value for scenario 1> ...
//
// One line per column. Absent labels are written as `nan` and flagged by the
// has_low / has_high / has_truth columns. Numbers use the shortest
// round-trip representation, so a save/load cycle is exact.

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfpf/case_io.hpp"
#include "mfpf/error.hpp"
#include "mfpf/scenario.hpp"
#include "mfpf/version.hpp"

namespace mfpf {

using Json = nlohmann::ordered_json;

inline Json to_json(const NrConfig& c) {
  return {{"tol", c.tol}, {"max_iter", c.max_iter}, {"init", c.init == NrInit::Flat ? "flat" : "dc"}};
}

inline NrConfig nr_config_from_json(const Json& j, NrConfig c = {}) {
  if (j.contains("tol")) c.tol = j.at("tol").get<double>();
  if (j.contains("max_iter")) c.max_iter = j.at("max_iter").get<int>();
  if (j.contains("init")) {
    const auto s = j.at("init").get<std::string>();
    if (s == "flat")
      c.init = NrInit::Flat;
    else if (s == "dc")
      c.init = NrInit::DcWarmStart;
    else
      throw ValidationError("unknown NR init '" + s + "'");
  }
  return c;
}

inline Json to_json(const ScenarioConfig& c) {
  return {{"k", c.k},
          {"rho", c.rho},
          {"sigma_pg", c.sigma_pg},
          {"sigma_vg", c.sigma_vg},
          {"sigma_pl", c.sigma_pl},
          {"sigma_ql", c.sigma_ql},
          {"n_low", c.n_low},
          {"omega", c.omega},
          {"seed", c.seed},
          {"max_retries", c.max_retries},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"out_of_sample_test", c.out_of_sample_test},
          {"nr", to_json(c.nr)}};
}

/// Fields missing from `j` keep the values of `c`; unknown keys are rejected.
inline ScenarioConfig scenario_config_from_json(const Json& j, ScenarioConfig c = {}) {
  for (const auto& [key, v] : j.items()) {
    if (key == "k") c.k = v.get<int>();
    else if (key == "rho") c.rho = v.get<double>();
    else if (key == "sigma_pg") c.sigma_pg = v.get<double>();
    else if (key == "sigma_vg") c.sigma_vg = v.get<double>();
    else if (key == "sigma_pl") c.sigma_pl = v.get<double>();
    else if (key == "sigma_ql") c.sigma_ql = v.get<double>();
    else if (key == "n_low") c.n_low = v.get<int>();
    else if (key == "omega") c.omega = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "max_retries") c.max_retries = v.get<int>();
    else if (key == "train_fraction") c.train_fraction = v.get<double>();
    else if (key == "val_fraction") c.val_fraction = v.get<double>();
    else if (key == "out_of_sample_test") c.out_of_sample_test = v.get<bool>();
    else if (key == "nr") c.nr = nr_config_from_json(v, c.nr);
    else throw ValidationError("unknown scenario config key '" + key + "'");
  }
  return c;
}

inline Json to_json(const NormStats& n) {
  return {{"x_mean", n.x_mean}, {"x_std", n.x_std}, {"y_mean", n.y_mean}, {"y_std", n.y_std}};
}

inline NormStats norm_from_json(const Json& j) {
  NormStats n;
  j.at("x_mean").get_to(n.x_mean);
  j.at("x_std").get_to(n.x_std);
  j.at("y_mean").get_to(n.y_mean);
  j.at("y_std").get_to(n.y_std);
  return n;
}

namespace detail {

inline void put_number(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

inline double get_number(std::string_view tok, std::size_t line) {
  if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(line, "", "bad number '" + std::string(tok) + "'");
  return v;
}

}  // namespace detail

/// Serialize a dataset. `provenance` is embedded verbatim in the header
/// (the CLI passes its run config there).
inline std::string serialize_dataset(const Dataset& ds, const Json& provenance = Json::object()) {
  const std::size_t n = ds.scenarios.size();
  const std::size_t nx = ds.n_features(), ny = ds.n_targets();
  Json h;
  h["tool"] = kToolVersion;
  h["case"] = ds.case_name;
  h["case_hash"] = ds.case_hash;
  h["n_lines"] = ds.n_lines;
  h["n_scenarios"] = n;
  h["n_features"] = nx;
  h["normalized"] = ds.normalized;
  h["scenario_config"] = to_json(ds.cfg);
  h["norm"] = to_json(ds.norm);
  h["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
  h["provenance"] = provenance;

  std::string out = "mfpf-data v1\n";
  out += h.dump();
  out += '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto column = [&](const std::string& name, auto&& value) {
    out += name;
    for (std::size_t i = 0; i < n; ++i) {
      out += ' ';
      detail::put_number(out, value(ds.scenarios[i]));
    }
    out += '\n';
  };
  for (std::size_t j = 0; j < nx; ++j) column("x" + std::to_string(j), [j](const Scenario& s) { return s.x[j]; });
  for (std::size_t l = 0; l < ds.n_lines; ++l)
    column("tau" + std::to_string(l), [l](const Scenario& s) { return double(s.tau[l]); });
  using Field = std::optional<std::vector<double>> Scenario::*;
  const std::pair<const char*, Field> labels[] = {
      {"low", &Scenario::y_low}, {"high", &Scenario::y_high}, {"truth", &Scenario::y_truth}};
  for (const auto& [tag, field] : labels) {
    column(std::string("has_") + tag, [field = field](const Scenario& s) { return (s.*field) ? 1.0 : 0.0; });
    for (std::size_t j = 0; j < ny; ++j)
      column(std::string("y_") + tag + std::to_string(j),
             [field = field, j, nan](const Scenario& s) { return (s.*field) ? (*(s.*field))[j] : nan; });
  }
  return out;
}

inline Dataset parse_dataset(std::string_view text, Json* provenance = nullptr) {
  std::size_t pos = 0, lineno = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= text.size()) throw ParseError(lineno + 1, "", "unexpected end of dataset");
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    return line;
  };
  if (detail::trim(next_line()) != "mfpf-data v1") throw ParseError(1, "", "expected header 'mfpf-data v1'");
  Json h;
  try {
    h = Json::parse(next_line());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(2, "header", e.what());
  }
  Dataset ds;
  std::size_t n = 0, nx = 0;
  try {
    ds.case_name = h.at("case").get<std::string>();
    ds.case_hash = h.at("case_hash").get<std::uint64_t>();
    ds.n_lines = h.at("n_lines").get<std::size_t>();
    n = h.at("n_scenarios").get<std::size_t>();
    nx = h.at("n_features").get<std::size_t>();
    ds.normalized = h.at("normalized").get<bool>();
    ds.cfg = scenario_config_from_json(h.at("scenario_config"));
    ds.norm = norm_from_json(h.at("norm"));
    h.at("split").at("train").get_to(ds.split.train);
    h.at("split").at("val").get_to(ds.split.val);
    h.at("split").at("test").get_to(ds.split.test);
    if (provenance) *provenance = h.value("provenance", Json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(2, "header", e.what());
  }
  const std::size_t ny = 4 * ds.n_lines;
  auto read_column = [&](const std::string& name) {
    const auto line = next_line();
    const auto toks = detail::split_ws(line);
    if (toks.empty() || toks[0] != name) throw ParseError(lineno, name, "expected column '" + name + "'");
    if (toks.size() != n + 1) throw ParseError(lineno, name, "column has wrong length");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = detail::get_number(toks[i + 1], lineno);
    return v;
  };
  ds.scenarios.assign(n, Scenario{});
  for (auto& s : ds.scenarios) s.x.resize(nx);
  for (std::size_t j = 0; j < nx; ++j) {
    const auto col = read_column("x" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) ds.scenarios[i].x[j] = col[i];
  }
  std::vector<std::vector<std::uint8_t>> tau(n, std::vector<std::uint8_t>(ds.n_lines));
  for (std::size_t l = 0; l < ds.n_lines; ++l) {
    const auto col = read_column("tau" + std::to_string(l));
    for (std::size_t i = 0; i < n; ++i) {
      if (col[i] != 0.0 && col[i] != 1.0) throw ParseError(lineno, "tau", "topology entries must be 0 or 1");
      tau[i][l] = static_cast<std::uint8_t>(col[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) ds.scenarios[i].tau = TopologyVector(std::move(tau[i]));
  using Field = std::optional<std::vector<double>> Scenario::*;
  const std::pair<const char*, Field> labels[] = {
      {"low", &Scenario::y_low}, {"high", &Scenario::y_high}, {"truth", &Scenario::y_truth}};
  for (const auto& [tag, field] : labels) {
    const auto has = read_column(std::string("has_") + tag);
    for (std::size_t i = 0; i < n; ++i)
      if (has[i] != 0.0) (ds.scenarios[i].*field).emplace(ny);
    for (std::size_t j = 0; j < ny; ++j) {
      const auto col = read_column(std::string("y_") + tag + std::to_string(j));
      for (std::size_t i = 0; i < n; ++i)
        if (auto& y = ds.scenarios[i].*field) (*y)[j] = col[i];
    }
  }
  return ds;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

inline void save_dataset(const Dataset& ds, const std::string& path, const Json& provenance = Json::object()) {
  write_text_file(path, serialize_dataset(ds, provenance));
}

inline Dataset load_dataset(const std::string& path, Json* provenance = nullptr) {
  return parse_dataset(read_text_file(path), provenance);
}

/// Flat CSV view: one row per scenario with split membership, features,
/// topology and every present label.
inline std::string dataset_csv(const Dataset& ds) {
  std::vector<std::string> split_of(ds.scenarios.size(), "");
  for (int i : ds.split.train) split_of[static_cast<std::size_t>(i)] = "train";
  for (int i : ds.split.val) split_of[static_cast<std::size_t>(i)] = "val";
  for (int i : ds.split.test) split_of[static_cast<std::size_t>(i)] = "test";
  const auto nx = ds.n_features(), ny = ds.n_targets();
  std::string out = "scenario,split";
  for (std::size_t j = 0; j < nx; ++j) out += ",x" + std::to_string(j);
  for (std::size_t l = 0; l < ds.n_lines; ++l) out += ",tau" + std::to_string(l);
  for (const char* tag : {"low", "high", "truth"})
    for (std::size_t j = 0; j < ny; ++j) out += std::string(",y_") + tag + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < ds.scenarios.size(); ++i) {
    const auto& s = ds.scenarios[i];
    out += std::to_string(i) + "," + split_of[i];
    for (double v : s.x) {
      out += ',';
      detail::put_number(out, v);
    }
    for (std::size_t l = 0; l < ds.n_lines; ++l) out += s.tau[l] ? ",1" : ",0";
    for (const auto* y : {&s.y_low, &s.y_high, &s.y_truth})
      for (std::size_t j = 0; j < ny; ++j) {
        out += ',';
        if (*y) detail::put_number(out, (**y)[j]);
      }
    out += '\n';
  }
  return out;
}

}  // namespace mfpf
