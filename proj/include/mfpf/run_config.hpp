#pragma once

// Reproducible run description shared by every CLI subcommand. A config file
// is this JSON document; command-line flags override its fields.

#include <string>
#include <vector>

#include "mfpf/dataset_io.hpp"
#include "mfpf/eval.hpp"
#include "mfpf/mfnn.hpp"
#include "mfpf/scenario.hpp"

namespace mfpf {

struct EvalConfig {
  std::string sweep_param = "omega";
  std::vector<double> sweep_values = {0.05, 0.1, 0.3, 0.5, 0.9};
  int replicates = 3;
  int test_size = 200;
  int bench_scenarios = 500;
  int bench_k = 2;
  int bench_repetitions = 5;
  int bench_batch = 256;

  void check() const {
    if (sweep_param != "rho" && sweep_param != "omega") throw ValidationError("sweep_param must be 'rho' or 'omega'");
    if (replicates < 1) throw ValidationError("replicates must be >= 1");
    if (test_size < 1) throw ValidationError("test_size must be >= 1");
    if (bench_scenarios < 1) throw ValidationError("bench_scenarios must be >= 1");
    if (bench_k < 0) throw ValidationError("bench_k must be >= 0");
    if (bench_repetitions < 5) throw ValidationError("bench_repetitions must be >= 5");
    if (bench_batch < 1) throw ValidationError("bench_batch must be >= 1");
  }
};

struct RunConfig {
  std::string case_name = "ieee14";
  std::uint64_t seed = 1;
  std::string out = "mfpf-out";
  int jobs = 1;
  ScenarioConfig scenario{};
  TrainConfig train{};
  EvalConfig eval{};

  /// The top-level seed drives every random stream.
  void apply_seed() {
    scenario.seed = seed;
    train.seed = seed;
  }

  void check() const {
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
    scenario.check();
    train.check();
    eval.check();
  }
};

inline Json to_json(const EvalConfig& e) {
  return {{"sweep_param", e.sweep_param},   {"sweep_values", e.sweep_values},
          {"replicates", e.replicates},     {"test_size", e.test_size},
          {"bench_scenarios", e.bench_scenarios}, {"bench_k", e.bench_k},
          {"bench_repetitions", e.bench_repetitions}, {"bench_batch", e.bench_batch}};
}

inline EvalConfig eval_config_from_json(const Json& j, EvalConfig e = {}) {
  if (!j.is_object()) throw ValidationError("eval config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "sweep_param") e.sweep_param = v.get<std::string>();
      else if (key == "sweep_values") e.sweep_values = v.get<std::vector<double>>();
      else if (key == "replicates") e.replicates = v.get<int>();
      else if (key == "test_size") e.test_size = v.get<int>();
      else if (key == "bench_scenarios") e.bench_scenarios = v.get<int>();
      else if (key == "bench_k") e.bench_k = v.get<int>();
      else if (key == "bench_repetitions") e.bench_repetitions = v.get<int>();
      else if (key == "bench_batch") e.bench_batch = v.get<int>();
      else throw ValidationError("unknown eval config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("eval config: ") + ex.what());
  }
  return e;
}

/// Echo embedded in artifacts. Execution-only fields (output directory,
/// worker count) are left out because they never change results.
inline Json to_json(const RunConfig& r) {
  return {{"case", r.case_name},          {"seed", r.seed},           {"scenario", to_json(r.scenario)},
          {"train", to_json(r.train)}, {"eval", to_json(r.eval)}};
}

inline RunConfig run_config_from_json(const Json& j, RunConfig r = {}) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "case") r.case_name = v.get<std::string>();
      else if (key == "seed") r.seed = v.get<std::uint64_t>();
      else if (key == "out") r.out = v.get<std::string>();
      else if (key == "jobs") r.jobs = v.get<int>();
      else if (key == "scenario") r.scenario = scenario_config_from_json(v, r.scenario);
      else if (key == "train") r.train = train_config_from_json(v, r.train);
      else if (key == "eval") r.eval = eval_config_from_json(v, r.eval);
      else throw ValidationError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("config: ") + ex.what());
  }
  return r;
}

inline RunConfig load_run_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + ex.what());
  }
  return run_config_from_json(j);
}

}  // namespace mfpf
