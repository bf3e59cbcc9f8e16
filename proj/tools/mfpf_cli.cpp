#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mfpf/bundled_cases.hpp"
#include "mfpf/eval.hpp"
#include "mfpf/run_config.hpp"
#include "mfpf/version.hpp"

namespace fs = std::filesystem;
using namespace mfpf;

namespace {

// Bad flags, bad config values or missing inputs: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::optional<std::string> case_name, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

struct ScenarioOptions {
  std::optional<int> k, n_low;
  std::optional<double> rho, omega;
  bool out_of_sample = false;
};

struct TrainOptions {
  std::optional<int> epochs, batch_size, width, depth, linear_width;
  std::optional<double> lr, lambda;
  std::optional<std::string> mode;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--case", o.case_name, "bundled case name (ieee14, ieee118) or case file path");
  app->add_option("--config", o.config, "JSON run config; flags override its fields")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "seed for every random stream");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

void add_scenario(CLI::App* app, ScenarioOptions& o) {
  app->add_option("--k", o.k, "lines out per contingency sample");
  app->add_option("--rho", o.rho, "probability of a k-outage sample");
  app->add_option("--omega", o.omega, "share of NR-labelled samples");
  app->add_option("--n-low", o.n_low, "number of DC-labelled samples");
  app->add_flag("--out-of-sample", o.out_of_sample, "hold out whole topology patterns for testing");
}

void add_train(CLI::App* app, TrainOptions& o) {
  app->add_option("--epochs", o.epochs);
  app->add_option("--batch-size", o.batch_size);
  app->add_option("--lr", o.lr, "Adam learning rate");
  app->add_option("--lambda", o.lambda, "L2 weight penalty");
  app->add_option("--mode", o.mode, "joint or two-stage")->check(CLI::IsMember({"joint", "two-stage"}));
  app->add_option("--width", o.width, "hidden width of the LEAP blocks");
  app->add_option("--depth", o.depth, "hidden layers of the encoder and decoder");
  app->add_option("--linear-width", o.linear_width, "width of the linear correction network");
}

RunConfig resolve_config(const CommonOptions& c, const ScenarioOptions* s = nullptr, const TrainOptions* t = nullptr) {
  try {
    RunConfig r = c.config ? load_run_config(*c.config) : RunConfig{};
    if (c.case_name) r.case_name = *c.case_name;
    if (c.seed) r.seed = *c.seed;
    if (c.out) r.out = *c.out;
    if (c.jobs) r.jobs = *c.jobs;
    r.apply_seed();
    if (s) {
      if (s->k) r.scenario.k = *s->k;
      if (s->rho) r.scenario.rho = *s->rho;
      if (s->omega) r.scenario.omega = *s->omega;
      if (s->n_low) r.scenario.n_low = *s->n_low;
      if (s->out_of_sample) r.scenario.out_of_sample_test = true;
    }
    if (t) {
      if (t->epochs) r.train.epochs = *t->epochs;
      if (t->batch_size) r.train.batch_size = *t->batch_size;
      if (t->lr) r.train.lr = *t->lr;
      if (t->lambda) r.train.lambda = *t->lambda;
      if (t->mode) r.train.mode = *t->mode == "joint" ? TrainMode::Joint : TrainMode::TwoStage;
      if (t->width) r.train.arch.width = *t->width;
      if (t->depth) r.train.arch.depth = *t->depth;
      if (t->linear_width) r.train.arch.linear_width = *t->linear_width;
    }
    r.check();
    return r;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

NetworkCase load_case(const std::string& name) {
  try {
    return resolve_case(name);
  } catch (const Error& e) {
    throw UsageError("case '" + name + "': " + e.what());
  }
}

Json provenance(const std::string& command, const RunConfig& r) {
  return {{"tool", kToolVersion}, {"command", command}, {"config", to_json(r)}};
}

std::string echo_lines(const Json& prov) { return "# " + std::string(kToolVersion) + "\n# " + prov.dump() + "\n"; }

fs::path prepare_out(const RunConfig& r) {
  fs::path dir(r.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + r.out + "': " + ec.message());
  return dir;
}

void write_config(const fs::path& dir, const RunConfig& r, const std::string& command) {
  Json j = to_json(r);
  j["tool"] = kToolVersion;
  write_text_file((dir / (command + "_config.json")).string(), j.dump(2) + "\n");
}

Dataset load_dataset_arg(const std::string& path) {
  try {
    return load_dataset(path);
  } catch (const Error& e) {
    throw UsageError("dataset '" + path + "': " + e.what());
  }
}

MfnnModel load_model_arg(const std::string& path) {
  try {
    return load_model(path);
  } catch (const Error& e) {
    throw UsageError("model '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

int cmd_solve(const CommonOptions& co, const std::string& method, const std::vector<int>& outages, double load_scale) {
  const RunConfig r = resolve_config(co);
  const auto c = load_case(r.case_name);
  TopologyVector tau;
  try {
    tau = TopologyVector::with_outages(c.n_lines(), outages);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!(load_scale > 0)) throw UsageError("--load-scale must be positive");
  const auto inj = Injections::from_case(c).scaled(load_scale);
  const auto sol = method == "nr" ? solve_nr(c, tau, inj, r.scenario.nr) : solve_dc(c, tau, inj);
  const auto scale = physical_scale(c);
  const auto n = c.n_lines();

  std::ostringstream os;
  os << "case " << c.name << ", method " << method << ", outages:";
  if (outages.empty()) os << " none";
  for (int l : outages) os << " " << l;
  os << "\n"
     << (sol.converged ? "converged" : "NOT converged") << " in " << sol.iterations << " iteration(s), max mismatch "
     << std::scientific << std::setprecision(3) << sol.max_mismatch << " pu\n"
     << std::defaultfloat;
  os << std::setw(5) << "line" << std::setw(6) << "from" << std::setw(6) << "to" << std::setw(8) << "status"
     << std::setw(14) << "p_li [MW]" << std::setw(14) << "i_li [kA]" << std::setw(12) << "v_li [pu]" << std::setw(14)
     << "theta_li [%]" << "\n";
  for (std::size_t l = 0; l < n; ++l) {
    os << std::setw(5) << l << std::setw(6) << c.lines[l].from_bus << std::setw(6) << c.lines[l].to_bus << std::setw(8)
       << (tau[l] ? "in" : "out") << std::fixed << std::setprecision(4) << std::setw(14) << sol.p_li[l] * scale[l]
       << std::setw(14) << sol.i_li[l] * scale[n + l] << std::setw(12) << sol.v_li[l] << std::setw(14)
       << sol.theta_li[l] * 100.0 << std::defaultfloat << "\n";
  }
  std::cout << os.str();
  if (co.out) {
    const auto dir = prepare_out(r);
    Json j = provenance("solve", r);
    j["method"] = method;
    j["outages"] = outages;
    j["load_scale"] = load_scale;
    j["converged"] = sol.converged;
    j["iterations"] = sol.iterations;
    j["max_mismatch"] = sol.max_mismatch;
    j["vm"] = sol.vm;
    j["va"] = sol.va;
    j["p_li"] = sol.p_li;
    j["i_li"] = sol.i_li;
    j["v_li"] = sol.v_li;
    j["theta_li"] = sol.theta_li;
    write_text_file((dir / "solution.json").string(), j.dump(1) + "\n");
  }
  if (!sol.converged) {
    std::cerr << "error: power flow did not converge\n";
    return 1;
  }
  return 0;
}

int cmd_gen_data(const CommonOptions& co, const ScenarioOptions& so, bool csv) {
  const RunConfig r = resolve_config(co, &so);
  const auto c = load_case(r.case_name);
  const Dataset ds = generate_dataset(c, r.scenario, r.jobs);
  const auto dir = prepare_out(r);
  write_config(dir, r, "gen-data");
  const Json prov = provenance("gen-data", r);
  save_dataset(ds, (dir / "dataset.mfpf").string(), prov);
  if (csv) write_text_file((dir / "dataset.csv").string(), echo_lines(prov) + dataset_csv(ds));
  std::cout << "generated " << ds.scenarios.size() << " scenarios (" << ds.n_high() << " NR-labelled; split "
            << ds.split.train.size() << "/" << ds.split.val.size() << "/" << ds.split.test.size() << ") -> "
            << (dir / "dataset.mfpf").string() << "\n";
  return 0;
}

int cmd_train(const CommonOptions& co, const TrainOptions& to, const std::string& data) {
  const Dataset ds = load_dataset_arg(data);
  CommonOptions with_case = co;
  if (!with_case.case_name) with_case.case_name = ds.case_name;
  RunConfig r = resolve_config(with_case, nullptr, &to);
  r.scenario = ds.cfg;
  const auto result = train(ds, r.train);
  const auto dir = prepare_out(r);
  write_config(dir, r, "train");
  Json prov = provenance("train", r);
  prov["dataset"] = {{"case", ds.case_name}, {"case_hash", ds.case_hash}, {"n_scenarios", ds.scenarios.size()}};
  save_model(result.model, (dir / "model.mfpf").string(), prov);

  std::ostringstream log;
  log << echo_lines(prov) << "epoch,train_loss,val_loss,alpha_L,alpha_1,alpha_2\n" << std::setprecision(17);
  for (const auto& e : result.log)
    log << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.alpha_L << "," << e.alpha_1 << ","
        << e.alpha_2 << "\n";
  write_text_file((dir / "train_log.csv").string(), log.str());

  const auto& last = result.log.empty() ? EpochLog{} : result.log.back();
  std::cout << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch << ", final train loss "
            << last.train_loss << ", val loss " << last.val_loss << " -> " << (dir / "model.mfpf").string() << "\n";
  return 0;
}

int cmd_eval(const CommonOptions& co, const std::string& data, const std::string& model_path, bool scatter) {
  const Dataset ds = load_dataset_arg(data);
  const MfnnModel model = load_model_arg(model_path);
  CommonOptions with_case = co;
  if (!with_case.case_name) with_case.case_name = ds.case_name;
  RunConfig r = resolve_config(with_case);
  r.scenario = ds.cfg;
  const auto c = load_case(r.case_name);
  if (model.case_hash != ds.case_hash) throw UsageError("model and dataset were built for different cases");
  if (c.line_order_hash() != ds.case_hash) throw UsageError("dataset does not belong to case '" + r.case_name + "'");
  auto rep = evaluate(model, ds, c);
  const Json prov = provenance("eval", r);
  rep.config = prov;
  const auto dir = prepare_out(r);
  write_config(dir, r, "eval");
  write_text_file((dir / "eval_report.json").string(), rep.to_json().dump(2) + "\n");
  write_text_file((dir / "eval_report.txt").string(), echo_lines(prov) + rep.table());
  if (scatter) write_text_file((dir / "scatter.csv").string(), echo_lines(prov) + scatter_csv(model, ds, c));
  std::cout << rep.table();
  return 0;
}

int cmd_sweep(const CommonOptions& co, const ScenarioOptions& so, const TrainOptions& to,
              const std::optional<std::string>& param, const std::optional<std::vector<double>>& values,
              const std::optional<int>& replicates) {
  RunConfig r = resolve_config(co, &so, &to);
  if (param) r.eval.sweep_param = *param;
  if (values) r.eval.sweep_values = *values;
  if (replicates) r.eval.replicates = *replicates;
  try {
    r.check();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (r.eval.sweep_values.empty()) throw UsageError("no sweep values given");
  const auto c = load_case(r.case_name);
  SweepConfig sc;
  sc.param = r.eval.sweep_param == "rho" ? SweepParam::Rho : SweepParam::Omega;
  sc.values = r.eval.sweep_values;
  sc.replicates = r.eval.replicates;
  sc.seed = r.seed;
  sc.scenario = r.scenario;
  sc.train = r.train;
  sc.test_size = r.eval.test_size;
  SweepResult res;
  try {
    res = sc.param == SweepParam::Rho ? sweep_rho(c, sc, r.jobs) : sweep_omega(c, sc, r.jobs);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  const auto dir = prepare_out(r);
  write_config(dir, r, "sweep");
  const Json prov = provenance("sweep", r);
  const std::string stem = "sweep_" + r.eval.sweep_param;
  write_text_file((dir / (stem + ".csv")).string(), echo_lines(prov) + res.csv());
  write_text_file((dir / (stem + ".txt")).string(), echo_lines(prov) + res.table());
  std::cout << res.table();
  std::size_t failed = 0;
  for (const auto& cell : res.cells) failed += !cell.ok;
  return failed == res.cells.size() ? 1 : 0;
}

int cmd_bench(const CommonOptions& co, const std::optional<std::string>& model_path, const std::optional<int>& n,
              const std::optional<int>& k, const std::optional<int>& reps, const std::optional<int>& batch) {
  RunConfig r = resolve_config(co);
  if (n) r.eval.bench_scenarios = *n;
  if (k) r.eval.bench_k = *k;
  if (reps) r.eval.bench_repetitions = *reps;
  if (batch) r.eval.bench_batch = *batch;
  try {
    r.check();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::optional<MfnnModel> model;
  if (model_path) model = load_model_arg(*model_path);
  const auto c = load_case(r.case_name);
  if (model && model->case_hash != c.line_order_hash())
    throw UsageError("model was trained for a different case than '" + r.case_name + "'");

  ScenarioConfig wc = r.scenario;
  wc.k = r.eval.bench_k;
  wc.rho = 1.0;
  wc.n_low = r.eval.bench_scenarios;
  wc.omega = 1.0;
  wc.seed = derive_seed(r.seed, 0, "bench");
  const Dataset ds = generate_dataset(c, wc, r.jobs);
  std::vector<int> idx(ds.scenarios.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto rep = bench_loadflow(c, ds, idx, model ? &*model : nullptr, r.eval.bench_repetitions,
                                  r.eval.bench_batch, r.scenario.nr);
  const auto dir = prepare_out(r);
  write_config(dir, r, "bench");
  const Json prov = provenance("bench", r);
  Json j = rep.to_json();
  j["config"] = prov;
  write_text_file((dir / "bench_report.json").string(), j.dump(2) + "\n");
  std::ostringstream ratios;
  const auto& nr = rep.get("NR");
  const auto& dc = rep.get("DC");
  ratios << std::setprecision(4) << "NR/DC median ratio " << nr.median_s / dc.median_s << "\n";
  if (model) {
    const auto& mf = rep.get("MFNN");
    ratios << "NR/MFNN median ratio " << nr.median_s / mf.median_s << ", DC/MFNN median ratio "
           << dc.median_s / mf.median_s << "\n";
  } else {
    ratios << "no --model given: MFNN not timed\n";
  }
  write_text_file((dir / "bench_report.txt").string(), echo_lines(prov) + rep.table() + ratios.str());
  std::cout << rep.table() << ratios.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity power flow toolkit: DC/NR scenario generation, MFNN training and evaluation"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOptions co;
  ScenarioOptions so;
  TrainOptions to;

  auto* solve = app.add_subcommand("solve", "run one power flow and print the per-line table");
  std::string method = "nr";
  std::vector<int> outages;
  double load_scale = 1.0;
  add_common(solve, co);
  solve->add_option("--method", method, "nr or dc")->check(CLI::IsMember({"nr", "dc"}));
  solve->add_option("--outage", outages, "line id(s) taken out of service")->delimiter(',');
  solve->add_option("--load-scale", load_scale, "multiplier on all P/Q setpoints");

  auto* gen = app.add_subcommand("gen-data", "generate a multi-fidelity contingency dataset");
  bool csv = false;
  add_common(gen, co);
  add_scenario(gen, so);
  gen->add_flag("--csv", csv, "also write a flat CSV view");

  auto* tr = app.add_subcommand("train", "train an MFNN on a dataset");
  std::string data;
  add_common(tr, co);
  add_train(tr, to);
  tr->add_option("--data", data, "dataset file from gen-data")->required()->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "score DC and MFNN against NR on the test split");
  std::string model_path;
  bool scatter = false;
  add_common(ev, co);
  ev->add_option("--data", data, "dataset file from gen-data")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", model_path, "checkpoint from train")->required()->check(CLI::ExistingFile);
  ev->add_flag("--scatter", scatter, "also export per-line scatter data");

  auto* sw = app.add_subcommand("sweep", "retrain and evaluate across rho or omega values");
  std::optional<std::string> param;
  std::optional<std::vector<double>> values;
  std::optional<int> replicates;
  add_common(sw, co);
  add_scenario(sw, so);
  add_train(sw, to);
  sw->add_option("--param", param, "rho or omega")->check(CLI::IsMember({"rho", "omega"}));
  sw->add_option("--values", values, "comma-separated values")->delimiter(',');
  sw->add_option("--replicates", replicates, "seeds per value");

  auto* be = app.add_subcommand("bench", "time NR, DC and MFNN inference on a k-outage workload");
  std::optional<std::string> bench_model;
  std::optional<int> n_scen, bench_k, reps, batch;
  add_common(be, co);
  be->add_option("--model", bench_model, "checkpoint to time")->check(CLI::ExistingFile);
  be->add_option("--n-scenarios", n_scen);
  be->add_option("--k", bench_k, "lines out per workload scenario");
  be->add_option("--repetitions", reps);
  be->add_option("--batch", batch, "MFNN inference batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*solve) return cmd_solve(co, method, outages, load_scale);
    if (*gen) return cmd_gen_data(co, so, csv);
    if (*tr) return cmd_train(co, to, data);
    if (*ev) return cmd_eval(co, data, model_path, scatter);
    if (*sw) return cmd_sweep(co, so, to, param, values, replicates);
    if (*be) return cmd_bench(co, bench_model, n_scen, bench_k, reps, batch);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
