#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "feonet/checkpoint.hpp"
#include "feonet/error.hpp"
#include "feonet/experiments.hpp"
#include "feonet/mesh.hpp"

namespace fs = std::filesystem;
using namespace feonet;

namespace {

// one flag per config key, underscores spelled as dashes
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file; flags override it")->check(CLI::ExistingFile);
    for (const std::string& key : TrainConfig::keys()) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; },
                                            "config key " + key);
    }
  }

  TrainConfig build(bool full, int threads) const {
    TrainConfig cfg;
    if (full) cfg.epochs = 10000;
    cfg.threads = threads;
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    for (const auto& [k, v] : values) cfg.set(k, v);
    return cfg;
  }
};

struct Output {
  std::string path;
  std::ofstream file;

  std::ostream& stream() {
    if (path.empty()) return std::cout;
    if (!file.is_open()) {
      if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
      file.open(path);
      if (!file) throw Error(ErrorCode::io, "cannot write " + path);
    }
    return file;
  }
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_json(std::ostream& out, const ConfigEcho& config, nlohmann::json body) {
  nlohmann::json j;
  j["header"] = json_header(config);
  j["result"] = std::move(body);
  out << j.dump(2) << "\n";
}

Checkpoint to_checkpoint(const RunResult& r) {
  Checkpoint ck;
  ck.net = r.state.net;
  ck.input_scale = r.state.input_scale;
  ck.meta = r.config.to_map();
  ck.meta["code_hash"] = code_hash();
  return ck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse finite element operator networks"};
  app.require_subcommand(1);
  int threads = 1;
  bool full = false;
  app.add_option("--threads", threads, "worker threads for linear algebra")->check(CLI::PositiveNumber);
  app.add_flag("--full", full, "use the full-size protocol instead of desk defaults");

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "generate or check meshes");
  mesh_cmd->require_subcommand(1);
  auto* mesh_gen = mesh_cmd->add_subcommand("gen", "write a structured mesh");
  std::string gen_shape = "square", gen_out;
  int gen_n = 16;
  double gen_a = -1.0, gen_b = 1.0;
  mesh_gen->add_option("--shape", gen_shape, "square or interval")->check(CLI::IsMember({"square", "interval"}));
  mesh_gen->add_option("-n,--n", gen_n, "cells per axis")->check(CLI::PositiveNumber);
  mesh_gen->add_option("--a", gen_a, "domain lower bound");
  mesh_gen->add_option("--b", gen_b, "domain upper bound");
  mesh_gen->add_option("-o,--out", gen_out, "output file (stdout if omitted)");
  auto* mesh_check = mesh_cmd->add_subcommand("check", "validate a mesh file and print its statistics");
  std::string check_path;
  mesh_check->add_option("file", check_path)->required();

  // table1
  auto* table_cmd = app.add_subcommand("table1", "recompute the FC-vs-sparse weight count table");
  Output table_out;
  table_cmd->add_option("-o,--out", table_out.path, "CSV output");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a network and write checkpoint, history and metrics");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_dir = "run";
  bool train_h1 = false;
  train_cmd->add_option("--out-dir", train_dir, "output directory");
  train_cmd->add_flag("--h1", train_h1, "also report the H1 seminorm error against a 4x finer solve");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a fresh test set");
  std::string eval_ckpt;
  std::optional<std::uint64_t> eval_seed;
  std::optional<int> eval_samples;
  std::optional<std::string> eval_family;
  std::optional<int> eval_n;
  bool eval_h1 = false;
  Output eval_out;
  eval_cmd->add_option("checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--seed", eval_seed, "test seed (defaults to the training seed)");
  eval_cmd->add_option("--samples-test", eval_samples);
  eval_cmd->add_option("--family", eval_family, "refuse unless it matches the checkpoint");
  eval_cmd->add_option("--n", eval_n, "refuse unless it matches the checkpoint");
  eval_cmd->add_flag("--h1", eval_h1);
  eval_cmd->add_option("-o,--out", eval_out.path, "JSON output");

  // stability
  auto* stab_cmd = app.add_subcommand("stability", "empirical sensitivity against the spectral-norm bound");
  StabilityConfig stab;
  std::string stab_ns = "16,32,64";
  std::string stab_act = "swish";
  Output stab_out;
  stab_cmd->add_option("--n-values", stab_ns, "comma separated cells per axis");
  stab_cmd->add_option("--c-level", stab.c_level, "0 dense");
  stab_cmd->add_option("--layers", stab.layers);
  stab_cmd->add_option("--activation", stab_act);
  stab_cmd->add_option("--trials", stab.trials);
  stab_cmd->add_option("--noise-fraction", stab.noise_fraction);
  stab_cmd->add_option("--sigma", stab.sigma, "Gaussian weight standard deviation");
  stab_cmd->add_option("--seed", stab.seed);
  stab_cmd->add_option("--checkpoint", stab.checkpoint, "measure a trained network instead")->check(CLI::ExistingFile);
  stab_cmd->add_option("-o,--out", stab_out.path, "CSV output");

  // uat
  auto* uat_cmd = app.add_subcommand("uat", "constructive G-sparse realization of a linear map");
  UatConfig uat;
  Output uat_out;
  uat_cmd->add_option("--n", uat.n, "cells per axis");
  uat_cmd->add_option("--matrix", uat.matrix)->check(CLI::IsMember({"inverse", "stiffness", "identity", "random"}));
  uat_cmd->add_option("--box-radius", uat.box_radius, "0 uses max |F| of the samples");
  uat_cmd->add_option("--samples", uat.samples);
  uat_cmd->add_option("--activation", uat.activation)->check(CLI::IsMember({"relu", "sigmoid", "swish"}));
  uat_cmd->add_option("--t0", uat.t0);
  uat_cmd->add_option("--epsilon", uat.epsilon);
  uat_cmd->add_option("--seed", uat.seed);
  uat_cmd->add_option("-o,--out", uat_out.path, "JSON output");

  // compare-random
  auto* cmp_cmd = app.add_subcommand("compare-random", "FEM pattern against nnz-matched random patterns");
  ConfigFlags cmp_flags;
  cmp_flags.attach(cmp_cmd);
  int cmp_seeds = 10;
  Output cmp_out;
  cmp_cmd->add_option("--seeds", cmp_seeds, "number of random patterns")->check(CLI::PositiveNumber);
  cmp_cmd->add_option("-o,--out", cmp_out.path, "CSV output");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "train once per value of one config key");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep_cmd);
  std::string sweep_key, sweep_values;
  Output sweep_out;
  sweep_cmd->add_option("--key", sweep_key)->required();
  sweep_cmd->add_option("--values", sweep_values, "comma separated")->required();
  sweep_cmd->add_option("-o,--out", sweep_out.path, "CSV output");

  CLI11_PARSE(app, argc, argv);
  Eigen::setNbThreads(threads);

  try {
    if (mesh_gen->parsed()) {
      const Mesh m = gen_shape == "square" ? build_square(gen_n, gen_a, gen_b) : build_interval(gen_n, gen_a, gen_b);
      if (gen_out.empty()) write_mesh(std::cout, m);
      else save_mesh(gen_out, m);
    } else if (mesh_check->parsed()) {
      const Mesh m = load_mesh(check_path);
      validate_mesh(m);
      const MeshQuality q = mesh_quality(m);
      nlohmann::json j;
      j["dim"] = m.dim;
      j["nodes"] = m.node_count();
      j["elements"] = m.element_count();
      j["boundary_nodes"] = m.boundary_nodes.size();
      j["N_h"] = build_dofmap(m).size();
      j["h_max"] = q.h_max;
      j["min_measure"] = q.min_measure;
      j["shape_ratio"] = q.shape_ratio;
      write_json(std::cout, {{"file", check_path}}, j);
    } else if (table_cmd->parsed()) {
      const auto cells = table1();
      std::ostream& out = table_out.stream();
      write_csv_header(out, {{"command", "table1"}});
      write_table1_csv(out, cells);
      for (const auto& c : cells) {
        if (!c.ok()) {
          std::cerr << "mismatch at N_h=" << c.n_h << " C=" << c.c_level << ": " << c.nnz << " != " << c.expected
                    << "\n";
          return 3;
        }
      }
    } else if (train_cmd->parsed()) {
      TrainConfig cfg = train_flags.build(full, threads);
      const RunResult r = run_training(cfg, train_h1);
      fs::create_directories(train_dir);
      save_checkpoint(fs::path(train_dir) / "model.snet", to_checkpoint(r));
      std::ofstream hist(fs::path(train_dir) / "history.csv");
      write_csv_header(hist, cfg.to_map());
      write_history_csv(hist, r.state.history);
      std::ofstream metrics(fs::path(train_dir) / "metrics.json");
      write_json(metrics, cfg.to_map(), to_json(r));
      std::cout << "test mean rel-L2 " << r.test.mean_rel_l2 << " (" << r.nnz << " nonzeros per layer)\n";
      if (r.state.diverged) std::cerr << r.state.message << "\n";
    } else if (eval_cmd->parsed()) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      TrainConfig cfg;
      for (const auto& [k, v] : ck.meta)
        if (std::find(TrainConfig::keys().begin(), TrainConfig::keys().end(), k) != TrainConfig::keys().end())
          cfg.set(k, v);
      if (eval_family && parse_family(*eval_family) != cfg.family) {
        throw Error(ErrorCode::checkpoint_mismatch,
                    "checkpoint was trained on " + to_string(cfg.family) + ", not " + *eval_family);
      }
      if (eval_n && *eval_n != cfg.n) {
        throw Error(ErrorCode::checkpoint_mismatch,
                    "checkpoint was trained with n=" + std::to_string(cfg.n) + ", not " + std::to_string(*eval_n));
      }
      if (eval_seed) cfg.seed = *eval_seed;
      if (eval_samples) cfg.samples_test = *eval_samples;
      cfg.epochs = 0;
      const Experiment exp = make_experiment(cfg);
      if (ck.net.width() != exp.problem.size()) {
        throw Error(ErrorCode::checkpoint_mismatch, "network width " + std::to_string(ck.net.width()) +
                                                        " differs from N_h=" + std::to_string(exp.problem.size()));
      }
      const FemOracle oracle(exp.problem);
      const Metrics m = evaluate(ck.net, ck.input_scale, exp.problem, exp.test, oracle, eval_h1);
      const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(exp.test.size(), exp.problem.size());
      nlohmann::json j = to_json(m);
      j["zero_predictor_rel_l2"] =
          evaluate(exp.problem, zero, exp.test, oracle.solve(exp.test)).mean_rel_l2;
      ConfigEcho echo = cfg.to_map();
      echo["checkpoint"] = eval_ckpt;
      write_json(eval_out.stream(), echo, j);
    } else if (stab_cmd->parsed()) {
      stab.n_values.clear();
      for (const auto& s : split(full && stab_ns == "16,32,64" ? "16,32,64,128" : stab_ns, ','))
        stab.n_values.push_back(std::stoi(s));
      stab.activation = parse_activation(stab_act);
      const auto points = stability(stab);
      std::ostream& out = stab_out.stream();
      write_csv_header(out, stab.to_map());
      write_stability_csv(out, points);
    } else if (uat_cmd->parsed()) {
      write_json(uat_out.stream(), uat.to_map(), uat_report(uat));
    } else if (cmp_cmd->parsed()) {
      TrainConfig cfg = cmp_flags.build(full, threads);
      const CompareRandomResult r = compare_random(cfg, cmp_seeds);
      std::ostream& out = cmp_out.stream();
      ConfigEcho echo = cfg.to_map();
      echo["seeds"] = std::to_string(cmp_seeds);
      write_csv_header(out, echo);
      write_compare_random_csv(out, r);
    } else if (sweep_cmd->parsed()) {
      TrainConfig cfg = sweep_flags.build(full, threads);
      const auto runs = sweep(cfg, sweep_key, split(sweep_values, ','));
      std::ostream& out = sweep_out.stream();
      ConfigEcho echo = cfg.to_map();
      echo["sweep_key"] = sweep_key;
      echo["sweep_values"] = sweep_values;
      write_csv_header(out, echo);
      write_sweep_csv(out, sweep_key, runs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
