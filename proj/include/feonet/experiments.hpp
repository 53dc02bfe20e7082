#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "feonet/stability.hpp"
#include "feonet/training.hpp"

namespace feonet {

std::string version_string();
/// SHA-1 of "blob <len>\0<version string>", as git would hash it.
std::string code_hash();

using ConfigEcho = std::map<std::string, std::string>;

/// `# key: value` lines: tool, version, code hash, then the config.
void write_csv_header(std::ostream& out, const ConfigEcho& config);
nlohmann::json json_header(const ConfigEcho& config);

struct Table1Cell {
  int n_h = 0;
  int c_level = 0;
  std::int64_t nnz = 0;
  std::int64_t expected = 0;
  double sparsity = 0.0;
  double expected_sparsity = 0.0;

  bool ok() const;
};

/// Every populated cell of the FC-vs-sparse weight count table, recomputed on
/// the structured square grid.
std::vector<Table1Cell> table1();
void write_table1_csv(std::ostream& out, const std::vector<Table1Cell>& cells);

struct RunResult {
  TrainConfig config;
  std::int64_t nnz = 0;
  ParamCount params;
  std::int64_t reported_params = 0;
  Metrics test;
  TrainState state;
  double seconds = 0.0;
};

/// make_experiment + train + evaluate on the test split.
RunResult run_training(const TrainConfig& config, bool h1 = false);
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const RunResult& r);

struct CompareRandomResult {
  RunResult fem;
  std::vector<RunResult> random;
  double random_mean = 0.0;
  double ratio = 0.0;  // random mean / fem
};

/// FEM pattern at config.c_level against nnz-matched random patterns with
/// pattern seeds 1..seeds, all trained on the same samples.
CompareRandomResult compare_random(const TrainConfig& config, int seeds);
void write_compare_random_csv(std::ostream& out, const CompareRandomResult& r);

/// One run per value of `key`; the rest of the config is shared.
std::vector<RunResult> sweep(const TrainConfig& config, const std::string& key, const std::vector<std::string>& values);
void write_sweep_csv(std::ostream& out, const std::string& key, const std::vector<RunResult>& runs);

struct StabilityConfig {
  std::vector<int> n_values{16, 32, 64};  // grid cells per axis; N_h = (n-1)^2
  int c_level = 5;                        // 0 dense
  int layers = 6;
  Activation activation = Activation::swish;
  int trials = 3000;
  double noise_fraction = 0.01;
  double sigma = 1.0;
  std::uint64_t seed = 1;
  std::string checkpoint;  // trained mode: measure this network on its own grid

  ConfigEcho to_map() const;
};

struct StabilityPoint {
  int n = 0;
  std::string pattern;  // dense, C<k>, random
  SensitivityReport report;
};

/// Gaussian-initialized networks on each grid, inputs drawn from the Poisson
/// forcing family with the given seed.
std::vector<StabilityPoint> stability(const StabilityConfig& config);
void write_stability_csv(std::ostream& out, const std::vector<StabilityPoint>& points);

struct UatConfig {
  int n = 6;                     // grid cells per axis
  std::string matrix = "inverse";  // inverse | stiffness | identity | random
  double box_radius = 0.0;       // 0: max |F| over the sample set
  int samples = 100;
  std::string activation = "relu";  // relu | sigmoid | swish
  double t0 = 0.0;
  double epsilon = 1e-3;
  std::uint64_t seed = 1;

  ConfigEcho to_map() const;
};

/// Factorization and realization report: chain and factor counts, checksums,
/// depth, G-sparsity of every layer, and deviation from the exact map on
/// seeded load vectors.
nlohmann::json uat_report(const UatConfig& config);

}  // namespace feonet
