#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feonet/fem.hpp"
#include "feonet/mesh.hpp"
#include "feonet/network.hpp"
#include "feonet/sparsity.hpp"

namespace feonet {

enum class Family { poisson2d, adr2d, helmholtz2d, burgers1d, poisson_unstructured, poisson1d };
enum class ForcingFamily { trig2d, helmholtz2d, trig1d, proto1d };

std::string to_string(Family f);
Family parse_family(const std::string& tag);
std::string to_string(ForcingFamily f);
ForcingFamily forcing_of(Family f);

/// Draws forcing parameters omega and turns them into scalar fields.
///   trig2d      m0 sin(n0 x + n1 y) + m1 cos(n2 x + n3 y), m in [0,1), n in [0,pi)
///   helmholtz2d (k^2 - (a1 pi)^2 - (a2 pi)^2) sin(a1 pi x) sin(a2 pi y), a in {2..10}, k in [1,5)
///   trig1d      m0 sin(n0 x) + m1 cos(n1 x)
///   proto1d     w1 sin(2 pi w2 x) + w3 cos(2 pi w4 x), w_i in [lo_i, hi_i)
struct ForcingSampler {
  ForcingFamily family = ForcingFamily::trig2d;
  std::vector<std::pair<double, double>> ranges;  // per parameter; integer ranges are inclusive
  std::mt19937_64 rng;

  static ForcingSampler make(ForcingFamily family, std::uint64_t seed);
  std::vector<double> draw();
  static ScalarField field(ForcingFamily family, const std::vector<double>& omega);
};

/// M samples stored batch-major: row s of F is the load vector of sample s.
struct SampleSet {
  Eigen::MatrixXd omega;  // M x parameter count
  Eigen::MatrixXd F;      // M x N_h
  Eigen::VectorXd k;      // Helmholtz wave numbers (empty otherwise)

  int size() const { return static_cast<int>(F.rows()); }
  SampleSet subset(const std::vector<int>& rows) const;
};

SampleSet sample_batch(ForcingSampler& sampler, const Mesh& mesh, const DofMap& dof, int count);

/// A discretized experiment: mesh, unknowns, assembled operators.
struct Problem {
  Family family = Family::poisson2d;
  Mesh mesh;
  DofMap dof;
  FemSystem system;
  SparseMatrix Kt;  // transpose of the residual operator, for row-major batches

  int size() const { return dof.size(); }
};

/// Structured families use [-1,1]^d with n cells per axis; poisson_unstructured reads `mesh_path`.
Problem make_problem(Family family, int n, const std::optional<std::filesystem::path>& mesh_path = {});

/// Residual rows r_s for predicted coefficient rows alpha_s.
Eigen::MatrixXd residual(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha);

struct LossValue {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // dLoss/dalpha, same shape as alpha
};

/// loss = mean_s ||r_s||_2
LossValue loss_and_grad(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha);
double loss(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha);

/// Reference solutions: cached LU for shared-matrix families, per-sample
/// factorizations for Helmholtz, Newton for Burgers.
class FemOracle {
 public:
  explicit FemOracle(const Problem& problem);
  ~FemOracle();
  FemOracle(FemOracle&&) noexcept;
  FemOracle& operator=(FemOracle&&) noexcept;

  Eigen::MatrixXd solve(const SampleSet& samples) const;

 private:
  const Problem* problem_;
  std::unique_ptr<DirectSolver> shared_;
};

double cosine_lr(std::int64_t step, std::int64_t total, double lr0, double lr_min);

struct AdamState {
  NetworkGradients<double> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState zeros_like(const SparseNetwork<double>& net);
};

/// One Adam update; parameters change only at existing pattern positions.
void adam_step(SparseNetwork<double>& net, AdamState& state, const NetworkGradients<double>& grads, double lr);

struct TrainConfig {
  Family family = Family::poisson2d;
  int n = 16;
  std::string mesh;  // for poisson-unstructured
  int c_level = 3;   // 0 dense, >0 graph pattern, -1 random with nnz matched to match_c_level
  int match_c_level = 3;
  std::uint64_t pattern_seed = 0;
  int layers = 6;
  Activation activation = Activation::swish;
  int epochs = 2000;
  double lr0 = 1e-3;
  double lr_min = 1e-6;
  int samples_train = 3000;
  int samples_test = 3000;
  std::uint64_t seed = 1;
  bool deterministic = true;
  int batch = 0;  // 0: full batch up to 500 samples, else 512
  int eval_interval = 100;
  bool resample = false;  // redraw the training forcings every epoch
  int threads = 1;
  double max_dense_mb = 512.0;

  static const std::vector<std::string>& keys();
  /// Applies `key = value`; unknown keys throw unknown-key listing the valid ones.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  int effective_batch() const;
};

TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double train_rel_l2 = 0.0;
  double test_rel_l2 = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct Metrics {
  double mean_rel_l2 = 0.0;
  double median_rel_l2 = 0.0;
  double p90_rel_l2 = 0.0;
  double max_rel_l2 = 0.0;
  std::optional<double> mean_rel_h1;
  int samples = 0;
};

struct TrainState {
  SparseNetwork<double> net;
  AdamState adam;
  double input_scale = 1.0;
  std::vector<HistoryRow> history;
  std::vector<double> epoch_loss;
  bool diverged = false;
  std::string message;
};

/// Everything a run needs, built once from the config and shared by
/// training and evaluation.
struct Experiment {
  TrainConfig config;
  Problem problem;
  std::shared_ptr<const SparsityPattern> pattern;
  SampleSet train;
  SampleSet test;
};

Experiment make_experiment(const TrainConfig& config);
std::shared_ptr<const SparsityPattern> make_pattern(const TrainConfig& config, const Problem& problem);

/// Training seeds: samples come from `seed` (train first, then test), weights
/// from a stream derived from it, so runs with different patterns see the same data.
TrainState train(const Experiment& exp);
TrainState train(const Experiment& exp, SparseNetwork<double> init);

/// z0 = F / scale
Eigen::MatrixXd predict(const SparseNetwork<double>& net, double input_scale, const SampleSet& samples);

/// Relative errors against the FEM oracle; `reference_h1` adds the seminorm
/// error against a 4x finer same-family solve (structured meshes only).
Metrics evaluate(const Problem& problem, const Eigen::MatrixXd& predicted, const SampleSet& samples,
                 const Eigen::MatrixXd& reference, bool reference_h1 = false);
Metrics evaluate(const SparseNetwork<double>& net, double input_scale, const Problem& problem,
                 const SampleSet& samples, const FemOracle& oracle, bool reference_h1 = false);

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows);

}  // namespace feonet
