#include "feonet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "feonet/error.hpp"

namespace feonet {

using std::numbers::pi;

std::string to_string(Family f) {
  switch (f) {
    case Family::poisson2d: return "poisson2d";
    case Family::adr2d: return "adr2d";
    case Family::helmholtz2d: return "helmholtz2d";
    case Family::burgers1d: return "burgers1d";
    case Family::poisson_unstructured: return "poisson-unstructured";
    case Family::poisson1d: return "poisson1d";
  }
  return "unknown";
}

Family parse_family(const std::string& tag) {
  for (Family f : {Family::poisson2d, Family::adr2d, Family::helmholtz2d, Family::burgers1d,
                   Family::poisson_unstructured, Family::poisson1d}) {
    if (tag == to_string(f)) return f;
  }
  throw Error(ErrorCode::parse_error, "unknown family '" + tag +
                                          "' (poisson2d, adr2d, helmholtz2d, burgers1d, poisson-unstructured, poisson1d)");
}

std::string to_string(ForcingFamily f) {
  switch (f) {
    case ForcingFamily::trig2d: return "trig2d";
    case ForcingFamily::helmholtz2d: return "helmholtz2d";
    case ForcingFamily::trig1d: return "trig1d";
    case ForcingFamily::proto1d: return "proto1d";
  }
  return "unknown";
}

ForcingFamily forcing_of(Family f) {
  switch (f) {
    case Family::helmholtz2d: return ForcingFamily::helmholtz2d;
    case Family::burgers1d: return ForcingFamily::trig1d;
    case Family::poisson1d: return ForcingFamily::proto1d;
    default: return ForcingFamily::trig2d;
  }
}

// ---------------------------------------------------------------- sampling

ForcingSampler ForcingSampler::make(ForcingFamily family, std::uint64_t seed) {
  ForcingSampler s;
  s.family = family;
  s.rng.seed(seed);
  switch (family) {
    case ForcingFamily::trig2d:
      s.ranges = {{0, 1}, {0, 1}, {0, pi}, {0, pi}, {0, pi}, {0, pi}};
      break;
    case ForcingFamily::helmholtz2d:
      s.ranges = {{2, 10}, {2, 10}, {1, 5}};
      break;
    case ForcingFamily::trig1d:
      s.ranges = {{0, 1}, {0, 1}, {0, pi}, {0, pi}};
      break;
    case ForcingFamily::proto1d:
      s.ranges = {{0, 1}, {0.5, 1.5}, {0, 1}, {0.5, 1.5}};
      break;
  }
  return s;
}

std::vector<double> ForcingSampler::draw() {
  std::vector<double> omega(ranges.size());
  for (std::size_t p = 0; p < ranges.size(); ++p) {
    const auto [lo, hi] = ranges[p];
    if (family == ForcingFamily::helmholtz2d && p < 2) {
      std::uniform_int_distribution<int> d(static_cast<int>(lo), static_cast<int>(hi));
      omega[p] = d(rng);
    } else {
      std::uniform_real_distribution<double> d(lo, hi);
      omega[p] = d(rng);
    }
  }
  return omega;
}

ScalarField ForcingSampler::field(ForcingFamily family, const std::vector<double>& w) {
  switch (family) {
    case ForcingFamily::trig2d:
      // omega = (m0, m1, n0, n1, n2, n3)
      return [w](const Point& x) {
        return w[0] * std::sin(w[2] * x[0] + w[3] * x[1]) + w[1] * std::cos(w[4] * x[0] + w[5] * x[1]);
      };
    case ForcingFamily::helmholtz2d:
      // omega = (a1, a2, k)
      return [w](const Point& x) {
        const double a1 = w[0] * pi, a2 = w[1] * pi;
        return (w[2] * w[2] - a1 * a1 - a2 * a2) * std::sin(a1 * x[0]) * std::sin(a2 * x[1]);
      };
    case ForcingFamily::trig1d:
      // omega = (m0, m1, n0, n1)
      return [w](const Point& x) { return w[0] * std::sin(w[2] * x[0]) + w[1] * std::cos(w[3] * x[0]); };
    case ForcingFamily::proto1d:
      return [w](const Point& x) {
        return w[0] * std::sin(2 * pi * w[1] * x[0]) + w[2] * std::cos(2 * pi * w[3] * x[0]);
      };
  }
  throw Error(ErrorCode::precondition, "unknown forcing family");
}

SampleSet SampleSet::subset(const std::vector<int>& rows) const {
  SampleSet s;
  s.omega.resize(static_cast<Eigen::Index>(rows.size()), omega.cols());
  s.F.resize(static_cast<Eigen::Index>(rows.size()), F.cols());
  if (k.size()) s.k.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s.omega.row(r) = omega.row(rows[r]);
    s.F.row(r) = F.row(rows[r]);
    if (k.size()) s.k[r] = k[rows[r]];
  }
  return s;
}

SampleSet sample_batch(ForcingSampler& sampler, const Mesh& mesh, const DofMap& dof, int count) {
  if (count < 1) throw Error(ErrorCode::precondition, "sample count must be >= 1");
  SampleSet s;
  s.omega.resize(count, static_cast<Eigen::Index>(sampler.ranges.size()));
  s.F.resize(count, dof.size());
  if (sampler.family == ForcingFamily::helmholtz2d) s.k.resize(count);
  for (int i = 0; i < count; ++i) {
    const std::vector<double> w = sampler.draw();
    for (std::size_t p = 0; p < w.size(); ++p) s.omega(i, static_cast<Eigen::Index>(p)) = w[p];
    s.F.row(i) = assemble_load(mesh, dof, ForcingSampler::field(sampler.family, w)).transpose();
    if (s.k.size()) s.k[i] = w[2];
  }
  return s;
}

// ---------------------------------------------------------------- problems

Problem make_problem(Family family, int n, const std::optional<std::filesystem::path>& mesh_path) {
  Problem p;
  p.family = family;
  switch (family) {
    case Family::burgers1d:
    case Family::poisson1d: p.mesh = build_interval(n, -1.0, 1.0); break;
    case Family::poisson_unstructured:
      if (!mesh_path) throw Error(ErrorCode::precondition, "poisson-unstructured needs a mesh file");
      p.mesh = load_mesh(*mesh_path);
      break;
    default: p.mesh = build_square(n, -1.0, 1.0); break;
  }
  p.dof = build_dofmap(p.mesh);
  switch (family) {
    case Family::adr2d:
      p.system = assemble_elliptic(p.mesh, p.dof, CoefficientSet::constant(0.1, Eigen::Vector2d(-1.0, 0.0), 20.0));
      break;
    case Family::burgers1d: p.system = assemble_burgers(p.mesh, p.dof, 0.1); break;
    case Family::helmholtz2d: {
      p.system = assemble_elliptic(p.mesh, p.dof, CoefficientSet::laplacian());
      // per-sample matrices are formed from stiff_only and M
      p.system.K = -p.system.stiff_only;
      break;
    }
    default: p.system = assemble_elliptic(p.mesh, p.dof, CoefficientSet::laplacian()); break;
  }
  p.Kt = p.system.K.transpose();
  return p;
}

// ---------------------------------------------------------------- loss

namespace {

void check_shapes(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha) {
  if (alpha.rows() != samples.size() || alpha.cols() != problem.size() || samples.F.cols() != problem.size()) {
    throw Error(ErrorCode::dimension_mismatch, "prediction/sample shapes do not match the problem");
  }
  if ((problem.family == Family::helmholtz2d) != (samples.k.size() > 0)) {
    throw Error(ErrorCode::family_mismatch, "samples were not drawn for the " + to_string(problem.family) + " family");
  }
}

}  // namespace

Eigen::MatrixXd residual(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha) {
  check_shapes(problem, samples, alpha);
  const auto& sys = problem.system;
  Eigen::MatrixXd R;
  if (problem.family == Family::helmholtz2d) {
    // r = (-S + k^2 M) alpha - Q; S and M are symmetric
    R = alpha * sys.M;
    R = samples.k.array().square().matrix().asDiagonal() * R;
    R.noalias() -= alpha * sys.stiff_only;
  } else {
    R = alpha * problem.Kt;
  }
  if (problem.family == Family::burgers1d) {
    for (const auto& e : sys.T->entries) {
      R.col(e.i).array() += e.value * alpha.col(e.j).array() * alpha.col(e.k).array();
    }
  }
  R -= samples.F;
  return R;
}

LossValue loss_and_grad(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha) {
  const Eigen::MatrixXd R = residual(problem, samples, alpha);
  const Eigen::VectorXd norms = R.rowwise().norm();
  const double B = static_cast<double>(samples.size());
  LossValue out;
  out.loss = norms.sum() / B;
  // W = r / (||r|| B); dLoss/dalpha = J^T W row by row
  Eigen::VectorXd scale(norms.size());
  for (Eigen::Index s = 0; s < norms.size(); ++s) scale[s] = norms[s] > 0.0 ? 1.0 / (norms[s] * B) : 0.0;
  const Eigen::MatrixXd W = scale.asDiagonal() * R;
  const auto& sys = problem.system;
  if (problem.family == Family::helmholtz2d) {
    out.grad = samples.k.array().square().matrix().asDiagonal() * (W * sys.M);
    out.grad.noalias() -= W * sys.stiff_only;
  } else {
    out.grad = W * sys.K;
  }
  if (problem.family == Family::burgers1d) {
    for (const auto& e : sys.T->entries) {
      out.grad.col(e.j).array() += e.value * W.col(e.i).array() * alpha.col(e.k).array();
      out.grad.col(e.k).array() += e.value * W.col(e.i).array() * alpha.col(e.j).array();
    }
  }
  return out;
}

double loss(const Problem& problem, const SampleSet& samples, const Eigen::MatrixXd& alpha) {
  return residual(problem, samples, alpha).rowwise().norm().sum() / samples.size();
}

// ---------------------------------------------------------------- oracle

FemOracle::FemOracle(const Problem& problem) : problem_(&problem) {
  if (problem.family != Family::helmholtz2d && problem.family != Family::burgers1d) {
    shared_ = std::make_unique<DirectSolver>(problem.system.K);
  }
}
FemOracle::~FemOracle() = default;
FemOracle::FemOracle(FemOracle&&) noexcept = default;
FemOracle& FemOracle::operator=(FemOracle&&) noexcept = default;

Eigen::MatrixXd FemOracle::solve(const SampleSet& samples) const {
  const Problem& p = *problem_;
  if (shared_) return shared_->solve_rows(samples.F);
  Eigen::MatrixXd out(samples.size(), p.size());
  for (int s = 0; s < samples.size(); ++s) {
    const Eigen::VectorXd F = samples.F.row(s).transpose();
    if (p.family == Family::helmholtz2d) {
      DirectSolver lu(helmholtz_matrix(p.system.stiff_only, p.system.M, samples.k[s]));
      out.row(s) = lu.solve(F).transpose();
    } else {
      out.row(s) = newton_burgers(p.system, F).solution.alpha.transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------- optimizer

double cosine_lr(std::int64_t step, std::int64_t total, double lr0, double lr_min) {
  if (total <= 0) return lr0;
  const double t = static_cast<double>(std::clamp<std::int64_t>(step, 0, total)) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(pi * t));
}

AdamState AdamState::zeros_like(const SparseNetwork<double>& net) {
  AdamState s;
  for (const auto& layer : net.layers) {
    s.m.values.push_back(Eigen::VectorXd::Zero(layer.values.size()));
    s.m.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  s.v = s.m;
  return s;
}

void adam_step(SparseNetwork<double>& net, AdamState& state, const NetworkGradients<double>& grads, double lr) {
  if (state.m.values.size() != net.layers.size() || grads.values.size() != net.layers.size()) {
    throw Error(ErrorCode::dimension_mismatch, "optimizer state does not match the network");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto update = [&](Eigen::VectorXd& p, Eigen::VectorXd& m, Eigen::VectorXd& v, const Eigen::VectorXd& g) {
    if (p.size() != g.size() || m.size() != g.size()) {
      throw Error(ErrorCode::dimension_mismatch, "gradient length differs from parameter length");
    }
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].values, state.m.values[l], state.v.values[l], grads.values[l]);
    update(net.layers[l].bias, state.m.bias[l], state.v.bias[l], grads.bias[l]);
  }
  net.touch();
}

// ---------------------------------------------------------------- config

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "family",  "n",       "mesh",          "c_level",        "match_c_level", "pattern_seed", "layers",
      "activation", "epochs", "lr0",         "lr_min",         "samples_train", "samples_test", "seed",
      "deterministic", "batch", "eval_interval", "resample", "threads",      "max_dense_mb"};
  return k;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T out{};
  std::string rest;
  if (!(ss >> out) || (ss >> rest)) throw Error(ErrorCode::parse_error, "bad value '" + value + "' for key " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::parse_error, "bad boolean '" + value + "' for key " + key);
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "family") family = parse_family(value);
  else if (key == "n") n = parse_number<int>(key, value);
  else if (key == "mesh") mesh = value;
  else if (key == "c_level") c_level = parse_number<int>(key, value);
  else if (key == "match_c_level") match_c_level = parse_number<int>(key, value);
  else if (key == "pattern_seed") pattern_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "layers") layers = parse_number<int>(key, value);
  else if (key == "activation") activation = parse_activation(value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "lr0") lr0 = parse_number<double>(key, value);
  else if (key == "lr_min") lr_min = parse_number<double>(key, value);
  else if (key == "samples_train") samples_train = parse_number<int>(key, value);
  else if (key == "samples_test") samples_test = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "deterministic") deterministic = parse_bool(key, value);
  else if (key == "batch") batch = parse_number<int>(key, value);
  else if (key == "eval_interval") eval_interval = parse_number<int>(key, value);
  else if (key == "resample") resample = parse_bool(key, value);
  else if (key == "threads") threads = parse_number<int>(key, value);
  else if (key == "max_dense_mb") max_dense_mb = parse_number<double>(key, value);
  else {
    std::string valid;
    for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::unknown_key, "unknown config key '" + key + "'; valid keys: " + valid);
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"family", to_string(family)},
      {"n", std::to_string(n)},
      {"mesh", mesh},
      {"c_level", std::to_string(c_level)},
      {"match_c_level", std::to_string(match_c_level)},
      {"pattern_seed", std::to_string(pattern_seed)},
      {"layers", std::to_string(layers)},
      {"activation", to_string(activation)},
      {"epochs", std::to_string(epochs)},
      {"lr0", format_double(lr0)},
      {"lr_min", format_double(lr_min)},
      {"samples_train", std::to_string(samples_train)},
      {"samples_test", std::to_string(samples_test)},
      {"seed", std::to_string(seed)},
      {"deterministic", deterministic ? "true" : "false"},
      {"batch", std::to_string(effective_batch())},
      {"eval_interval", std::to_string(eval_interval)},
      {"resample", resample ? "true" : "false"},
      {"threads", std::to_string(threads)},
      {"max_dense_mb", format_double(max_dense_mb)},
  };
}

int TrainConfig::effective_batch() const {
  if (batch > 0) return std::min(batch, samples_train);
  return samples_train <= 500 ? samples_train : 512;
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::parse_error, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot read config " + path.string());
  return parse_config(in, std::move(base));
}

// ---------------------------------------------------------------- experiment

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kResample = 3, kPattern = 4 };

}  // namespace

std::shared_ptr<const SparsityPattern> make_pattern(const TrainConfig& config, const Problem& problem) {
  const int N = problem.size();
  if (config.c_level == 0) return std::make_shared<const SparsityPattern>(full_pattern(N));
  const BasisGraph graph = build_basis_graph(problem.mesh, problem.dof);
  if (config.c_level > 0) return std::make_shared<const SparsityPattern>(build_pattern(graph, config.c_level));
  if (config.c_level == -1) {
    const std::int64_t nnz = build_pattern(graph, config.match_c_level).nnz();
    auto rng = stream(config.pattern_seed, kPattern);
    return std::make_shared<const SparsityPattern>(random_pattern(N, nnz, rng));
  }
  throw Error(ErrorCode::precondition, "c_level must be >= -1");
}

Experiment make_experiment(const TrainConfig& config) {
  if (config.layers < 1 || config.epochs < 0 || config.samples_train < 1 || config.samples_test < 1 ||
      config.eval_interval < 1) {
    throw Error(ErrorCode::precondition, "layers, samples and eval_interval must be positive");
  }
  Experiment exp;
  exp.config = config;
  std::optional<std::filesystem::path> mesh;
  if (!config.mesh.empty()) mesh = config.mesh;
  exp.problem = make_problem(config.family, config.n, mesh);
  const int N = exp.problem.size();
  if (config.c_level == 0) {
    const double params = static_cast<double>(config.layers) * (static_cast<double>(N) * N + N);
    const double mb8 = 8.0 * params / 1e6;
    if (mb8 > config.max_dense_mb) {
      std::ostringstream msg;
      msg << std::fixed << std::setprecision(1) << "dense network with N_h=" << N << " needs " << mb8
          << " MB of float64 parameters (" << mb8 / 2 << " MB at 4 bytes), above the " << config.max_dense_mb
          << " MB cap";
      throw Error(ErrorCode::infeasible, msg.str());
    }
  }
  exp.pattern = make_pattern(config, exp.problem);
  ForcingSampler sampler = ForcingSampler::make(forcing_of(config.family), config.seed);
  exp.train = sample_batch(sampler, exp.problem.mesh, exp.problem.dof, config.samples_train);
  exp.test = sample_batch(sampler, exp.problem.mesh, exp.problem.dof, config.samples_test);
  return exp;
}

Eigen::MatrixXd predict(const SparseNetwork<double>& net, double input_scale, const SampleSet& samples) {
  return forward(net, Eigen::MatrixXd(samples.F / input_scale));
}

Metrics evaluate(const Problem& problem, const Eigen::MatrixXd& predicted, const SampleSet& samples,
                 const Eigen::MatrixXd& reference, bool reference_h1) {
  if (predicted.rows() != reference.rows() || predicted.cols() != reference.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "prediction and reference shapes differ");
  }
  Metrics m;
  m.samples = static_cast<int>(predicted.rows());
  std::vector<double> errs(m.samples);
  for (int s = 0; s < m.samples; ++s) {
    errs[s] = rel_l2_error(predicted.row(s).transpose(), reference.row(s).transpose(), problem.system.M);
  }
  m.mean_rel_l2 = std::accumulate(errs.begin(), errs.end(), 0.0) / m.samples;
  std::vector<double> sorted = errs;
  std::sort(sorted.begin(), sorted.end());
  const auto pct = [&](double q) {
    const double pos = q * (m.samples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  m.median_rel_l2 = pct(0.5);
  m.p90_rel_l2 = pct(0.9);
  m.max_rel_l2 = sorted.back();

  if (reference_h1) {
    if (!problem.mesh.grid) throw Error(ErrorCode::precondition, "H1 reference needs a structured mesh");
    Problem fine = make_problem(problem.family, 4 * problem.mesh.grid->n);
    SampleSet fs;
    fs.omega = samples.omega;
    fs.k = samples.k;
    fs.F.resize(samples.size(), fine.size());
    const ForcingFamily ff = forcing_of(problem.family);
    for (int s = 0; s < samples.size(); ++s) {
      std::vector<double> w(samples.omega.cols());
      for (Eigen::Index p = 0; p < samples.omega.cols(); ++p) w[p] = samples.omega(s, p);
      fs.F.row(s) = assemble_load(fine.mesh, fine.dof, ForcingSampler::field(ff, w)).transpose();
    }
    const Eigen::MatrixXd ref = FemOracle(fine).solve(fs);
    double total = 0.0;
    for (int s = 0; s < samples.size(); ++s) {
      const Eigen::VectorXd up = prolongate(problem.mesh, problem.dof, predicted.row(s).transpose(), fine.mesh, fine.dof);
      total += h1_semi_error(up, ref.row(s).transpose(), fine.system.stiff_only);
    }
    m.mean_rel_h1 = total / samples.size();
  }
  return m;
}

Metrics evaluate(const SparseNetwork<double>& net, double input_scale, const Problem& problem,
                 const SampleSet& samples, const FemOracle& oracle, bool reference_h1) {
  return evaluate(problem, predict(net, input_scale, samples), samples, oracle.solve(samples), reference_h1);
}

// ---------------------------------------------------------------- training

TrainState train(const Experiment& exp) {
  auto rng = stream(exp.config.seed, kInit);
  return train(exp, init_network<double>(exp.pattern, exp.config.layers, exp.config.activation, rng));
}

TrainState train(const Experiment& exp, SparseNetwork<double> init) {
  const TrainConfig& cfg = exp.config;
  const Problem& problem = exp.problem;
  Eigen::setNbThreads(std::max(1, cfg.threads));

  TrainState st;
  st.net = std::move(init);
  st.adam = AdamState::zeros_like(st.net);
  st.input_scale = std::max(1.0, exp.train.F.cwiseAbs().maxCoeff());

  const FemOracle oracle(problem);
  const Eigen::MatrixXd test_ref = oracle.solve(exp.test);
  Eigen::MatrixXd train_ref = oracle.solve(exp.train);

  SampleSet train_set = exp.train;
  ForcingSampler resampler = ForcingSampler::make(forcing_of(cfg.family), 0);
  resampler.rng = stream(cfg.seed, kResample);
  auto shuffle_rng = stream(cfg.seed, kShuffle);

  const int M = train_set.size();
  const int B = cfg.effective_batch();
  const int batches = (M + B - 1) / B;
  const std::int64_t total_steps = static_cast<std::int64_t>(cfg.epochs) * batches;
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);

  SparseNetwork<double> last_good = st.net;
  const auto start = std::chrono::steady_clock::now();
  ForwardCache<double> cache;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.resample) {
      train_set = sample_batch(resampler, problem.mesh, problem.dof, M);
    }
    if (batches > 1) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    bool finite = true;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * B, hi = std::min(M, lo + B);
      SampleSet batch;
      if (batches == 1) {
        batch = train_set;
      } else {
        batch = train_set.subset(std::vector<int>(order.begin() + lo, order.begin() + hi));
      }
      const Eigen::MatrixXd Z = batch.F / st.input_scale;
      const Eigen::MatrixXd alpha = forward(st.net, Z, &cache);
      LossValue lv = loss_and_grad(problem, batch, alpha);
      if (!std::isfinite(lv.loss) || !lv.grad.allFinite()) {
        finite = false;
        break;
      }
      epoch_loss += lv.loss * (hi - lo);
      const NetworkGradients<double> g = backward(st.net, cache, lv.grad);
      const double lr = cosine_lr(st.adam.step, total_steps, cfg.lr0, cfg.lr_min);
      adam_step(st.net, st.adam, g, lr);
    }
    epoch_loss /= M;
    if (!finite || !std::isfinite(epoch_loss)) {
      st.diverged = true;
      st.message = "non-finite loss at epoch " + std::to_string(epoch) + "; parameters restored to the last finite epoch";
      st.net = std::move(last_good);
      break;
    }
    last_good = st.net;
    st.epoch_loss.push_back(epoch_loss);
    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) {
      if (cfg.resample) train_ref = oracle.solve(train_set);
      HistoryRow row;
      row.epoch = epoch;
      row.loss = epoch_loss;
      row.train_rel_l2 = evaluate(problem, predict(st.net, st.input_scale, train_set), train_set, train_ref).mean_rel_l2;
      row.test_rel_l2 = evaluate(problem, predict(st.net, st.input_scale, exp.test), exp.test, test_ref).mean_rel_l2;
      row.lr = cosine_lr(st.adam.step, total_steps, cfg.lr0, cfg.lr_min);
      // wall-clock time would make deterministic reruns differ
      row.seconds = cfg.deterministic
                        ? 0.0
                        : std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      st.history.push_back(row);
    }
  }
  return st;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows) {
  out << "epoch,loss,train_rel_l2,test_rel_l2,lr,seconds\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.loss << ',' << r.train_rel_l2 << ',' << r.test_rel_l2 << ',' << r.lr << ','
        << r.seconds << '\n';
  }
}

}  // namespace feonet
