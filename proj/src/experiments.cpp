#include "feonet/experiments.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "feonet/checkpoint.hpp"
#include "feonet/error.hpp"
#include "feonet/uat.hpp"

namespace feonet {

std::string version_string() { return "feonet 0.1.0"; }

std::string code_hash() {
  const std::string v = version_string();
  std::string blob = "blob " + std::to_string(v.size());
  blob.push_back('\0');
  blob += v;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_csv_header(std::ostream& out, const ConfigEcho& config) {
  out << "# tool: " << version_string() << "\n# code_hash: " << code_hash() << "\n";
  for (const auto& [k, v] : config) out << "# " << k << ": " << v << "\n";
}

nlohmann::json json_header(const ConfigEcho& config) {
  nlohmann::json h;
  h["tool"] = version_string();
  h["code_hash"] = code_hash();
  h["config"] = config;
  return h;
}

// ------------------------------------------------------------------ weight counts

bool Table1Cell::ok() const {
  return nnz == expected && std::round(sparsity * 1e4) / 1e4 == expected_sparsity;
}

std::vector<Table1Cell> table1() {
  struct Expected {
    int n, c;
    std::int64_t nnz;
    double sparsity;
  };
  static const Expected published[] = {
      {6, 1, 137, 0.7808},         {6, 4, 555, 0.1120},         {6, 8, 625, 0.0000},
      {11, 1, 622, 0.9378},        {11, 4, 3930, 0.6070},       {11, 8, 8392, 0.1608},
      {11, 15, 9970, 0.0030},      {31, 1, 6062, 0.9925},       {31, 4, 47930, 0.9408},
      {31, 8, 149352, 0.8156},     {31, 15, 384860, 0.5249},    {51, 1, 17102, 0.9973},
      {51, 4, 140730, 0.9775},     {51, 8, 463912, 0.9258},     {51, 15, 1340060, 0.7856},
      {101, 1, 69202, 0.9993},     {101, 4, 586230, 0.9941},    {101, 8, 2009812, 0.9799},
      {101, 15, 6251560, 0.9375},
  };
  std::vector<Table1Cell> cells;
  int built = 0;
  BasisGraph graph;
  for (const Expected& e : published) {
    if (e.n != built) {
      const Mesh mesh = build_square(e.n, -1.0, 1.0);
      graph = build_basis_graph(mesh, build_dofmap(mesh));
      built = e.n;
    }
    const SparsityPattern p = build_pattern(graph, e.c);
    Table1Cell cell;
    cell.n_h = graph.n_vertices;
    cell.c_level = e.c;
    cell.nnz = p.nnz();
    cell.expected = e.nnz;
    cell.sparsity = sparsity_measure(p);
    cell.expected_sparsity = e.sparsity;
    cells.push_back(cell);
  }
  return cells;
}

void write_table1_csv(std::ostream& out, const std::vector<Table1Cell>& cells) {
  out << "N_h,c_level,fc,nnz,expected,sparsity,expected_sparsity,match\n";
  for (const auto& c : cells) {
    const std::int64_t fc = static_cast<std::int64_t>(c.n_h) * c.n_h;
    out << c.n_h << ',' << c.c_level << ',' << fc << ',' << c.nnz << ',' << c.expected << ',' << std::fixed
        << std::setprecision(4) << c.sparsity << ',' << c.expected_sparsity << ',' << (c.ok() ? "yes" : "no")
        << std::defaultfloat << "\n";
  }
}

// ----------------------------------------------------------------- training

RunResult run_training(const TrainConfig& config, bool h1) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  r.config = config;
  const Experiment exp = make_experiment(config);
  r.state = train(exp);
  r.nnz = exp.pattern->nnz();
  r.params = param_count(r.state.net);
  r.reported_params = reported_param_count(config.layers, r.nnz, exp.problem.mesh.node_count());
  const FemOracle oracle(exp.problem);
  r.test = evaluate(r.state.net, r.state.input_scale, exp.problem, exp.test, oracle, h1);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["samples"] = m.samples;
  j["mean_rel_l2"] = m.mean_rel_l2;
  j["median_rel_l2"] = m.median_rel_l2;
  j["p90_rel_l2"] = m.p90_rel_l2;
  j["max_rel_l2"] = m.max_rel_l2;
  if (m.mean_rel_h1) j["mean_rel_h1"] = *m.mean_rel_h1;
  return j;
}

nlohmann::json to_json(const RunResult& r) {
  nlohmann::json j;
  j["nnz"] = r.nnz;
  j["params"] = r.params.total();
  j["params_reported"] = r.reported_params;
  j["memory_mb_float32"] = reported_memory_mb(r.reported_params);
  j["memory_mb_float64"] = 2.0 * reported_memory_mb(r.reported_params);
  j["test"] = to_json(r.test);
  j["final_loss"] = r.state.epoch_loss.empty() ? 0.0 : r.state.epoch_loss.back();
  j["epochs_run"] = r.state.epoch_loss.size();
  j["diverged"] = r.state.diverged;
  if (!r.state.message.empty()) j["message"] = r.state.message;
  if (!r.config.deterministic) j["seconds"] = r.seconds;
  return j;
}

CompareRandomResult compare_random(const TrainConfig& config, int seeds) {
  if (config.c_level <= 0) throw Error(ErrorCode::precondition, "compare-random needs a sparse c_level > 0");
  if (seeds < 1) throw Error(ErrorCode::precondition, "need at least one random seed");
  CompareRandomResult out;
  out.fem = run_training(config);
  double sum = 0.0;
  for (int s = 1; s <= seeds; ++s) {
    TrainConfig rc = config;
    rc.c_level = -1;
    rc.match_c_level = config.c_level;
    rc.pattern_seed = static_cast<std::uint64_t>(s);
    out.random.push_back(run_training(rc));
    sum += out.random.back().test.mean_rel_l2;
  }
  out.random_mean = sum / seeds;
  out.ratio = out.random_mean / out.fem.test.mean_rel_l2;
  return out;
}

void write_compare_random_csv(std::ostream& out, const CompareRandomResult& r) {
  out << "pattern,pattern_seed,nnz,test_mean_rel_l2,test_median_rel_l2,final_loss\n";
  auto row = [&](const std::string& name, std::uint64_t seed, const RunResult& run) {
    out << name << ',' << seed << ',' << run.nnz << ',' << std::setprecision(10) << run.test.mean_rel_l2 << ','
        << run.test.median_rel_l2 << ',' << (run.state.epoch_loss.empty() ? 0.0 : run.state.epoch_loss.back())
        << "\n";
  };
  row("fem", 0, r.fem);
  for (const auto& run : r.random) row("random", run.config.pattern_seed, run);
  out << "# random_mean: " << std::setprecision(10) << r.random_mean << "\n# ratio: " << r.ratio << "\n";
}

std::vector<RunResult> sweep(const TrainConfig& config, const std::string& key, const std::vector<std::string>& values) {
  std::vector<RunResult> runs;
  for (const std::string& v : values) {
    TrainConfig c = config;
    c.set(key, v);
    runs.push_back(run_training(c));
  }
  return runs;
}

void write_sweep_csv(std::ostream& out, const std::string& key, const std::vector<RunResult>& runs) {
  out << key << ",nnz,params,test_mean_rel_l2,final_loss,seconds\n";
  for (const auto& r : runs) {
    const auto m = r.config.to_map();
    out << m.at(key) << ',' << r.nnz << ',' << r.params.total() << ',' << std::setprecision(10) << r.test.mean_rel_l2
        << ',' << (r.state.epoch_loss.empty() ? 0.0 : r.state.epoch_loss.back()) << ','
        << (r.config.deterministic ? 0.0 : r.seconds) << "\n";
  }
}

// ---------------------------------------------------------------- stability

ConfigEcho StabilityConfig::to_map() const {
  std::ostringstream ns;
  for (std::size_t i = 0; i < n_values.size(); ++i) ns << (i ? "," : "") << n_values[i];
  return {{"n_values", ns.str()},
          {"c_level", std::to_string(c_level)},
          {"layers", std::to_string(layers)},
          {"activation", to_string(activation)},
          {"trials", std::to_string(trials)},
          {"noise_fraction", std::to_string(noise_fraction)},
          {"sigma", std::to_string(sigma)},
          {"seed", std::to_string(seed)},
          {"checkpoint", checkpoint}};
}

namespace {

Batch<double> stability_inputs(Family family, int n, int count, std::uint64_t seed) {
  const Mesh mesh = family == Family::burgers1d || family == Family::poisson1d ? build_interval(n, -1.0, 1.0)
                                                                                : build_square(n, -1.0, 1.0);
  const DofMap dof = build_dofmap(mesh);
  ForcingSampler sampler = ForcingSampler::make(forcing_of(family), seed);
  return sample_batch(sampler, mesh, dof, count).F;
}

std::string pattern_name(int c_level) { return c_level == 0 ? "dense" : "C" + std::to_string(c_level); }

}  // namespace

std::vector<StabilityPoint> stability(const StabilityConfig& config) {
  std::vector<StabilityPoint> points;
  if (!config.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(config.checkpoint);
    const Family family = parse_family(ck.meta.count("family") ? ck.meta.at("family") : "poisson2d");
    if (!ck.meta.count("n")) throw Error(ErrorCode::checkpoint_mismatch, "checkpoint has no grid size in its metadata");
    const int n = std::stoi(ck.meta.at("n"));
    Batch<double> F = stability_inputs(family, n, config.trials, config.seed) / ck.input_scale;
    if (F.cols() != ck.net.width()) throw Error(ErrorCode::checkpoint_mismatch, "checkpoint width differs from its grid");
    std::mt19937_64 rng(config.seed + 1);
    StabilityPoint p;
    p.n = n;
    p.pattern = ck.net.layers.front().pattern->is_full() ? "dense" : pattern_name(ck.net.layers.front().pattern->c_level());
    p.report = sensitivity(ck.net, F, config.noise_fraction, config.trials, rng);
    p.report.mode = "trained";
    points.push_back(std::move(p));
    return points;
  }
  for (int n : config.n_values) {
    const Mesh mesh = build_square(n, -1.0, 1.0);
    const DofMap dof = build_dofmap(mesh);
    std::shared_ptr<const SparsityPattern> pattern;
    if (config.c_level == 0) {
      pattern = std::make_shared<const SparsityPattern>(full_pattern(dof.size()));
    } else {
      pattern = std::make_shared<const SparsityPattern>(build_pattern(build_basis_graph(mesh, dof), config.c_level));
    }
    std::mt19937_64 init_rng(config.seed);
    const SparseNetwork<double> net =
        init_network<double>(pattern, config.layers, config.activation, init_rng, InitMode::gaussian, config.sigma);
    const Batch<double> F = stability_inputs(Family::poisson2d, n, config.trials, config.seed);
    std::mt19937_64 rng(config.seed + 1);
    StabilityPoint p;
    p.n = n;
    p.pattern = pattern_name(config.c_level);
    p.report = sensitivity(net, F, config.noise_fraction, config.trials, rng);
    p.report.mode = "untrained-gaussian";
    points.push_back(std::move(p));
  }
  return points;
}

void write_stability_csv(std::ostream& out, const std::vector<StabilityPoint>& points) {
  out << "N_h,mode,pattern,layer,spectral_norm,c_s_bound,c_s_hat_mean,c_s_hat_std,c_s_hat_max\n";
  out << std::setprecision(10);
  for (const auto& p : points) {
    const auto& r = p.report;
    for (std::size_t l = 0; l < r.spectral_norms.size(); ++l) {
      out << r.n_h << ',' << r.mode << ',' << p.pattern << ',' << l + 1 << ',' << r.spectral_norms[l] << ",,,,\n";
    }
    out << r.n_h << ',' << r.mode << ',' << p.pattern << ",summary,," << r.bound << ',' << r.mean << ',' << r.std << ','
        << r.max << "\n";
  }
}

// ---------------------------------------------------------------------- uat

ConfigEcho UatConfig::to_map() const {
  return {{"n", std::to_string(n)},
          {"matrix", matrix},
          {"box_radius", std::to_string(box_radius)},
          {"samples", std::to_string(samples)},
          {"activation", activation},
          {"t0", std::to_string(t0)},
          {"epsilon", std::to_string(epsilon)},
          {"seed", std::to_string(seed)}};
}

namespace {

double commutator_check(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(3, 50);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const int n = size(rng);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int i = idx[0], j = idx[1], m = idx[2];
    const double s = coef(rng), t = coef(rng);
    const std::vector<ElementaryFactor> rhs{ElementaryFactor::transvection(i, m, s), ElementaryFactor::transvection(m, j, t),
                                            ElementaryFactor::transvection(i, m, -s),
                                            ElementaryFactor::transvection(m, j, -t)};
    const Eigen::MatrixXd lhs = ElementaryFactor::transvection(i, j, s * t).dense(n);
    worst = std::max(worst, (product(rhs, n) - lhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

nlohmann::json uat_report(const UatConfig& config) {
  const Problem problem = make_problem(Family::poisson2d, config.n);
  const int N = problem.size();
  const BasisGraph graph = build_basis_graph(problem.mesh, problem.dof);
  const Eigen::MatrixXd K = Eigen::MatrixXd(problem.system.K);

  GSparseFactorization fact;
  if (config.matrix == "inverse") {
    fact = gsparse_factorization(K, graph).inverse(graph);
  } else if (config.matrix == "stiffness") {
    fact = gsparse_factorization(K, graph);
  } else if (config.matrix == "identity") {
    fact = gsparse_factorization(Eigen::MatrixXd::Identity(N, N), graph);
  } else if (config.matrix == "random") {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) M(i, j) += 0.3 * normal(rng) / std::sqrt(static_cast<double>(N));
    fact = gsparse_factorization(M, graph);
  } else {
    throw Error(ErrorCode::precondition, "matrix must be inverse, stiffness, identity or random");
  }

  ForcingSampler sampler = ForcingSampler::make(ForcingFamily::trig2d, config.seed);
  const SampleSet samples = sample_batch(sampler, problem.mesh, problem.dof, config.samples);
  const double R = config.box_radius > 0.0 ? config.box_radius : samples.F.cwiseAbs().maxCoeff();

  nlohmann::json j;
  j["N_h"] = N;
  j["matrix"] = config.matrix;
  j["box_radius"] = R;
  j["chain_length"] = fact.chain.size();
  j["factor_count"] = fact.factors.size();
  j["product_checksum"] = fact.product_checksum;
  j["factors_g_sparse"] = fact.g_sparse;
  j["commutator_max_error"] = commutator_check(1000, config.seed);

  SparseNetwork<double> net;
  if (config.activation == "relu") {
    net = realize_relu(fact, graph, R);
  } else {
    GeneralActivation act{parse_activation(config.activation), config.t0};
    GeneralRealization g = realize_general(fact, graph, R, config.epsilon, act, config.seed);
    j["eta"] = g.eta;
    j["sampled_box_error"] = g.sampled_error;
    j["delta_min"] = *std::min_element(g.deltas.begin(), g.deltas.end());
    net = std::move(g.net);
  }
  j["activation"] = config.activation;
  j["depth"] = net.depth();
  j["layers_g_sparse"] = layers_g_sparse(net, graph);

  // exact images; for the inverse these are the direct FEM solves
  Eigen::MatrixXd exact(samples.size(), N);
  for (int s = 0; s < samples.size(); ++s) {
    const Eigen::VectorXd f = samples.F.row(s).transpose();
    const Eigen::VectorXd e = config.matrix == "inverse" ? solve_direct(problem.system.K, f).alpha
                                                         : Eigen::VectorXd(fact.target * f);
    exact.row(s) = e.transpose();
  }
  const Eigen::MatrixXd out = forward(net, Batch<double>(samples.F));
  double max_abs = 0.0, max_rel = 0.0;
  for (int s = 0; s < samples.size(); ++s) {
    const double dev = (out.row(s) - exact.row(s)).cwiseAbs().maxCoeff();
    max_abs = std::max(max_abs, dev);
    max_rel = std::max(max_rel, dev / std::max(exact.row(s).cwiseAbs().maxCoeff(), 1e-300));
  }
  j["samples"] = samples.size();
  j["max_abs_deviation"] = max_abs;
  j["max_rel_deviation"] = max_rel;
  return j;
}

}  // namespace feonet
