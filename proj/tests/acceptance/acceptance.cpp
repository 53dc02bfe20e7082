// One line per criterion: "criterion <k> PASS|FAIL <measurements> (<seconds>s)".
// Exit status is nonzero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "feonet/checkpoint.hpp"
#include "feonet/experiments.hpp"
#include "feonet/fem.hpp"
#include "feonet/uat.hpp"

using namespace feonet;

namespace {

// tolerances and budgets
constexpr double kRateTarget = 2.0, kRateBand = 0.2;
constexpr double kGradTol = 1e-5;
constexpr double kUatTol = 1e-6, kCommutatorTol = 1e-12;
constexpr double kTrainTol = 2e-2;
constexpr int kTrainBatch = 128;
constexpr int kAblationEpochs = 500, kAblationSeeds = 10;
constexpr double kAblationRatio = 3.0;
constexpr double kDenseRatio = 100.0, kSparseRatio = 10.0, kSpectralBand = 0.25;
constexpr int kStabilityTrials = 1000;
constexpr double kNewtonTol = 1e-10;
constexpr int kNewtonIterations = 20;
constexpr double kBurgersTol = 5e-2;
constexpr double kBurgersLr = 1e-2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double loglog_slope(const std::vector<double>& h, const std::vector<double>& e) {
  const int n = static_cast<int>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(h[i]), y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TrainConfig desk_config(Family family, int n, int c_level) {
  TrainConfig c;
  c.family = family;
  c.n = n;
  c.c_level = c_level;
  c.layers = 6;
  c.activation = Activation::swish;
  c.lr0 = 1e-3;
  c.lr_min = 1e-6;
  c.epochs = 2000;
  c.samples_train = 3000;
  c.samples_test = 3000;
  c.seed = 1;
  c.batch = kTrainBatch;
  c.eval_interval = 100;
  return c;
}

// ------------------------------------------------------------------------

Outcome weight_counts() {
  const auto cells = table1();
  int bad = 0;
  for (const auto& c : cells) bad += !c.ok();
  return {bad == 0, std::to_string(cells.size() - bad) + "/" + std::to_string(cells.size()) + " cells exact"};
}

Outcome fem_convergence() {
  const double pi = std::acos(-1.0);
  std::vector<double> h1, e1, h2, e2;
  for (int n : {8, 16, 32, 64}) {
    {
      const Mesh m = build_interval(n, -1.0, 1.0);
      const DofMap dof = build_dofmap(m);
      const FemSystem sys = assemble_elliptic(m, dof, CoefficientSet::laplacian());
      const ScalarField u = [pi](const Point& x) { return std::sin(pi * x[0]); };
      const ScalarField f = [pi](const Point& x) { return pi * pi * std::sin(pi * x[0]); };
      const Eigen::VectorXd a = solve_direct(sys, assemble_load(m, dof, f)).alpha;
      h1.push_back(2.0 / n);
      e1.push_back(l2_error_against(m, dof, a, u) / l2_norm_of(m, u));
    }
    {
      const Mesh m = build_square(n, -1.0, 1.0);
      const DofMap dof = build_dofmap(m);
      const FemSystem sys = assemble_elliptic(m, dof, CoefficientSet::laplacian());
      const ScalarField u = [pi](const Point& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); };
      const ScalarField f = [pi](const Point& x) { return 2 * pi * pi * std::sin(pi * x[0]) * std::sin(pi * x[1]); };
      const Eigen::VectorXd a = solve_direct(sys, assemble_load(m, dof, f)).alpha;
      h2.push_back(2.0 / n);
      e2.push_back(l2_error_against(m, dof, a, u) / l2_norm_of(m, u));
    }
  }
  const double r1 = loglog_slope(h1, e1), r2 = loglog_slope(h2, e2);
  const bool ok = std::abs(r1 - kRateTarget) <= kRateBand && std::abs(r2 - kRateTarget) <= kRateBand;
  return {ok, "rate 1D " + fmt(r1) + ", 2D " + fmt(r2)};
}

double loss_fd_deviation(Activation act) {
  const Problem p = make_problem(Family::poisson2d, 6);
  ForcingSampler sampler = ForcingSampler::make(ForcingFamily::trig2d, 7);
  const SampleSet s = sample_batch(sampler, p.mesh, p.dof, 8);
  const double scale = s.F.cwiseAbs().maxCoeff();
  const Eigen::MatrixXd Z = s.F / scale;

  auto pattern = std::make_shared<const SparsityPattern>(build_pattern(build_basis_graph(p.mesh, p.dof), 2));
  std::mt19937_64 rng(3);
  SparseNetwork<double> net = init_network<double>(pattern, 3, act, rng);
  std::normal_distribution<double> g(0.0, 0.2);
  for (auto& layer : net.layers)
    for (auto& b : layer.bias) b = g(rng);

  ForwardCache<double> cache;
  const Eigen::MatrixXd alpha = forward(net, Z, &cache);
  const NetworkGradients<double> grad = backward(net, cache, Batch<double>(loss_and_grad(p, s, alpha).grad));
  double gmax = 0.0;
  for (int l = 0; l < net.depth(); ++l)
    gmax = std::max({gmax, grad.values[l].cwiseAbs().maxCoeff(), grad.bias[l].cwiseAbs().maxCoeff()});

  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double fp = loss(p, s, forward(net, Z));
    param = keep - h;
    const double fm = loss(p, s, forward(net, Z));
    param = keep;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(fd), 1e-2 * gmax));
  };
  for (int l = 0; l < net.depth(); ++l) {
    for (Eigen::Index k = 0; k < net.layers[l].values.size(); ++k) probe(net.layers[l].values[k], grad.values[l][k]);
    for (Eigen::Index k = 0; k < net.layers[l].bias.size(); ++k) probe(net.layers[l].bias[k], grad.bias[l][k]);
  }
  return worst;
}

Outcome gradients() {
  const double sw = loss_fd_deviation(Activation::swish), re = loss_fd_deviation(Activation::relu);
  return {sw <= kGradTol && re <= kGradTol, "max rel deviation swish " + fmt(sw) + ", relu " + fmt(re)};
}

Outcome uat_exactness() {
  const Problem p = make_problem(Family::poisson2d, 6);
  const BasisGraph graph = build_basis_graph(p.mesh, p.dof);
  const GSparseFactorization inv = gsparse_factorization(Eigen::MatrixXd(p.system.K), graph).inverse(graph);
  ForcingSampler sampler = ForcingSampler::make(ForcingFamily::trig2d, 1);
  const SampleSet s = sample_batch(sampler, p.mesh, p.dof, 100);
  const double R = s.F.cwiseAbs().maxCoeff();
  const SparseNetwork<double> net = realize_relu(inv, graph, R);
  const Eigen::MatrixXd out = forward(net, Batch<double>(s.F));
  double worst = 0.0;
  for (int k = 0; k < s.size(); ++k) {
    const Eigen::VectorXd a = solve_direct(p.system.K, s.F.row(k).transpose()).alpha;
    worst = std::max(worst, (out.row(k).transpose() - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff());
  }
  const bool sparse = layers_g_sparse(net, graph);

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(3, 50);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  double comm = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int i = idx[0], j = idx[1], k = idx[2];
    const double a = coef(rng), b = coef(rng);
    const Eigen::MatrixXd rhs =
        ElementaryFactor::transvection(i, k, a).dense(n) * ElementaryFactor::transvection(k, j, b).dense(n) *
        ElementaryFactor::transvection(i, k, -a).dense(n) * ElementaryFactor::transvection(k, j, -b).dense(n);
    comm = std::max(comm, (rhs - ElementaryFactor::transvection(i, j, a * b).dense(n)).cwiseAbs().maxCoeff());
  }
  return {worst <= kUatTol && sparse && comm <= kCommutatorTol,
          "depth " + std::to_string(net.depth()) + ", max rel deviation " + fmt(worst) + ", G-sparse " +
              (sparse ? "yes" : "no") + ", commutator " + fmt(comm)};
}

Outcome desk_training() {
  std::string detail;
  bool ok = true;
  for (Family f : {Family::poisson2d, Family::adr2d}) {
    const RunResult r = run_training(desk_config(f, 16, 3));
    ok = ok && !r.state.diverged && r.test.mean_rel_l2 < kTrainTol;
    detail += (detail.empty() ? "" : ", ") + to_string(f) + " test rel-L2 " + fmt(r.test.mean_rel_l2);
  }
  return {ok, detail + " (batch " + std::to_string(kTrainBatch) + ")"};
}

Outcome connectivity_ablation() {
  TrainConfig c = desk_config(Family::poisson2d, 16, 3);
  c.epochs = kAblationEpochs;
  c.eval_interval = kAblationEpochs;
  const CompareRandomResult r = compare_random(c, kAblationSeeds);
  return {r.ratio >= kAblationRatio, "FEM " + fmt(r.fem.test.mean_rel_l2) + ", random mean " + fmt(r.random_mean) +
                                         ", ratio " + fmt(r.ratio) + " at " + std::to_string(kAblationEpochs) + " epochs"};
}

Outcome stability_scaling() {
  StabilityConfig dense;
  dense.c_level = 0;
  dense.trials = kStabilityTrials;
  StabilityConfig sparse = dense;
  sparse.c_level = 5;
  const auto d = stability(dense);
  const auto s = stability(sparse);

  bool ok = true;
  for (std::size_t k = 1; k < d.size(); ++k) ok = ok && d[k].report.mean > d[k - 1].report.mean;
  double worst_norm = 0.0;
  for (const auto* set : {&d, &s}) {
    for (const auto& p : *set) ok = ok && p.report.max <= p.report.bound && p.report.mean <= p.report.bound;
  }
  for (const auto& p : d) {
    const double expect = 2.0 * dense.sigma * std::sqrt(static_cast<double>(p.report.n_h));
    for (double v : p.report.spectral_norms) worst_norm = std::max(worst_norm, std::abs(v / expect - 1.0));
  }
  const double dr = d.back().report.mean / d.front().report.mean;
  const double sr = s.back().report.mean / s.front().report.mean;
  ok = ok && dr > kDenseRatio && sr < kSparseRatio && worst_norm <= kSpectralBand;
  return {ok, "dense ratio " + fmt(dr) + ", sparse ratio " + fmt(sr) + ", spectral deviation " + fmt(worst_norm)};
}

Outcome burgers() {
  const Problem p = make_problem(Family::burgers1d, 64);
  ForcingSampler sampler = ForcingSampler::make(ForcingFamily::trig1d, 1);
  const SampleSet s = sample_batch(sampler, p.mesh, p.dof, 100);
  int worst_it = 0, failures = 0;
  double worst_res = 0.0;
  for (int k = 0; k < s.size(); ++k) {
    try {
      const NewtonReport nr = newton_burgers(p.system, s.F.row(k).transpose(), {kNewtonIterations, kNewtonTol});
      worst_it = std::max(worst_it, nr.iterations);
      worst_res = std::max(worst_res, nr.residual_norm);
    } catch (const Error&) {
      ++failures;
    }
  }
  TrainConfig c = desk_config(Family::burgers1d, 64, 8);
  c.lr0 = kBurgersLr;
  const RunResult r = run_training(c);
  const bool ok = failures == 0 && worst_res <= kNewtonTol && worst_it <= kNewtonIterations &&
                  r.test.mean_rel_l2 < kBurgersTol;
  return {ok, "Newton failures " + std::to_string(failures) + ", max iterations " + std::to_string(worst_it) +
                  ", max |R| " + fmt(worst_res) + ", test rel-L2 " + fmt(r.test.mean_rel_l2)};
}

Outcome properties() {
  std::vector<std::string> failed;
  auto require = [&](bool cond, const std::string& what) {
    if (!cond) failed.push_back(what);
  };

  const Mesh mesh = build_square(16, -1.0, 1.0);
  const DofMap dof = build_dofmap(mesh);
  const BasisGraph graph = build_basis_graph(mesh, dof);
  const int N = dof.size();
  const int diam = diameter(graph);
  std::int64_t prev = 0;
  for (int c = 1; c <= diam + 2; ++c) {
    const std::int64_t nnz = build_pattern(graph, c).nnz();
    require(nnz >= prev, "monotone in C");
    if (c >= diam) require(nnz == static_cast<std::int64_t>(N) * N, "saturated at the diameter");
    prev = nnz;
  }
  const SparsityPattern p1 = build_pattern(graph, 1);
  SparsityPattern acc = p1;
  for (int L = 2; L <= 4; ++L) {
    acc = compose(acc, p1);
    require(acc == build_pattern(graph, L), "receptive field of depth " + std::to_string(L));
  }
  require(compose(build_pattern(graph, 2), build_pattern(graph, 3)) == build_pattern(graph, 5), "2 + 3 = 5");

  TrainConfig c;
  c.n = 6;
  c.c_level = 1;
  c.layers = 3;
  c.epochs = 15;
  c.samples_train = 40;
  c.samples_test = 20;
  c.eval_interval = 5;
  const Experiment exp = make_experiment(c);
  const TrainState a = train(exp), b = train(exp);
  bool inside = true, same = a.epoch_loss == b.epoch_loss;
  for (int l = 0; l < a.net.depth(); ++l) {
    const Eigen::MatrixXd W = a.net.layers[l].dense();
    for (int i = 0; i < W.rows(); ++i)
      for (int j = 0; j < W.cols(); ++j) inside = inside && (exp.pattern->contains(i, j) || W(i, j) == 0.0);
    same = same && a.net.layers[l].values == b.net.layers[l].values && a.net.layers[l].bias == b.net.layers[l].bias;
  }
  require(inside, "off-pattern weights stay zero");
  require(same, "deterministic rerun");

  for (Family f : {Family::poisson2d, Family::adr2d, Family::helmholtz2d, Family::burgers1d}) {
    const Problem p = make_problem(f, f == Family::burgers1d ? 32 : 8);
    ForcingSampler sampler = ForcingSampler::make(forcing_of(f), 5);
    const SampleSet s = sample_batch(sampler, p.mesh, p.dof, 10);
    require(loss(p, s, FemOracle(p).solve(s)) <= 1e-9 * s.F.rowwise().norm().mean(), "zero loss for " + to_string(f));
  }

  Checkpoint ck{a.net, a.input_scale, c.to_map()};
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const Checkpoint back = read_checkpoint(buf);
  bool exact = back.input_scale == ck.input_scale && back.meta == ck.meta && back.net.depth() == ck.net.depth();
  for (int l = 0; exact && l < ck.net.depth(); ++l) {
    exact = std::memcmp(back.net.layers[l].values.data(), ck.net.layers[l].values.data(),
                        sizeof(double) * ck.net.layers[l].values.size()) == 0 &&
            std::memcmp(back.net.layers[l].bias.data(), ck.net.layers[l].bias.data(),
                        sizeof(double) * ck.net.layers[l].bias.size()) == 0;
  }
  require(exact, "checkpoint round trip");

  std::string detail = failed.empty() ? "all properties hold" : "failed:";
  for (const auto& f : failed) detail += " [" + f + "]";
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "criteria to run (default all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::function<Outcome()>> criteria = {
      weight_counts, fem_convergence, gradients, uat_exactness, desk_training,
      connectivity_ablation, stability_scaling, burgers, properties,
  };
  bool all = true;
  for (int k : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << k << " " << (o.pass ? "PASS" : "FAIL") << " " << o.detail << " (" << fmt(secs)
              << "s)" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
