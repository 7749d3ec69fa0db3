// Acceptance criteria, one PASS/FAIL line each. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "memcap/capacity.hpp"
#include "memcap/cli.hpp"
#include "memcap/construct_fnn.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/serialize.hpp"
#include "oracles.hpp"

using namespace memcap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Max |f(x_i) - y_i| with the loop-based forward pass.
double oracle_fit_error(const FnnParams& p, const Dataset& d) {
  double worst = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    const std::vector<double> x(d.X.row(i).data(), d.X.row(i).data() + d.X.cols());
    const Eigen::RowVectorXd xi = d.X.row(i);
    const std::vector<double> xv(xi.data(), xi.data() + xi.size());
    const std::vector<double> out = oracle::forward(p, xv);
    for (int j = 0; j < static_cast<int>(out.size()); ++j) {
      const double target = d.is_classification() ? (d.labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0) : d.Y(i, j);
      worst = std::max(worst, std::abs(out[static_cast<std::size_t>(j)] - target));
    }
  }
  return worst;
}

int argmax_errors(const Eigen::MatrixXd& out, const std::vector<int>& labels) {
  int wrong = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index k;
    out.row(i).maxCoeff(&k);
    if (k != labels[static_cast<std::size_t>(i)]) ++wrong;
  }
  return wrong;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return run_command(args, out, err);
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  return Json::parse(in);
}

Outcome regression_fit(const Activation& act, int width) {
  double worst = 0.0, slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset d = gen_dataset(DatasetKind::regression_uniform, 1024, 10, 1, seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = construct_3layer(d, width, width, act, seed);
    slowest = std::max(slowest, seconds_since(t0));
    worst = std::max(worst, oracle_fit_error(c.params, d));
  }
  return {worst <= 1e-6 && slowest < 10.0,
          "max fit error " + fmt("%.2e", worst) + ", slowest seed " + fmt("%.2f", slowest) + " s"};
}

Outcome c1() { return regression_fit(Activation::hard_tanh(), 32); }
Outcome c2() { return regression_fit(Activation::relu_like(), 64); }

Outcome c3() {
  const Dataset d = gen_dataset(DatasetKind::classification_gaussian, 400, 10, 10, 3);
  const auto ht = construct_4layer_classifier(d, 20, 20, 20, Activation::hard_tanh(), 3);
  const auto relu = construct_4layer_classifier(d, 40, 40, 40, Activation::relu_like(), 3);
  const int w1 = argmax_errors(fnn_forward_batch(ht.params, d.X), d.labels);
  const int w2 = argmax_errors(fnn_forward_batch(relu.params, d.X), d.labels);
  const double e1 = oracle_fit_error(ht.params, d), e2 = oracle_fit_error(relu.params, d);
  return {w1 == 0 && w2 == 0 && e1 <= 1e-6 && e2 <= 1e-6,
          "misclassified " + std::to_string(w1) + "/" + std::to_string(w2) + ", one-hot error " + fmt("%.2e", e1) + "/" +
              fmt("%.2e", e2)};
}

Outcome c4() {
  const Dataset d = gen_dataset(DatasetKind::regression_uniform, 512, 10, 1, 4);
  const auto deep = construct_deep(d, BlockLayout{{18, 18, 18, 18}, {1, 3}, 1}, Activation::hard_tanh(), 4);
  const double err = oracle_fit_error(deep.params, d);
  bool split = deep.report.blocks.size() == 2;
  for (const auto& b : deep.report.blocks) split = split && b.points == 256;

  const Dataset d1 = gen_dataset(DatasetKind::regression_uniform, 256, 10, 1, 40);
  const auto one = construct_deep(d1, BlockLayout{{16, 16}, {1}, 1}, Activation::hard_tanh(), 40);
  const auto flat = construct_3layer(d1, 16, 16, Activation::hard_tanh(), 40);
  Rng rng(41);
  Eigen::MatrixXd probes(d1.size() + 500, 10);
  probes << d1.X, gaussian_matrix(rng, 500, 10);
  const double diff = (fnn_forward_batch(one.params, probes) - fnn_forward_batch(flat.params, probes)).cwiseAbs().maxCoeff();
  return {err <= 1e-6 && split && diff <= 1e-9,
          "two-block fit error " + fmt("%.2e", err) + (split ? " (256+256)" : " (uneven split)") +
              ", single-block vs three-layer " + fmt("%.2e", diff)};
}

Outcome c5() {
  const Dataset d = gen_dataset(DatasetKind::general_position, 600, 20, 3, 5);
  const auto res = construct_resnet_classifier(d, Activation::hard_tanh(), 5);
  const auto fnn = construct_2layer_classifier(d, Activation::hard_tanh(), 5);
  const auto res_r = construct_resnet_classifier(d, Activation::relu_like(), 5);
  const auto fnn_r = construct_2layer_classifier(d, Activation::relu_like(), 5);
  const int nodes = res.params.hidden_nodes(), width = fnn.params.hidden_widths()[0];
  const int nodes_r = res_r.params.hidden_nodes(), width_r = fnn_r.params.hidden_widths()[0];
  const int wrong = argmax_errors(resnet_forward_batch(res.params, d.X), d.labels) +
                    argmax_errors(fnn_forward_batch(fnn.params, d.X), d.labels) +
                    argmax_errors(resnet_forward_batch(res_r.params, d.X), d.labels) +
                    argmax_errors(fnn_forward_batch(fnn_r.params, d.X), d.labels);
  return {nodes == 66 && width == 66 && nodes_r == 132 && width_r == 132 && wrong == 0,
          "resnet " + std::to_string(nodes) + " nodes, fnn2 width " + std::to_string(width) + ", relu " +
              std::to_string(nodes_r) + "/" + std::to_string(width_r) + ", misclassified " + std::to_string(wrong)};
}

Outcome c6() {
  const long long r = node_budget(50000, 3072, 10, GenposArch::resnet, Activation::relu_like());
  const long long f = node_budget(50000, 3072, 10, GenposArch::fnn2, Activation::relu_like());
  return {r == 126 && f == 106, "resnet " + std::to_string(r) + ", fnn2 " + std::to_string(f)};
}

Outcome c7() {
  Rng rng(7);
  std::uniform_int_distribution<int> width(1, 8), dim(1, 4), depth(2, 3);
  int over = 0, mismatch = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Activation a = rep % 2 == 0 ? Activation::relu_like(1.0, uniform(rng, 0.0, 0.5)) : Activation::hard_tanh();
    const int dx = dim(rng), L = depth(rng), d1 = width(rng), d2 = width(rng);
    const FnnParams net = L == 2 ? fixture::random_fnn(rng, {dx, d1, 1}, a) : fixture::random_fnn(rng, {dx, d1, d2, 1}, a);
    const Eigen::VectorXd u = gaussian_vector(rng, dx);
    const PiecewiseLinear1D f = restrict_to_line(net, u);
    const long long bound = L == 2 ? piece_bound(2, a.pieces(), d1) : piece_bound(3, a.pieces(), d1, d2);
    if (f.pieces() > bound) ++over;
    const double lo = f.breakpoints().empty() ? -1.0 : f.breakpoints().front() - 1.0;
    const double hi = f.breakpoints().empty() ? 1.0 : f.breakpoints().back() + 1.0;
    oracle::PieceCounter pc([&](long double t) { return oracle::forward_on_line(net, u, t); });
    if (pc.count(lo, hi, 20000) != f.pieces()) ++mismatch;
  }
  FnnParams relu4 = fixture::random_fnn(rng, {2, 4, 1}, Activation::relu_like());
  const RefuteResult r = refute_fit(relu4, hard_dataset(8, Eigen::Vector2d(1.0, 0.0)));
  return {over == 0 && mismatch == 0 && r.verdict == "impossible",
          std::to_string(over) + " bound violations, " + std::to_string(mismatch) +
              " oracle mismatches, refutation " + r.verdict};
}

PiecewiseLinear1D random_pwl(Rng& rng, int k) {
  std::vector<double> bp;
  while (static_cast<int>(bp.size()) < k - 1) {
    const double t = uniform(rng, -5, 5);
    if (std::none_of(bp.begin(), bp.end(), [&](double b) { return std::abs(b - t) < 1e-6; })) bp.push_back(t);
  }
  std::sort(bp.begin(), bp.end());
  std::vector<double> slopes;
  for (int i = 0; i < k; ++i) slopes.push_back(uniform(rng, -3, 3));
  return PiecewiseLinear1D(bp, slopes, 0.0, uniform(rng, -2, 2));
}

Outcome c8() {
  Rng rng(8);
  std::uniform_int_distribution<int> pieces(1, 12), kind(0, 2);
  int violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const PiecewiseLinear1D f = random_pwl(rng, pieces(rng)), g = random_pwl(rng, pieces(rng));
    if (pwl_add(f, g).pieces() > f.pieces() + g.pieces() - 1) ++violations;
    const Activation a = kind(rng) == 0   ? Activation::relu_like(1.0, uniform(rng, 0.0, 0.5))
                         : kind(rng) == 1 ? Activation::hard_tanh()
                                          : Activation::gate();
    if (pwl_compose_activation(a, f).pieces() > a.pieces() * f.pieces()) ++violations;
  }
  return {violations == 0, std::to_string(violations) + " violations"};
}

Outcome c9() {
  Rng rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> pick_p(1, 8), pick_q(1, 6);
  int bad = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const int p = pick_p(rng), q = pick_q(rng), n = p * q;
    std::vector<double> c(static_cast<std::size_t>(n) + 2);
    double t = g(rng);
    for (auto& v : c) {
      v = t;
      t += std::exp(g(rng));
    }
    const Layer1Coefficients co = layer1_coefficients(c, p, q);
    Eigen::MatrixXd A(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        A(i, j) = oracle::act(Activation::hard_tanh(), co.scale(j) * c[static_cast<std::size_t>(i) + 1] + co.bias(j));
    const int k = std::uniform_int_distribution<int>(1, q)(rng);
    const auto members = index_set(k, p, q);
    Eigen::MatrixXd M(p, p + 1);
    for (int j = 0; j < p; ++j) {
      M.row(j).head(p) = A.row(members[static_cast<std::size_t>(j)] - 1);
      M(j, p) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-12);
    const Eigen::MatrixXd ker = lu.kernel();
    const bool rank_ok = lu.rank() == p && ker.cols() == 1;
    const bool signed_ok =
        rank_ok && ((ker.col(0).head(p).array() > 0).all() || (ker.col(0).head(p).array() < 0).all());
    if (!signed_ok) ++bad;
  }
  return {bad == 0, std::to_string(bad) + " of 200 instances fail"};
}

Outcome c10() {
  Rng rng(10);
  const FnnParams p = fixture::random_fnn(rng, {4, 8, 8, 1}, Activation::hard_tanh());
  double worst = 0.0;
  int checked = 0;
  while (checked < 100) {
    const Eigen::VectorXd x = gaussian_vector(rng, 4);
    if (!is_differentiable_at(p, x.transpose(), 1e-4)) continue;
    const Eigen::VectorXd g = fnn_gradient(p, x);
    const Eigen::VectorXd fd = oracle::fd_gradient(p, x, 1e-6);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), fd.norm()));
    ++checked;
  }
  const FnnParams q = fixture::random_fnn(rng, {4, 8, 8, 1}, Activation::relu_like(1.0, 0.1));
  checked = 0;
  while (checked < 100) {
    const Eigen::VectorXd x = gaussian_vector(rng, 4);
    if (!is_differentiable_at(q, x.transpose(), 1e-4)) continue;
    const Eigen::VectorXd g = fnn_gradient(q, x);
    const Eigen::VectorXd fd = oracle::fd_gradient(q, x, 1e-6);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), fd.norm()));
    ++checked;
  }
  return {worst <= 1e-6, "max relative error " + fmt("%.2e", worst) + " over 2 x 100 points"};
}

Outcome c11(const fs::path& dir) {
  const std::string report = (dir / "sgd.json").string();
  const int code = cli({"sgd-probe", "--seed", "1", "--report", report});
  const Json r = read_json(report);
  bool fast = true;
  std::string detail;
  const auto& per = r["per_epsilon"];
  for (std::size_t i = 0; i < per.size(); ++i) {
    const Json& run = per[i];
    const double s = r["timing"]["per_epsilon_seconds"][i].get<double>();
    fast = fast && s < 60.0;
    detail += fmt("eps %.4g: ", run["epsilon"].get<double>()) +
              (run["t_star"].get<int>() < 0 ? std::string("no t*") : "t* " + run["t_star"].dump()) +
              fmt(", xi ratio %.2f", run["xi_ratio"].get<double>()) +
              fmt(", %.1f s; ", s);
  }
  const double slope = r["slope_fit"].is_null() ? NAN : r["slope_fit"].get<double>();
  detail += "slope " + fmt("%.3f", slope);
  return {code == 0 && r["pass"] == true && fast && std::abs(slope - 4.0) <= 0.5, detail};
}

Outcome c12(const fs::path& dir) {
  const std::string rep = (dir / "det.json").string(), net = (dir / "net.json").string(),
                    data = (dir / "data.csv").string();
  const std::vector<std::vector<std::string>> commands{
      {"construct", "3layer", "--n", "64", "--d1", "8", "--d2", "8", "--seed", "12", "--net", net, "--data-out", data},
      {"construct", "4layer", "--n", "60", "--d1", "8", "--d2", "8", "--d3", "6", "--seed", "12", "--net", net,
       "--data-out", data},
      {"construct", "deep", "--n", "64", "--widths", "10,10,10,10", "--blocks", "1,3", "--seed", "12", "--net", net,
       "--data-out", data},
      {"construct", "resnet", "--n", "60", "--dx", "5", "--seed", "12", "--net", net, "--data-out", data},
      {"construct", "fnn2", "--n", "60", "--dx", "5", "--seed", "12", "--net", net, "--data-out", data},
      {"verify", "--net", net, "--data", data},
      {"genpos-check", "--n", "50", "--dx", "4", "--seed", "12"},
      {"gradcheck", "--points", "30", "--seed", "12"},
      {"sgd-probe", "--n", "16", "--d1", "8", "--d2", "2", "--batch", "4", "--max-epochs", "200", "--seed", "12"},
  };
  int differing = 0;
  for (const auto& cmd : commands) {
    std::vector<std::string> args = cmd;
    args.insert(args.end(), {"--report", rep});
    cli(args);
    Json a = read_json(rep);
    cli(args);
    Json b = read_json(rep);
    a.erase("timing");
    b.erase("timing");
    if (a.dump() != b.dump()) ++differing;
  }
  return {differing == 0, std::to_string(differing) + " of " + std::to_string(commands.size()) + " commands differ"};
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / "memcap-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"three-layer hard-tanh fit, N=1024, widths 32/32", c1},
      {"three-layer ReLU fit, widths 64/64", c2},
      {"four-layer one-hot recovery, N=400, 10 classes", c3},
      {"deep block layout, N=512 over two blocks; single block equals three-layer", c4},
      {"general-position classifiers with 66 (ReLU 132) hidden nodes", c5},
      {"node budgets 126 and 106", c6},
      {"piece counts of 1000 random nets: bound and sampling oracle", c7},
      {"sum and composition piece bounds on 1000 pairs", c8},
      {"200 layer-2 systems: full rank, one-signed null vector", c9},
      {"analytic gradient vs central differences", c10},
      {"SGD decay near a memorizing minimum", [&] { return c11(dir); }},
      {"CLI report determinism", [&] { return c12(dir); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu  %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  fs::remove_all(dir);
  return failures;
}
