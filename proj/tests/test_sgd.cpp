#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "memcap/construct_fnn.hpp"
#include "memcap/sgd.hpp"
#include "oracles.hpp"

using namespace memcap;

namespace {

struct Minimum {
  Dataset data;
  FnnParams params;
};

Minimum memorizing_min(int n, int d_x, int d1, int d2, std::uint64_t seed, double gain = 1.0) {
  Dataset d = gen_dataset(DatasetKind::regression_uniform, n, d_x, 1, seed);
  ConstructOptions opts;
  opts.output_gain = gain;
  auto c = construct_3layer(d, d1, d2, Activation::hard_tanh(), seed, opts);
  return {std::move(d), std::move(c.params)};
}

FnnParams perturbed(const FnnParams& p, double eps, std::uint64_t seed) {
  Rng rng(seed);
  FnnParams q = p;
  const Eigen::VectorXd dir = gaussian_vector(rng, static_cast<Eigen::Index>(p.num_params())).normalized();
  assign_params(q, flatten_params(p) + eps * dir);
  return q;
}

FnnParams linear_model(const Eigen::VectorXd& w, double b) {
  FnnParams p;
  p.activation = Activation::relu_like();
  p.layers.push_back({w.transpose(), Eigen::VectorXd::Constant(1, b)});
  return p;
}

}  // namespace

TEST_CASE("empirical_risk examples") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 1);
  CHECK(empirical_risk(m.params, m.data) < 1e-20);

  Rng rng(2);
  const Eigen::MatrixXd X = gaussian_matrix(rng, 10, 3);
  const FnnParams zero = linear_model(Eigen::VectorXd::Zero(3), 0.0);
  CHECK(empirical_risk(zero, Dataset::regression(X, Eigen::MatrixXd::Ones(10, 1))) == doctest::Approx(0.5));

  for (int rep = 0; rep < 10; ++rep) {
    const FnnParams p = fixture::random_fnn(rng, {3, 5, 4, 1}, Activation::hard_tanh());
    const Eigen::MatrixXd Xr = gaussian_matrix(rng, 40, 3), Y = gaussian_matrix(rng, 40, 1);
    Eigen::MatrixXd out(40, 1);
    for (int i = 0; i < 40; ++i) out(i, 0) = oracle::forward_scalar(p, Xr.row(i).transpose());
    CHECK(std::abs(empirical_risk(p, Dataset::regression(Xr, Y)) - oracle::naive_risk(out, Y)) < 1e-12);
  }
}

TEST_CASE("is_memorizing_min examples") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 3);
  CHECK(is_memorizing_min(m.params, m.data));
  CHECK_FALSE(is_memorizing_min(perturbed(m.params, 0.1, 4), m.data));
  const Dataset empty = Dataset::regression(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 1));
  CHECK(is_memorizing_min(m.params, empty));
}

TEST_CASE("tangent_basis: empty data has rank 0 and no positive spectrum") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 5);
  const Dataset empty = Dataset::regression(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 1));
  const TangentBasis tb = tangent_basis(m.params, empty);
  CHECK(tb.rank == 0);
  CHECK(tb.Q.cols() == 0);
  CHECK_FALSE(empirical_H_spectrum(m.params, empty, tb).positive);
}

TEST_CASE("tangent_basis and spectrum for a one-point linear model") {
  const Eigen::Vector3d w(0.3, -0.2, 0.5);
  const Eigen::RowVector3d x(1.0, 2.0, -1.0);
  const FnnParams p = linear_model(w, 0.1);
  const double y = x.dot(w) + 0.1;
  const Dataset d = Dataset::regression(x, Eigen::MatrixXd::Constant(1, 1, y));
  const TangentBasis tb = tangent_basis(p, d);
  REQUIRE(tb.rank == 1);
  Eigen::Vector4d expect(1.0, 2.0, -1.0, 1.0);
  expect.normalize();
  CHECK(std::abs(std::abs(tb.Q.col(0).dot(expect)) - 1.0) < 1e-12);
  const HSpectrum h = empirical_H_spectrum(p, d, tb);
  CHECK(h.positive);
  CHECK(h.lambda_min_pos == doctest::Approx(7.0));
  CHECK(h.lambda_max == doctest::Approx(7.0));
}

TEST_CASE("tangent_basis on a fitted network") {
  const Minimum m = memorizing_min(32, 3, 8, 4, 6);
  const TangentBasis tb = tangent_basis(m.params, m.data);
  CHECK(tb.rank == tb.rank_qr);
  CHECK(tb.rank > 0);
  CHECK(tb.rank <= 32);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(tb.rank, tb.rank);
  CHECK((tb.Q.transpose() * tb.Q - I).cwiseAbs().maxCoeff() < 1e-10);
  for (int i = 0; i < 32; ++i) {
    const Eigen::VectorXd nu = tb.nu.col(i);
    CHECK((tb.Q * (tb.Q.transpose() * nu) - nu).norm() <= 1e-8 * nu.norm());
  }
  const HSpectrum h = empirical_H_spectrum(m.params, m.data, tb);
  const double pi = oracle::power_iteration(tb.nu * tb.nu.transpose());
  CHECK(std::abs(h.lambda_max - pi) <= 1e-6 * pi);
  CHECK(h.lambda_min_pos > 0);
  CHECK(h.lambda_min_pos <= h.lambda_max);
}

TEST_CASE("xi_decompose examples") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 7);
  const TangentBasis tb = tangent_basis(m.params, m.data);
  const Eigen::VectorXd star = flatten_params(m.params);
  const XiParts zero = xi_decompose(star, star, tb);
  CHECK(zero.par == 0.0);
  CHECK(zero.perp == 0.0);
  const XiParts in_span = xi_decompose(star + tb.nu.col(0), star, tb);
  CHECK(in_span.par == doctest::Approx(tb.nu.col(0).norm()));
  CHECK(in_span.perp < 1e-10 * tb.nu.col(0).norm());
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd xi = gaussian_vector(rng, star.size());
    const XiParts parts = xi_decompose(star + xi, star, tb);
    CHECK(std::abs(parts.par * parts.par + parts.perp * parts.perp - xi.squaredNorm()) <= 1e-10 * xi.squaredNorm());
  }
  CHECK_THROWS_AS(xi_decompose(Eigen::VectorXd::Zero(3), star, tb), DimensionError);
}

TEST_CASE("sgd_run: zero step size leaves the parameters fixed") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 9);
  const FnnParams start = perturbed(m.params, 1e-2, 10);
  const SgdTrace tr = sgd_run(start, m.data, 0.0, 4, 3, 11);
  CHECK(tr.final_theta == flatten_params(start));
  CHECK(tr.steps.size() == 13);
  for (const auto& s : tr.steps) CHECK(s.risk == tr.steps.front().risk);
}

TEST_CASE("sgd_run: every epoch partitions the data into disjoint batches") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 12);
  const SgdTrace tr = sgd_run(perturbed(m.params, 1e-2, 13), m.data, 1e-3, 4, 5, 14);
  CHECK(tr.epoch_length == 4);
  for (int k = 0; k < 5; ++k) {
    std::set<int> seen;
    for (int s = 0; s < 4; ++s) {
      const auto& b = tr.steps[static_cast<std::size_t>(k * 4 + s)].batch;
      CHECK(b.size() == 4);
      seen.insert(b.begin(), b.end());
    }
    CHECK(seen.size() == 16);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 15);
  }
}

TEST_CASE("sgd_run: epoch-averaged batch gradients equal the full gradient") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 15);
  const FnnParams p = perturbed(m.params, 1e-2, 16);
  const SgdTrace tr = sgd_run(p, m.data, 0.0, 4, 1, 17);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.num_params()));
  for (int s = 0; s < 4; ++s) avg += risk_gradient(p, m.data, tr.steps[static_cast<std::size_t>(s)].batch) / 4.0;
  CHECK((avg - risk_gradient(p, m.data)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sgd_run: full-batch steps decrease the risk near a minimum") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 18, 5.0);
  const HSpectrum h = empirical_H_spectrum(m.params, m.data, tangent_basis(m.params, m.data));
  const FnnParams start = perturbed(m.params, 1e-4, 19);
  REQUIRE(activation_pattern(start, m.data.X) == activation_pattern(m.params, m.data.X));
  const SgdTrace tr = sgd_run(start, m.data, 1.0 / h.lambda_max, 16, 200, 20);
  CHECK(tr.halt_reason.empty());
  for (std::size_t t = 1; t < tr.steps.size(); ++t) CHECK(tr.steps[t].risk <= tr.steps[t - 1].risk);
  CHECK(tr.steps.back().risk < tr.steps.front().risk);
}

TEST_CASE("sgd_run is deterministic and validates its arguments") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 21);
  const FnnParams start = perturbed(m.params, 1e-2, 22);
  const TangentBasis tb = tangent_basis(m.params, m.data);
  const Eigen::VectorXd star = flatten_params(m.params);
  SgdMonitor mon{&star, &tb, std::nullopt, nullptr};
  const SgdTrace a = sgd_run(start, m.data, 1e-3, 4, 10, 23, mon);
  const SgdTrace b = sgd_run(start, m.data, 1e-3, 4, 10, 23, mon);
  CHECK(a.final_theta == b.final_theta);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].batch == b.steps[t].batch);
    CHECK(a.steps[t].xi_par == b.steps[t].xi_par);
    CHECK(a.steps[t].xi_perp == b.steps[t].xi_perp);
    CHECK(a.steps[t].risk == b.steps[t].risk);
  }
  CHECK_THROWS(sgd_run(start, m.data, 1e-3, 5, 1, 1));
  CHECK_THROWS(sgd_run(start, m.data, -1.0, 4, 1, 1));
}

TEST_CASE("first-order residual law near a minimum") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 24, 5.0);
  const TangentBasis tb = tangent_basis(m.params, m.data);
  Rng rng(25);
  const Eigen::VectorXd star = flatten_params(m.params);
  const Eigen::VectorXd dir = gaussian_vector(rng, star.size()).normalized();
  auto remainder = [&](double eps) {
    FnnParams q = m.params;
    assign_params(q, star + eps * dir);
    const Eigen::VectorXd xi_par = tb.Q * (tb.Q.transpose() * (eps * dir));
    double worst = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double lp = fnn_forward(q, m.data.X.row(i).transpose())(0) - m.data.Y(i, 0);
      worst = std::max(worst, std::abs(lp - tb.nu.col(i).dot(xi_par)));
    }
    return worst;
  };
  const double r1 = remainder(1e-4), r2 = remainder(5e-5);
  CHECK(r1 > 0);
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("probe: a large tau stops at the first step and shows quadratic risk") {
  const Minimum m = memorizing_min(16, 2, 4, 4, 26);
  ProbeOptions po;
  po.tau = 1e6;
  po.max_epochs = 10;
  po.batch = 4;
  po.seed = 27;
  const ProbeReport rep = probe_theorem5(m.params, m.data, po);
  REQUIRE(rep.runs.size() == 3);
  for (const auto& r : rep.runs) {
    CHECK(r.t_star == 0);
    CHECK(r.xi_ratio == doctest::Approx(1.0));
    CHECK(r.contraction_factors.empty());
  }
  REQUIRE(rep.slope.has_value());
  CHECK(*rep.slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("probe: contraction before the stopping step") {
  const Minimum m = memorizing_min(16, 1, 4, 4, 28, 5.0);
  const HSpectrum h = empirical_H_spectrum(m.params, m.data, tangent_basis(m.params, m.data));
  ProbeOptions po;
  po.tau = 4;
  po.max_epochs = 2000;
  po.batch = 4;
  po.eta = po.batch / (2 * h.lambda_max);
  po.seed = 29;
  po.epsilons = {1e-3};
  const ProbeReport rep = probe_theorem5(m.params, m.data, po);
  REQUIRE(rep.runs.size() == 1);
  const auto& r = rep.runs[0];
  CHECK_FALSE(r.pattern_changed);
  REQUIRE_FALSE(r.contraction_factors.empty());
  for (double c : r.contraction_factors) CHECK(c < 1.0);
  CHECK(rep.spectrum.lambda_max == doctest::Approx(h.lambda_max));
}

TEST_CASE("loglog_slope recovers a power law") {
  const std::vector<double> x{1e-2, 5e-3, 2.5e-3};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 4));
  CHECK(loglog_slope(x, y) == doctest::Approx(4.0));
  CHECK_THROWS(loglog_slope({1.0}, {1.0}));
}
