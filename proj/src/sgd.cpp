#include "memcap/sgd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "memcap/rng.hpp"

namespace memcap {

namespace {

void require_scalar(const FnnParams& params, const Dataset& data) {
  if (params.output_dim() != 1 || data.output_dim() != 1 || data.is_classification())
    throw DimensionError("SGD tools need scalar regression targets");
}

}  // namespace

double empirical_risk(const FnnParams& params, const Dataset& data) {
  require_scalar(params, data);
  if (data.size() == 0) return 0.0;
  const Eigen::MatrixXd out = fnn_forward_batch(params, data.X);
  double sum = 0.0;
  for (int i = 0; i < data.size(); ++i) sum += SquaredLoss::value(out(i, 0), data.Y(i, 0));
  return sum / data.size();
}

bool is_memorizing_min(const FnnParams& params, const Dataset& data, double tol, double margin) {
  require_scalar(params, data);
  if (data.size() == 0) return true;
  const Eigen::MatrixXd out = fnn_forward_batch(params, data.X);
  for (int i = 0; i < data.size(); ++i)
    if (std::abs(SquaredLoss::d1(out(i, 0), data.Y(i, 0))) > tol) return false;
  return is_differentiable_at(params, data.X, margin);
}

Eigen::VectorXd risk_gradient(const FnnParams& params, const Dataset& data, const std::vector<int>& rows) {
  require_scalar(params, data);
  std::vector<int> idx = rows;
  if (idx.empty()) {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.num_params()));
  for (int i : idx) {
    const Eigen::VectorXd x = data.X.row(i).transpose();
    const double z = fnn_forward(params, x)(0);
    g += SquaredLoss::d1(z, data.Y(i, 0)) * fnn_gradient(params, x);
  }
  if (!idx.empty()) g /= static_cast<double>(idx.size());
  return g;
}

TangentBasis tangent_basis(const FnnParams& params, const Dataset& data, double rel_cutoff) {
  require_scalar(params, data);
  TangentBasis tb;
  const Eigen::Index P = static_cast<Eigen::Index>(params.num_params());
  tb.nu.resize(P, data.size());
  for (int i = 0; i < data.size(); ++i) tb.nu.col(i) = fnn_gradient(params, data.X.row(i).transpose());
  if (data.size() == 0) {
    tb.Q.resize(P, 0);
    return tb;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(tb.nu, Eigen::ComputeThinU);
  tb.singular_values = svd.singularValues();
  const double smax = tb.singular_values.size() ? tb.singular_values(0) : 0.0;
  int r = 0;
  if (smax > 0.0)
    while (r < tb.singular_values.size() && tb.singular_values(r) > rel_cutoff * smax) ++r;
  tb.rank = r;
  tb.Q = svd.matrixU().leftCols(r);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(tb.nu);
  qr.setThreshold(rel_cutoff);
  tb.rank_qr = smax > 0.0 ? static_cast<int>(qr.rank()) : 0;
  return tb;
}

XiParts xi_decompose(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star, const TangentBasis& basis) {
  if (theta.size() != theta_star.size() || theta.size() != basis.Q.rows())
    throw DimensionError("parameter vectors and basis disagree in size");
  const Eigen::VectorXd xi = theta - theta_star;
  const Eigen::VectorXd par = basis.Q * (basis.Q.transpose() * xi);
  return {par.norm(), (xi - par).norm()};
}

HSpectrum empirical_H_spectrum(const FnnParams& params, const Dataset& data, const TangentBasis& basis) {
  require_scalar(params, data);
  HSpectrum s;
  if (basis.rank == 0) return s;
  const Eigen::MatrixXd out = fnn_forward_batch(params, data.X);
  Eigen::MatrixXd G = basis.Q.transpose() * basis.nu;  // r x N
  for (int i = 0; i < data.size(); ++i) G.col(i) *= std::sqrt(SquaredLoss::d2(out(i, 0), data.Y(i, 0)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G * G.transpose(), Eigen::EigenvaluesOnly);
  s.eigenvalues = eig.eigenvalues();
  s.lambda_max = s.eigenvalues.maxCoeff();
  s.positive = s.lambda_max > 0.0;
  s.lambda_min_pos = s.lambda_max;
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
    if (s.eigenvalues(i) > 1e-12 * s.lambda_max) s.lambda_min_pos = std::min(s.lambda_min_pos, s.eigenvalues(i));
  return s;
}

SgdTrace sgd_run(const FnnParams& params0, const Dataset& data, double eta, int batch, int epochs, std::uint64_t seed,
                 const SgdMonitor& monitor) {
  require_scalar(params0, data);
  const int n = data.size();
  if (batch < 1 || n % batch != 0) throw std::invalid_argument("batch size must divide N");
  if (!(eta >= 0.0)) throw std::invalid_argument("step size must be non-negative");
  const bool track = monitor.theta_star && monitor.basis;
  SgdTrace trace;
  trace.epoch_length = n / batch;
  trace.seed = seed;
  FnnParams params = params0;
  Eigen::VectorXd theta = flatten_params(params);
  Rng rng(derive_seed(seed, "sgd-partition"));
  std::vector<int> order(n);
  int t = 0;

  auto record = [&](SgdStep& step) {
    step.t = t;
    step.risk = empirical_risk(params, data);
    if (track) {
      const XiParts xi = xi_decompose(theta, *monitor.theta_star, *monitor.basis);
      step.xi_par = xi.par;
      step.xi_perp = xi.perp;
    }
  };
  auto stop_rule = [&](const SgdStep& step) {
    if (!track || !monitor.tau) return false;
    const double xi2 = step.xi_par * step.xi_par + step.xi_perp * step.xi_perp;
    return step.xi_par < *monitor.tau * xi2;
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < trace.epoch_length; ++s, ++t) {
      SgdStep step;
      record(step);
      if (monitor.pattern && activation_pattern(params, data.X) != *monitor.pattern) {
        trace.steps.push_back(step);
        trace.halt_reason = "activation pattern changed";
        trace.halt_step = t;
        trace.final_theta = theta;
        return trace;
      }
      if (stop_rule(step)) {
        trace.steps.push_back(step);
        trace.halt_reason = "tau rule violated";
        trace.halt_step = t;
        trace.final_theta = theta;
        return trace;
      }
      step.batch.assign(order.begin() + s * batch, order.begin() + (s + 1) * batch);
      Eigen::VectorXd g;
      try {
        g = risk_gradient(params, data, step.batch);
      } catch (const NotDifferentiable& e) {
        trace.steps.push_back(step);
        trace.halt_reason = std::string("non-differentiable iterate: ") + e.what();
        trace.halt_step = t;
        trace.final_theta = theta;
        return trace;
      }
      trace.steps.push_back(std::move(step));
      theta -= eta * g;
      assign_params(params, theta);
    }
  }
  SgdStep last;
  record(last);
  trace.steps.push_back(last);
  trace.final_theta = theta;
  return trace;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope fit needs at least two points");
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ProbeReport probe_theorem5(const FnnParams& theta_star, const Dataset& data, const ProbeOptions& opts) {
  if (!is_memorizing_min(theta_star, data)) throw std::invalid_argument("starting point is not a memorizing minimum");
  ProbeReport rep;
  rep.eta = opts.eta;
  rep.batch = opts.batch;
  rep.tau = opts.tau;
  rep.seed = opts.seed;
  const TangentBasis basis = tangent_basis(theta_star, data);
  rep.rank = basis.rank;
  rep.spectrum = empirical_H_spectrum(theta_star, data, basis);
  const Eigen::VectorXd star = flatten_params(theta_star);
  const std::vector<int> pattern = activation_pattern(theta_star, data.X);
  Rng rng(derive_seed(opts.seed, "perturbation-direction"));
  Eigen::VectorXd dir = gaussian_vector(rng, star.size());
  dir.normalize();

  std::vector<double> eps_ok, risk_ok;
  for (std::size_t r = 0; r < opts.epsilons.size(); ++r) {
    EpsilonRun run;
    run.epsilon = opts.epsilons[r];
    FnnParams start = theta_star;
    assign_params(start, star + run.epsilon * dir);
    SgdMonitor mon{&star, &basis, opts.tau, &pattern};
    const auto t0 = std::chrono::steady_clock::now();
    SgdTrace tr = sgd_run(start, data, opts.eta, opts.batch, opts.max_epochs, derive_seed(opts.seed, "sgd", r), mon);
    const auto& s0 = tr.steps.front();
    run.xi_par0 = s0.xi_par;
    run.xi_perp0 = s0.xi_perp;
    const int E = tr.epoch_length;
    for (std::size_t k = 1; static_cast<std::size_t>(k * E) < tr.steps.size(); ++k)
      run.contraction_factors.push_back(tr.steps[k * E].xi_par / tr.steps[(k - 1) * E].xi_par);
    if (tr.halt_reason == "activation pattern changed") {
      run.pattern_changed = true;
      run.diagnostic = "activation pattern changed at step " + std::to_string(tr.halt_step);
    } else if (tr.halt_reason == "tau rule violated") {
      const auto& st = tr.steps.back();
      run.t_star = st.t;
      const double xi0 = std::hypot(s0.xi_par, s0.xi_perp);
      run.xi_ratio = std::hypot(st.xi_par, st.xi_perp) / xi0;
      run.risk_at_tstar = st.risk;
      if (run.risk_at_tstar > 0) {
        eps_ok.push_back(run.epsilon);
        risk_ok.push_back(run.risk_at_tstar);
      }
    } else {
      run.diagnostic = tr.halt_reason.empty() ? "rule held for all epochs" : tr.halt_reason;
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.keep_traces) run.trace = std::move(tr.steps);
    rep.runs.push_back(std::move(run));
  }
  if (eps_ok.size() >= 2) rep.slope = loglog_slope(eps_ok, risk_ok);
  return rep;
}

}  // namespace memcap
