#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memcap/dataset.hpp"
#include "memcap/network.hpp"

namespace memcap {

// l(z; y) = (z - y)^2 / 2.
struct SquaredLoss {
  static double value(double z, double y) { return 0.5 * (z - y) * (z - y); }
  static double d1(double z, double y) { return z - y; }
  static double d2(double, double) { return 1.0; }
};

double empirical_risk(const FnnParams& params, const Dataset& data);
bool is_memorizing_min(const FnnParams& params, const Dataset& data, double tol = 1e-9,
                       double margin = kDefaultDiffMargin);

// Gradient of the empirical risk over a subset of rows (all rows when empty).
Eigen::VectorXd risk_gradient(const FnnParams& params, const Dataset& data, const std::vector<int>& rows = {});

struct TangentBasis {
  Eigen::MatrixXd nu;  // P x N, column i is the parameter gradient at x_i
  Eigen::MatrixXd Q;   // P x r orthonormal
  Eigen::VectorXd singular_values;
  int rank = 0;
  int rank_qr = 0;  // rank from a column-pivoted QR, for comparison
};

TangentBasis tangent_basis(const FnnParams& params, const Dataset& data, double rel_cutoff = 1e-10);

struct XiParts {
  double par = 0.0;
  double perp = 0.0;
};
XiParts xi_decompose(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star, const TangentBasis& basis);

struct HSpectrum {
  bool positive = false;  // false when the span is trivial
  double lambda_min_pos = 0.0;
  double lambda_max = 0.0;
  Eigen::VectorXd eigenvalues;
};
HSpectrum empirical_H_spectrum(const FnnParams& params, const Dataset& data, const TangentBasis& basis);

struct SgdStep {
  int t = 0;
  std::vector<int> batch;
  double xi_par = 0.0;
  double xi_perp = 0.0;
  double risk = 0.0;
};

struct SgdTrace {
  std::vector<SgdStep> steps;  // steps[t] describes theta^(t) and the batch used to leave it
  int epoch_length = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd final_theta;
  std::string halt_reason;  // empty when all epochs ran
  int halt_step = -1;
};

// Reference point for xi bookkeeping and the optional stopping rule
// |xi_par| < tau |xi|^2.
struct SgdMonitor {
  const Eigen::VectorXd* theta_star = nullptr;
  const TangentBasis* basis = nullptr;
  std::optional<double> tau;
  const std::vector<int>* pattern = nullptr;  // activation pattern that must persist
};

SgdTrace sgd_run(const FnnParams& params0, const Dataset& data, double eta, int batch, int epochs, std::uint64_t seed,
                 const SgdMonitor& monitor = {});

struct ProbeOptions {
  std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};
  double eta = 1e-3;
  int batch = 8;
  int max_epochs = 20000;
  double tau = 1e3;
  std::uint64_t seed = 0;
  bool keep_traces = false;
};

struct EpsilonRun {
  double epsilon = 0.0;
  std::vector<double> contraction_factors;
  int t_star = -1;  // -1 when the rule was never violated
  double xi_ratio = 0.0;
  double risk_at_tstar = 0.0;
  double xi_par0 = 0.0;
  double xi_perp0 = 0.0;
  bool pattern_changed = false;
  std::string diagnostic;
  double seconds = 0.0;        // wall time of the run
  std::vector<SgdStep> trace;  // filled when keep_traces is set
};

struct ProbeReport {
  std::vector<EpsilonRun> runs;
  std::optional<double> slope;  // least-squares slope of log risk(t*) against log eps
  int rank = 0;
  HSpectrum spectrum;
  double eta = 0.0;
  int batch = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

ProbeReport probe_theorem5(const FnnParams& theta_star, const Dataset& data, const ProbeOptions& opts);

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace memcap
