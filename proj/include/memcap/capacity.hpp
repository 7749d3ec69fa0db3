#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcap/activation.hpp"
#include "memcap/dataset.hpp"
#include "memcap/network.hpp"

namespace memcap {

// Continuous scalar piecewise-linear function. Piece i covers
// [breakpoints[i-1], breakpoints[i]) with slope slopes[i]; the level is fixed by
// f(anchor_t) = anchor_value.
class PiecewiseLinear1D {
 public:
  PiecewiseLinear1D() : slopes_{0.0} {}
  PiecewiseLinear1D(std::vector<double> breakpoints, std::vector<double> slopes, double anchor_t, double anchor_value);

  static PiecewiseLinear1D constant(double value);
  static PiecewiseLinear1D affine(double slope, double intercept);

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& slopes() const { return slopes_; }
  double anchor_t() const { return anchor_t_; }
  double anchor_value() const { return anchor_value_; }
  int pieces() const { return static_cast<int>(slopes_.size()); }

  double operator()(double t) const;
  // Slope of the piece containing t (right-continuous at breakpoints).
  double slope_at(double t) const;
  // Values at the breakpoints.
  const std::vector<double>& knot_values() const { return values_; }

 private:
  void canonicalize();
  void rebuild_values();

  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  double anchor_t_ = 0.0;
  double anchor_value_ = 0.0;
  std::vector<double> values_;
};

PiecewiseLinear1D pwl_add(const PiecewiseLinear1D& f, const PiecewiseLinear1D& g);
PiecewiseLinear1D pwl_scale(const PiecewiseLinear1D& f, double c);
PiecewiseLinear1D pwl_shift(const PiecewiseLinear1D& f, double c);
PiecewiseLinear1D pwl_compose_activation(const Activation& act, const PiecewiseLinear1D& f);

// t -> f(origin + t u) for a scalar-output network.
PiecewiseLinear1D restrict_to_line(const FnnParams& params, const Eigen::VectorXd& u);
PiecewiseLinear1D restrict_to_line(const FnnParams& params, const Eigen::VectorXd& u, const Eigen::VectorXd& origin);

// Maximal piece count along a line: depth 2 -> (p-1)d1 + 1, depth 3 -> p(p-1)d1d2 + (p-1)d2 + 1.
long long piece_bound(int depth, int p, int d1, int d2 = 0);

// x_i = i u, y_i = (-1)^i for i = 1..n.
Dataset hard_dataset(int n, const Eigen::VectorXd& u);

struct RefuteResult {
  std::string verdict;           // "impossible" or "undecided"
  int piece_count = 0;
  int required_pieces = 0;       // 1 + sign changes of consecutive secant slopes
  std::optional<long long> bound;
  bool architecture_impossible = false;  // bound < required_pieces
  std::string inequality;        // (p-1)d1 + 2 < N or its depth-3 analogue
  bool inequality_holds = false;
};

class NotCollinear : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

RefuteResult refute_fit(const FnnParams& params, const Dataset& data);

}  // namespace memcap
