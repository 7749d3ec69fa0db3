#include "memcap/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace memcap {

namespace {

constexpr double kSlopeTol = 1e-12;
constexpr double kBreakTol = 1e-12;

bool same_slope(double a, double b) { return std::abs(a - b) < kSlopeTol * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

PiecewiseLinear1D::PiecewiseLinear1D(std::vector<double> breakpoints, std::vector<double> slopes, double anchor_t,
                                     double anchor_value)
    : breakpoints_(std::move(breakpoints)), slopes_(std::move(slopes)), anchor_t_(anchor_t), anchor_value_(anchor_value) {
  if (slopes_.size() != breakpoints_.size() + 1) throw std::invalid_argument("need one more slope than breakpoints");
  for (std::size_t i = 1; i < breakpoints_.size(); ++i)
    if (!(breakpoints_[i] > breakpoints_[i - 1])) throw std::invalid_argument("breakpoints must be strictly increasing");
  canonicalize();
}

PiecewiseLinear1D PiecewiseLinear1D::constant(double value) { return PiecewiseLinear1D({}, {0.0}, 0.0, value); }

PiecewiseLinear1D PiecewiseLinear1D::affine(double slope, double intercept) {
  return PiecewiseLinear1D({}, {slope}, 0.0, intercept);
}

void PiecewiseLinear1D::canonicalize() {
  double scale = 1.0;
  for (double b : breakpoints_) scale = std::max(scale, std::abs(b));
  // Drop slivers between near-coincident breakpoints.
  std::vector<double> bps, sl{slopes_.empty() ? 0.0 : slopes_[0]};
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    if (!bps.empty() && breakpoints_[i] - bps.back() <= kBreakTol * scale) {
      sl.back() = slopes_[i + 1];
      continue;
    }
    bps.push_back(breakpoints_[i]);
    sl.push_back(slopes_[i + 1]);
  }
  // Merge neighbours with equal slopes.
  std::vector<double> b2, s2{sl[0]};
  for (std::size_t i = 0; i < bps.size(); ++i) {
    if (same_slope(s2.back(), sl[i + 1])) continue;
    b2.push_back(bps[i]);
    s2.push_back(sl[i + 1]);
  }
  breakpoints_ = std::move(b2);
  slopes_ = std::move(s2);
  rebuild_values();
}

void PiecewiseLinear1D::rebuild_values() {
  const std::size_t nb = breakpoints_.size();
  values_.assign(nb, 0.0);
  const std::size_t ia = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), anchor_t_) - breakpoints_.begin();
  if (ia < nb) {
    values_[ia] = anchor_value_ + slopes_[ia] * (breakpoints_[ia] - anchor_t_);
    for (std::size_t k = ia + 1; k < nb; ++k)
      values_[k] = values_[k - 1] + slopes_[k] * (breakpoints_[k] - breakpoints_[k - 1]);
  }
  if (ia > 0) {
    values_[ia - 1] = anchor_value_ - slopes_[ia] * (anchor_t_ - breakpoints_[ia - 1]);
    for (std::size_t k = ia - 1; k-- > 0;)
      values_[k] = values_[k + 1] - slopes_[k + 1] * (breakpoints_[k + 1] - breakpoints_[k]);
  }
}

double PiecewiseLinear1D::slope_at(double t) const {
  return slopes_[std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) - breakpoints_.begin()];
}

double PiecewiseLinear1D::operator()(double t) const {
  if (breakpoints_.empty()) return anchor_value_ + slopes_[0] * (t - anchor_t_);
  const std::size_t i = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) - breakpoints_.begin();
  if (i == 0) return values_[0] - slopes_[0] * (breakpoints_[0] - t);
  return values_[i - 1] + slopes_[i] * (t - breakpoints_[i - 1]);
}

PiecewiseLinear1D pwl_add(const PiecewiseLinear1D& f, const PiecewiseLinear1D& g) {
  std::vector<double> bps;
  std::merge(f.breakpoints().begin(), f.breakpoints().end(), g.breakpoints().begin(), g.breakpoints().end(),
             std::back_inserter(bps));
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  std::vector<double> sl{f.slopes().front() + g.slopes().front()};
  for (double b : bps) sl.push_back(f.slope_at(b) + g.slope_at(b));
  const double t0 = f.anchor_t();
  PiecewiseLinear1D out(std::move(bps), std::move(sl), t0, f(t0) + g(t0));
  if (out.pieces() > f.pieces() + g.pieces() - 1) throw std::logic_error("pwl_add exceeded the piece bound");
  return out;
}

PiecewiseLinear1D pwl_scale(const PiecewiseLinear1D& f, double c) {
  if (c == 0.0) return PiecewiseLinear1D::constant(0.0);
  std::vector<double> sl = f.slopes();
  for (double& s : sl) s *= c;
  return PiecewiseLinear1D(f.breakpoints(), std::move(sl), f.anchor_t(), c * f.anchor_value());
}

PiecewiseLinear1D pwl_shift(const PiecewiseLinear1D& f, double c) {
  return PiecewiseLinear1D(f.breakpoints(), f.slopes(), f.anchor_t(), f.anchor_value() + c);
}

PiecewiseLinear1D pwl_compose_activation(const Activation& act, const PiecewiseLinear1D& f) {
  const auto& fb = f.breakpoints();
  const auto abps = act.breakpoints();
  std::vector<double> cand(fb.begin(), fb.end());
  for (int i = 0; i < f.pieces(); ++i) {
    const double s = f.slopes()[i];
    if (s == 0.0) continue;
    const double lo = i == 0 ? -INFINITY : fb[i - 1];
    const double hi = i + 1 == f.pieces() ? INFINITY : fb[i];
    const double ref = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : f.anchor_t());
    const double fref = f(ref);
    for (double beta : abps) {
      const double t = ref + (beta - fref) / s;
      if (t > lo && t < hi) cand.push_back(t);
    }
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  // Slope of each sub-piece from an interior sample.
  std::vector<double> sl;
  for (std::size_t k = 0; k <= cand.size(); ++k) {
    double mid;
    if (cand.empty()) mid = f.anchor_t();
    else if (k == 0) mid = cand.front() - 1.0;
    else if (k == cand.size()) mid = cand.back() + 1.0;
    else mid = 0.5 * (cand[k - 1] + cand[k]);
    sl.push_back(act.slope(f(mid)) * f.slope_at(mid));
  }
  const double t0 = f.anchor_t();
  PiecewiseLinear1D out(std::move(cand), std::move(sl), t0, act(f(t0)));
  if (out.pieces() > act.pieces() * f.pieces()) throw std::logic_error("composition exceeded the piece bound");
  return out;
}

PiecewiseLinear1D restrict_to_line(const FnnParams& params, const Eigen::VectorXd& u) {
  return restrict_to_line(params, u, Eigen::VectorXd::Zero(u.size()));
}

PiecewiseLinear1D restrict_to_line(const FnnParams& params, const Eigen::VectorXd& u, const Eigen::VectorXd& origin) {
  params.validate();
  if (params.output_dim() != 1) throw DimensionError("restrict_to_line needs a scalar-output network");
  if (u.size() != params.input_dim() || origin.size() != params.input_dim())
    throw DimensionError("line direction does not match the input dimension");
  const auto& first = params.layers[0];
  const Eigen::VectorXd slope = first.W * u;
  const Eigen::VectorXd level = first.W * origin + first.b;
  std::vector<PiecewiseLinear1D> z;
  for (Eigen::Index j = 0; j < slope.size(); ++j) z.push_back(PiecewiseLinear1D::affine(slope(j), level(j)));
  for (int l = 1; l < params.depth(); ++l) {
    std::vector<PiecewiseLinear1D> a;
    for (const auto& zj : z) a.push_back(pwl_compose_activation(params.activation, zj));
    const auto& layer = params.layers[l];
    std::vector<PiecewiseLinear1D> next;
    for (Eigen::Index j = 0; j < layer.W.rows(); ++j) {
      PiecewiseLinear1D acc = PiecewiseLinear1D::constant(layer.b(j));
      for (Eigen::Index k = 0; k < layer.W.cols(); ++k)
        if (layer.W(j, k) != 0.0) acc = pwl_add(acc, pwl_scale(a[k], layer.W(j, k)));
      next.push_back(std::move(acc));
    }
    z = std::move(next);
  }
  return z[0];
}

long long piece_bound(int depth, int p, int d1, int d2) {
  if (p < 1 || d1 < 0 || d2 < 0) throw std::invalid_argument("piece_bound needs p >= 1 and non-negative widths");
  const long long pp = p, a = d1, b = d2;
  if (depth == 2) return (pp - 1) * a + 1;
  if (depth == 3) return pp * (pp - 1) * a * b + (pp - 1) * b + 1;
  throw std::invalid_argument("piece_bound covers depths 2 and 3 only");
}

Dataset hard_dataset(int n, const Eigen::VectorXd& u) {
  if (n < 0) throw std::invalid_argument("hard_dataset needs n >= 0");
  if (u.size() == 0 || u.norm() == 0.0) throw std::invalid_argument("hard_dataset needs a non-zero direction");
  Eigen::MatrixXd X(n, u.size());
  Eigen::MatrixXd Y(n, 1);
  for (int i = 1; i <= n; ++i) {
    X.row(i - 1) = static_cast<double>(i) * u.transpose();
    Y(i - 1, 0) = (i % 2 == 0) ? 1.0 : -1.0;
  }
  return Dataset::regression(std::move(X), std::move(Y));
}

RefuteResult refute_fit(const FnnParams& params, const Dataset& data) {
  params.validate();
  if (params.output_dim() != 1 || data.output_dim() != 1) throw DimensionError("refute_fit needs scalar outputs");
  if (data.input_dim() != params.input_dim()) throw DimensionError("dataset and network input dimensions differ");
  const int n = data.size();
  RefuteResult r;
  const int p = params.activation.pieces();
  const auto widths = params.hidden_widths();
  if (params.depth() == 2) {
    r.bound = piece_bound(2, p, widths[0]);
    r.inequality_holds = (p - 1LL) * widths[0] + 2 < n;
    r.inequality = std::to_string(p - 1) + "*" + std::to_string(widths[0]) + " + 2 = " +
                   std::to_string((p - 1LL) * widths[0] + 2) + (r.inequality_holds ? " < " : " >= ") + std::to_string(n);
  } else if (params.depth() == 3) {
    r.bound = piece_bound(3, p, widths[0], widths[1]);
    const long long lhs = static_cast<long long>(p) * (p - 1) * widths[0] * widths[1] + (p - 1LL) * widths[1] + 2;
    r.inequality_holds = lhs < n;
    r.inequality = std::to_string(p) + "*" + std::to_string(p - 1) + "*" + std::to_string(widths[0]) + "*" +
                   std::to_string(widths[1]) + " + " + std::to_string(p - 1) + "*" + std::to_string(widths[1]) +
                   " + 2 = " + std::to_string(lhs) + (r.inequality_holds ? " < " : " >= ") + std::to_string(n);
  }
  if (n <= 1) {
    r.required_pieces = 1;
    r.piece_count = restrict_to_line(params, Eigen::VectorXd::Unit(params.input_dim(), 0)).pieces();
    r.verdict = "undecided";
    return r;
  }
  // Parametrize the points along the line through the first and last rows.
  const Eigen::VectorXd origin = data.X.row(0).transpose();
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(data.input_dim());
  for (int i = 1; i < n; ++i) {
    Eigen::VectorXd d = data.X.row(i).transpose() - origin;
    if (d.norm() > dir.norm()) dir = d;
  }
  dir.normalize();
  double scale = 1.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, data.X.row(i).norm());
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = data.X.row(i).transpose() - origin;
    const double t = dir.dot(d);
    if ((d - t * dir).norm() > 1e-9 * scale) throw NotCollinear("dataset row " + std::to_string(i + 1) + " is off the line");
    pts.emplace_back(t, data.Y(i, 0));
  }
  std::sort(pts.begin(), pts.end());
  int changes = 0, last_sign = 0;
  for (int i = 1; i < n; ++i) {
    const double s = (pts[i].second - pts[i - 1].second) / (pts[i].first - pts[i - 1].first);
    const int sign = (s > 0) - (s < 0);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) ++changes;
    last_sign = sign;
  }
  r.required_pieces = 1 + changes;
  r.piece_count = restrict_to_line(params, dir, origin).pieces();
  r.architecture_impossible = r.bound && *r.bound < r.required_pieces;
  r.verdict = r.piece_count < r.required_pieces ? "impossible" : "undecided";
  return r;
}

}  // namespace memcap
