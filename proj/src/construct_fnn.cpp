#include "memcap/construct_fnn.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

#include "memcap/rng.hpp"

namespace memcap {

namespace {

long long floor_div(long long a, long long b) { return a < 0 ? -((-a + b - 1) / b) : a / b; }

bool is_relu(const Activation& act) { return act.kind == ActivationKind::relu_like; }

void require_fitting_activation(const Activation& act) {
  if (act.kind == ActivationKind::gate) throw UnsupportedArchitecture("gate activation is not supported for FNN fitting");
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// Shape checks shared by the deep layouts; `last` is the largest admissible index.
void check_block_indices(const std::vector<int>& blocks, int last) {
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (blocks[j] < 1 || blocks[j] > last)
      throw UnsupportedArchitecture("block index " + std::to_string(blocks[j]) + " outside [1, " + std::to_string(last) + "]");
    if (j > 0 && blocks[j - 1] + 1 >= blocks[j])
      throw UnsupportedArchitecture("block indices need l_j + 1 < l_{j+1}, got " + join(blocks));
  }
}

CapacityCheck deep_regression_capacity(const ArchSpec& a, long long n) {
  const int L = static_cast<int>(a.widths.size()) + 1;
  const int m = static_cast<int>(a.blocks.size());
  check_block_indices(a.blocks, L - 2);
  const int div = is_relu(a.activation) ? 4 : 2;
  CapacityCheck out;
  out.theorem = is_relu(a.activation) ? "cor1" : "prop3";
  std::ostringstream os;
  bool ok = true;
  long long total = 0;
  os << "4*(";
  for (int j = 0; j < m; ++j) {
    const int r = a.d_y * (j > 0) + (j < m - 1);
    const long long lo = floor_div(a.widths[a.blocks[j] - 1] - r, div);
    const long long hi = floor_div(a.widths[a.blocks[j]] - r, static_cast<long long>(div) * a.d_y);
    if (lo < 0 || hi < 0) ok = false;
    total += std::max(0LL, lo) * std::max(0LL, hi);
    os << (j ? " + " : "") << lo << "*" << hi;
  }
  total *= 4;
  os << ") = " << total << (total >= n ? " >= " : " < ") << n;
  ok = ok && total >= n;
  for (int j = 0; j + 1 < m; ++j)
    for (int k = a.blocks[j] + 2; k <= a.blocks[j + 1] - 1; ++k)
      if (a.widths[k - 1] < a.d_y + 1) {
        ok = false;
        os << "; d_" << k << " = " << a.widths[k - 1] << " < d_y + 1";
      }
  for (int k = a.blocks[m - 1] + 2; k <= L - 1; ++k)
    if (a.widths[k - 1] < a.d_y) {
      ok = false;
      os << "; d_" << k << " = " << a.widths[k - 1] << " < d_y";
    }
  out.ok = ok;
  out.capacity = total;
  out.arithmetic = os.str();
  return out;
}

CapacityCheck deep_classifier_capacity(const ArchSpec& a, long long n) {
  const int L = static_cast<int>(a.widths.size()) + 1;
  const int m = static_cast<int>(a.blocks.size());
  if (m < 2) throw UnsupportedArchitecture("classification layouts need at least two block indices");
  check_block_indices(a.blocks, L - 1);
  if (a.blocks[m - 2] > L - 2) throw UnsupportedArchitecture("fitting blocks must end before the last hidden layer");
  const int div = is_relu(a.activation) ? 4 : 2;
  CapacityCheck out;
  out.theorem = is_relu(a.activation) ? "cor4" : "cor3";
  std::ostringstream os;
  bool ok = true;
  long long total = 0;
  os << "4*(";
  for (int j = 0; j < m - 1; ++j) {
    const int r = (j > 0) + (j < m - 2);
    const long long lo = floor_div(a.widths[a.blocks[j] - 1] - r, div);
    const long long hi = floor_div(a.widths[a.blocks[j]] - r, div);
    if (lo < 0 || hi < 0) ok = false;
    total += std::max(0LL, lo) * std::max(0LL, hi);
    os << (j ? " + " : "") << lo << "*" << hi;
  }
  total *= 4;
  os << ") = " << total << (total >= n ? " >= " : " < ") << n;
  ok = ok && total >= n;
  const int gate_width = a.widths[a.blocks[m - 1] - 1];
  if (gate_width < div * a.d_y) {
    ok = false;
    os << "; d_" << a.blocks[m - 1] << " = " << gate_width << " < " << div * a.d_y;
  }
  for (int j = 0; j + 2 < m; ++j)
    for (int k = a.blocks[j] + 2; k <= a.blocks[j + 1] - 1; ++k)
      if (a.widths[k - 1] < 2) {
        ok = false;
        os << "; d_" << k << " < 2";
      }
  for (int k = a.blocks[m - 1] + 1; k <= L - 1; ++k)
    if (a.widths[k - 1] < a.d_y) {
      ok = false;
      os << "; d_" << k << " < d_y";
    }
  out.ok = ok;
  out.capacity = total;
  out.arithmetic = os.str();
  return out;
}

}  // namespace

CapacityCheck check_capacity(const ArchSpec& a, long long n) {
  require_fitting_activation(a.activation);
  if (a.d_y < 1) throw UnsupportedArchitecture("d_y must be positive");
  for (int w : a.widths)
    if (w < 1) throw UnsupportedArchitecture("widths must be positive");
  const bool relu = is_relu(a.activation);
  const long long div = relu ? 4 : 2;
  if (!a.blocks.empty()) return a.classification ? deep_classifier_capacity(a, n) : deep_regression_capacity(a, n);

  CapacityCheck out;
  std::ostringstream os;
  if (a.widths.size() == 2) {
    out.theorem = "thm1";
    const long long lo = a.widths[0] / div;
    const long long hi = a.widths[1] / (div * a.d_y);
    out.capacity = 4 * lo * hi;
    out.ok = out.capacity >= n;
    os << "4*floor(" << a.widths[0] << "/" << div << ")*floor(" << a.widths[1] << "/" << div * a.d_y
       << ") = " << out.capacity << (out.ok ? " >= " : " < ") << n;
  } else if (a.widths.size() == 3 && a.classification) {
    out.theorem = "prop2";
    const long long lo = a.widths[0] / div;
    const long long hi = a.widths[1] / div;
    out.capacity = 4 * lo * hi;
    const bool gates = a.widths[2] >= div * a.d_y;
    out.ok = out.capacity >= n && gates;
    os << "4*floor(" << a.widths[0] << "/" << div << ")*floor(" << a.widths[1] << "/" << div << ") = " << out.capacity
       << (out.capacity >= n ? " >= " : " < ") << n << "; d_3 = " << a.widths[2] << (gates ? " >= " : " < ")
       << div * a.d_y;
  } else {
    throw UnsupportedArchitecture("no construction for " + std::to_string(a.widths.size() + 1) + "-layer " +
                                  (a.classification ? "classification" : "regression") + " networks without a block layout");
  }
  out.arithmetic = os.str();
  return out;
}

ProjectionPlan project_and_sort(const Dataset& data, std::uint64_t seed, const ConstructOptions& opts) {
  require_distinct_inputs(data);
  const int n = data.size();
  ProjectionPlan plan;
  plan.n_real = n;
  for (int attempt = opts.first_direction; attempt < opts.first_direction + opts.max_resamples; ++attempt) {
    Rng rng(derive_seed(seed, "projection", static_cast<std::uint64_t>(attempt)));
    Eigen::VectorXd u = gaussian_vector(rng, data.input_dim());
    Eigen::VectorXd proj = data.X * u;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return proj(a) < proj(b); });
    bool ok = true;
    if (n >= 2) {
      const double range = proj(perm.back()) - proj(perm.front());
      ok = range > 0.0;
      for (int i = 1; ok && i < n; ++i)
        if (!(proj(perm[i]) - proj(perm[i - 1]) >= opts.gap_tol * range) || proj(perm[i]) == proj(perm[i - 1])) ok = false;
    }
    if (!ok) continue;
    plan.u = u;
    plan.perm = perm;
    plan.resamples = attempt;
    double spacing = 1.0;
    if (n >= 2) spacing = (proj(perm.back()) - proj(perm.front())) / (n - 1);
    plan.delta = spacing;
    plan.c.resize(n + 2);
    for (int i = 0; i < n; ++i) plan.c[i + 1] = proj(perm[i]);
    const double first = n ? plan.c[1] : 0.0;
    const double last = n ? plan.c[n] : 0.0;
    plan.c[0] = first - plan.delta;
    plan.c[n + 1] = last + plan.delta;
    return plan;
  }
  throw ConstructionError("projected inputs stay numerically coincident after " + std::to_string(opts.max_resamples) +
                          " directions");
}

ProjectionPlan pad_plan(const ProjectionPlan& plan, int n_total) {
  const int n = plan.size();
  if (n_total < n) throw std::invalid_argument("cannot pad a plan to fewer points");
  ProjectionPlan out = plan;
  out.c.pop_back();
  double last = n ? plan.c[n] : plan.c[0];
  if (n == 0) out.c.clear();
  if (n == 0) out.c.push_back(last - plan.delta);
  for (int m = n; m < n_total; ++m) {
    last += plan.delta;
    out.c.push_back(last);
  }
  out.c.push_back(last + plan.delta);
  return out;
}

Layer1Coefficients layer1_coefficients(const std::vector<double>& c, int p, int q) {
  const int n = p * q;
  if (p < 1 || q < 1 || static_cast<int>(c.size()) != n + 2)
    throw std::invalid_argument("layer-1 coordinates must hold pq + 2 values");
  Layer1Coefficients out;
  out.scale.resize(p);
  out.bias.resize(p);
  out.margin = INFINITY;
  for (int j = 1; j <= p; ++j) {
    const double lo = c[(j - 1) * q] + c[(j - 1) * q + 1];
    const double hi = c[j * q] + c[j * q + 1];
    const double den = hi - lo;
    const double sgn = (j % 2 == 1) ? 1.0 : -1.0;
    out.scale(j - 1) = sgn * 4.0 / den;
    out.bias(j - 1) = -sgn * (hi + lo) / den;
    double prev = 0.0;
    for (int i = 0; i <= n + 1; ++i) {
      const double z = out.scale(j - 1) * c[i] + out.bias(j - 1);
      const bool before = i <= (j - 1) * q;
      const bool after = i > j * q;
      double m;
      bool ok;
      if (before) {
        m = sgn * -z - 1.0;
        ok = m > 0.0;
      } else if (after) {
        m = sgn * z - 1.0;
        ok = m > 0.0;
      } else {
        m = 1.0 - std::abs(z);
        ok = m > 0.0 && (i == (j - 1) * q + 1 || sgn * (z - prev) > 0.0);
      }
      if (!ok)
        throw ConstructionError("first-layer node " + std::to_string(j) + " violates the clipping pattern at sorted point " +
                                std::to_string(i));
      out.margin = std::min(out.margin, m);
      prev = z;
    }
  }
  return out;
}

Layer1 layer1_params(const ProjectionPlan& plan, int p, int q) {
  if (plan.size() != p * q) throw std::invalid_argument("layer1_params needs pq equal to the (padded) plan size");
  Layer1Coefficients co = layer1_coefficients(plan.c, p, q);
  Layer1 out;
  out.W = co.scale * plan.u.transpose();
  out.b = co.bias;
  out.margin = co.margin;
  return out;
}

std::vector<int> index_set(int k, int p, int q) {
  if (k < 1 || k > q) throw std::invalid_argument("index_set needs k in [1, q]");
  std::vector<int> members(p);
  for (int j = 1; j <= p; ++j) members[j - 1] = (j % 2 == 1) ? (j - 1) * q + k : j * q + 1 - k;
  return members;
}

Layer2Row solve_layer2_row(int k, int q, const Eigen::MatrixXd& A, const Eigen::VectorXd& y, int sign,
                           const ConstructOptions& opts) {
  const int p = static_cast<int>(A.cols());
  const int n = static_cast<int>(A.rows());
  if (n != p * q || y.size() != n) throw std::invalid_argument("layer-2 solve needs pq rows of layer-1 outputs and targets");
  if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
  const auto members = index_set(k, p, q);

  Eigen::MatrixXd M(p, p + 1);
  Eigen::VectorXd rhs(p);
  for (int j = 0; j < p; ++j) {
    M.row(j).head(p) = A.row(members[j] - 1);
    M(j, p) = 1.0;
    rhs(j) = y(members[j] - 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (!(sv(p - 1) > 1e-13 * sv(0)))
    throw ConstructionError("layer-2 system for node " + std::to_string(k) + " is rank deficient");
  Eigen::VectorXd nu = svd.matrixV().col(p);
  if (nu.head(p).sum() < 0) nu = -nu;
  if ((nu.head(p).array() <= 0.0).any())
    throw ConstructionError("null vector for node " + std::to_string(k) + " is not one-signed on the weight entries");
  const Eigen::VectorXd mu = svd.solve(rhs);

  // Rows that must clip: every non-member point plus the two out-of-range patterns.
  std::vector<char> is_member(n + 2, 0);
  for (int m : members) is_member[m] = 1;
  Eigen::MatrixXd probe(n + 2, p + 1);
  Eigen::VectorXd expected(n + 2);
  int count = 0;
  for (int i = 0; i <= n + 1; ++i) {
    if (is_member[i]) continue;
    if (i == 0 || i == n + 1) {
      for (int j = 0; j < p; ++j) probe(count, j) = ((j % 2 == 0) == (i == 0)) ? -1.0 : 1.0;
    } else {
      probe.row(count).head(p) = A.row(i - 1);
    }
    probe(count, p) = 1.0;
    const int before = static_cast<int>(std::lower_bound(members.begin(), members.end(), i) - members.begin());
    double s = (before % 2 == 1) ? 1.0 : -1.0;
    if (k % 2 == 0) s = -s;
    expected(count) = s;
    ++count;
  }
  probe.conservativeResize(count, Eigen::NoChange);
  expected.conservativeResize(count);

  Layer2Row row;
  row.null_vector = nu;
  row.singular_values = sv;
  double alpha = sign;
  bool found = false;
  Eigen::VectorXd wb;
  for (int d = 0; d <= opts.max_doublings; ++d, alpha *= 2.0) {
    wb = mu + alpha * nu;
    Eigen::VectorXd margins = (probe * wb).cwiseProduct(expected).array() - 1.0;
    const double lo = count ? margins.minCoeff() : INFINITY;
    if (lo >= opts.clip_margin) {
      found = true;
      row.clip_margin_min = lo;
      row.clip_margin_max = count ? margins.maxCoeff() : INFINITY;
      break;
    }
  }
  if (!found)
    throw ConstructionError("no clipping scale for layer-2 node " + std::to_string(k) + " within " +
                            std::to_string(opts.max_doublings) + " doublings");
  // One refinement step against the rounding introduced by a large alpha.
  wb += svd.solve(rhs - M * wb);
  row.alpha = alpha;
  row.w = wb.head(p);
  row.b = wb(p);
  row.interp_error = (M * wb - rhs).cwiseAbs().maxCoeff();
  const double floor = 16.0 * std::numeric_limits<double>::epsilon() * (p + 1) * wb.cwiseAbs().maxCoeff();
  if (!(row.interp_error <= std::max(opts.interp_tol, floor)))
    throw ConstructionError("layer-2 node " + std::to_string(k) + " misses its targets by " +
                            std::to_string(row.interp_error));
  return row;
}

double max_abs_error(const FnnParams& params, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const Eigen::MatrixXd out = fnn_forward_batch(params, data.X);
  return (out - data.targets()).cwiseAbs().maxCoeff();
}

int count_misclassified(const Eigen::MatrixXd& outputs, const Dataset& data) {
  if (!data.is_classification()) return 0;
  int wrong = 0;
  for (int i = 0; i < data.size(); ++i) {
    Eigen::Index arg;
    outputs.row(i).maxCoeff(&arg);
    if (arg != data.labels[i]) ++wrong;
  }
  return wrong;
}

namespace {

// One two-layer fitting block on a sorted scalar coordinate.
struct BlockFit {
  Layer1Coefficients layer1;
  Eigen::MatrixXd W2;  // (q * d) x p
  Eigen::VectorXd b2;
  BlockSummary summary;
};

BlockFit fit_block(const std::vector<double>& coords, const Eigen::MatrixXd& targets, int p, int q,
                   const ConstructOptions& opts) {
  const int n = p * q;
  BlockFit f;
  f.layer1 = layer1_coefficients(coords, p, q);
  Eigen::MatrixXd A(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = Activation::hard_tanh()(f.layer1.scale(j) * coords[i + 1] + f.layer1.bias(j));
  const int d = static_cast<int>(targets.cols());
  f.W2.resize(q * d, p);
  f.b2.resize(q * d);
  auto& s = f.summary;
  s.p = p;
  s.q = q;
  s.layer1_margin = f.layer1.margin;
  s.clip_margin_min = INFINITY;
  s.clip_margin_max = 0.0;
  for (int t = 0; t < d; ++t)
    for (int k = 1; k <= q; ++k) {
      Layer2Row row = solve_layer2_row(k, q, A, targets.col(t), (k % 2 == 1) ? 1 : -1, opts);
      f.W2.row(t * q + k - 1) = row.w.transpose();
      f.b2(t * q + k - 1) = row.b;
      s.alphas.push_back(row.alpha);
      s.clip_margin_min = std::min(s.clip_margin_min, row.clip_margin_min);
      s.clip_margin_max = std::max(s.clip_margin_max, row.clip_margin_max);
      s.interp_error = std::max(s.interp_error, row.interp_error);
    }
  return f;
}

void require_regression(const Dataset& data) {
  if (data.is_classification()) throw std::invalid_argument("this construction needs regression targets");
  require_targets_in_unit_box(data);
}

Eigen::MatrixXd sorted_targets(const Dataset& data, const ProjectionPlan& plan, int n_total, const Eigen::MatrixXd& Y) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n_total, Y.cols());
  for (int i = 0; i < plan.n_real; ++i) T.row(i) = Y.row(plan.perm[i]);
  (void)data;
  return T;
}

void finish_report(ConstructionReport& r, const FnnParams& params, const Dataset& data) {
  r.widths = params.hidden_widths();
  r.activation = params.activation.name();
  r.n = data.size();
  r.fit_error = max_abs_error(params, data);
  if (data.is_classification() && data.size() > 0) r.misclassified = count_misclassified(fnn_forward_batch(params, data.X), data);
}

// Lifts a hard-tanh construction on halved widths to a relu-like network of the
// requested widths.
Construction<FnnParams> lift_to_relu(Construction<FnnParams> inner, const Dataset& data, const std::vector<int>& widths,
                                     const Activation& act, const std::vector<std::vector<bool>>& pass_through = {}) {
  Construction<FnnParams> out;
  out.params = pad_hidden_widths(hard_tanh_to_relu(inner.params, act, pass_through), widths);
  out.report = std::move(inner.report);
  finish_report(out.report, out.params, data);
  return out;
}

void require_capacity(const CapacityCheck& cap) {
  if (!cap.ok) throw ConstructionError("capacity condition fails: " + cap.arithmetic);
}

}  // namespace

namespace {

Construction<FnnParams> build_3layer(const Dataset& data, int d1, int d2, const Activation& act, std::uint64_t seed,
                                     const ConstructOptions& opts) {
  require_regression(data);
  const int d_y = data.output_dim();
  CapacityCheck cap = check_capacity(ArchSpec{{d1, d2}, act, d_y, false, {}}, data.size());
  require_capacity(cap);
  if (is_relu(act)) {
    auto inner = build_3layer(data, d1 / 2, d2 / 2, Activation::hard_tanh(), seed, opts);
    inner.report.capacity = cap;
    return lift_to_relu(std::move(inner), data, {d1, d2}, act);
  }

  const int p = 2 * (d1 / 2);
  const int q = 2 * (d2 / (2 * d_y));
  ProjectionPlan plan = pad_plan(project_and_sort(data, seed, opts), p * q);
  const double gain = opts.output_gain;
  if (!(gain >= 1.0) || !std::isfinite(gain)) throw std::invalid_argument("output gain must be at least 1");
  const Eigen::MatrixXd T = sorted_targets(data, plan, p * q, data.Y / gain);
  BlockFit fit = fit_block(plan.c, T, p, q, opts);
  fit.summary.points = data.size();
  fit.summary.fillers = p * q - data.size();

  FnnParams net;
  net.activation = Activation::hard_tanh();
  net.layers.push_back({fit.layer1.scale * plan.u.transpose(), fit.layer1.bias});
  net.layers.push_back({fit.W2, fit.b2});
  Eigen::MatrixXd W3 = Eigen::MatrixXd::Zero(d_y, q * d_y);
  for (int t = 0; t < d_y; ++t) W3.row(t).segment(t * q, q).setConstant(gain);
  net.layers.push_back({W3, Eigen::VectorXd::Constant(d_y, -gain)});

  Construction<FnnParams> out;
  out.params = pad_hidden_widths(net, {d1, d2});
  auto& r = out.report;
  r.theorem = "thm1";
  r.seed = seed;
  r.resamples = plan.resamples;
  r.capacity = cap;
  r.blocks.push_back(fit.summary);
  finish_report(r, out.params, data);
  return out;
}

double class_code(int j, int d_y) { return -1.0 + 2.0 * (j + 1) / (d_y + 1); }


Construction<FnnParams> build_4layer_classifier(const Dataset& data, int d1, int d2, int d3, const Activation& act,
                                               std::uint64_t seed, const ConstructOptions& opts) {
  if (!data.is_classification()) throw std::invalid_argument("construct_4layer_classifier needs a classification dataset");
  const int d_y = data.num_classes;
  CapacityCheck cap = check_capacity(ArchSpec{{d1, d2, d3}, act, d_y, true, {}}, data.size());
  require_capacity(cap);
  if (is_relu(act)) {
    auto inner = build_4layer_classifier(data, d1 / 2, d2 / 2, d3 / 2, Activation::hard_tanh(), seed, opts);
    inner.report.capacity = cap;
    return lift_to_relu(std::move(inner), data, {d1, d2, d3}, act);
  }

  const int p = 2 * (d1 / 2);
  const int q = 2 * (d2 / 2);
  ProjectionPlan plan = pad_plan(project_and_sort(data, seed, opts), p * q);
  Eigen::MatrixXd codes(data.size(), 1);
  for (int i = 0; i < data.size(); ++i) codes(i, 0) = class_code(data.labels[i], d_y);
  const Eigen::MatrixXd T = sorted_targets(data, plan, p * q, codes);
  BlockFit fit = fit_block(plan.c, T, p, q, opts);
  fit.summary.points = data.size();
  fit.summary.fillers = p * q - data.size();

  // Layer 3: gate j = (hard_tanh(2t+1) + hard_tanh(-2t+1)) / 2 with
  // t = beta * (sum_k a_k - rho_j - 1).
  const double beta = 4.0 * (d_y + 1);
  Eigen::MatrixXd W3(2 * d_y, q);
  Eigen::VectorXd b3(2 * d_y);
  Eigen::MatrixXd W4 = Eigen::MatrixXd::Zero(d_y, 2 * d_y);
  for (int j = 0; j < d_y; ++j) {
    const double centre = class_code(j, d_y) + 1.0;
    W3.row(2 * j).setConstant(2.0 * beta);
    b3(2 * j) = -2.0 * beta * centre + 1.0;
    W3.row(2 * j + 1).setConstant(-2.0 * beta);
    b3(2 * j + 1) = 2.0 * beta * centre + 1.0;
    W4(j, 2 * j) = 0.5;
    W4(j, 2 * j + 1) = 0.5;
  }
  FnnParams net;
  net.activation = Activation::hard_tanh();
  net.layers.push_back({fit.layer1.scale * plan.u.transpose(), fit.layer1.bias});
  net.layers.push_back({fit.W2, fit.b2});
  net.layers.push_back({W3, b3});
  net.layers.push_back({W4, Eigen::VectorXd::Zero(d_y)});

  Construction<FnnParams> out;
  out.params = pad_hidden_widths(net, {d1, d2, d3});
  auto& r = out.report;
  r.theorem = "prop2";
  r.seed = seed;
  r.resamples = plan.resamples;
  r.capacity = cap;
  r.blocks.push_back(fit.summary);
  finish_report(r, out.params, data);
  return out;
}

}  // namespace

int BlockLayout::reserved(int j) const {
  const int m = num_blocks();
  return d_y * (j > 0) + (j < m - 1);
}

namespace {

// Node bookkeeping for one hidden layer of a deep layout.
struct LayerSlots {
  int width = 0;
  int in_corr = -1;               // carries the scaled projection
  std::vector<int> out_corr;      // accumulated block outputs (or class codes)
  int block_a = -1, a_off = -1;   // first layer of a block
  int block_b = -1, b_off = -1;   // second layer of a block
  int gate_off = -1;              // gate nodes (classification)
  std::vector<int> onehot;        // one-hot corridor after the gates
  std::vector<bool> pass;         // nodes that only forward values in (-1, 1]
};

int add_slots(LayerSlots& s, int count, bool pass) {
  const int off = s.width;
  s.width += count;
  s.pass.insert(s.pass.end(), count, pass);
  return off;
}



Construction<FnnParams> build_deep(const Dataset& data, const BlockLayout& layout, const Activation& act,
                                   std::uint64_t seed, const ConstructOptions& opts) {
  const bool clf = data.is_classification();
  if (!clf) require_regression(data);
  const int d_y = clf ? data.num_classes : data.output_dim();
  if (layout.d_y != d_y) throw std::invalid_argument("layout d_y does not match the dataset");
  CapacityCheck cap = check_capacity(ArchSpec{layout.widths, act, d_y, clf, layout.blocks}, data.size());
  require_capacity(cap);
  if (!clf && layout.num_blocks() == 1 && layout.depth() == 3) {
    // A single block with no corridors is the three-layer construction.
    auto out = build_3layer(data, layout.widths[0], layout.widths[1], act, seed, opts);
    out.report.theorem = cap.theorem;
    out.report.capacity = cap;
    return out;
  }
  const bool relu = is_relu(act);
  const int L = layout.depth();
  const int m_all = layout.num_blocks();
  const int m = clf ? m_all - 1 : m_all;   // fitting blocks
  const int D = clf ? 1 : d_y;               // outputs carried by the corridor
  const int div = relu ? 4 : 2;
  const std::vector<int>& l = layout.blocks;  // 1-based

  // Hard-tanh logical block sizes.
  std::vector<int> p(m), q(m), capn(m);
  for (int j = 0; j < m; ++j) {
    const int r = clf ? (j > 0) + (j < m - 1) : layout.reserved(j);
    p[j] = 2 * ((layout.widths[l[j] - 1] - r) / div);
    q[j] = 2 * ((layout.widths[l[j]] - r) / (div * D));
    capn[j] = p[j] * q[j];
  }

  ProjectionPlan plan = project_and_sort(data, seed, opts);
  const int n = data.size();
  std::vector<int> start(m + 1, 0), count(m, 0);
  {
    int remaining = n, pos = 0;
    for (int j = 0; j < m; ++j) {
      count[j] = std::min(capn[j], remaining);
      start[j] = pos;
      pos += count[j];
      remaining -= count[j];
    }
    start[m] = pos;
  }

  // Input corridor value s = w_s c + b_s, in (-1, 1) on the data. Its range also
  // covers every block's sentinels, so a saturated corridor reads as out of range.
  int max_fill = 0;
  for (int j = 0; j < m; ++j)
    if (count[j] > 0) max_fill = std::max(max_fill, capn[j] - count[j]);
  const double c_lo = plan.c[0] - plan.delta;
  const double c_hi = plan.c[n] + (max_fill + 3) * plan.delta;
  const double w_s = 2.0 / (c_hi - c_lo);
  const double b_s = -(c_hi + c_lo) / (c_hi - c_lo);

  // Targets of the fitting blocks.
  Eigen::MatrixXd T(n, D);
  for (int i = 0; i < n; ++i) {
    const int row = plan.perm[i];
    if (clf) T(i, 0) = (class_code(data.labels[row], d_y) - 1.0) / 2.0;
    else T.row(i) = (data.Y.row(row).array() - 1.0) / 2.0;
  }

  // Slot layout of every hidden layer (index k-1 for layer k).
  const int in_last = clf ? (m > 0 ? l[m - 1] - 1 : 0) : l[m - 1] - 1;
  const int out_first = l[0] + 2;
  const int out_last = clf ? l[m_all - 1] - 1 : L - 1;
  std::vector<LayerSlots> slots(L - 1);
  for (int k = 1; k <= L - 1; ++k) {
    auto& s = slots[k - 1];
    for (int j = 0; j < m; ++j) {
      if (k == l[j]) {
        s.block_a = j;
        s.a_off = add_slots(s, p[j], false);
      }
      if (k == l[j] + 1) {
        s.block_b = j;
        s.b_off = add_slots(s, q[j] * D, false);
      }
    }
    if (k <= in_last) s.in_corr = add_slots(s, 1, true);
    if (k >= out_first && k <= out_last)
      for (int t = 0; t < D; ++t) s.out_corr.push_back(add_slots(s, 1, true));
    if (clf && k == l[m_all - 1]) s.gate_off = add_slots(s, 2 * d_y, false);
    if (clf && k > l[m_all - 1])
      for (int t = 0; t < d_y; ++t) s.onehot.push_back(add_slots(s, 1, true));
  }

  FnnParams net;
  net.activation = Activation::hard_tanh();
  std::vector<int> dims{data.input_dim()};
  for (const auto& s : slots) dims.push_back(s.width);
  dims.push_back(d_y);
  for (int k = 1; k <= L; ++k) net.layers.push_back({Eigen::MatrixXd::Zero(dims[k], dims[k - 1]), Eigen::VectorXd::Zero(dims[k])});

  ConstructionReport report;
  report.theorem = cap.theorem;
  report.seed = seed;
  report.resamples = plan.resamples;
  report.capacity = cap;

  // Corridors.
  for (int k = 1; k <= L - 1; ++k) {
    const auto& s = slots[k - 1];
    auto& layer = net.layers[k - 1];
    if (s.in_corr >= 0) {
      if (k == 1) {
        layer.W.row(s.in_corr) = w_s * plan.u.transpose();
        layer.b(s.in_corr) = b_s;
      } else {
        layer.W(s.in_corr, slots[k - 2].in_corr) = 1.0;
      }
    }
    // Value accumulated at layer k-1: its output corridor plus any block ending there.
    auto add_accumulated = [&](int row, int t, double weight) {
      if (k < 2) return;
      const auto& prev = slots[k - 2];
      if (!prev.out_corr.empty()) layer.W(row, prev.out_corr[t]) += weight;
      if (prev.block_b >= 0 && count[prev.block_b] > 0) {
        const int j = prev.block_b;
        for (int kk = 0; kk < q[j]; ++kk) layer.W(row, prev.b_off + t * q[j] + kk) += weight;
      }
    };
    for (int t = 0; t < static_cast<int>(s.out_corr.size()); ++t) add_accumulated(s.out_corr[t], t, 1.0);
    if (s.gate_off >= 0) {
      const double beta = 8.0 * (d_y + 1);
      for (int j = 0; j < d_y; ++j) {
        const double centre = (class_code(j, d_y) + 1.0) / 2.0;
        add_accumulated(s.gate_off + 2 * j, 0, 2.0 * beta);
        layer.b(s.gate_off + 2 * j) = -2.0 * beta * centre + 1.0;
        add_accumulated(s.gate_off + 2 * j + 1, 0, -2.0 * beta);
        layer.b(s.gate_off + 2 * j + 1) = 2.0 * beta * centre + 1.0;
      }
    }
    for (int t = 0; t < static_cast<int>(s.onehot.size()); ++t) {
      const auto& prev = slots[k - 2];
      if (prev.gate_off >= 0) {
        layer.W(s.onehot[t], prev.gate_off + 2 * t) = 0.5;
        layer.W(s.onehot[t], prev.gate_off + 2 * t + 1) = 0.5;
      } else {
        layer.W(s.onehot[t], prev.onehot[t]) = 1.0;
      }
    }
  }

  // Output layer.
  {
    auto& out = net.layers[L - 1];
    const auto& prev = slots[L - 2];
    if (clf) {
      for (int t = 0; t < d_y; ++t) {
        if (prev.gate_off >= 0) {
          out.W(t, prev.gate_off + 2 * t) = 0.5;
          out.W(t, prev.gate_off + 2 * t + 1) = 0.5;
        } else {
          out.W(t, prev.onehot[t]) = 1.0;
        }
      }
    } else {
      for (int t = 0; t < d_y; ++t) {
        if (!prev.out_corr.empty()) out.W(t, prev.out_corr[t]) = 2.0;
        if (prev.block_b >= 0 && count[prev.block_b] > 0) {
          const int j = prev.block_b;
          for (int kk = 0; kk < q[j]; ++kk) out.W(t, prev.b_off + t * q[j] + kk) = 2.0;
        }
        out.b(t) = -1.0;
      }
    }
  }

  // Fitting blocks.
  for (int j = 0; j < m; ++j) {
    BlockSummary summary;
    summary.first_layer = l[j];
    summary.p = p[j];
    summary.q = q[j];
    summary.points = count[j];
    if (count[j] == 0) {
      report.blocks.push_back(summary);
      continue;
    }
    const bool direct = l[j] == 1;
    auto coord = [&](int i) { return direct ? plan.c[i] : w_s * plan.c[i] + b_s; };
    const double g = direct ? plan.delta : w_s * plan.delta;
    const int a = start[j], e = start[j] + count[j];  // sorted positions [a, e)
    const int cap_j = capn[j];
    std::vector<double> coords;
    coords.push_back(a > 0 ? coord(a) : coord(a + 1) - g);
    for (int i = a; i < e; ++i) coords.push_back(coord(i + 1));
    const int fill = cap_j - count[j];
    const bool has_next = e < n;
    const double last = coords.back();
    const double next = has_next ? coord(e + 1) : last + (fill + 1) * g;
    for (int f = 1; f <= fill; ++f) coords.push_back(last + (next - last) * f / (fill + 1));
    coords.push_back(has_next ? next : coords.back() + g);

    Eigen::MatrixXd Tj = Eigen::MatrixXd::Zero(cap_j, D);
    Tj.topRows(count[j]) = T.middleRows(a, count[j]);
    BlockFit fit = fit_block(coords, Tj, p[j], q[j], opts);
    fit.summary.first_layer = l[j];
    fit.summary.points = count[j];
    fit.summary.fillers = fill;
    report.blocks.push_back(fit.summary);

    const auto& sa = slots[l[j] - 1];
    auto& la = net.layers[l[j] - 1];
    for (int r = 0; r < p[j]; ++r) {
      if (direct) la.W.row(sa.a_off + r) = fit.layer1.scale(r) * plan.u.transpose();
      else la.W(sa.a_off + r, slots[l[j] - 2].in_corr) = fit.layer1.scale(r);
      la.b(sa.a_off + r) = fit.layer1.bias(r);
    }
    const auto& sb = slots[l[j]];
    auto& lb = net.layers[l[j]];
    lb.W.block(sb.b_off, sa.a_off, q[j] * D, p[j]) = fit.W2;
    lb.b.segment(sb.b_off, q[j] * D) = fit.b2;
  }

  Construction<FnnParams> out;
  if (relu) {
    std::vector<std::vector<bool>> pass;
    for (const auto& s : slots) pass.push_back(s.pass);
    out.params = pad_hidden_widths(hard_tanh_to_relu(net, act, pass), layout.widths);
  } else {
    out.params = pad_hidden_widths(net, layout.widths);
  }
  out.report = std::move(report);
  finish_report(out.report, out.params, data);
  return out;
}

// Rounding in the layer-2 fit grows with the solved scale, which depends on the
// projection direction; a direction that misses the fit tolerance is redrawn.
template <class Build>
Construction<FnnParams> with_redraws(const ConstructOptions& opts, Build build) {
  ConstructOptions o = opts;
  const int end = opts.first_direction + opts.max_resamples;
  double best = 0.0;
  while (o.first_direction < end) {
    o.max_resamples = end - o.first_direction;
    auto c = build(o);
    if (c.report.fit_error <= opts.fit_tol) return c;
    best = c.report.fit_error;
    o.first_direction = c.report.resamples + 1;
  }
  std::ostringstream os;
  os << "fit error " << best << " exceeds " << opts.fit_tol << " for every projection direction tried";
  throw ConstructionError(os.str());
}

}  // namespace

Construction<FnnParams> construct_3layer(const Dataset& data, int d1, int d2, const Activation& act, std::uint64_t seed,
                                         const ConstructOptions& opts) {
  return with_redraws(opts, [&](const ConstructOptions& o) { return build_3layer(data, d1, d2, act, seed, o); });
}

Construction<FnnParams> construct_4layer_classifier(const Dataset& data, int d1, int d2, int d3, const Activation& act,
                                                   std::uint64_t seed, const ConstructOptions& opts) {
  return with_redraws(opts,
                      [&](const ConstructOptions& o) { return build_4layer_classifier(data, d1, d2, d3, act, seed, o); });
}

Construction<FnnParams> construct_deep(const Dataset& data, const BlockLayout& layout, const Activation& act,
                                       std::uint64_t seed, const ConstructOptions& opts) {
  return with_redraws(opts, [&](const ConstructOptions& o) { return build_deep(data, layout, act, seed, o); });
}

}  // namespace memcap
