#include "memcap/construct_genpos.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "memcap/rng.hpp"

namespace memcap {

double affine_conditioning(const Eigen::MatrixXd& X, const std::vector<int>& subset) {
  const int s = static_cast<int>(subset.size());
  if (s <= 1) return 1.0;
  if (s - 1 > X.cols()) return 0.0;
  Eigen::MatrixXd D(X.cols(), s - 1);
  for (int j = 1; j < s; ++j) D.col(j - 1) = (X.row(subset[j]) - X.row(subset[0])).transpose();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(D).singularValues();
  if (!(sv(0) > 0.0)) return 0.0;
  return sv(s - 2) / sv(0);
}

namespace {

long long binomial_capped(long long n, long long k, long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (long long i = 1; i <= k; ++i) {
    r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (r > static_cast<long double>(cap)) return cap + 1;
  }
  return static_cast<long long>(std::llround(r));
}

void record(GeneralPositionReport& rep, const Eigen::MatrixXd& X, const std::vector<int>& subset, double tol) {
  const double v = affine_conditioning(X, subset);
  ++rep.subsets_checked;
  if (v < rep.min_conditioning) rep.min_conditioning = v;
  if (v < tol && rep.general) {
    rep.general = false;
    rep.witness = subset;
  }
}

}  // namespace

GeneralPositionReport check_general_position(const Eigen::MatrixXd& X, const GeneralPositionOptions& opts) {
  GeneralPositionReport rep;
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(X.cols()) + 1;
  if (n <= 1) return rep;
  if (n < k) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    record(rep, X, all, opts.tol);
    return rep;
  }
  if (binomial_capped(n, k, opts.exhaustive_limit) <= opts.exhaustive_limit) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      record(rep, X, idx, opts.tol);
      if (!rep.general) return rep;
      int i = k - 1;
      while (i >= 0 && idx[i] == n - k + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return rep;
  }
  rep.exhaustive = false;
  Rng rng(derive_seed(opts.seed, "general-position-samples"));
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int s = 0; s < opts.samples && rep.general; ++s) {
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<int> subset(pool.begin(), pool.begin() + k);
    std::sort(subset.begin(), subset.end());
    record(rep, X, subset, opts.tol);
  }
  return rep;
}

bool is_general_position(const Eigen::MatrixXd& X, double tol) {
  GeneralPositionOptions o;
  o.tol = tol;
  return check_general_position(X, o).general;
}

Hyperplane hyperplane_through(const Eigen::MatrixXd& X, const std::vector<int>& selected, std::uint64_t seed,
                              double sep_tol) {
  const int d = static_cast<int>(X.cols());
  const int s = static_cast<int>(selected.size());
  if (s < 1 || s > d) throw std::invalid_argument("a hyperplane needs between 1 and d_x selected points");
  for (int i : selected)
    if (i < 0 || i >= X.rows()) throw std::out_of_range("selected row out of range");
  double scale = 1.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) scale = std::max(scale, X.row(i).norm());

  Eigen::VectorXd u;
  if (d == 1) {
    u = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::MatrixXd basis;  // orthonormal basis of the directions orthogonal to the differences
    if (s == 1) {
      basis = Eigen::MatrixXd::Identity(d, d);
    } else {
      Eigen::MatrixXd D(s - 1, d);
      for (int j = 1; j < s; ++j) D.row(j - 1) = X.row(selected[j]) - X.row(selected[0]);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      if (!(sv(s - 2) > 1e-12 * std::max(sv(0), 1e-300)))
        throw GeneralPositionError("selected points are affinely dependent");
      basis = svd.matrixV().rightCols(d - s + 1);
    }
    if (basis.cols() == 1) {
      u = basis.col(0);
    } else {
      Rng rng(derive_seed(seed, "hyperplane-completion"));
      u = basis * (basis.transpose() * gaussian_vector(rng, d));
    }
    u.normalize();
    Eigen::Index lead = 0;
    u.cwiseAbs().maxCoeff(&lead);
    if (u(lead) < 0) u = -u;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (int i : selected) mean += X.row(i).transpose();
  mean /= s;
  Hyperplane h;
  h.u = u;
  h.c = -u.dot(mean);
  h.selected = selected;
  std::vector<char> chosen(X.rows(), 0);
  for (int i : selected) chosen[i] = 1;
  h.separation = INFINITY;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double r = std::abs(u.dot(X.row(i).transpose()) + h.c);
    if (chosen[i]) {
      if (r > 1e-9 * scale) throw GeneralPositionError("plane misses a selected point by " + std::to_string(r));
    } else {
      h.separation = std::min(h.separation, r);
    }
  }
  if (h.separation < sep_tol * scale)
    throw GeneralPositionError("a non-selected point lies on the plane (separation " + std::to_string(h.separation) + ")");
  return h;
}

GenposArch parse_genpos_arch(const std::string& name) {
  if (name == "resnet") return GenposArch::resnet;
  if (name == "fnn2") return GenposArch::fnn2;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected resnet or fnn2)");
}

namespace {

int nodes_per_gate(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::hard_tanh: return 2;
    case ActivationKind::relu_like: return 4;
    default: throw UnsupportedArchitecture("general-position constructions need hard_tanh or relu_like");
  }
}

}  // namespace

int node_budget(long long n, int d_x, int d_y, GenposArch arch, const Activation& act) {
  if (n < 0 || d_x < 1 || d_y < 1) throw std::invalid_argument("node_budget needs positive dimensions");
  const long long f = nodes_per_gate(act);
  const long long num = f * n + f * d_y * static_cast<long long>(d_x);
  long long budget = (num + d_x - 1) / d_x;
  if (arch == GenposArch::resnet) budget += f / 2 * d_y;
  return static_cast<int>(budget);
}

std::string node_budget_arithmetic(long long n, int d_x, int d_y, GenposArch arch, const Activation& act) {
  const int f = nodes_per_gate(act);
  std::ostringstream os;
  os << "ceil(" << f << "*" << n << "/" << d_x << " + " << f << "*" << d_y << ") = "
     << node_budget(n, d_x, d_y, GenposArch::fnn2, act);
  if (arch == GenposArch::resnet) os << "; + head " << f / 2 * d_y << " = " << node_budget(n, d_x, d_y, arch, act);
  return os.str();
}

namespace {

struct GatePlan {
  int cls;
  std::vector<int> indices;
};

std::vector<GatePlan> group_points(const Dataset& data, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "grouping"));
  const Eigen::VectorXd proj = data.X * gaussian_vector(rng, data.input_dim());
  std::vector<GatePlan> gates;
  const int dx = data.input_dim();
  for (int k = 0; k < data.num_classes; ++k) {
    std::vector<int> members;
    for (int i = 0; i < data.size(); ++i)
      if (data.labels[i] == k) members.push_back(i);
    std::stable_sort(members.begin(), members.end(), [&](int a, int b) { return proj(a) < proj(b); });
    for (std::size_t s = 0; s < members.size(); s += dx) {
      const std::size_t e = std::min(members.size(), s + dx);
      gates.push_back({k, std::vector<int>(members.begin() + s, members.begin() + e)});
    }
  }
  return gates;
}

double gate_scale(const Eigen::MatrixXd& H, const Hyperplane& h, double margin, int max_doublings) {
  std::vector<char> chosen(H.rows(), 0);
  for (int i : h.selected) chosen[i] = 1;
  double alpha = 1.0;
  for (int d = 0; d <= max_doublings; ++d, alpha *= 2.0) {
    bool ok = true;
    for (Eigen::Index i = 0; i < H.rows() && ok; ++i)
      if (!chosen[i] && alpha * std::abs(h.u.dot(H.row(i).transpose()) + h.c) < 1.0 + margin) ok = false;
    if (ok) return alpha;
  }
  throw ConstructionError("no gate scale separates the selected points within " + std::to_string(max_doublings) +
                          " doublings");
}

void check_inputs(const Dataset& data, const Activation& act) {
  if (!data.is_classification()) throw std::invalid_argument("general-position constructions need class labels");
  nodes_per_gate(act);
  require_distinct_inputs(data);
}

void check_genpos(const Eigen::MatrixXd& X, const GeneralPositionOptions& opts, const char* what) {
  const auto rep = check_general_position(X, opts);
  if (!rep.general) throw GeneralPositionError(std::string(what) + " are not in general position");
}

Eigen::MatrixXd one_hot_error(const Eigen::MatrixXd& out, const Dataset& data) { return out - data.one_hot(); }

void finish(GenposReport& r, const Eigen::MatrixXd& out, const Dataset& data) {
  r.fit_error = data.size() ? one_hot_error(out, data).cwiseAbs().maxCoeff() : 0.0;
  r.misclassified = count_misclassified(out, data);
}

}  // namespace

GenposConstruction<ResNetParams> construct_resnet_classifier(const Dataset& data, const Activation& act,
                                                             std::uint64_t seed, const GenposOptions& opts) {
  check_inputs(data, act);
  const int dx = data.input_dim(), dy = data.num_classes, n = data.size();
  if (dx < dy) throw UnsupportedArchitecture("ResNet classifier needs d_x >= d_y");
  GeneralPositionOptions gp = opts.genpos;
  gp.seed = derive_seed(seed, "input-general-position");
  check_genpos(data.X, gp, "inputs");

  const int f = nodes_per_gate(act);
  const int head = f / 2 * dy;
  const int budget = opts.hidden_nodes > 0 ? opts.hidden_nodes : node_budget(n, dx, dy, GenposArch::resnet, act) - head;
  std::vector<GatePlan> gates = group_points(data, seed);
  GenposReport rep;
  rep.theorem = "thm4";
  rep.activation = act.name();
  rep.seed = seed;
  rep.n = n;
  rep.gates = static_cast<int>(gates.size());
  rep.required_nodes = f * rep.gates;
  rep.hidden_nodes = budget;
  rep.budget_arithmetic = node_budget_arithmetic(n, dx, dy, GenposArch::resnet, act);
  if (rep.required_nodes > budget)
    throw ConstructionError("needs " + std::to_string(rep.required_nodes) + " hidden nodes, budget is " +
                            std::to_string(budget));

  rep.class_max.resize(dy);
  for (int k = 0; k < dy; ++k) rep.class_max[k] = n ? data.X.col(k).maxCoeff() : 0.0;

  const Activation ht = Activation::hard_tanh();
  ResNetParams net;
  net.activation = ht;
  Eigen::MatrixXd H = data.X;
  const int per_block = opts.block_width > 0 ? opts.block_width : dx;
  for (std::size_t g0 = 0, blk = 0; g0 < gates.size(); g0 += per_block, ++blk) {
    const std::size_t g1 = std::min(gates.size(), g0 + per_block);
    const int w = static_cast<int>(2 * (g1 - g0));
    ResidualBlock block{Eigen::MatrixXd::Zero(w, dx), Eigen::MatrixXd::Zero(dx, w), Eigen::VectorXd::Zero(w),
                        Eigen::VectorXd::Zero(dx)};
    std::vector<GateNode> nodes;
    std::vector<double> beta_min;
    for (std::size_t g = g0; g < g1; ++g) {
      const auto& gate = gates[g];
      Hyperplane h = hyperplane_through(H, gate.indices, derive_seed(seed, "plane", g));
      const double alpha = gate_scale(H, h, opts.clip_margin, opts.max_doublings);
      const int r = static_cast<int>(2 * (g - g0));
      block.U.row(r) = 2.0 * alpha * h.u.transpose();
      block.b(r) = 2.0 * alpha * h.c + 1.0;
      block.U.row(r + 1) = -2.0 * alpha * h.u.transpose();
      block.b(r + 1) = -2.0 * alpha * h.c + 1.0;
      // Gate output at the selected points (1 up to rounding).
      double need = 0.0;
      for (int i : gate.indices) {
        const double t = alpha * (h.u.dot(H.row(i).transpose()) + h.c);
        const double out = 0.5 * (ht(2 * t + 1) + ht(-2 * t + 1));
        need = std::max(need, (rep.class_max[gate.cls] + 1.0 + opts.clip_margin - H(i, gate.cls)) / out);
      }
      beta_min.push_back(std::max(need, 0.0));
      nodes.push_back({gate.cls, gate.indices, alpha, 0.0, h.separation, static_cast<int>(blk)});
    }
    Eigen::MatrixXd next;
    bool placed = false;
    for (int attempt = 0; attempt <= opts.max_redraws && !placed; ++attempt) {
      Rng rng(derive_seed(seed, "beta", blk * 1000 + attempt));
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double lo = beta_min[j] + 1.0;
        nodes[j].beta = uniform(rng, lo, 2.0 * lo);
        block.V.col(2 * j).setZero();
        block.V.col(2 * j + 1).setZero();
        block.V(nodes[j].cls, 2 * j) = 0.5 * nodes[j].beta;
        block.V(nodes[j].cls, 2 * j + 1) = 0.5 * nodes[j].beta;
      }
      next = H;
      for (int i = 0; i < n; ++i) next.row(i) += apply_block(block, ht, H.row(i).transpose()).transpose();
      GeneralPositionOptions o = opts.genpos;
      o.seed = derive_seed(seed, "state-general-position", blk);
      placed = check_general_position(next, o).general;
      if (!placed) ++rep.redraws;
    }
    if (!placed) throw GeneralPositionError("pushed states lost general position after every redraw");
    H = std::move(next);
    net.blocks.push_back(std::move(block));
    for (auto& node : nodes) rep.nodes.push_back(std::move(node));
  }

  net.head.U = Eigen::MatrixXd::Zero(dy, dx);
  net.head.U.leftCols(dy) = 2.0 * Eigen::MatrixXd::Identity(dy, dy);
  net.head.b.resize(dy);
  for (int k = 0; k < dy; ++k) net.head.b(k) = -2.0 * rep.class_max[k] - 1.0;
  net.head.V = 0.5 * Eigen::MatrixXd::Identity(dy, dy);
  net.head.c = Eigen::VectorXd::Constant(dy, 0.5);

  GenposConstruction<ResNetParams> out;
  out.params = act.kind == ActivationKind::relu_like ? hard_tanh_to_relu(net, act) : net;
  // Idle nodes fill the remaining budget.
  const int used = out.params.hidden_nodes();
  if (used < budget) {
    if (out.params.blocks.empty())
      out.params.blocks.push_back({Eigen::MatrixXd::Zero(0, dx), Eigen::MatrixXd::Zero(dx, 0), Eigen::VectorXd::Zero(0),
                                   Eigen::VectorXd::Zero(dx)});
    auto& last = out.params.blocks.back();
    const Eigen::Index w = last.U.rows(), extra = budget - used;
    last.U.conservativeResize(w + extra, Eigen::NoChange);
    last.U.bottomRows(extra).setZero();
    last.b.conservativeResize(w + extra);
    last.b.tail(extra).setConstant(act.idle_bias());
    last.V.conservativeResize(Eigen::NoChange, w + extra);
    last.V.rightCols(extra).setZero();
  }
  out.report = std::move(rep);
  finish(out.report, data.size() ? resnet_forward_batch(out.params, data.X) : Eigen::MatrixXd(0, dy), data);
  return out;
}

GenposConstruction<FnnParams> construct_2layer_classifier(const Dataset& data, const Activation& act, std::uint64_t seed,
                                                          const GenposOptions& opts) {
  check_inputs(data, act);
  const int dx = data.input_dim(), dy = data.num_classes, n = data.size();
  GeneralPositionOptions gp = opts.genpos;
  gp.seed = derive_seed(seed, "input-general-position");
  check_genpos(data.X, gp, "inputs");
  const int f = nodes_per_gate(act);
  const int budget = opts.hidden_nodes > 0 ? opts.hidden_nodes : node_budget(n, dx, dy, GenposArch::fnn2, act);
  std::vector<GatePlan> gates = group_points(data, seed);
  GenposReport rep;
  rep.theorem = "cor5";
  rep.activation = act.name();
  rep.seed = seed;
  rep.n = n;
  rep.gates = static_cast<int>(gates.size());
  rep.required_nodes = f * rep.gates;
  rep.hidden_nodes = budget;
  rep.budget_arithmetic = node_budget_arithmetic(n, dx, dy, GenposArch::fnn2, act);
  if (rep.required_nodes > budget)
    throw ConstructionError("needs " + std::to_string(rep.required_nodes) + " hidden nodes, budget is " +
                            std::to_string(budget));

  const int w = 2 * rep.gates;
  FnnParams net;
  net.activation = Activation::hard_tanh();
  DenseLayer l1{Eigen::MatrixXd::Zero(w, dx), Eigen::VectorXd::Zero(w)};
  DenseLayer l2{Eigen::MatrixXd::Zero(dy, w), Eigen::VectorXd::Zero(dy)};
  for (std::size_t g = 0; g < gates.size(); ++g) {
    Hyperplane h = hyperplane_through(data.X, gates[g].indices, derive_seed(seed, "plane", g));
    const double alpha = gate_scale(data.X, h, opts.clip_margin, opts.max_doublings);
    const int r = static_cast<int>(2 * g);
    l1.W.row(r) = 2.0 * alpha * h.u.transpose();
    l1.b(r) = 2.0 * alpha * h.c + 1.0;
    l1.W.row(r + 1) = -2.0 * alpha * h.u.transpose();
    l1.b(r + 1) = -2.0 * alpha * h.c + 1.0;
    l2.W(gates[g].cls, r) = 0.5;
    l2.W(gates[g].cls, r + 1) = 0.5;
    rep.nodes.push_back({gates[g].cls, gates[g].indices, alpha, 1.0, h.separation, 0});
  }
  net.layers = {l1, l2};
  GenposConstruction<FnnParams> out;
  out.params = act.kind == ActivationKind::relu_like ? hard_tanh_to_relu(net, act) : net;
  out.params = pad_hidden_widths(out.params, {budget});
  out.report = std::move(rep);
  finish(out.report, data.size() ? fnn_forward_batch(out.params, data.X) : Eigen::MatrixXd(0, dy), data);
  return out;
}

}  // namespace memcap
