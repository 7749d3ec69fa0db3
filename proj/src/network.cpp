#include "memcap/network.hpp"

#include <cmath>
#include <sstream>

namespace memcap {

namespace {

std::string shape(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool near_breakpoint(const Activation& act, double z, double margin) {
  for (double bp : act.breakpoints())
    if (std::abs(z - bp) < margin) return true;
  return false;
}

// Rewrite rules for one hidden node.
enum class Rule { gate_to_hard_tanh, hard_tanh_to_relu, pass_through_relu };

// A hidden layer after expansion, plus the linear readout old = R * new + r0.
struct Expanded {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Eigen::MatrixXd R;
  Eigen::VectorXd r0;
};

Expanded expand_layer(const Eigen::MatrixXd& W, const Eigen::VectorXd& b, const std::vector<Rule>& rules,
                      const Activation& relu) {
  const Eigen::Index d = W.rows();
  Eigen::Index width = 0;
  for (Rule r : rules) width += (r == Rule::pass_through_relu) ? 1 : 2;
  Expanded e{Eigen::MatrixXd(width, W.cols()), Eigen::VectorXd(width), Eigen::MatrixXd::Zero(d, width),
             Eigen::VectorXd::Zero(d)};
  const double gap = relu.s_plus - relu.s_minus;
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    switch (rules[j]) {
      case Rule::gate_to_hard_tanh:
        e.W.row(k) = 2.0 * W.row(j);
        e.b(k) = 2.0 * b(j) + 1.0;
        e.W.row(k + 1) = -2.0 * W.row(j);
        e.b(k + 1) = -2.0 * b(j) + 1.0;
        e.R(j, k) = 0.5;
        e.R(j, k + 1) = 0.5;
        k += 2;
        break;
      case Rule::hard_tanh_to_relu:
        e.W.row(k) = W.row(j);
        e.b(k) = b(j) + 1.0;
        e.W.row(k + 1) = W.row(j);
        e.b(k + 1) = b(j) - 1.0;
        e.R(j, k) = 1.0 / gap;
        e.R(j, k + 1) = -1.0 / gap;
        e.r0(j) = -(relu.s_plus + relu.s_minus) / gap;
        k += 2;
        break;
      case Rule::pass_through_relu:
        e.W.row(k) = W.row(j);
        e.b(k) = b(j) + 2.0;
        e.R(j, k) = 1.0 / relu.s_plus;
        e.r0(j) = -2.0;
        k += 1;
        break;
    }
  }
  return e;
}

FnnParams expand_fnn(const FnnParams& params, const std::vector<std::vector<Rule>>& rules, const Activation& out_act,
                     const Activation& relu) {
  params.validate();
  FnnParams out;
  out.activation = out_act;
  const int L = params.depth();
  Eigen::MatrixXd R_prev;  // empty means identity
  Eigen::VectorXd r0_prev;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd W = params.layers[l].W;
    Eigen::VectorXd b = params.layers[l].b;
    if (R_prev.size() > 0) {
      b += W * r0_prev;
      W = (W * R_prev).eval();
    }
    if (l == L - 1) {
      out.layers.push_back({W, b});
      break;
    }
    Expanded e = expand_layer(W, b, rules[l], relu);
    out.layers.push_back({e.W, e.b});
    R_prev = std::move(e.R);
    r0_prev = std::move(e.r0);
  }
  return out;
}

ResidualBlock expand_block(const ResidualBlock& blk, const std::vector<Rule>& rules, const Activation& relu) {
  Expanded e = expand_layer(blk.U, blk.b, rules, relu);
  ResidualBlock out;
  out.U = e.W;
  out.b = e.b;
  out.V = blk.V * e.R;
  out.c = blk.c + blk.V * e.r0;
  return out;
}

ResNetParams expand_resnet(const ResNetParams& params, Rule rule, const Activation& out_act, const Activation& relu) {
  params.validate();
  ResNetParams out;
  out.activation = out_act;
  for (const auto& blk : params.blocks)
    out.blocks.push_back(expand_block(blk, std::vector<Rule>(blk.U.rows(), rule), relu));
  out.head = expand_block(params.head, std::vector<Rule>(params.head.U.rows(), rule), relu);
  return out;
}

}  // namespace

NotDifferentiable::NotDifferentiable(int layer_, int node_, double z_)
    : std::domain_error("pre-activation at layer " + std::to_string(layer_) + ", node " + std::to_string(node_) +
                        " is at an activation breakpoint (z = " + std::to_string(z_) + ")"),
      layer(layer_),
      node(node_),
      z(z_) {}

int FnnParams::input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
int FnnParams::output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }

std::vector<int> FnnParams::dims() const {
  std::vector<int> d;
  if (layers.empty()) return d;
  d.push_back(input_dim());
  for (const auto& layer : layers) d.push_back(static_cast<int>(layer.W.rows()));
  return d;
}

std::vector<int> FnnParams::hidden_widths() const {
  std::vector<int> d;
  for (int l = 0; l + 1 < depth(); ++l) d.push_back(static_cast<int>(layers[l].W.rows()));
  return d;
}

std::size_t FnnParams::num_params() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.W.size() + layer.b.size();
  return n;
}

void FnnParams::validate() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.b.size() != layer.W.rows())
      throw DimensionError("layer " + std::to_string(l + 1) + ": bias length " + std::to_string(layer.b.size()) +
                           " does not match W " + shape(layer.W));
    if (l > 0 && layer.W.cols() != layers[l - 1].W.rows())
      throw DimensionError("layer " + std::to_string(l + 1) + ": W " + shape(layer.W) + " does not follow W " +
                           shape(layers[l - 1].W));
  }
}

Eigen::VectorXd fnn_forward(const FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& x, FnnTrace* trace) {
  if (params.layers.empty()) throw DimensionError("network has no layers");
  if (x.size() != params.input_dim())
    throw DimensionError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(params.input_dim()));
  if (trace) {
    trace->z.clear();
    trace->a.clear();
    trace->a.push_back(x);
  }
  Eigen::VectorXd a = x;
  const int L = params.depth();
  for (int l = 0; l + 1 < L; ++l) {
    Eigen::VectorXd z = params.layers[l].W * a + params.layers[l].b;
    a = z.unaryExpr([&](double t) { return params.activation(t); });
    if (trace) {
      trace->z.push_back(std::move(z));
      trace->a.push_back(a);
    }
  }
  return params.layers.back().W * a + params.layers.back().b;
}

Eigen::MatrixXd fnn_forward_batch(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (params.layers.empty()) throw DimensionError("network has no layers");
  if (X.cols() != params.input_dim())
    throw DimensionError("inputs have dimension " + std::to_string(X.cols()) + ", network expects " +
                         std::to_string(params.input_dim()));
  Eigen::MatrixXd A = X;
  const int L = params.depth();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd Z = A * params.layers[l].W.transpose();
    Z.rowwise() += params.layers[l].b.transpose();
    if (l + 1 < L)
      A = Z.unaryExpr([&](double t) { return params.activation(t); });
    else
      A = std::move(Z);
  }
  return A;
}

Eigen::VectorXd fnn_gradient(const FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& x, double margin) {
  if (params.output_dim() != 1) throw DimensionError("gradient needs a scalar-output network");
  FnnTrace trace;
  fnn_forward(params, x, &trace);
  const int L = params.depth();
  for (int l = 0; l + 1 < L; ++l)
    for (Eigen::Index j = 0; j < trace.z[l].size(); ++j)
      if (near_breakpoint(params.activation, trace.z[l](j), margin)) throw NotDifferentiable(l + 1, j + 1, trace.z[l](j));

  Eigen::VectorXd grad(params.num_params());
  Eigen::Index off = 0;
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);  // D^l transposed
  for (int l = L - 1; l >= 0; --l) {
    const auto& layer = params.layers[l];
    const Eigen::VectorXd& a_prev = trace.a[l];
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + off, layer.W.rows(), layer.W.cols());
    gW.noalias() = delta * a_prev.transpose();
    off += layer.W.size();
    grad.segment(off, layer.b.size()) = delta;
    off += layer.b.size();
    if (l > 0) {
      Eigen::VectorXd back = layer.W.transpose() * delta;
      const Eigen::VectorXd& z = trace.z[l - 1];
      for (Eigen::Index j = 0; j < back.size(); ++j) back(j) *= params.activation.slope(z(j));
      delta = std::move(back);
    }
  }
  return grad;
}

bool is_differentiable_at(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X, double margin) {
  FnnTrace trace;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    fnn_forward(params, X.row(i).transpose(), &trace);
    for (const auto& z : trace.z)
      for (Eigen::Index j = 0; j < z.size(); ++j)
        if (near_breakpoint(params.activation, z(j), margin)) return false;
  }
  return true;
}

std::vector<int> activation_pattern(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  std::vector<int> pattern;
  const int L = params.depth();
  Eigen::MatrixXd A = X;
  std::vector<Eigen::MatrixXd> Zs;
  for (int l = 0; l + 1 < L; ++l) {
    Eigen::MatrixXd Z = A * params.layers[l].W.transpose();
    Z.rowwise() += params.layers[l].b.transpose();
    A = Z.unaryExpr([&](double t) { return params.activation(t); });
    Zs.push_back(std::move(Z));
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (const auto& Z : Zs)
      for (Eigen::Index j = 0; j < Z.cols(); ++j) pattern.push_back(params.activation.region(Z(i, j)));
  return pattern;
}

Eigen::VectorXd flatten_params(const FnnParams& params) {
  Eigen::VectorXd theta(params.num_params());
  Eigen::Index off = 0;
  for (int l = params.depth() - 1; l >= 0; --l) {
    const auto& layer = params.layers[l];
    theta.segment(off, layer.W.size()) = Eigen::Map<const Eigen::VectorXd>(layer.W.data(), layer.W.size());
    off += layer.W.size();
    theta.segment(off, layer.b.size()) = layer.b;
    off += layer.b.size();
  }
  return theta;
}

void assign_params(FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (static_cast<std::size_t>(theta.size()) != params.num_params())
    throw DimensionError("parameter vector has length " + std::to_string(theta.size()) + ", network has " +
                         std::to_string(params.num_params()));
  Eigen::Index off = 0;
  for (int l = params.depth() - 1; l >= 0; --l) {
    auto& layer = params.layers[l];
    Eigen::Map<Eigen::VectorXd>(layer.W.data(), layer.W.size()) = theta.segment(off, layer.W.size());
    off += layer.W.size();
    layer.b = theta.segment(off, layer.b.size());
    off += layer.b.size();
  }
}

int ResNetParams::hidden_nodes() const {
  int n = 0;
  for (const auto& blk : blocks) n += static_cast<int>(blk.U.rows());
  return n;
}

std::vector<int> ResNetParams::dims() const {
  std::vector<int> d{input_dim()};
  for (const auto& blk : blocks) d.push_back(static_cast<int>(blk.U.rows()));
  d.push_back(static_cast<int>(head.U.rows()));
  d.push_back(output_dim());
  return d;
}

void ResNetParams::validate() const {
  const Eigen::Index dx = head.U.cols();
  auto check = [&](const ResidualBlock& blk, const std::string& name, Eigen::Index out) {
    if (blk.U.cols() != dx) throw DimensionError(name + ": U " + shape(blk.U) + " must have " + std::to_string(dx) + " columns");
    if (blk.b.size() != blk.U.rows()) throw DimensionError(name + ": b length does not match U rows");
    if (blk.V.cols() != blk.U.rows()) throw DimensionError(name + ": V " + shape(blk.V) + " does not match U " + shape(blk.U));
    if (blk.V.rows() != out || blk.c.size() != out)
      throw DimensionError(name + ": V and c must map to dimension " + std::to_string(out));
  };
  for (std::size_t l = 0; l < blocks.size(); ++l) check(blocks[l], "block " + std::to_string(l + 1), dx);
  check(head, "head", head.V.rows());
}

Eigen::VectorXd apply_block(const ResidualBlock& block, const Activation& act, const Eigen::Ref<const Eigen::VectorXd>& h) {
  Eigen::VectorXd z = block.U * h + block.b;
  Eigen::VectorXd s = z.unaryExpr([&](double t) { return act(t); });
  return block.V * s + block.c;
}

Eigen::VectorXd resnet_forward(const ResNetParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                               std::vector<Eigen::VectorXd>* states) {
  if (x.size() != params.input_dim())
    throw DimensionError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(params.input_dim()));
  Eigen::VectorXd h = x;
  if (states) {
    states->clear();
    states->push_back(h);
  }
  for (const auto& blk : params.blocks) {
    h += apply_block(blk, params.activation, h);
    if (states) states->push_back(h);
  }
  return apply_block(params.head, params.activation, h);
}

Eigen::MatrixXd resnet_forward_batch(const ResNetParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  Eigen::MatrixXd out(X.rows(), params.output_dim());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = resnet_forward(params, X.row(i).transpose()).transpose();
  return out;
}

FnnParams gate_to_hard_tanh(const FnnParams& params) {
  if (params.activation.kind != ActivationKind::gate) throw std::invalid_argument("network is not a gate network");
  std::vector<std::vector<Rule>> rules;
  for (int w : params.hidden_widths()) rules.emplace_back(w, Rule::gate_to_hard_tanh);
  return expand_fnn(params, rules, Activation::hard_tanh(), Activation::relu_like());
}

FnnParams hard_tanh_to_relu(const FnnParams& params, const Activation& relu,
                            const std::vector<std::vector<bool>>& pass_through) {
  if (params.activation.kind != ActivationKind::hard_tanh) throw std::invalid_argument("network is not a hard-tanh network");
  if (relu.kind != ActivationKind::relu_like) throw std::invalid_argument("target activation must be relu_like");
  std::vector<std::vector<Rule>> rules;
  const auto widths = params.hidden_widths();
  for (std::size_t l = 0; l < widths.size(); ++l) {
    std::vector<Rule> r(widths[l], Rule::hard_tanh_to_relu);
    if (l < pass_through.size())
      for (std::size_t j = 0; j < pass_through[l].size() && j < r.size(); ++j)
        if (pass_through[l][j]) r[j] = Rule::pass_through_relu;
    rules.push_back(std::move(r));
  }
  return expand_fnn(params, rules, relu, relu);
}

ResNetParams gate_to_hard_tanh(const ResNetParams& params) {
  if (params.activation.kind != ActivationKind::gate) throw std::invalid_argument("network is not a gate network");
  return expand_resnet(params, Rule::gate_to_hard_tanh, Activation::hard_tanh(), Activation::relu_like());
}

ResNetParams hard_tanh_to_relu(const ResNetParams& params, const Activation& relu) {
  if (params.activation.kind != ActivationKind::hard_tanh) throw std::invalid_argument("network is not a hard-tanh network");
  if (relu.kind != ActivationKind::relu_like) throw std::invalid_argument("target activation must be relu_like");
  return expand_resnet(params, Rule::hard_tanh_to_relu, relu, relu);
}

FnnParams pad_hidden_widths(const FnnParams& params, const std::vector<int>& widths) {
  FnnParams out = params;
  const auto cur = params.hidden_widths();
  if (widths.size() != cur.size()) throw DimensionError("width list does not match the number of hidden layers");
  for (std::size_t l = 0; l < cur.size(); ++l) {
    const int extra = widths[l] - cur[l];
    if (extra < 0)
      throw DimensionError("hidden layer " + std::to_string(l + 1) + " needs " + std::to_string(cur[l]) +
                           " nodes but only " + std::to_string(widths[l]) + " are available");
    if (extra == 0) continue;
    auto& layer = out.layers[l];
    layer.W.conservativeResize(widths[l], Eigen::NoChange);
    layer.W.bottomRows(extra).setZero();
    layer.b.conservativeResize(widths[l]);
    layer.b.tail(extra).setConstant(params.activation.idle_bias());
    auto& next = out.layers[l + 1];
    next.W.conservativeResize(Eigen::NoChange, widths[l]);
    next.W.rightCols(extra).setZero();
  }
  return out;
}

}  // namespace memcap
