#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcap/activation.hpp"

namespace memcap {

inline constexpr double kDefaultDiffMargin = 1e-9;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotDifferentiable : public std::domain_error {
 public:
  NotDifferentiable(int layer, int node, double z);
  int layer;
  int node;
  double z;
};

struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

// L-layer fully connected network; layers[0..L-2] are hidden (activation applied),
// layers[L-1] is the affine output layer.
struct FnnParams {
  std::vector<DenseLayer> layers;
  Activation activation;

  int depth() const { return static_cast<int>(layers.size()); }
  int input_dim() const;
  int output_dim() const;
  std::vector<int> dims() const;
  std::vector<int> hidden_widths() const;
  std::size_t num_params() const;
  void validate() const;
};

struct FnnTrace {
  std::vector<Eigen::VectorXd> z;  // pre-activations of hidden layers 1..L-1
  std::vector<Eigen::VectorXd> a;  // a[0] = x, a[l] = sigma(z[l-1])
};

Eigen::VectorXd fnn_forward(const FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                            FnnTrace* trace = nullptr);
// Rows of X are inputs; returns one output row per input.
Eigen::MatrixXd fnn_forward_batch(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X);

// Gradient of the scalar output with respect to all parameters, ordered
// (vec(W^L), b^L, ..., vec(W^1), b^1) with column-major vec.
Eigen::VectorXd fnn_gradient(const FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                             double margin = kDefaultDiffMargin);

bool is_differentiable_at(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                          double margin = kDefaultDiffMargin);

// Activation region of every hidden node at every input, layer-major per input.
std::vector<int> activation_pattern(const FnnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X);

// Parameter vector in the same order as fnn_gradient.
Eigen::VectorXd flatten_params(const FnnParams& params);
void assign_params(FnnParams& params, const Eigen::Ref<const Eigen::VectorXd>& theta);

struct ResidualBlock {
  Eigen::MatrixXd U;  // d_l x d_x
  Eigen::MatrixXd V;  // d_x x d_l (head: d_y x d_L)
  Eigen::VectorXd b;  // d_l
  Eigen::VectorXd c;  // d_x (head: d_y)
};

struct ResNetParams {
  std::vector<ResidualBlock> blocks;
  ResidualBlock head;
  Activation activation;

  int input_dim() const { return static_cast<int>(head.U.cols()); }
  int output_dim() const { return static_cast<int>(head.V.rows()); }
  int hidden_nodes() const;  // sum of block widths, head excluded
  std::vector<int> dims() const;
  void validate() const;
};

// V sigma(U h + b) + c: the increment a block adds to h, or the head output.
Eigen::VectorXd apply_block(const ResidualBlock& block, const Activation& act,
                            const Eigen::Ref<const Eigen::VectorXd>& h);
Eigen::VectorXd resnet_forward(const ResNetParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                               std::vector<Eigen::VectorXd>* states = nullptr);
Eigen::MatrixXd resnet_forward_batch(const ResNetParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X);

// Width-changing rewrites that keep the computed function.
//
// gate_to_hard_tanh: every gate node (w, b) becomes hard-tanh nodes (2w, 2b+1) and
// (-2w, -2b+1) read with weight 1/2 each.
//
// hard_tanh_to_relu: every hard-tanh node (w, b) becomes relu-like nodes (w, b+1),
// (w, b-1); nodes flagged in pass_through (values known to stay in (-1, 1]) become
// a single shifted node (w, b+2) instead.
FnnParams gate_to_hard_tanh(const FnnParams& params);
FnnParams hard_tanh_to_relu(const FnnParams& params, const Activation& relu,
                            const std::vector<std::vector<bool>>& pass_through = {});
ResNetParams gate_to_hard_tanh(const ResNetParams& params);
ResNetParams hard_tanh_to_relu(const ResNetParams& params, const Activation& relu);

// Appends idle hidden nodes (zero weights in and out) until each hidden layer has the
// requested width.
FnnParams pad_hidden_widths(const FnnParams& params, const std::vector<int>& widths);

}  // namespace memcap
