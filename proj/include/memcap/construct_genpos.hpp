#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcap/construct_fnn.hpp"
#include "memcap/dataset.hpp"
#include "memcap/network.hpp"

namespace memcap {

class GeneralPositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneralPositionOptions {
  std::uint64_t seed = 0;
  double tol = 1e-8;                       // threshold on affine_conditioning
  long long exhaustive_limit = 1000000;    // largest C(N, d_x+1) checked exhaustively
  int samples = 2000;
};

struct GeneralPositionReport {
  bool general = true;
  bool exhaustive = true;
  long long subsets_checked = 0;
  double min_conditioning = INFINITY;
  std::vector<int> witness;  // a failing subset, if any
};

// Smallest over largest singular value of the differences x_j - x_0 of a subset:
// its relative distance to affine dependence (0 when dependent).
double affine_conditioning(const Eigen::MatrixXd& X, const std::vector<int>& subset);

GeneralPositionReport check_general_position(const Eigen::MatrixXd& X, const GeneralPositionOptions& opts = {});
bool is_general_position(const Eigen::MatrixXd& X, double tol = 1e-8);

struct Hyperplane {
  Eigen::VectorXd u;  // unit norm
  double c = 0.0;
  std::vector<int> selected;
  double separation = 0.0;  // min |u^T x + c| over the other rows
};

// Plane through the selected rows of X (fewer than d_x rows are completed with
// random directions). Throws GeneralPositionError if the selection is affinely
// dependent or another row lies within sep_tol of the plane.
Hyperplane hyperplane_through(const Eigen::MatrixXd& X, const std::vector<int>& selected, std::uint64_t seed = 0,
                              double sep_tol = 1e-9);

struct GenposOptions {
  int hidden_nodes = 0;  // hidden-node budget (block nodes for ResNets); 0 selects node_budget
  int block_width = 0;   // gates per residual block; 0 selects d_x
  double clip_margin = 1e-3;
  int max_doublings = 60;
  int max_redraws = 16;
  GeneralPositionOptions genpos;
};

struct GateNode {
  int cls = 0;
  std::vector<int> indices;
  double alpha = 0.0;
  double beta = 0.0;
  double separation = 0.0;
  int block = 0;
};

struct GenposReport {
  std::string theorem;
  std::string activation;
  std::uint64_t seed = 0;
  int n = 0;
  int required_nodes = 0;
  int hidden_nodes = 0;
  int gates = 0;
  std::string budget_arithmetic;
  std::vector<GateNode> nodes;
  std::vector<double> class_max;  // x_max(k)
  int redraws = 0;
  double fit_error = 0.0;
  int misclassified = 0;
};

template <class Params>
struct GenposConstruction {
  Params params;
  GenposReport report;
};

GenposConstruction<ResNetParams> construct_resnet_classifier(const Dataset& data, const Activation& act,
                                                             std::uint64_t seed, const GenposOptions& opts = {});
GenposConstruction<FnnParams> construct_2layer_classifier(const Dataset& data, const Activation& act, std::uint64_t seed,
                                                          const GenposOptions& opts = {});

enum class GenposArch { resnet, fnn2 };
GenposArch parse_genpos_arch(const std::string& name);

// Smallest hidden-node count meeting the general-position bound; ResNets include
// the d_L head nodes.
int node_budget(long long n, int d_x, int d_y, GenposArch arch, const Activation& act);
std::string node_budget_arithmetic(long long n, int d_x, int d_y, GenposArch arch, const Activation& act);

}  // namespace memcap
