#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "memcap/dataset.hpp"
#include "memcap/network.hpp"

namespace memcap {

class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedArchitecture : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConstructOptions {
  double clip_margin = 1e-3;   // |z| >= 1 + clip_margin for clipped layer-2 nodes
  double gap_tol = 1e-12;      // projected gaps relative to their range
  int max_resamples = 64;
  int max_doublings = 60;
  double interp_tol = 1e-9;
  double fit_tol = 1e-6;       // directions whose construction misses this are redrawn
  int first_direction = 0;     // index of the first projection direction tried
  // Three-layer output gain s: layer 2 fits y / s, the output layer is s * 1^T with
  // bias -s. The function is unchanged; gradients behind the output layer scale by s.
  double output_gain = 1.0;
};

// Architecture description for the capacity conditions.
//   widths: hidden widths d_1..d_{L-1}
//   blocks: for deep layouts, 1-based hidden-layer indices l_1 < ... < l_m
struct ArchSpec {
  std::vector<int> widths;
  Activation activation;
  int d_y = 1;
  bool classification = false;
  std::vector<int> blocks;
};

struct CapacityCheck {
  bool ok = false;
  std::string theorem;
  std::string arithmetic;  // the evaluated inequality
  long long capacity = 0;
};

// Throws UnsupportedArchitecture for shapes no construction covers.
CapacityCheck check_capacity(const ArchSpec& arch, long long n);

// Data sorted along a random direction u. c holds c_0 .. c_{n+1} including both
// sentinels; entries 1..n_real are projections of real points, the rest fillers.
struct ProjectionPlan {
  Eigen::VectorXd u;
  std::vector<int> perm;  // perm[i] = dataset row of the (i+1)-th smallest projection
  std::vector<double> c;
  double delta = 1.0;
  int n_real = 0;
  int resamples = 0;

  int size() const { return static_cast<int>(c.size()) - 2; }
};

ProjectionPlan project_and_sort(const Dataset& data, std::uint64_t seed, const ConstructOptions& opts = {});
// Appends filler coordinates beyond the last point until the plan holds n_total points.
ProjectionPlan pad_plan(const ProjectionPlan& plan, int n_total);

// First layer acting on a scalar coordinate: z_j = scale_j * c + bias_j.
struct Layer1Coefficients {
  Eigen::VectorXd scale;
  Eigen::VectorXd bias;
  double margin = 0.0;  // smallest distance of any z to +-1
};

// coords: c_0 .. c_{pq+1}. Verifies the interleaving and clipping pattern; throws
// ConstructionError when it does not hold.
Layer1Coefficients layer1_coefficients(const std::vector<double>& coords, int p, int q);

struct Layer1 {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  double margin = 0.0;
};
Layer1 layer1_params(const ProjectionPlan& plan, int p, int q);

// Members i_{k,1} < ... < i_{k,p} (1-based) of the k-th layer-2 index set.
std::vector<int> index_set(int k, int p, int q);

struct Layer2Row {
  Eigen::VectorXd w;
  double b = 0.0;
  double alpha = 0.0;
  Eigen::VectorXd null_vector;  // unit norm, first p entries positive
  Eigen::VectorXd singular_values;
  double clip_margin_min = 0.0;
  double clip_margin_max = 0.0;
  double interp_error = 0.0;
};

// layer1_out: outputs of the p first-layer nodes at the pq sorted points.
Layer2Row solve_layer2_row(int k, int q, const Eigen::MatrixXd& layer1_out, const Eigen::VectorXd& targets, int sign,
                           const ConstructOptions& opts = {});

struct BlockSummary {
  int first_layer = 1;
  int p = 0;
  int q = 0;
  int points = 0;
  int fillers = 0;
  double layer1_margin = 0.0;
  double clip_margin_min = 0.0;
  double clip_margin_max = 0.0;
  double interp_error = 0.0;
  std::vector<double> alphas;
};

struct ConstructionReport {
  std::string theorem;
  std::string activation;
  std::vector<int> widths;
  std::uint64_t seed = 0;
  int n = 0;
  int resamples = 0;
  CapacityCheck capacity;
  std::vector<BlockSummary> blocks;
  double fit_error = 0.0;  // max |f(x_i) - y_i| (one-hot targets for classification)
  int misclassified = 0;
};

template <class Params>
struct Construction {
  Params params;
  ConstructionReport report;
};

Construction<FnnParams> construct_3layer(const Dataset& data, int d1, int d2, const Activation& act, std::uint64_t seed,
                                         const ConstructOptions& opts = {});

Construction<FnnParams> construct_4layer_classifier(const Dataset& data, int d1, int d2, int d3, const Activation& act,
                                                   std::uint64_t seed, const ConstructOptions& opts = {});

// Hidden widths d_1..d_{L-1} and block starts l_1 < ... < l_m (1-based).
struct BlockLayout {
  std::vector<int> widths;
  std::vector<int> blocks;
  int d_y = 1;

  int depth() const { return static_cast<int>(widths.size()) + 1; }
  int num_blocks() const { return static_cast<int>(blocks.size()); }
  // Corridor nodes reserved inside block j (0-based).
  int reserved(int j) const;
};

// Regression data: stacked fitting blocks joined by input/output corridors.
// Classification data: blocks fit class codes, the last index is a gate layer.
Construction<FnnParams> construct_deep(const Dataset& data, const BlockLayout& layout, const Activation& act,
                                       std::uint64_t seed, const ConstructOptions& opts = {});

double max_abs_error(const FnnParams& params, const Dataset& data);
int count_misclassified(const Eigen::MatrixXd& outputs, const Dataset& data);

}  // namespace memcap
