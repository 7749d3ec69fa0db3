#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memcap {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { regression, classification };

struct Dataset {
  Eigen::MatrixXd X;        // N x d_x
  Eigen::MatrixXd Y;        // N x d_y (regression only)
  std::vector<int> labels;  // classification only, values in [0, num_classes)
  TaskKind task = TaskKind::regression;
  int num_classes = 0;

  static Dataset regression(Eigen::MatrixXd X, Eigen::MatrixXd Y);
  static Dataset classification(Eigen::MatrixXd X, std::vector<int> labels, int num_classes);

  int size() const { return static_cast<int>(X.rows()); }
  int input_dim() const { return static_cast<int>(X.cols()); }
  int output_dim() const { return task == TaskKind::regression ? static_cast<int>(Y.cols()) : num_classes; }
  bool is_classification() const { return task == TaskKind::classification; }

  // Regression targets, or the one-hot encoding of the labels.
  Eigen::MatrixXd targets() const;
  Eigen::MatrixXd one_hot() const;
  Dataset subset(const std::vector<int>& rows) const;
};

// First pair of identical rows (0-based), if any.
std::optional<std::pair<int, int>> find_duplicate_rows(const Eigen::MatrixXd& X);
// Throws DatasetError naming both rows (1-based) when inputs repeat.
void require_distinct_inputs(const Dataset& data);
void require_targets_in_unit_box(const Dataset& data);

enum class DatasetKind { regression_uniform, regression_grid, classification_gaussian, general_position, hard_line };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

// regression_uniform: Gaussian inputs, targets uniform in [-0.9, 0.9].
// regression_grid: inputs evenly spaced on [-1, 1] along the first axis, same targets.
// classification_gaussian: Gaussian inputs, uniform random labels.
// general_position: like classification_gaussian, redrawn until in general position.
// hard_line: x_i = i e_1, y_i = (-1)^i.
Dataset gen_dataset(DatasetKind kind, int n, int d_x, int d_y, std::uint64_t seed);

Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string format_double(double v);

}  // namespace memcap
