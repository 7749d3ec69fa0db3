#include "memcap/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "memcap/capacity.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/rng.hpp"

namespace memcap {

Dataset Dataset::regression(Eigen::MatrixXd X, Eigen::MatrixXd Y) {
  if (X.rows() != Y.rows()) throw DatasetError("X and Y have different row counts");
  Dataset d;
  d.X = std::move(X);
  d.Y = std::move(Y);
  d.task = TaskKind::regression;
  return d;
}

Dataset Dataset::classification(Eigen::MatrixXd X, std::vector<int> labels, int num_classes) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw DatasetError("X and labels have different lengths");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DatasetError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i + 1) + " outside [0, " +
                         std::to_string(num_classes) + ")");
  Dataset d;
  d.X = std::move(X);
  d.labels = std::move(labels);
  d.num_classes = num_classes;
  d.task = TaskKind::classification;
  return d;
}

Eigen::MatrixXd Dataset::one_hot() const {
  Eigen::MatrixXd Y1 = Eigen::MatrixXd::Zero(size(), num_classes);
  for (int i = 0; i < size(); ++i) Y1(i, labels[i]) = 1.0;
  return Y1;
}

Eigen::MatrixXd Dataset::targets() const { return is_classification() ? one_hot() : Y; }

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset d = *this;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  if (is_classification()) d.labels.clear();
  else d.Y.resize(static_cast<Eigen::Index>(rows.size()), Y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    d.X.row(r) = X.row(rows[r]);
    if (is_classification()) d.labels.push_back(labels[rows[r]]);
    else d.Y.row(r) = Y.row(rows[r]);
  }
  return d;
}

std::optional<std::pair<int, int>> find_duplicate_rows(const Eigen::MatrixXd& X) {
  std::vector<int> idx(X.rows());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](int a, int b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (X(a, j) < X(b, j)) return true;
      if (X(a, j) > X(b, j)) return false;
    }
    return a < b;
  };
  std::sort(idx.begin(), idx.end(), less);
  for (std::size_t k = 1; k < idx.size(); ++k)
    if (X.row(idx[k - 1]) == X.row(idx[k])) return std::make_pair(std::min(idx[k - 1], idx[k]), std::max(idx[k - 1], idx[k]));
  return std::nullopt;
}

void require_distinct_inputs(const Dataset& data) {
  if (auto dup = find_duplicate_rows(data.X))
    throw DatasetError("duplicate input rows " + std::to_string(dup->first + 1) + " and " +
                       std::to_string(dup->second + 1));
}

void require_targets_in_unit_box(const Dataset& data) {
  if (data.is_classification()) return;
  for (Eigen::Index i = 0; i < data.Y.rows(); ++i)
    for (Eigen::Index j = 0; j < data.Y.cols(); ++j)
      if (!(std::abs(data.Y(i, j)) <= 1.0))
        throw DatasetError("target at row " + std::to_string(i + 1) + " is outside [-1, 1]");
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "regression_uniform") return DatasetKind::regression_uniform;
  if (name == "regression_grid") return DatasetKind::regression_grid;
  if (name == "classification_gaussian") return DatasetKind::classification_gaussian;
  if (name == "general_position") return DatasetKind::general_position;
  if (name == "hard_line") return DatasetKind::hard_line;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::regression_uniform:
      return "regression_uniform";
    case DatasetKind::regression_grid:
      return "regression_grid";
    case DatasetKind::classification_gaussian:
      return "classification_gaussian";
    case DatasetKind::general_position:
      return "general_position";
    case DatasetKind::hard_line:
      return "hard_line";
  }
  return "?";
}

namespace {

Eigen::MatrixXd uniform_targets(Rng& rng, int n, int d_y) {
  Eigen::MatrixXd Y(n, d_y);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d_y; ++j) Y(i, j) = uniform(rng, -0.9, 0.9);
  return Y;
}

std::vector<int> uniform_labels(Rng& rng, int n, int d_y) {
  std::uniform_int_distribution<int> pick(0, d_y - 1);
  std::vector<int> labels(n);
  for (auto& l : labels) l = pick(rng);
  return labels;
}

}  // namespace

Dataset gen_dataset(DatasetKind kind, int n, int d_x, int d_y, std::uint64_t seed) {
  if (n < 0 || d_x < 1 || d_y < 1) throw std::invalid_argument("dataset needs n >= 0, d_x >= 1, d_y >= 1");
  switch (kind) {
    case DatasetKind::regression_uniform: {
      Rng rx(derive_seed(seed, "inputs")), ry(derive_seed(seed, "targets"));
      Eigen::MatrixXd X = gaussian_matrix(rx, n, d_x);
      return Dataset::regression(std::move(X), uniform_targets(ry, n, d_y));
    }
    case DatasetKind::regression_grid: {
      Rng ry(derive_seed(seed, "targets"));
      Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, d_x);
      for (int i = 0; i < n; ++i) X(i, 0) = n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1);
      return Dataset::regression(std::move(X), uniform_targets(ry, n, d_y));
    }
    case DatasetKind::classification_gaussian: {
      Rng rx(derive_seed(seed, "inputs")), ry(derive_seed(seed, "labels"));
      Eigen::MatrixXd X = gaussian_matrix(rx, n, d_x);
      return Dataset::classification(std::move(X), uniform_labels(ry, n, d_y), d_y);
    }
    case DatasetKind::general_position: {
      Rng ry(derive_seed(seed, "labels"));
      auto labels = uniform_labels(ry, n, d_y);
      for (int attempt = 0; attempt < 16; ++attempt) {
        Rng rx(derive_seed(seed, "inputs", attempt));
        Eigen::MatrixXd X = gaussian_matrix(rx, n, d_x);
        GeneralPositionOptions opts;
        opts.seed = derive_seed(seed, "gp-check", attempt);
        if (check_general_position(X, opts).general) return Dataset::classification(std::move(X), labels, d_y);
      }
      throw DatasetError("could not draw a general-position dataset in 16 attempts");
    }
    case DatasetKind::hard_line: {
      if (n == 0) return Dataset::regression(Eigen::MatrixXd(0, d_x), Eigen::MatrixXd(0, 1));
      Eigen::VectorXd u = Eigen::VectorXd::Unit(d_x, 0);
      return hard_dataset(n, u);
    }
  }
  throw std::invalid_argument("unknown dataset kind");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << contents;
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ostringstream os;
  for (int j = 0; j < data.input_dim(); ++j) os << (j ? "," : "") << "x" << j + 1;
  if (data.is_classification()) {
    os << ",label";
  } else {
    for (int j = 0; j < data.output_dim(); ++j) os << ",y" << j + 1;
  }
  os << "\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.input_dim(); ++j) os << (j ? "," : "") << format_double(data.X(i, j));
    if (data.is_classification()) {
      os << "," << data.labels[i];
    } else {
      for (int j = 0; j < data.output_dim(); ++j) os << "," << format_double(data.Y(i, j));
    }
    os << "\n";
  }
  write_file_atomic(path, os.str());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    auto b = cur.find_first_not_of(" \t\r");
    auto e = cur.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int line_no) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw DatasetError("line " + std::to_string(line_no) + ": cannot parse '" + s + "' as a finite number");
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DatasetError(path.string() + ": missing header row");
  const auto header = split_fields(line);
  int d_x = 0;
  while (d_x < static_cast<int>(header.size()) && header[d_x] == "x" + std::to_string(d_x + 1)) ++d_x;
  if (d_x == 0) throw DatasetError(path.string() + ": header must start with x1");
  const int rest = static_cast<int>(header.size()) - d_x;
  bool classification = rest == 1 && header[d_x] == "label";
  if (!classification) {
    if (rest < 1) throw DatasetError(path.string() + ": header has no target columns");
    for (int j = 0; j < rest; ++j)
      if (header[d_x + j] != "y" + std::to_string(j + 1))
        throw DatasetError(path.string() + ": unexpected header column '" + header[d_x + j] + "'");
  }
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> ys;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DatasetError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(fields.size()));
    std::vector<double> x(d_x);
    for (int j = 0; j < d_x; ++j) x[j] = parse_double(fields[j], line_no);
    xs.push_back(std::move(x));
    if (classification) {
      int lab = 0;
      const auto& f = fields[d_x];
      auto res = std::from_chars(f.data(), f.data() + f.size(), lab);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || lab < 0)
        throw DatasetError("line " + std::to_string(line_no) + ": bad label '" + f + "'");
      labels.push_back(lab);
    } else {
      std::vector<double> y(rest);
      for (int j = 0; j < rest; ++j) y[j] = parse_double(fields[d_x + j], line_no);
      ys.push_back(std::move(y));
    }
  }
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd X(n, d_x);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d_x; ++j) X(i, j) = xs[i][j];
  Dataset data;
  if (classification) {
    int classes = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
    data = Dataset::classification(std::move(X), std::move(labels), classes);
  } else {
    Eigen::MatrixXd Y(n, rest);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < rest; ++j) Y(i, j) = ys[i][j];
    data = Dataset::regression(std::move(X), std::move(Y));
  }
  require_distinct_inputs(data);
  return data;
}

}  // namespace memcap
