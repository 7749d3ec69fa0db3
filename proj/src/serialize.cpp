#include "memcap/serialize.hpp"

#include <fstream>
#include <sstream>

#include "memcap/dataset.hpp"

namespace memcap {

Json to_json(const Activation& act) {
  return Json{{"kind", act.name()}, {"s_plus", act.s_plus}, {"s_minus", act.s_minus}};
}

Activation activation_from_json(const Json& j) {
  return parse_activation(j.at("kind").get<std::string>(), j.value("s_plus", 1.0), j.value("s_minus", 0.0));
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw DimensionError("matrix needs " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DimensionError("matrix row " + std::to_string(i + 1) + " needs " + std::to_string(cols) + " entries");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[k].get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw DimensionError("expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json to_json(const FnnParams& params) {
  params.validate();
  Json layers = Json::array();
  for (const auto& layer : params.layers) layers.push_back(Json{{"W", matrix_to_json(layer.W)}, {"b", vector_to_json(layer.b)}});
  return Json{{"arch", "fnn"}, {"activation", to_json(params.activation)}, {"dims", params.dims()}, {"layers", layers}};
}

namespace {

Json block_to_json(const ResidualBlock& blk) {
  return Json{{"U", matrix_to_json(blk.U)}, {"V", matrix_to_json(blk.V)}, {"b", vector_to_json(blk.b)}, {"c", vector_to_json(blk.c)}};
}

ResidualBlock block_from_json(const Json& j, Eigen::Index d_in, Eigen::Index width, Eigen::Index d_out) {
  ResidualBlock blk;
  blk.U = matrix_from_json(j.at("U"), width, d_in);
  blk.V = matrix_from_json(j.at("V"), d_out, width);
  blk.b = vector_from_json(j.at("b"));
  blk.c = vector_from_json(j.at("c"));
  return blk;
}

}  // namespace

Json to_json(const ResNetParams& params) {
  params.validate();
  Json blocks = Json::array();
  for (const auto& blk : params.blocks) blocks.push_back(block_to_json(blk));
  return Json{{"arch", "resnet"},
              {"activation", to_json(params.activation)},
              {"dims", params.dims()},
              {"blocks", blocks},
              {"head", block_to_json(params.head)}};
}

FnnParams fnn_from_json(const Json& j) {
  if (j.at("arch") != "fnn") throw DimensionError("not an fnn network");
  const auto dims = j.at("dims").get<std::vector<int>>();
  const auto& layers = j.at("layers");
  if (dims.size() != layers.size() + 1) throw DimensionError("dims length does not match layer count");
  FnnParams p;
  p.activation = activation_from_json(j.at("activation"));
  for (std::size_t l = 0; l < layers.size(); ++l)
    p.layers.push_back({matrix_from_json(layers[l].at("W"), dims[l + 1], dims[l]), vector_from_json(layers[l].at("b"))});
  p.validate();
  return p;
}

ResNetParams resnet_from_json(const Json& j) {
  if (j.at("arch") != "resnet") throw DimensionError("not a resnet network");
  const auto dims = j.at("dims").get<std::vector<int>>();
  const auto& blocks = j.at("blocks");
  if (dims.size() != blocks.size() + 3) throw DimensionError("dims length does not match block count");
  ResNetParams p;
  p.activation = activation_from_json(j.at("activation"));
  const int dx = dims.front();
  for (std::size_t l = 0; l < blocks.size(); ++l) p.blocks.push_back(block_from_json(blocks[l], dx, dims[l + 1], dx));
  p.head = block_from_json(j.at("head"), dx, dims[dims.size() - 2], dims.back());
  p.validate();
  return p;
}

Network network_from_json(const Json& j) {
  const auto arch = j.at("arch").get<std::string>();
  if (arch == "fnn") return fnn_from_json(j);
  if (arch == "resnet") return resnet_from_json(j);
  throw DimensionError("unknown arch '" + arch + "'");
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return network_from_json(Json::parse(is));
}

void save_network(const Network& net, const std::filesystem::path& path) {
  Json j = std::visit([](const auto& p) { return to_json(p); }, net);
  write_file_atomic(path, j.dump(1) + "\n");
}

}  // namespace memcap
