#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <variant>

#include "memcap/network.hpp"

namespace memcap {

using Json = nlohmann::ordered_json;

Json to_json(const Activation& act);
Activation activation_from_json(const Json& j);

Json to_json(const FnnParams& params);
Json to_json(const ResNetParams& params);

using Network = std::variant<FnnParams, ResNetParams>;
Network network_from_json(const Json& j);
FnnParams fnn_from_json(const Json& j);
ResNetParams resnet_from_json(const Json& j);

Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

}  // namespace memcap
