#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace memcap {

using Rng = std::mt19937_64;

// Sub-seed for a named stage; independent of every other label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index);

Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n);
Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);
double uniform(Rng& rng, double lo, double hi);

}  // namespace memcap
