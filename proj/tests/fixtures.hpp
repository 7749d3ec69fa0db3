#pragma once

#include <Eigen/Dense>

#include <vector>

#include "memcap/network.hpp"
#include "memcap/rng.hpp"

namespace fixture {

// Gaussian weights and biases; dims = {d_x, d_1, ..., d_y}.
inline memcap::FnnParams random_fnn(memcap::Rng& rng, const std::vector<int>& dims, const memcap::Activation& act) {
  memcap::FnnParams p;
  p.activation = act;
  for (std::size_t l = 1; l < dims.size(); ++l)
    p.layers.push_back({memcap::gaussian_matrix(rng, dims[l], dims[l - 1]), memcap::gaussian_vector(rng, dims[l])});
  return p;
}

}  // namespace fixture
