#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "memcap/construct_fnn.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/dataset.hpp"
#include "memcap/network.hpp"
#include "memcap/rng.hpp"
#include "memcap/serialize.hpp"
#include "oracles.hpp"

using namespace memcap;

namespace {

FnnParams random_fnn(Rng& rng, int d_x, const std::vector<int>& widths, int d_y, const Activation& act) {
  FnnParams p;
  p.activation = act;
  int prev = d_x;
  std::vector<int> dims = widths;
  dims.push_back(d_y);
  for (int w : dims) {
    p.layers.push_back({gaussian_matrix(rng, w, prev), gaussian_vector(rng, w)});
    prev = w;
  }
  return p;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("memcap_net_core_" + name);
}

}  // namespace

TEST_CASE("activation values") {
  CHECK(Activation::hard_tanh()(-2.0) == -1.0);
  CHECK(Activation::hard_tanh()(-1.0) == -1.0);
  CHECK(Activation::hard_tanh()(0.25) == 0.25);
  CHECK(Activation::hard_tanh()(1.0) == 1.0);
  CHECK(Activation::hard_tanh()(3.0) == 1.0);
  CHECK(Activation::relu_like(1.0, 0.0)(-3.0) == 0.0);
  CHECK(Activation::relu_like(1.0, 0.1)(-3.0) == doctest::Approx(-0.3));
  CHECK(Activation::gate()(0.0) == 1.0);
  CHECK(Activation::gate()(-1.0) == 0.0);
  CHECK(Activation::gate()(2.0) == 0.0);
  CHECK(Activation::gate()(0.5) == 0.5);
  CHECK(Activation::hard_tanh().pieces() == 3);
  CHECK(Activation::relu_like().pieces() == 2);
  CHECK(Activation::gate().pieces() == 4);
}

TEST_CASE("activation slope is the right derivative") {
  const Activation h = Activation::hard_tanh();
  CHECK(h.slope(-1.0) == 1.0);
  CHECK(h.slope(1.0) == 0.0);
  CHECK(h.slope(0.0) == 1.0);
  const Activation r = Activation::relu_like(2.0, 0.5);
  CHECK(r.slope(0.0) == 2.0);
  CHECK(r.slope(-1e-9) == 0.5);
}

TEST_CASE("parse_activation rejects unknown names") {
  CHECK_THROWS_AS(parse_activation("sigmoid"), std::invalid_argument);
  CHECK(parse_activation("relu") == Activation::relu_like());
}

TEST_CASE("fnn_forward: identity affine map") {
  FnnParams p;
  p.layers.push_back({Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)});
  Eigen::VectorXd x(2);
  x << 0.3, -0.4;
  const Eigen::VectorXd y = fnn_forward(p, x);
  CHECK(y(0) == 0.3);
  CHECK(y(1) == -0.4);
}

TEST_CASE("fnn_forward: constant network") {
  FnnParams p;
  p.activation = Activation::hard_tanh();
  p.layers.push_back({Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)});
  p.layers.push_back({Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Constant(1, 0.7)});
  Rng rng(5);
  for (int i = 0; i < 10; ++i) CHECK(fnn_forward(p, gaussian_vector(rng, 2))(0) == 0.7);
}

TEST_CASE("fnn_forward agrees with a loop-based forward pass") {
  Rng rng(11);
  for (const Activation& act : {Activation::hard_tanh(), Activation::relu_like(1.0, 0.2), Activation::gate()}) {
    const FnnParams p = random_fnn(rng, 4, {6, 5, 3}, 2, act);
    const Eigen::MatrixXd X = gaussian_matrix(rng, 20, 4);
    const Eigen::MatrixXd Y = fnn_forward_batch(p, X);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> xi(4);
      for (int j = 0; j < 4; ++j) xi[j] = X(i, j);
      const auto r = oracle::forward(p, xi);
      for (int k = 0; k < 2; ++k) CHECK(Y(i, k) == doctest::Approx(r[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fnn_forward on the 16-point construction reproduces targets") {
  const Dataset d = gen_dataset(DatasetKind::regression_uniform, 16, 3, 1, 21);
  const auto c = construct_3layer(d, 4, 4, Activation::hard_tanh(), 21);
  for (int i = 0; i < 16; ++i) CHECK(std::abs(fnn_forward(c.params, d.X.row(i).transpose())(0) - d.Y(i, 0)) < 1e-9);
}

TEST_CASE("fnn_forward rejects wrong input sizes") {
  Rng rng(2);
  const FnnParams p = random_fnn(rng, 3, {4}, 1, Activation::hard_tanh());
  CHECK_THROWS_AS(fnn_forward(p, Eigen::VectorXd::Zero(2)), DimensionError);
}

TEST_CASE("resnet_forward: zero residual branches give a constant head") {
  ResNetParams r;
  r.activation = Activation::hard_tanh();
  ResidualBlock blk{Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3),
                    Eigen::VectorXd::Zero(3)};
  r.blocks.push_back(blk);
  r.head = {Eigen::MatrixXd::Identity(2, 3), Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
            Eigen::VectorXd::Constant(2, 0.5)};
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd y = resnet_forward(r, gaussian_vector(rng, 3));
    CHECK(y(0) == 0.5);
    CHECK(y(1) == 0.5);
  }
}

TEST_CASE("resnet_forward: V = 0 keeps the residual stream equal to x") {
  ResNetParams r;
  r.activation = Activation::hard_tanh();
  r.blocks.push_back({Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
                      Eigen::VectorXd::Zero(2)});
  r.head = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
            Eigen::VectorXd::Zero(2)};
  Eigen::VectorXd x(2);
  x << 0.2, -0.3;
  std::vector<Eigen::VectorXd> states;
  const Eigen::VectorXd y = resnet_forward(r, x, &states);
  CHECK(states.back().isApprox(x));
  CHECK(y(0) == doctest::Approx(0.2));
  CHECK(y(1) == doctest::Approx(-0.3));
}

TEST_CASE("resnet construction returns one-hot labels") {
  const Dataset d = gen_dataset(DatasetKind::general_position, 40, 4, 3, 8);
  const auto c = construct_resnet_classifier(d, Activation::hard_tanh(), 8);
  const Eigen::MatrixXd out = resnet_forward_batch(c.params, d.X);
  CHECK((out - d.one_hot()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fnn_gradient: linear model") {
  FnnParams p;
  p.layers.push_back({Eigen::MatrixXd::Random(1, 3), Eigen::VectorXd::Random(1)});
  Eigen::VectorXd x(3);
  x << 0.5, -1.0, 2.0;
  const Eigen::VectorXd g = fnn_gradient(p, x);
  REQUIRE(g.size() == 4);
  CHECK(g(0) == 0.5);
  CHECK(g(1) == -1.0);
  CHECK(g(2) == 2.0);
  CHECK(g(3) == 1.0);
}

TEST_CASE("fnn_gradient: saturated hidden layer zeroes the lower blocks") {
  FnnParams p;
  p.activation = Activation::hard_tanh();
  p.layers.push_back({Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Constant(3, 5.0)});
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 3), Eigen::VectorXd::Zero(1)});
  const Eigen::VectorXd g = fnn_gradient(p, Eigen::VectorXd::Constant(2, 0.3));
  // Output block: W (3 entries) then b.
  CHECK(g.head(3).isApprox(Eigen::VectorXd::Ones(3)));
  CHECK(g(3) == 1.0);
  CHECK(g.tail(g.size() - 4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fnn_gradient matches central finite differences") {
  Rng rng(17);
  int checked = 0;
  for (const Activation& act : {Activation::hard_tanh(), Activation::relu_like(1.0, 0.1)}) {
    const FnnParams p = random_fnn(rng, 3, {5, 4}, 1, act);
    while (checked < 30) {
      const Eigen::VectorXd x = gaussian_vector(rng, 3);
      if (!is_differentiable_at(p, x.transpose(), 1e-4)) continue;
      const Eigen::VectorXd g = fnn_gradient(p, x);
      const Eigen::VectorXd fd = oracle::fd_gradient(p, x, 1e-6);
      CHECK((g - fd).norm() <= 1e-6 * std::max(g.norm(), fd.norm()));
      ++checked;
    }
    checked = 0;
  }
}

TEST_CASE("fnn_gradient refuses points on a breakpoint") {
  FnnParams p;
  p.activation = Activation::hard_tanh();
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  CHECK_THROWS_AS(fnn_gradient(p, Eigen::VectorXd::Constant(1, 1.0)), NotDifferentiable);
}

TEST_CASE("is_differentiable_at") {
  FnnParams p;
  p.activation = Activation::hard_tanh();
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  p.layers.push_back({Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)});
  CHECK_FALSE(is_differentiable_at(p, Eigen::MatrixXd::Constant(1, 1, 1.0), 1e-9));
  Eigen::MatrixXd X(3, 1);
  X << -0.4, 0.0, 0.45;
  CHECK(is_differentiable_at(p, X, 0.1));

  const Dataset d = gen_dataset(DatasetKind::regression_uniform, 64, 2, 1, 4);
  const auto c = construct_3layer(d, 16, 8, Activation::hard_tanh(), 4);
  CHECK(is_differentiable_at(c.params, d.X, 1e-3));
}

TEST_CASE("flatten and assign are inverse") {
  Rng rng(4);
  FnnParams p = random_fnn(rng, 3, {4, 2}, 2, Activation::hard_tanh());
  const Eigen::VectorXd theta = flatten_params(p);
  CHECK(static_cast<std::size_t>(theta.size()) == p.num_params());
  FnnParams q = p;
  assign_params(q, Eigen::VectorXd::Zero(theta.size()));
  assign_params(q, theta);
  CHECK(flatten_params(q) == theta);
  // The output layer comes first.
  CHECK(theta(0) == p.layers.back().W(0, 0));
}

TEST_CASE("width rewrites keep the function") {
  Rng rng(9);
  const Eigen::MatrixXd X = gaussian_matrix(rng, 50, 3);

  const FnnParams g = random_fnn(rng, 3, {4, 3}, 2, Activation::gate());
  const FnnParams h = gate_to_hard_tanh(g);
  CHECK(h.hidden_widths() == std::vector<int>{8, 6});
  CHECK((fnn_forward_batch(g, X) - fnn_forward_batch(h, X)).cwiseAbs().maxCoeff() < 1e-12);

  const FnnParams t = random_fnn(rng, 3, {4, 3}, 2, Activation::hard_tanh());
  const FnnParams r = hard_tanh_to_relu(t, Activation::relu_like(1.0, 0.0));
  CHECK(r.hidden_widths() == std::vector<int>{8, 6});
  CHECK((fnn_forward_batch(t, X) - fnn_forward_batch(r, X)).cwiseAbs().maxCoeff() < 1e-12);

  const FnnParams leaky = hard_tanh_to_relu(t, Activation::relu_like(2.0, 0.5));
  CHECK((fnn_forward_batch(t, X) - fnn_forward_batch(leaky, X)).cwiseAbs().maxCoeff() < 1e-12);

  const FnnParams padded = pad_hidden_widths(t, {7, 5});
  CHECK(padded.hidden_widths() == std::vector<int>{7, 5});
  CHECK((fnn_forward_batch(t, X) - fnn_forward_batch(padded, X)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("network JSON round trip") {
  Rng rng(10);
  const FnnParams p = random_fnn(rng, 3, {4}, 2, Activation::relu_like(1.0, 0.25));
  const auto path = temp_path("net.json");
  save_network(Network{p}, path);
  const Network back = load_network(path);
  REQUIRE(std::holds_alternative<FnnParams>(back));
  const auto& q = std::get<FnnParams>(back);
  CHECK(q.activation == p.activation);
  CHECK(flatten_params(q) == flatten_params(p));
  std::filesystem::remove(path);

  const Dataset d = gen_dataset(DatasetKind::general_position, 20, 3, 2, 5);
  const auto c = construct_resnet_classifier(d, Activation::hard_tanh(), 5);
  save_network(Network{c.params}, path);
  const Network rb = load_network(path);
  REQUIRE(std::holds_alternative<ResNetParams>(rb));
  CHECK((resnet_forward_batch(std::get<ResNetParams>(rb), d.X) - resnet_forward_batch(c.params, d.X)).cwiseAbs().maxCoeff() ==
        0.0);
  std::filesystem::remove(path);
}

TEST_CASE("CSV round trip is lossless") {
  const Dataset d = gen_dataset(DatasetKind::regression_uniform, 30, 4, 2, 12);
  const auto path = temp_path("data.csv");
  save_csv(d, path);
  const Dataset back = load_csv(path);
  CHECK(back.X == d.X);
  CHECK(back.Y == d.Y);
  const Dataset c = gen_dataset(DatasetKind::classification_gaussian, 30, 2, 4, 12);
  save_csv(c, path);
  const Dataset cb = load_csv(path);
  CHECK(cb.X == c.X);
  CHECK(cb.labels == c.labels);
  std::filesystem::remove(path);
}

TEST_CASE("CSV loader names duplicated rows") {
  const auto path = temp_path("dup.csv");
  {
    std::ofstream os(path);
    os << "x1,x2,y1\n0.5,1,0.1\n0.25,2,0.2\n0.5,1,0.3\n";
  }
  try {
    load_csv(path);
    FAIL("duplicate rows accepted");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("CSV loader rejects malformed rows") {
  const auto path = temp_path("bad.csv");
  {
    std::ofstream os(path);
    os << "x1,y1\n0.5,abc\n";
  }
  CHECK_THROWS_AS(load_csv(path), DatasetError);
  std::filesystem::remove(path);
}

TEST_CASE("label column expands to one-hot by direct indexing") {
  const auto path = temp_path("labels.csv");
  {
    std::ofstream os(path);
    os << "x1,x2,label\n0,0,2\n1,0,0\n0,1,1\n1,1,2\n";
  }
  const Dataset d = load_csv(path);
  REQUIRE(d.is_classification());
  const Eigen::MatrixXd oh = d.one_hot();
  const int expect[4] = {2, 0, 1, 2};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) CHECK(oh(i, k) == (k == expect[i] ? 1.0 : 0.0));
  std::filesystem::remove(path);
}

TEST_CASE("gen_dataset kinds") {
  const Dataset h = gen_dataset(DatasetKind::hard_line, 4, 2, 1, 0);
  REQUIRE(h.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(h.X(i, 0) == i + 1);
    CHECK(h.X(i, 1) == 0.0);
    CHECK(h.Y(i, 0) == (i % 2 == 0 ? -1.0 : 1.0));
  }
  const Dataset g = gen_dataset(DatasetKind::general_position, 50, 5, 3, 2);
  CHECK(is_general_position(g.X));
  const Dataset e = gen_dataset(DatasetKind::regression_uniform, 0, 3, 1, 1);
  CHECK(e.size() == 0);
  const Dataset r = gen_dataset(DatasetKind::regression_uniform, 200, 3, 2, 1);
  CHECK(r.Y.cwiseAbs().maxCoeff() <= 0.9);
  const Dataset r2 = gen_dataset(DatasetKind::regression_uniform, 200, 3, 2, 1);
  CHECK(r.X == r2.X);
  CHECK(r.Y == r2.Y);
}

TEST_CASE("derived seeds differ per label and index") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}
