#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "memcap/capacity.hpp"
#include "memcap/cli.hpp"
#include "memcap/construct_fnn.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/reports.hpp"
#include "memcap/serialize.hpp"
#include "memcap/sgd.hpp"

namespace py = pybind11;
using namespace memcap;

namespace {

Dataset regression_data(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  Dataset d = Dataset::regression(X, Y);
  require_distinct_inputs(d);
  return d;
}

Dataset classification_data(const Eigen::MatrixXd& X, const std::vector<int>& labels, int num_classes) {
  Dataset d = Dataset::classification(X, labels, num_classes);
  require_distinct_inputs(d);
  return d;
}

template <class R>
std::string dump(const R& r) {
  return to_json(r).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constructive memorization toolkit";

  py::register_exception<ConstructionError>(m, "ConstructionError");
  py::register_exception<UnsupportedArchitecture>(m, "UnsupportedArchitecture", PyExc_ValueError);
  py::register_exception<GeneralPositionError>(m, "GeneralPositionError");
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);

  m.def(
      "activation",
      [](const std::string& name, double t, double s_plus, double s_minus) {
        return parse_activation(name, s_plus, s_minus)(t);
      },
      py::arg("name"), py::arg("t"), py::arg("s_plus") = 1.0, py::arg("s_minus") = 0.0);

  py::class_<FnnParams>(m, "Fnn")
      .def_property_readonly("hidden_widths", &FnnParams::hidden_widths)
      .def_property_readonly("input_dim", &FnnParams::input_dim)
      .def_property_readonly("output_dim", &FnnParams::output_dim)
      .def_property_readonly("num_params", &FnnParams::num_params)
      .def_property_readonly("activation", [](const FnnParams& p) { return p.activation.name(); })
      .def("forward", [](const FnnParams& p, const Eigen::MatrixXd& X) { return fnn_forward_batch(p, X); })
      .def("gradient", [](const FnnParams& p, const Eigen::VectorXd& x) { return fnn_gradient(p, x); })
      .def("flatten", &flatten_params)
      .def("to_json", [](const FnnParams& p) { return to_json(p).dump(); })
      .def_static("from_json", [](const std::string& s) { return fnn_from_json(Json::parse(s)); });

  py::class_<ResNetParams>(m, "ResNet")
      .def_property_readonly("hidden_nodes", &ResNetParams::hidden_nodes)
      .def_property_readonly("input_dim", &ResNetParams::input_dim)
      .def_property_readonly("output_dim", &ResNetParams::output_dim)
      .def("forward", [](const ResNetParams& p, const Eigen::MatrixXd& X) { return resnet_forward_batch(p, X); })
      .def("to_json", [](const ResNetParams& p) { return to_json(p).dump(); });

  m.def(
      "gen_dataset",
      [](const std::string& kind, int n, int d_x, int d_y, std::uint64_t seed) {
        const Dataset d = gen_dataset(parse_dataset_kind(kind), n, d_x, d_y, seed);
        py::dict out;
        out["X"] = d.X;
        if (d.is_classification()) {
          out["labels"] = d.labels;
          out["num_classes"] = d.num_classes;
        } else {
          out["Y"] = d.Y;
        }
        return out;
      },
      py::arg("kind"), py::arg("n"), py::arg("d_x"), py::arg("d_y") = 1, py::arg("seed") = 0);

  m.def(
      "construct_3layer",
      [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, int d1, int d2, const std::string& act,
         std::uint64_t seed, double output_gain) {
        ConstructOptions opts;
        opts.output_gain = output_gain;
        auto c = construct_3layer(regression_data(X, Y), d1, d2, parse_activation(act), seed, opts);
        return py::make_tuple(c.params, dump(c.report));
      },
      py::arg("X"), py::arg("Y"), py::arg("d1"), py::arg("d2"), py::arg("activation") = "hard_tanh",
      py::arg("seed") = 0, py::arg("output_gain") = 1.0);

  m.def(
      "construct_4layer_classifier",
      [](const Eigen::MatrixXd& X, const std::vector<int>& labels, int num_classes, int d1, int d2, int d3,
         const std::string& act, std::uint64_t seed) {
        auto c = construct_4layer_classifier(classification_data(X, labels, num_classes), d1, d2, d3,
                                             parse_activation(act), seed);
        return py::make_tuple(c.params, dump(c.report));
      },
      py::arg("X"), py::arg("labels"), py::arg("num_classes"), py::arg("d1"), py::arg("d2"), py::arg("d3"),
      py::arg("activation") = "hard_tanh", py::arg("seed") = 0);

  m.def(
      "construct_deep",
      [](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const std::vector<int>& widths,
         const std::vector<int>& blocks, const std::string& act, std::uint64_t seed) {
        const Dataset d = regression_data(X, Y);
        auto c = construct_deep(d, BlockLayout{widths, blocks, d.output_dim()}, parse_activation(act), seed);
        return py::make_tuple(c.params, dump(c.report));
      },
      py::arg("X"), py::arg("Y"), py::arg("widths"), py::arg("blocks"), py::arg("activation") = "hard_tanh",
      py::arg("seed") = 0);

  m.def(
      "construct_resnet_classifier",
      [](const Eigen::MatrixXd& X, const std::vector<int>& labels, int num_classes, const std::string& act,
         std::uint64_t seed) {
        auto c = construct_resnet_classifier(classification_data(X, labels, num_classes), parse_activation(act), seed);
        return py::make_tuple(c.params, dump(c.report));
      },
      py::arg("X"), py::arg("labels"), py::arg("num_classes"), py::arg("activation") = "hard_tanh",
      py::arg("seed") = 0);

  m.def(
      "construct_2layer_classifier",
      [](const Eigen::MatrixXd& X, const std::vector<int>& labels, int num_classes, const std::string& act,
         std::uint64_t seed) {
        auto c = construct_2layer_classifier(classification_data(X, labels, num_classes), parse_activation(act), seed);
        return py::make_tuple(c.params, dump(c.report));
      },
      py::arg("X"), py::arg("labels"), py::arg("num_classes"), py::arg("activation") = "hard_tanh",
      py::arg("seed") = 0);

  m.def(
      "node_budget",
      [](long long n, int d_x, int d_y, const std::string& arch, const std::string& act) {
        return node_budget(n, d_x, d_y, parse_genpos_arch(arch), parse_activation(act));
      },
      py::arg("n"), py::arg("d_x"), py::arg("d_y"), py::arg("arch"), py::arg("activation") = "relu");

  m.def(
      "is_general_position", [](const Eigen::MatrixXd& X, double tol) { return is_general_position(X, tol); },
      py::arg("X"), py::arg("tol") = 1e-8);

  m.def(
      "piece_count",
      [](const FnnParams& p, const Eigen::VectorXd& u) { return restrict_to_line(p, u).pieces(); }, py::arg("net"),
      py::arg("u"));
  m.def("piece_bound", &piece_bound, py::arg("depth"), py::arg("p"), py::arg("d1"), py::arg("d2") = 0);

  m.def(
      "refute_fit",
      [](const FnnParams& p, int n, const Eigen::VectorXd& u) { return dump(refute_fit(p, hard_dataset(n, u))); },
      py::arg("net"), py::arg("n"), py::arg("u"));

  m.def(
      "empirical_risk",
      [](const FnnParams& p, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        return empirical_risk(p, Dataset::regression(X, Y));
      },
      py::arg("net"), py::arg("X"), py::arg("Y"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_command(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
