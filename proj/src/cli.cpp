#include "memcap/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "memcap/capacity.hpp"
#include "memcap/construct_fnn.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/dataset.hpp"
#include "memcap/reports.hpp"
#include "memcap/rng.hpp"
#include "memcap/serialize.hpp"
#include "memcap/sgd.hpp"

namespace memcap {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tolerances {
  double fit = 1e-6;
  double clip = 1e-3;
  double diff = 1e-9;
  double gap = 1e-12;
  double det = 1e-8;
  double grad = 1e-6;
};

struct DataOptions {
  std::string path;
  std::string kind;
  int n = 16;
  int d_x = 2;
  int d_y = 0;  // 0 selects the command default
  std::string out = "data.csv";
};

struct ConstructArgs {
  DataOptions data;
  std::string act = "hard_tanh";
  double s_plus = 1.0;
  double s_minus = 0.0;
  int d1 = 0, d2 = 0, d3 = 0;
  std::vector<int> widths;
  std::vector<int> blocks;
  int hidden = 0;
  int block_width = 0;
  std::string net = "net.json";
};

struct State {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string report;
  Tolerances tol;
};

using Clock = std::chrono::steady_clock;

std::uint64_t need_seed(const State& st, const std::string& what) {
  if (!st.seed_given) throw UsageError(what + " is randomized: pass --seed or set MEMCAP_SEED");
  return st.seed;
}

void add_options_echo(const CLI::App& app, Json& into) {
  for (const CLI::Option* o : app.get_options()) {
    if (o->get_lnames().empty()) continue;
    const std::string& name = o->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> vals;
    if (o->count() > 0) {
      vals = o->results();
    } else if (!o->get_default_str().empty()) {
      std::string d = o->get_default_str();
      if (o->get_expected_max() > 1 && d.size() >= 2 && d.front() == '[' && d.back() == ']') {
        std::stringstream ss(d.substr(1, d.size() - 2));
        for (std::string item; std::getline(ss, item, ',');) vals.push_back(item);
      } else {
        vals.push_back(d);
      }
    }
    if (vals.empty())
      into[name] = nullptr;
    else if (vals.size() == 1 && o->get_expected_max() <= 1)
      into[name] = vals.front();
    else
      into[name] = vals;
  }
}

// Command path and every option value, defaults included.
Json config_echo(const CLI::App& root) {
  Json cfg = Json::object();
  std::string command;
  Json opts = Json::object();
  add_options_echo(root, opts);
  const CLI::App* cur = &root;
  while (true) {
    const auto subs = cur->get_subcommands();
    if (subs.empty()) break;
    cur = subs.front();
    command += (command.empty() ? "" : " ") + cur->get_name();
    add_options_echo(*cur, opts);
  }
  cfg["command"] = command;
  cfg["options"] = opts;
  return cfg;
}

Json make_report(const Json& config, const std::string& theorem) {
  Json r = Json::object();
  r["config"] = config;
  r["theorem"] = theorem;
  return r;
}

void emit_report(Json& report, const State& st, Clock::time_point t0, std::ostream& out, bool print) {
  if (!report.contains("timing")) report["timing"] = Json::object();
  report["timing"]["seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  const std::string text = report.dump(2) + "\n";
  if (!st.report.empty()) write_file_atomic(st.report, text);
  if (print) out << text;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UsageError("no such file: " + path);
}

Dataset obtain_data(const DataOptions& o, DatasetKind default_kind, int default_dy, const State& st,
                    const std::string& label) {
  if (!o.path.empty()) {
    require_file(o.path);
    return load_csv(o.path);
  }
  const DatasetKind kind = o.kind.empty() ? default_kind : parse_dataset_kind(o.kind);
  const int d_y = o.d_y > 0 ? o.d_y : default_dy;
  std::uint64_t seed = 0;
  if (kind != DatasetKind::hard_line) seed = derive_seed(need_seed(st, label), "dataset");
  return gen_dataset(kind, o.n, o.d_x, d_y, seed);
}

Json dataset_summary(const Dataset& d) {
  return Json{{"n", d.size()},
              {"d_x", d.input_dim()},
              {"d_y", d.output_dim()},
              {"task", d.is_classification() ? "classification" : "regression"}};
}

void add_data_options(CLI::App* app, DataOptions& o, bool with_out) {
  app->add_option("--data", o.path, "Input CSV; generated when omitted");
  app->add_option("--kind", o.kind, "Generated dataset kind");
  app->add_option("--n", o.n, "Generated points")->check(CLI::NonNegativeNumber);
  app->add_option("--dx", o.d_x, "Generated input dimension")->check(CLI::PositiveNumber);
  app->add_option("--dy", o.d_y, "Generated output dimension or class count")->check(CLI::NonNegativeNumber);
  if (with_out) app->add_option("--data-out", o.out, "Where the dataset is written");
}

Eigen::MatrixXd network_outputs(const Network& net, const Eigen::MatrixXd& X) {
  if (const auto* f = std::get_if<FnnParams>(&net)) return fnn_forward_batch(*f, X);
  return resnet_forward_batch(std::get<ResNetParams>(net), X);
}

int network_input_dim(const Network& net) {
  return std::visit([](const auto& p) { return p.input_dim(); }, net);
}
int network_output_dim(const Network& net) {
  return std::visit([](const auto& p) { return p.output_dim(); }, net);
}

// ---------------------------------------------------------------- commands

int cmd_gen(const CLI::App& root, const DataOptions& o, const State& st, std::ostream& out) {
  const auto t0 = Clock::now();
  const Dataset d = obtain_data(o, DatasetKind::regression_uniform, 1, st, "gen");
  save_csv(d, o.out);
  Json r = make_report(config_echo(root), "");
  r["dataset"] = dataset_summary(d);
  r["data_file"] = o.out;
  emit_report(r, st, t0, out, false);
  out << "wrote " << d.size() << " points to " << o.out << "\n";
  return 0;
}

int cmd_construct(const CLI::App& root, const std::string& arch, const ConstructArgs& a, const State& st,
                  std::ostream& out, std::ostream& err) {
  const auto t0 = Clock::now();
  const std::uint64_t seed = need_seed(st, "construct");
  const bool classifier = arch == "4layer" || arch == "resnet" || arch == "fnn2";
  const DatasetKind default_kind = arch == "resnet" || arch == "fnn2" ? DatasetKind::general_position
                                   : classifier                      ? DatasetKind::classification_gaussian
                                                                     : DatasetKind::regression_uniform;
  const Dataset data = obtain_data(a.data, default_kind, classifier ? 3 : 1, st, "construct");
  save_csv(data, a.data.out);
  const Activation act = parse_activation(a.act, a.s_plus, a.s_minus);
  const std::uint64_t cseed = derive_seed(seed, "construct");

  ConstructOptions co;
  co.clip_margin = st.tol.clip;
  co.gap_tol = st.tol.gap;
  co.fit_tol = st.tol.fit;
  GenposOptions go;
  go.hidden_nodes = a.hidden;
  go.block_width = a.block_width;
  go.clip_margin = st.tol.clip;
  go.genpos.tol = st.tol.det;
  go.genpos.seed = derive_seed(seed, "genpos-check");

  Json r = make_report(config_echo(root), "");
  r["dataset"] = dataset_summary(data);
  Network net;
  double fit_error = 0.0;
  int misclassified = 0;
  try {
    if (arch == "3layer" || arch == "4layer" || arch == "deep") {
      Construction<FnnParams> c;
      if (arch == "3layer") {
        c = construct_3layer(data, a.d1, a.d2, act, cseed, co);
      } else if (arch == "4layer") {
        c = construct_4layer_classifier(data, a.d1, a.d2, a.d3, act, cseed, co);
      } else {
        BlockLayout layout{a.widths, a.blocks, data.output_dim()};
        c = construct_deep(data, layout, act, cseed, co);
      }
      r["theorem"] = c.report.theorem;
      r["construction"] = to_json(c.report);
      fit_error = c.report.fit_error;
      misclassified = c.report.misclassified;
      net = std::move(c.params);
    } else {
      if (!data.is_classification()) throw UsageError(arch + " needs classification data");
      if (arch == "resnet") {
        auto c = construct_resnet_classifier(data, act, cseed, go);
        r["theorem"] = c.report.theorem;
        r["construction"] = to_json(c.report);
        fit_error = c.report.fit_error;
        misclassified = c.report.misclassified;
        net = std::move(c.params);
      } else {
        auto c = construct_2layer_classifier(data, act, cseed, go);
        r["theorem"] = c.report.theorem;
        r["construction"] = to_json(c.report);
        fit_error = c.report.fit_error;
        misclassified = c.report.misclassified;
        net = std::move(c.params);
      }
    }
  } catch (const UnsupportedArchitecture& e) {
    r["error"] = e.what();
    r["pass"] = false;
    emit_report(r, st, t0, out, false);
    err << "construct: " << e.what() << "\n";
    return 1;
  } catch (const ConstructionError& e) {
    r["error"] = e.what();
    r["pass"] = false;
    emit_report(r, st, t0, out, false);
    err << "construct: " << e.what() << "\n";
    return 1;
  } catch (const GeneralPositionError& e) {
    r["error"] = e.what();
    r["pass"] = false;
    emit_report(r, st, t0, out, false);
    err << "construct: " << e.what() << "\n";
    return 1;
  }
  save_network(net, a.net);
  const bool pass = fit_error <= st.tol.fit && misclassified == 0;
  r["fit_error_max"] = fit_error;
  r["misclassified"] = misclassified;
  r["tolerance"] = st.tol.fit;
  r["pass"] = pass;
  emit_report(r, st, t0, out, false);
  out << r["theorem"].get<std::string>() << " " << arch << ": max error " << fit_error << ", misclassified "
      << misclassified << (pass ? ", pass" : ", FAIL") << "\n";
  return pass ? 0 : 1;
}

int cmd_verify(const CLI::App& root, const std::string& net_path, const std::string& data_path, const State& st,
               std::ostream& out) {
  const auto t0 = Clock::now();
  require_file(net_path);
  require_file(data_path);
  const Network net = load_network(net_path);
  const Dataset data = load_csv(data_path);
  if (network_input_dim(net) != data.input_dim() || network_output_dim(net) != data.output_dim())
    throw UsageError("network and dataset dimensions differ");
  const Eigen::MatrixXd outputs = network_outputs(net, data.X);
  const Eigen::MatrixXd targets = data.targets();
  Eigen::VectorXd per_point = Eigen::VectorXd::Zero(data.size());
  if (data.size() > 0) per_point = (outputs - targets).cwiseAbs().rowwise().maxCoeff();
  const double max_err = data.size() > 0 ? per_point.maxCoeff() : 0.0;
  const int misclassified = data.is_classification() ? count_misclassified(outputs, data) : 0;
  const bool pass = std::isfinite(max_err) && max_err <= st.tol.fit && misclassified == 0;

  Json r = make_report(config_echo(root), "");
  Json cap = nullptr;
  if (const auto* f = std::get_if<FnnParams>(&net)) {
    ArchSpec spec{f->hidden_widths(), f->activation, data.output_dim(), data.is_classification(), {}};
    try {
      const CapacityCheck c = check_capacity(spec, data.size());
      r["theorem"] = c.theorem;
      cap = to_json(c);
    } catch (const std::exception& e) {
      cap = Json{{"note", e.what()}};
    }
  } else {
    const auto& rn = std::get<ResNetParams>(net);
    r["theorem"] = "thm4";
    cap = Json{{"arithmetic", node_budget_arithmetic(data.size(), data.input_dim(), data.output_dim(),
                                                     GenposArch::resnet, rn.activation)},
               {"hidden_nodes", rn.hidden_nodes()}};
  }
  r["dataset"] = dataset_summary(data);
  r["capacity_check"] = cap;
  r["max_error"] = max_err;
  r["misclassified"] = misclassified;
  r["per_point_max_error"] = vector_to_json(per_point);
  r["tolerance"] = st.tol.fit;
  r["pass"] = pass;
  emit_report(r, st, t0, out, false);
  out << "verify: max error " << max_err << ", misclassified " << misclassified << (pass ? ", pass" : ", FAIL")
      << "\n";
  return pass ? 0 : 1;
}

int cmd_capacity(const CLI::App& root, const std::string& net_path, int hard_n, const std::string& data_path,
                 std::vector<double> direction, const std::string& plot_csv, const State& st, std::ostream& out) {
  const auto t0 = Clock::now();
  require_file(net_path);
  const Network net = load_network(net_path);
  const auto* f = std::get_if<FnnParams>(&net);
  if (!f || f->output_dim() != 1) throw UsageError("capacity needs a scalar-output fully connected network");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(f->input_dim());
  if (direction.empty()) {
    u(0) = 1.0;
  } else {
    if (static_cast<int>(direction.size()) != f->input_dim()) throw UsageError("--direction has the wrong length");
    for (int i = 0; i < u.size(); ++i) u(i) = direction[i];
  }
  Dataset data;
  if (!data_path.empty()) {
    data = load_csv(data_path);
  } else if (hard_n >= 0) {
    data = hard_dataset(hard_n, u);
  } else {
    throw UsageError("capacity needs --hard-n or --data");
  }
  const RefuteResult res = refute_fit(*f, data);
  const PiecewiseLinear1D g = restrict_to_line(*f, u);
  const bool pass = !res.bound || res.piece_count <= *res.bound;

  Json r = make_report(config_echo(root), "thm3");
  r["dataset"] = dataset_summary(data);
  r["refutation"] = to_json(res);
  r["restriction"] = to_json(g);
  r["pass"] = pass;
  emit_report(r, st, t0, out, false);
  if (!plot_csv.empty()) {
    std::ostringstream os;
    os << "t,f\n";
    const auto& bp = g.breakpoints();
    const double lo = bp.empty() ? -1.0 : bp.front() - 1.0;
    const double hi = bp.empty() ? 1.0 : bp.back() + 1.0;
    os << format_double(lo) << "," << format_double(g(lo)) << "\n";
    for (std::size_t i = 0; i < bp.size(); ++i)
      os << format_double(bp[i]) << "," << format_double(g.knot_values()[i]) << "\n";
    os << format_double(hi) << "," << format_double(g(hi)) << "\n";
    write_file_atomic(plot_csv, os.str());
  }
  out << "verdict: " << res.verdict << " (pieces " << res.piece_count << ", required " << res.required_pieces;
  if (res.bound) out << ", bound " << *res.bound;
  out << ")\n";
  return pass ? 0 : 1;
}

int cmd_genpos(const CLI::App& root, const DataOptions& o, long long exhaustive_limit, int samples, const State& st,
               std::ostream& out) {
  const auto t0 = Clock::now();
  const Dataset data = obtain_data(o, DatasetKind::classification_gaussian, 3, st, "genpos-check");
  GeneralPositionOptions go;
  go.tol = st.tol.det;
  go.exhaustive_limit = exhaustive_limit;
  go.samples = samples;
  go.seed = derive_seed(st.seed_given ? st.seed : 0, "genpos-check");
  const GeneralPositionReport g = check_general_position(data.X, go);
  if (!g.exhaustive) need_seed(st, "sampled genpos-check");
  Json r = make_report(config_echo(root), "assumption2");
  r["dataset"] = dataset_summary(data);
  r["general_position"] = to_json(g);
  r["pass"] = g.general;
  emit_report(r, st, t0, out, false);
  out << (g.general ? "general position" : "NOT in general position") << " (" << g.subsets_checked << " subsets, "
      << (g.exhaustive ? "exhaustive" : "sampled") << ", min conditioning " << g.min_conditioning << ")\n";
  return g.general ? 0 : 1;
}

int cmd_budget(const CLI::App& root, const std::string& shape, int classes, const std::string& arch_name,
               const std::string& act_name, const State& st, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto x = shape.find_first_of("xX");
  if (x == std::string::npos) throw UsageError("--dataset-shape must look like NxD");
  long long n = 0;
  int d_x = 0;
  try {
    std::size_t used = 0;
    n = std::stoll(shape.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(shape);
    d_x = std::stoi(shape.substr(x + 1), &used);
    if (used != shape.size() - x - 1) throw std::invalid_argument(shape);
  } catch (const std::exception&) {
    throw UsageError("--dataset-shape must look like NxD");
  }
  if (n < 0 || d_x <= 0 || classes <= 0) throw UsageError("budget needs N >= 0, D > 0 and classes > 0");
  const GenposArch arch = parse_genpos_arch(arch_name);
  const Activation act = parse_activation(act_name);
  const int nodes = node_budget(n, d_x, classes, arch, act);
  Json r = make_report(config_echo(root), arch == GenposArch::resnet ? "thm4" : "cor5");
  r["nodes"] = nodes;
  r["arithmetic"] = node_budget_arithmetic(n, d_x, classes, arch, act);
  emit_report(r, st, t0, out, false);
  out << nodes << "\n";
  return 0;
}

struct ProbeArgs {
  DataOptions data;
  std::string act = "hard_tanh";
  int d1 = 32;
  int d2 = 2;
  double gain = 5.0;
  std::vector<double> eps{1e-2, 5e-3, 2.5e-3};
  double eta = 1e-3;
  int batch = 8;
  int max_epochs = 60000;
  double tau = 4.0;
  double slope_target = 4.0;
  double slope_tol = 0.5;
  std::string trace_csv;
};

int cmd_sgd_probe(const CLI::App& root, const ProbeArgs& a, const State& st, std::ostream& out) {
  const auto t0 = Clock::now();
  const std::uint64_t seed = need_seed(st, "sgd-probe");
  const Dataset data = obtain_data(a.data, DatasetKind::regression_grid, 1, st, "sgd-probe");
  if (data.is_classification() || data.output_dim() != 1) throw UsageError("sgd-probe needs scalar regression data");
  if (a.batch <= 0 || data.size() % a.batch != 0) throw UsageError("--batch must divide N");
  Dataset clamped = data;
  clamped.Y = data.Y.cwiseMax(-0.9).cwiseMin(0.9);
  ConstructOptions co;
  co.clip_margin = st.tol.clip;
  co.gap_tol = st.tol.gap;
  co.fit_tol = st.tol.fit;
  co.output_gain = a.gain;
  const auto c = construct_3layer(clamped, a.d1, a.d2, parse_activation(a.act), derive_seed(seed, "construct"), co);

  ProbeOptions po;
  po.epsilons = a.eps;
  po.eta = a.eta;
  po.batch = a.batch;
  po.max_epochs = a.max_epochs;
  po.tau = a.tau;
  po.seed = derive_seed(seed, "probe");
  po.keep_traces = !a.trace_csv.empty();
  const ProbeReport rep = probe_theorem5(c.params, clamped, po);

  bool contraction_ok = true, xi_ok = true, all_reached = true;
  Json timing_runs = Json::array();
  for (const auto& run : rep.runs) {
    all_reached = all_reached && run.t_star >= 0 && !run.pattern_changed;
    xi_ok = xi_ok && run.t_star >= 0 && run.xi_ratio <= 2.0;
    for (double f : run.contraction_factors) contraction_ok = contraction_ok && f < 1.0;
    timing_runs.push_back(run.seconds);
  }
  const bool slope_ok = rep.slope && std::abs(*rep.slope - a.slope_target) <= a.slope_tol;
  const bool pass = all_reached && contraction_ok && xi_ok && slope_ok;

  Json r = make_report(config_echo(root), "thm5");
  r["dataset"] = dataset_summary(clamped);
  r["construction"] = to_json(c.report);
  Json probe = to_json(rep);
  r["per_epsilon"] = probe["per_epsilon"];
  r["slope_fit"] = probe["slope_fit"];
  r["eta"] = rep.eta;
  r["B"] = rep.batch;
  r["seed"] = seed;
  r["tau"] = rep.tau;
  r["rank"] = rep.rank;
  r["lambda_min_pos"] = probe["lambda_min_pos"];
  r["lambda_max"] = probe["lambda_max"];
  r["checks"] = Json{{"tstar_reached", all_reached},
                     {"contraction_below_one", contraction_ok},
                     {"xi_ratio_at_most_2", xi_ok},
                     {"slope_within_tolerance", slope_ok}};
  r["pass"] = pass;
  r["timing"] = Json{{"per_epsilon_seconds", timing_runs}};
  emit_report(r, st, t0, out, false);

  if (!a.trace_csv.empty()) {
    std::ostringstream os;
    os << "epsilon,t,xi_par,xi_perp,risk\n";
    for (const auto& run : rep.runs)
      for (const auto& s : run.trace)
        os << format_double(run.epsilon) << "," << s.t << "," << format_double(s.xi_par) << ","
           << format_double(s.xi_perp) << "," << format_double(s.risk) << "\n";
    write_file_atomic(a.trace_csv, os.str());
  }
  for (const auto& run : rep.runs)
    out << "eps " << run.epsilon << ": t* " << run.t_star << ", xi ratio " << run.xi_ratio << ", risk "
        << run.risk_at_tstar << (run.diagnostic.empty() ? "" : ", " + run.diagnostic) << "\n";
  out << "slope " << (rep.slope ? std::to_string(*rep.slope) : std::string("n/a")) << (pass ? ", pass" : ", FAIL")
      << "\n";
  return pass ? 0 : 1;
}

struct GradArgs {
  std::string net;
  std::vector<int> widths{8, 8};
  int d_x = 3;
  std::string act = "hard_tanh";
  int points = 100;
  double h = 1e-6;
  double margin = 1e-4;
};

int cmd_gradcheck(const CLI::App& root, const GradArgs& a, const State& st, std::ostream& out) {
  const auto t0 = Clock::now();
  const std::uint64_t seed = need_seed(st, "gradcheck");
  FnnParams params;
  if (!a.net.empty()) {
    require_file(a.net);
    const Network net = load_network(a.net);
    const auto* f = std::get_if<FnnParams>(&net);
    if (!f) throw UsageError("gradcheck needs a fully connected network");
    params = *f;
  } else {
    Rng rng(derive_seed(seed, "gradcheck-net"));
    params.activation = parse_activation(a.act);
    int prev = a.d_x;
    std::vector<int> dims = a.widths;
    dims.push_back(1);
    for (int w : dims) {
      if (w <= 0) throw UsageError("--widths must be positive");
      params.layers.push_back({gaussian_matrix(rng, w, prev), gaussian_vector(rng, w)});
      prev = w;
    }
  }
  if (params.output_dim() != 1) throw UsageError("gradcheck needs a scalar-output network");

  Rng rng(derive_seed(seed, "gradcheck-points"));
  const Eigen::VectorXd theta = flatten_params(params);
  FnnParams probe = params;
  double max_rel = 0.0, sum_rel = 0.0;
  int checked = 0, rejected = 0;
  while (checked < a.points) {
    const Eigen::VectorXd x = gaussian_vector(rng, params.input_dim());
    if (!is_differentiable_at(params, x.transpose(), a.margin)) {
      if (++rejected > 1000 * std::max(1, a.points)) throw std::runtime_error("no differentiable points found");
      continue;
    }
    const Eigen::VectorXd g = fnn_gradient(params, x);
    Eigen::VectorXd fd(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += a.h;
      tm(k) -= a.h;
      assign_params(probe, tp);
      const double fp = fnn_forward(probe, x)(0);
      assign_params(probe, tm);
      const double fm = fnn_forward(probe, x)(0);
      fd(k) = (fp - fm) / (2 * a.h);
    }
    const double scale = std::max(g.norm(), fd.norm());
    const double rel = scale > 0 ? (g - fd).norm() / scale : 0.0;
    max_rel = std::max(max_rel, rel);
    sum_rel += rel;
    ++checked;
  }
  const bool pass = max_rel <= st.tol.grad;
  Json r = make_report(config_echo(root), "");
  r["parameters"] = theta.size();
  r["points"] = checked;
  r["rejected_points"] = rejected;
  r["max_relative_error"] = max_rel;
  r["mean_relative_error"] = checked ? sum_rel / checked : 0.0;
  r["tolerance"] = st.tol.grad;
  r["pass"] = pass;
  emit_report(r, st, t0, out, false);
  out << "gradcheck: max relative error " << max_rel << (pass ? ", pass" : ", FAIL") << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constructive memorization toolkit", "memcap"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values");

  State st;
  auto* seed_opt = app.add_option("--seed", st.seed, "Master seed")->envname("MEMCAP_SEED");
  app.add_option("--report", st.report, "Write the JSON report here");
  const auto pos = CLI::PositiveNumber;
  app.add_option("--tol-fit", st.tol.fit, "Fit tolerance for verification")->check(pos);
  app.add_option("--tol-clip", st.tol.clip, "Clipping margin")->check(pos);
  app.add_option("--tol-diff", st.tol.diff, "Differentiability margin")->check(pos);
  app.add_option("--tol-gap", st.tol.gap, "Relative projection gap")->check(pos);
  app.add_option("--tol-det", st.tol.det, "General-position conditioning threshold")->check(pos);
  app.add_option("--tol-grad", st.tol.grad, "Gradient check tolerance")->check(pos);

  DataOptions gen_data;
  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  add_data_options(gen, gen_data, false);
  gen->add_option("--out", gen_data.out, "Output CSV");

  ConstructArgs ca;
  auto* construct = app.add_subcommand("construct", "Build a memorizing network");
  construct->require_subcommand(1);
  std::vector<std::pair<std::string, CLI::App*>> archs;
  for (const char* name : {"3layer", "4layer", "deep", "resnet", "fnn2"}) {
    auto* sub = construct->add_subcommand(name);
    add_data_options(sub, ca.data, true);
    sub->add_option("--act", ca.act, "hard_tanh or relu");
    sub->add_option("--s-plus", ca.s_plus, "Positive slope of relu-like activations");
    sub->add_option("--s-minus", ca.s_minus, "Negative slope of relu-like activations");
    sub->add_option("--net", ca.net, "Output network JSON");
    const std::string n = name;
    if (n == "3layer" || n == "4layer") {
      sub->add_option("--d1", ca.d1)->required();
      sub->add_option("--d2", ca.d2)->required();
      if (n == "4layer") sub->add_option("--d3", ca.d3)->required();
    } else if (n == "deep") {
      sub->add_option("--widths", ca.widths, "Hidden widths")->delimiter(',')->required();
      sub->add_option("--blocks", ca.blocks, "Block start layers, 1-based")->delimiter(',')->required();
    } else {
      sub->add_option("--hidden", ca.hidden, "Hidden-node budget, 0 for the minimum");
      sub->add_option("--block-width", ca.block_width, "Gates per residual block, 0 for d_x");
    }
    archs.emplace_back(n, sub);
  }

  std::string verify_net = "net.json", verify_data = "data.csv";
  auto* verify = app.add_subcommand("verify", "Check a network against a dataset");
  verify->add_option("--net", verify_net);
  verify->add_option("--data", verify_data);

  std::string cap_net = "net.json", cap_data, plot_csv;
  int hard_n = -1;
  std::vector<double> direction;
  auto* capacity = app.add_subcommand("capacity", "Count linear pieces and refute fits");
  capacity->add_option("--net", cap_net);
  capacity->add_option("--hard-n", hard_n, "Use the alternating dataset on a line");
  capacity->add_option("--data", cap_data, "Collinear dataset CSV");
  capacity->add_option("--direction", direction, "Line direction")->delimiter(',');
  capacity->add_option("--plot-csv", plot_csv, "Write the restricted function's knots");

  DataOptions gp_data;
  long long exhaustive_limit = 1000000;
  int samples = 2000;
  auto* genpos = app.add_subcommand("genpos-check", "Test inputs for general position");
  add_data_options(genpos, gp_data, false);
  genpos->add_option("--exhaustive-limit", exhaustive_limit);
  genpos->add_option("--samples", samples)->check(CLI::PositiveNumber);

  std::string shape, arch_name = "resnet", act_name = "relu";
  int classes = 0;
  auto* budget = app.add_subcommand("budget", "Hidden-node budget for general-position data");
  budget->add_option("--dataset-shape", shape, "NxD")->required();
  budget->add_option("--classes", classes)->required();
  budget->add_option("--arch", arch_name, "resnet or fnn2");
  budget->add_option("--act", act_name, "relu or hard_tanh");

  ProbeArgs pa;
  pa.data.n = 64;
  pa.data.d_x = 1;
  auto* sgd = app.add_subcommand("sgd-probe", "SGD decay around a memorizing minimum");
  add_data_options(sgd, pa.data, false);
  sgd->add_option("--act", pa.act);
  sgd->add_option("--d1", pa.d1);
  sgd->add_option("--d2", pa.d2);
  sgd->add_option("--gain", pa.gain, "Output gain of the constructed minimum")->check(CLI::Range(1.0, 1e6));
  sgd->add_option("--eps", pa.eps, "Perturbation sizes")->delimiter(',');
  sgd->add_option("--eta", pa.eta)->check(pos);
  sgd->add_option("--batch", pa.batch)->check(pos);
  sgd->add_option("--max-epochs", pa.max_epochs)->check(pos);
  sgd->add_option("--tau", pa.tau)->check(pos);
  sgd->add_option("--slope-target", pa.slope_target);
  sgd->add_option("--slope-tol", pa.slope_tol)->check(pos);
  sgd->add_option("--trace-csv", pa.trace_csv, "Per-step xi and risk trace");

  GradArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--net", ga.net, "Network JSON; a random network when omitted");
  grad->add_option("--widths", ga.widths)->delimiter(',');
  grad->add_option("--dx", ga.d_x)->check(pos);
  grad->add_option("--act", ga.act);
  grad->add_option("--points", ga.points)->check(pos);
  grad->add_option("--fd-step", ga.h, "Central-difference step")->check(pos);
  grad->add_option("--margin", ga.margin)->check(pos);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "memcap: " << e.what() << "\n";
    return 2;
  }
  st.seed_given = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen(app, gen_data, st, out);
    if (construct->parsed()) {
      for (const auto& [name, sub] : archs)
        if (sub->parsed()) return cmd_construct(app, name, ca, st, out, err);
    }
    if (verify->parsed()) return cmd_verify(app, verify_net, verify_data, st, out);
    if (capacity->parsed()) return cmd_capacity(app, cap_net, hard_n, cap_data, direction, plot_csv, st, out);
    if (genpos->parsed()) return cmd_genpos(app, gp_data, exhaustive_limit, samples, st, out);
    if (budget->parsed()) return cmd_budget(app, shape, classes, arch_name, act_name, st, out);
    if (sgd->parsed()) return cmd_sgd_probe(app, pa, st, out);
    if (grad->parsed()) return cmd_gradcheck(app, ga, st, out);
  } catch (const UsageError& e) {
    err << "memcap: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "memcap: " << e.what() << "\n";
    return 2;
  } catch (const DatasetError& e) {
    err << "memcap: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "memcap: " << e.what() << "\n";
    return 1;
  }
  err << "memcap: no command given\n";
  return 2;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace memcap
