#include "memcap/reports.hpp"

#include <cmath>

namespace memcap {

namespace {

// Non-finite values serialize as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json to_json(const CapacityCheck& c) {
  return Json{{"ok", c.ok}, {"theorem", c.theorem}, {"arithmetic", c.arithmetic}, {"capacity", c.capacity}};
}

Json to_json(const BlockSummary& b) {
  Json alphas = Json::array();
  for (double a : b.alphas) alphas.push_back(num(a));
  return Json{{"first_layer", b.first_layer},
              {"p", b.p},
              {"q", b.q},
              {"points", b.points},
              {"fillers", b.fillers},
              {"layer1_margin", num(b.layer1_margin)},
              {"clip_margin_min", num(b.clip_margin_min)},
              {"clip_margin_max", num(b.clip_margin_max)},
              {"interp_error", num(b.interp_error)},
              {"alpha", alphas}};
}

Json to_json(const ConstructionReport& r) {
  Json blocks = Json::array();
  for (const auto& b : r.blocks) blocks.push_back(to_json(b));
  return Json{{"theorem", r.theorem},
              {"activation", r.activation},
              {"widths", r.widths},
              {"seed", r.seed},
              {"n", r.n},
              {"resamples", r.resamples},
              {"capacity_check", to_json(r.capacity)},
              {"blocks", blocks},
              {"fit_error_max", num(r.fit_error)},
              {"misclassified", r.misclassified}};
}

Json to_json(const GenposReport& r) {
  Json nodes = Json::array();
  for (const auto& n : r.nodes)
    nodes.push_back(Json{{"class", n.cls},
                         {"indices", n.indices},
                         {"alpha", num(n.alpha)},
                         {"beta", num(n.beta)},
                         {"separation", num(n.separation)},
                         {"block", n.block}});
  Json xmax = Json::array();
  for (double v : r.class_max) xmax.push_back(num(v));
  return Json{{"theorem", r.theorem},
              {"activation", r.activation},
              {"seed", r.seed},
              {"n", r.n},
              {"gates", r.gates},
              {"required_nodes", r.required_nodes},
              {"hidden_nodes", r.hidden_nodes},
              {"budget_arithmetic", r.budget_arithmetic},
              {"class_max", xmax},
              {"redraws", r.redraws},
              {"nodes", nodes},
              {"fit_error_max", num(r.fit_error)},
              {"misclassified", r.misclassified}};
}

Json to_json(const GeneralPositionReport& r) {
  return Json{{"general", r.general},
              {"mode", r.exhaustive ? "exhaustive" : "sampled"},
              {"subsets_checked", r.subsets_checked},
              {"min_conditioning", num(r.min_conditioning)},
              {"witness", r.witness}};
}

Json to_json(const RefuteResult& r) {
  return Json{{"verdict", r.verdict},
              {"piece_count", r.piece_count},
              {"required_pieces", r.required_pieces},
              {"bound", r.bound ? Json(*r.bound) : Json(nullptr)},
              {"architecture_impossible", r.architecture_impossible},
              {"inequality", r.inequality},
              {"inequality_holds", r.inequality_holds}};
}

Json to_json(const EpsilonRun& r) {
  Json factors = Json::array();
  for (double f : r.contraction_factors) factors.push_back(num(f));
  return Json{{"epsilon", r.epsilon},
              {"xi_par0", num(r.xi_par0)},
              {"xi_perp0", num(r.xi_perp0)},
              {"t_star", r.t_star},
              {"xi_ratio", num(r.xi_ratio)},
              {"risk_at_tstar", num(r.risk_at_tstar)},
              {"pattern_changed", r.pattern_changed},
              {"diagnostic", r.diagnostic},
              {"contraction_factors", factors}};
}

Json to_json(const ProbeReport& r) {
  Json runs = Json::array();
  for (const auto& run : r.runs) runs.push_back(to_json(run));
  return Json{{"per_epsilon", runs},
              {"slope_fit", r.slope ? num(*r.slope) : Json(nullptr)},
              {"rank", r.rank},
              {"lambda_min_pos", r.spectrum.positive ? num(r.spectrum.lambda_min_pos) : Json(nullptr)},
              {"lambda_max", r.spectrum.positive ? num(r.spectrum.lambda_max) : Json(nullptr)},
              {"eta", r.eta},
              {"B", r.batch},
              {"tau", r.tau},
              {"seed", r.seed}};
}

Json to_json(const PiecewiseLinear1D& f) {
  return Json{{"pieces", f.pieces()},
              {"breakpoints", f.breakpoints()},
              {"slopes", f.slopes()},
              {"anchor", {f.anchor_t(), f.anchor_value()}}};
}

}  // namespace memcap
