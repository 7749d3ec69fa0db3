#pragma once

#include <span>
#include <string>
#include <string_view>

namespace memcap {

enum class ActivationKind { relu_like, hard_tanh, gate };

// Piecewise-linear scalar activation.
//   relu_like: s_plus * t for t >= 0, s_minus * t for t < 0 (s_plus > s_minus >= 0)
//   hard_tanh: -1 for t <= -1, t on (-1, 1], 1 for t > 1
//   gate:      t + 1 on [-1, 0], 1 - t on [0, 1], 0 elsewhere
struct Activation {
  ActivationKind kind = ActivationKind::hard_tanh;
  double s_plus = 1.0;
  double s_minus = 0.0;

  static Activation relu_like(double s_plus = 1.0, double s_minus = 0.0);
  static Activation hard_tanh();
  static Activation gate();

  double operator()(double t) const;
  // Right derivative; equals the derivative away from breakpoints.
  double slope(double t) const;
  std::span<const double> breakpoints() const;
  // Number of linear pieces p.
  int pieces() const { return static_cast<int>(breakpoints().size()) + 1; }
  // Index of the linear region containing t (right-continuous).
  int region(double t) const;
  // Bias that puts a node with zero incoming weights strictly inside a region.
  double idle_bias() const;

  std::string name() const;
  bool operator==(const Activation&) const = default;
};

Activation parse_activation(std::string_view name, double s_plus = 1.0, double s_minus = 0.0);
std::string_view to_string(ActivationKind kind);

inline double activation_eval(const Activation& act, double t) { return act(t); }

}  // namespace memcap
