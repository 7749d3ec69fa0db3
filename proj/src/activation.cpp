#include "memcap/activation.hpp"

#include <array>
#include <stdexcept>

namespace memcap {

namespace {
constexpr std::array<double, 1> kReluBreaks{0.0};
constexpr std::array<double, 2> kHardTanhBreaks{-1.0, 1.0};
constexpr std::array<double, 3> kGateBreaks{-1.0, 0.0, 1.0};

double hard_tanh_value(double t) {
  if (t <= -1.0) return -1.0;
  if (t > 1.0) return 1.0;
  return t;
}
}  // namespace

Activation Activation::relu_like(double s_plus, double s_minus) {
  if (!(s_plus > s_minus) || !(s_minus >= 0.0))
    throw std::invalid_argument("relu_like slopes need s_plus > s_minus >= 0");
  return Activation{ActivationKind::relu_like, s_plus, s_minus};
}

Activation Activation::hard_tanh() { return Activation{ActivationKind::hard_tanh, 1.0, 0.0}; }
Activation Activation::gate() { return Activation{ActivationKind::gate, 1.0, 0.0}; }

double Activation::operator()(double t) const {
  switch (kind) {
    case ActivationKind::relu_like:
      return t >= 0.0 ? s_plus * t : s_minus * t;
    case ActivationKind::hard_tanh:
      return hard_tanh_value(t);
    case ActivationKind::gate:
      if (t < -1.0 || t > 1.0) return 0.0;
      return t <= 0.0 ? t + 1.0 : 1.0 - t;
  }
  return 0.0;
}

double Activation::slope(double t) const {
  switch (kind) {
    case ActivationKind::relu_like:
      return t >= 0.0 ? s_plus : s_minus;
    case ActivationKind::hard_tanh:
      return (t >= -1.0 && t < 1.0) ? 1.0 : 0.0;
    case ActivationKind::gate:
      if (t >= -1.0 && t < 0.0) return 1.0;
      if (t >= 0.0 && t < 1.0) return -1.0;
      return 0.0;
  }
  return 0.0;
}

std::span<const double> Activation::breakpoints() const {
  switch (kind) {
    case ActivationKind::relu_like:
      return kReluBreaks;
    case ActivationKind::hard_tanh:
      return kHardTanhBreaks;
    case ActivationKind::gate:
      return kGateBreaks;
  }
  return {};
}

int Activation::region(double t) const {
  int r = 0;
  for (double bp : breakpoints())
    if (t >= bp) ++r;
  return r;
}

double Activation::idle_bias() const {
  switch (kind) {
    case ActivationKind::relu_like:
      return -1.0;
    case ActivationKind::hard_tanh:
      return 0.0;
    case ActivationKind::gate:
      return 2.0;
  }
  return 0.0;
}

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu_like:
      return "relu_like";
    case ActivationKind::hard_tanh:
      return "hard_tanh";
    case ActivationKind::gate:
      return "gate";
  }
  return "?";
}

std::string Activation::name() const { return std::string(to_string(kind)); }

Activation parse_activation(std::string_view name, double s_plus, double s_minus) {
  if (name == "relu" || name == "relu_like" || name == "leaky_relu") return Activation::relu_like(s_plus, s_minus);
  if (name == "hard_tanh" || name == "htanh") return Activation::hard_tanh();
  if (name == "gate") return Activation::gate();
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

}  // namespace memcap
