#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace resadmm {

enum class ActKind { sigmoid, tanh, sin, cos, relu };

struct ActBounds {
  double psi0, psi1, psi2;
};

namespace detail {
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class F>
double grid_max_abs(F f, double lo, double hi, long steps) {
  double m = 0.0;
  for (long s = 0; s <= steps; ++s) {
    const double x = lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(steps);
    m = std::max(m, std::abs(f(x)));
  }
  return m;
}
}  // namespace detail

struct Activation {
  ActKind kind = ActKind::sigmoid;

  double sigma(double x) const {
    switch (kind) {
      case ActKind::sigmoid: return detail::sigmoid(x);
      case ActKind::tanh: return std::tanh(x);
      case ActKind::sin: return std::sin(x);
      case ActKind::cos: return std::cos(x);
      case ActKind::relu: return x > 0 ? x : 0.0;
    }
    return 0.0;
  }
  double dsigma(double x) const {
    switch (kind) {
      case ActKind::sigmoid: {
        const double s = detail::sigmoid(x);
        return s * (1.0 - s);
      }
      case ActKind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActKind::sin: return std::cos(x);
      case ActKind::cos: return -std::sin(x);
      case ActKind::relu: return x > 0 ? 1.0 : 0.0;
    }
    return 0.0;
  }
  double ddsigma(double x) const {
    switch (kind) {
      case ActKind::sigmoid: {
        const double s = detail::sigmoid(x);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
      }
      case ActKind::tanh: {
        const double t = std::tanh(x);
        return -2.0 * t * (1.0 - t * t);
      }
      case ActKind::sin: return -std::sin(x);
      case ActKind::cos: return -std::cos(x);
      case ActKind::relu: return 0.0;
    }
    return 0.0;
  }

  bool smooth() const { return kind != ActKind::relu; }

  // (psi0, psi1, psi2); psi2 of sigmoid/tanh by grid maximization on [-50, 50].
  std::optional<ActBounds> bounds() const {
    switch (kind) {
      case ActKind::sigmoid: {
        static const double p2 = detail::grid_max_abs(
            [](double x) { return Activation{ActKind::sigmoid}.ddsigma(x); }, -50.0, 50.0, 2'000'000);
        return ActBounds{1.0, 0.25, p2};
      }
      case ActKind::tanh: {
        static const double p2 = detail::grid_max_abs(
            [](double x) { return Activation{ActKind::tanh}.ddsigma(x); }, -50.0, 50.0, 2'000'000);
        return ActBounds{1.0, 1.0, p2};
      }
      case ActKind::sin:
      case ActKind::cos: return ActBounds{1.0, 1.0, 1.0};
      case ActKind::relu: return std::nullopt;
    }
    return std::nullopt;
  }

  std::string name() const {
    switch (kind) {
      case ActKind::sigmoid: return "sigmoid";
      case ActKind::tanh: return "tanh";
      case ActKind::sin: return "sin";
      case ActKind::cos: return "cos";
      case ActKind::relu: return "relu";
    }
    return "?";
  }

  static Activation parse(const std::string& s) {
    for (ActKind k : {ActKind::sigmoid, ActKind::tanh, ActKind::sin, ActKind::cos, ActKind::relu})
      if (Activation{k}.name() == s) return Activation{k};
    throw std::invalid_argument("unknown activation '" + s + "'");
  }

  bool operator==(const Activation&) const = default;
};

}  // namespace resadmm
