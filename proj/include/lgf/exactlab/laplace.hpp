#pragma once

// Discrete Laplace asymptotics: for psi concave with interior maximizer theta,
//   sum_{i=0}^N phi(i/N) exp(N psi(i/N))
//     ~ S_N(alpha, psi''(theta)/2) phi(theta) exp(N psi(theta)),
//   S_N(alpha, a) = sum_{|i - N theta| <= N^{1-alpha}} exp(a (i - N theta)^2 / N).
// Everything is computed relative to exp(N psi(theta)).

#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/tools/minima.hpp>

#include "lgf/errors.hpp"

namespace lgf::exactlab {

struct LaplaceProblem {
  std::function<double(double)> psi;
  std::function<double(double)> psi_second;  // psi''
  std::function<double(double)> phi;
};

struct LaplaceResult {
  double theta = 0.0;
  double value = 0.0;    // exact sum times exp(-N psi(theta))
  double leading = 0.0;  // S_N phi(theta)
  double ratio = 0.0;
};

inline double laplace_maximizer(const LaplaceProblem& pb) {
  // psi may be -inf (or undefined) at the endpoints; those points are never maxima
  const auto r = boost::math::tools::brent_find_minima(
      [&](double x) {
        const double v = pb.psi(x);
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
      },
      0.0, 1.0, 52);
  return r.first;
}

inline double window_sum(int N, double theta, double alpha, double a) {
  const double c = N * theta, half = std::pow(static_cast<double>(N), 1.0 - alpha);
  double s = 0.0;
  const int lo = static_cast<int>(std::ceil(c - half)), hi = static_cast<int>(std::floor(c + half));
  for (int i = lo; i <= hi; ++i) s += std::exp(a * (i - c) * (i - c) / N);
  return s;
}

inline LaplaceResult laplace_sum(const LaplaceProblem& pb, int N, double alpha = 0.25) {
  if (N < 1) throw ConfigError("N must be positive");
  if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 1/2)");
  LaplaceResult r;
  r.theta = laplace_maximizer(pb);
  if (r.theta < 1e-6 || r.theta > 1 - 1e-6) throw RegimeError("maximizer on the boundary");
  const double top = pb.psi(r.theta);
  for (int i = 0; i <= N; ++i) {
    const double x = static_cast<double>(i) / N;
    const double v = pb.psi(x);
    if (std::isnan(v)) throw ConfigError("psi is undefined on the grid");
    if (v == -std::numeric_limits<double>::infinity()) continue;
    r.value += pb.phi(x) * std::exp(N * (v - top));
  }
  r.leading = window_sum(N, r.theta, alpha, 0.5 * pb.psi_second(r.theta)) * pb.phi(r.theta);
  r.ratio = r.leading == 0.0 ? std::numeric_limits<double>::quiet_NaN() : r.value / r.leading;
  return r;
}

}  // namespace lgf::exactlab
