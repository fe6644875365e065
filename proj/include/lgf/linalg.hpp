#pragma once

// Small dense complex helpers shared by the spectral and OU layers.

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lgf/errors.hpp"

namespace lgf {

using cplx = std::complex<double>;
using Mat5c = Eigen::Matrix<cplx, 5, 5>;
using Vec5c = Eigen::Matrix<cplx, 5, 1>;

/// Largest entry magnitude.
template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Scaling-and-squaring Pade exponential.
inline Mat5c expm(const Mat5c& a) { return a.exp(); }

inline Mat5c hermitian_part(const Mat5c& m) { return 0.5 * (m + m.adjoint()); }

struct PsdFactor {
  Mat5c root;             // hermitian, root * root = S (after clipping)
  double min_eigenvalue;  // before clipping
};

/// Hermitian square root of a hermitian PSD matrix. Eigenvalues in
/// [-tol * max(1, |S|), 0) are clipped to zero; anything lower throws.
inline PsdFactor hermitian_sqrt_psd(const Mat5c& s, double tol = 1e-12) {
  const Mat5c h = hermitian_part(s);
  Eigen::SelfAdjointEigenSolver<Mat5c> es(h);
  if (es.info() != Eigen::Success) throw RegimeError("hermitian eigensolver failed");
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  PsdFactor out{Mat5c::Zero(), ev.minCoeff()};
  if (out.min_eigenvalue < -tol * scale) throw RegimeError("matrix is not positive semidefinite");
  Eigen::Matrix<double, 5, 1> r;
  for (int i = 0; i < 5; ++i) r(i) = std::sqrt(std::max(ev(i), 0.0));
  out.root = es.eigenvectors() * r.asDiagonal() * es.eigenvectors().adjoint();
  return out;
}

/// Min and max eigenvalue of the hermitian part.
inline std::pair<double, double> hermitian_range(const Mat5c& m) {
  Eigen::SelfAdjointEigenSolver<Mat5c> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

}  // namespace lgf
