#pragma once

#include <array>
#include <compare>
#include <cstdint>

namespace lgf {

/// An element unit_part + varpi_part * varpi of Z[varpi].
///
/// varpi is treated as a transcendental: equality is componentwise and never
/// goes through floating point. A numeric value only exists once a concrete
/// varpi is supplied to evaluate().
struct SymbolicScalar {
  std::int64_t unit_part = 0;
  std::int64_t varpi_part = 0;

  constexpr auto operator<=>(const SymbolicScalar&) const = default;

  [[nodiscard]] constexpr double evaluate(double varpi) const {
    return static_cast<double>(unit_part) + static_cast<double>(varpi_part) * varpi;
  }
  [[nodiscard]] constexpr bool is_zero() const { return unit_part == 0 && varpi_part == 0; }

  friend constexpr SymbolicScalar operator+(SymbolicScalar a, SymbolicScalar b) {
    return {a.unit_part + b.unit_part, a.varpi_part + b.varpi_part};
  }
  friend constexpr SymbolicScalar operator-(SymbolicScalar a, SymbolicScalar b) {
    return {a.unit_part - b.unit_part, a.varpi_part - b.varpi_part};
  }
  friend constexpr SymbolicScalar operator-(SymbolicScalar a) { return {-a.unit_part, -a.varpi_part}; }
  constexpr SymbolicScalar& operator+=(SymbolicScalar b) { return *this = *this + b; }
  constexpr SymbolicScalar& operator-=(SymbolicScalar b) { return *this = *this - b; }
};

inline constexpr SymbolicScalar kOne{1, 0};
inline constexpr SymbolicScalar kVarpi{0, 1};

/// c0 + c1 varpi + c2 varpi^2 with varpi and varpi^2 independent.
struct SymbolicQuadratic {
  std::int64_t c0 = 0;
  std::int64_t c1 = 0;
  std::int64_t c2 = 0;

  constexpr auto operator<=>(const SymbolicQuadratic&) const = default;

  [[nodiscard]] constexpr double evaluate(double varpi) const {
    return static_cast<double>(c0) + static_cast<double>(c1) * varpi +
           static_cast<double>(c2) * varpi * varpi;
  }
  [[nodiscard]] constexpr bool is_zero() const { return c0 == 0 && c1 == 0 && c2 == 0; }

  friend constexpr SymbolicQuadratic operator+(SymbolicQuadratic a, SymbolicQuadratic b) {
    return {a.c0 + b.c0, a.c1 + b.c1, a.c2 + b.c2};
  }
  friend constexpr SymbolicQuadratic operator-(SymbolicQuadratic a, SymbolicQuadratic b) {
    return {a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2};
  }
  constexpr SymbolicQuadratic& operator+=(SymbolicQuadratic b) { return *this = *this + b; }
  constexpr SymbolicQuadratic& operator-=(SymbolicQuadratic b) { return *this = *this - b; }
};

constexpr SymbolicQuadratic lift(SymbolicScalar s) { return {s.unit_part, s.varpi_part, 0}; }

constexpr SymbolicQuadratic operator*(SymbolicScalar a, SymbolicScalar b) {
  return {a.unit_part * b.unit_part,
          a.unit_part * b.varpi_part + a.varpi_part * b.unit_part,
          a.varpi_part * b.varpi_part};
}

constexpr SymbolicQuadratic square(SymbolicScalar s) { return s * s; }

/// Exact conserved content (I_0, I_1, I_2, I_3, 2 I_4).
///
/// Slot 4 holds twice the kinetic energy so every entry stays integral.
using ExactConserved = std::array<SymbolicQuadratic, 5>;

constexpr ExactConserved& operator+=(ExactConserved& a, const ExactConserved& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

constexpr ExactConserved& operator-=(ExactConserved& a, const ExactConserved& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

/// Numeric (I_0..I_4) from the exact representation.
inline std::array<double, 5> evaluate(const ExactConserved& e, double varpi) {
  return {e[0].evaluate(varpi), e[1].evaluate(varpi), e[2].evaluate(varpi),
          e[3].evaluate(varpi), 0.5 * e[4].evaluate(varpi)};
}

}  // namespace lgf
