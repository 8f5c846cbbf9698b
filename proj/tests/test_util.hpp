#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "nudge2d/nudge2d.hpp"

namespace testutil {

using nudge2d::complex;

/// Random dealiased stream function with |psi_k| ~ |k|^-decay.
inline nudge2d::StreamField random_stream(const nudge2d::GridPtr& grid, std::mt19937_64& rng,
                                          double decay = 2.0) {
  std::normal_distribution<double> normal;
  nudge2d::StreamField psi(grid);
  for (const auto& m : grid->modes()) {
    const double k = std::hypot(m.k1, m.k2);
    psi.set(m.k1, m.k2, complex(normal(rng), normal(rng)) * std::pow(k, -decay));
  }
  return psi;
}

inline nudge2d::VectorFieldHat random_vector(const nudge2d::GridPtr& grid, std::mt19937_64& rng,
                                             double decay = 1.0) {
  std::normal_distribution<double> normal;
  nudge2d::VectorFieldHat u(grid);
  for (const auto& m : grid->modes()) {
    const double k = std::hypot(m.k1, m.k2);
    for (int c = 0; c < 2; ++c) u.set(c, m.k1, m.k2, complex(normal(rng), normal(rng)) * std::pow(k, -decay));
  }
  return u;
}

/// sum over all retained k (both half planes) of c_k e^{i 2 pi k.x / L}, by direct summation.
template <class Coeff>
complex direct_sum(const nudge2d::SpectralGrid& g, Coeff coeff, double x, double y) {
  complex acc{};
  const int kmax = g.kmax();
  const double s = g.scale();
  for (int k1 = -kmax; k1 <= kmax; ++k1)
    for (int k2 = -kmax; k2 <= kmax; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      acc += coeff(k1, k2) * std::polar(1.0, s * (k1 * x + k2 * y));
    }
  return acc;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testutil
