#pragma once

/// Time-independent, divergence-free body force supported on an annulus
/// band_lo <= |k|^2 <= band_hi, scaled to a prescribed Grashof number.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "nudge2d/dynamics.hpp"
#include "nudge2d/spectral.hpp"

namespace nudge2d {

struct ForcingSpec {
  int band_lo = 110;
  int band_hi = 132;
  double grashof = 2.5e6;
  std::uint64_t seed = 1;
  double nu = 1e-4;
  double length = 2.0 * std::numbers::pi;
};

struct Forcing {
  VectorFieldHat f;     ///< velocity-space force
  VorticityField curl;  ///< its curl, the stream-function forcing g
};

/// G = (L / (2 pi nu))^2 ||f||_{L^2}.
inline double grashof_of(const VectorFieldHat& f, double nu, double length) {
  const double scale = length / (2.0 * std::numbers::pi * nu);
  return scale * scale * std::sqrt(v_alpha_norm_sq(f, 0.0));
}

namespace detail {

// Keeps 44 significant bits so that products with integer wavenumbers below
// 2^9 stay exact; k1*(k2*c) and k2*(k1*c) then round identically.
inline double round_mantissa(double v) {
  if (v == 0.0) return 0.0;
  int exp = 0;
  const double frac = std::frexp(v, &exp);
  return std::ldexp(std::round(std::ldexp(frac, 44)), exp - 44);
}

}  // namespace detail

inline Forcing make_forcing(const ForcingSpec& spec, const GridPtr& grid) {
  const int kmax = grid->kmax();
  if (spec.band_lo <= 0 || spec.band_lo > spec.band_hi)
    throw std::invalid_argument("forcing band must satisfy 0 < band_lo <= band_hi");
  if (spec.band_hi > kmax * kmax)
    throw std::invalid_argument("forcing band exceeds kmax^2 = " + std::to_string(kmax * kmax));
  if (!(spec.grashof > 0.0)) throw std::invalid_argument("Grashof number must be positive");
  if (!(spec.nu > 0.0)) throw std::invalid_argument("viscosity must be positive");
  if (grid->length() != spec.length)
    throw std::invalid_argument("forcing box length differs from the grid's");

  // One phase per canonical half-plane mode (k2 > 0, or k2 == 0 and k1 > 0),
  // drawn in a fixed order from a 64-bit Mersenne twister.
  struct Entry {
    int k1, k2;
    complex phase;
  };
  std::vector<Entry> entries;
  std::mt19937_64 rng(spec.seed);
  for (int k2 = 0; k2 <= kmax; ++k2)
    for (int k1 = -kmax; k1 <= kmax; ++k1) {
      if (k2 == 0 && k1 <= 0) continue;
      const int k_sq = k1 * k1 + k2 * k2;
      if (k_sq < spec.band_lo || k_sq > spec.band_hi) continue;
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const double theta = 2.0 * std::numbers::pi * u;
      entries.push_back({k1, k2, complex(std::cos(theta), std::sin(theta))});
    }
  if (entries.empty()) throw std::invalid_argument("forcing band contains no modes");

  // Unit-magnitude coefficients e^{i theta} (-k2, k1)/|k| give
  // ||f||^2 = L^2 * 2 * count.
  const double unit_norm = grid->length() * std::sqrt(2.0 * static_cast<double>(entries.size()));
  const double scale = grid->length() / (2.0 * std::numbers::pi * spec.nu);
  const double amplitude = spec.grashof / (scale * scale * unit_norm);

  Forcing out{VectorFieldHat(grid), VorticityField(grid)};
  for (const auto& e : entries) {
    const double kk = std::sqrt(static_cast<double>(e.k1 * e.k1 + e.k2 * e.k2));
    const complex raw = amplitude / kk * e.phase;
    const complex c(detail::round_mantissa(raw.real()), detail::round_mantissa(raw.imag()));
    out.f.set(0, e.k1, e.k2, -static_cast<double>(e.k2) * c);
    out.f.set(1, e.k1, e.k2, static_cast<double>(e.k1) * c);
  }
  out.f.mark_divergence_free(true);
  out.curl = curl_scalar(out.f);
  return out;
}

struct SpinUpResult {
  StreamField psi;
  double cfl_max = 0.0;
  long long steps = 0;
};

/// Integrates the reference dynamics from rest for `duration` time units.
/// CFL is checked every `check_stride` steps; a value above 1 aborts.
inline SpinUpResult spin_up(const Forcing& forcing, double nu, const GridPtr& grid, double dt,
                            double duration, int check_stride = 64,
                            const std::function<void(long long, double, double)>& progress = {}) {
  if (duration < 0.0) throw std::invalid_argument("spin-up duration must be >= 0");
  SpinUpResult out{StreamField(grid)};
  const long long steps = std::llround(duration / dt);
  if (steps == 0) return out;
  Stepper stepper(grid, nu, dt, forcing.curl);
  for (long long i = 1; i <= steps; ++i) {
    stepper.step_reference(out.psi);
    if (i % check_stride == 0 || i == steps) {
      const double cfl = cfl_number(out.psi, dt, grid->n());
      if (!std::isfinite(cfl) || cfl > 1.0)
        throw std::runtime_error("spin-up CFL " + std::to_string(cfl) + " exceeds 1 at t=" +
                                 std::to_string(i * dt));
      out.cfl_max = std::max(out.cfl_max, cfl);
      if (progress) progress(i, i * dt, cfl);
    }
  }
  out.steps = steps;
  return out;
}

}  // namespace nudge2d
