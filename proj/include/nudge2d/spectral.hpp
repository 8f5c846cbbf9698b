#pragma once

/// Fourier-space representation of doubly periodic fields on [0, L)^2.
///
/// Coefficients are Fourier-series coefficients, f(x) = sum_k fhat_k exp(i 2pi k.x / L),
/// stored in the half-plane layout of a real-to-complex transform: row a holds
/// k1 = a (a <= n/2) or a - n, column b holds k2 = b for b = 0..n/2. Modes with
/// k2 < 0 are implied by conjugate symmetry. Only modes inside the 2/3 dealias
/// square (excluding the origin) are ever nonzero in dynamical fields.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <new>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nudge2d {

using complex = std::complex<double>;

/// i * s * z without the NaN bookkeeping of a full complex product.
inline complex i_times(double s, complex z) { return {-s * z.imag(), s * z.real()}; }

/// Allocator backed by fftw_malloc so that every buffer shares the SIMD
/// alignment the transform plans were created with.
template <class T>
struct FftwAllocator {
  using value_type = T;

  FftwAllocator() noexcept = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) {
    void* p = fftw_malloc(count * sizeof(T));
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }

  template <class U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

template <class T>
using AlignedVector = std::vector<T, FftwAllocator<T>>;

namespace detail {

// FFTW's planner is not reentrant; execution with the new-array interface is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// FFTW_MEASURE by default; wisdom accumulated in the process makes every later
// plan for the same size identical. NUDGE2D_FFTW_PLANNER=estimate selects the
// timing-independent planner for cross-process bit reproducibility.
inline unsigned planner_flags() {
  const char* env = std::getenv("NUDGE2D_FFTW_PLANNER");
  if (env != nullptr && std::string(env) == "estimate") return FFTW_ESTIMATE;
  return FFTW_MEASURE;
}

}  // namespace detail

/// One retained (dealiased, nonzero) mode of the half-plane layout.
struct Mode {
  std::size_t index;  ///< offset into the coefficient array
  int k1;
  int k2;
  double weight;  ///< 1 for k2 == 0, 2 otherwise: counts the implied -k partner
};

class SpectralGrid {
 public:
  SpectralGrid(int n, double length) : n_(n), length_(length) {
    if (n < 8 || !detail::is_power_of_two(n))
      throw std::invalid_argument("grid size must be a power of two >= 8, got " +
                                  std::to_string(n));
    if (!(length > 0.0) || !std::isfinite(length))
      throw std::invalid_argument("box length must be positive and finite");
    kmax_ = n / 3;
    half_ = n / 2 + 1;

    mask_.assign(spectral_size(), 0);
    for (int a = 0; a < n_; ++a) {
      const int k1 = k1_of_row(a);
      for (int b = 0; b < half_; ++b) {
        const int k2 = b;
        if (std::abs(k1) > kmax_ || k2 > kmax_ || (k1 == 0 && k2 == 0)) continue;
        const std::size_t idx = index(a, b);
        mask_[idx] = 1;
        modes_.push_back({idx, k1, k2, k2 == 0 ? 1.0 : 2.0});
      }
    }

    // Dealiased data only occupies columns k2 <= kmax, so the strided column
    // pass runs on those and the contiguous row pass on every row.
    AlignedVector<double> real(physical_size());
    AlignedVector<complex> spec(spectral_size());
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    const int cols = kmax_ + 1;
    const unsigned flags = detail::planner_flags();
    std::lock_guard lock(detail::planner_mutex());
    rows_r2c_ = fftw_plan_many_dft_r2c(1, &n_, n_, real.data(), nullptr, 1, n_, c, nullptr, 1, half_, flags);
    cols_fwd_ = fftw_plan_many_dft(1, &n_, cols, c, nullptr, half_, 1, c, nullptr, half_, 1, FFTW_FORWARD, flags);
    cols_bwd_ = fftw_plan_many_dft(1, &n_, cols, c, nullptr, half_, 1, c, nullptr, half_, 1, FFTW_BACKWARD, flags);
    rows_c2r_ = fftw_plan_many_dft_c2r(1, &n_, n_, c, nullptr, 1, half_, real.data(), nullptr, 1, n_, flags);
    if (!rows_r2c_ || !cols_fwd_ || !cols_bwd_ || !rows_c2r_) throw std::runtime_error("FFTW plan creation failed");
  }

  ~SpectralGrid() {
    std::lock_guard lock(detail::planner_mutex());
    for (fftw_plan p : {rows_r2c_, cols_fwd_, cols_bwd_, rows_c2r_})
      if (p) fftw_destroy_plan(p);
  }

  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;

  int n() const { return n_; }
  double length() const { return length_; }
  int kmax() const { return kmax_; }
  int half() const { return half_; }
  std::size_t spectral_size() const { return static_cast<std::size_t>(n_) * half_; }
  std::size_t physical_size() const { return static_cast<std::size_t>(n_) * n_; }

  /// Physical wavenumber per integer wavenumber, 2pi/L.
  double scale() const { return 2.0 * std::numbers::pi / length_; }
  double spacing() const { return length_ / n_; }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * half_ + col;
  }
  int k1_of_row(int row) const { return row <= n_ / 2 ? row : row - n_; }
  int row_of_k1(int k1) const { return k1 >= 0 ? k1 : k1 + n_; }

  bool retained(std::size_t idx) const { return mask_[idx] != 0; }
  bool retained(int k1, int k2) const {
    return std::max(std::abs(k1), std::abs(k2)) <= kmax_ && (k1 != 0 || k2 != 0);
  }
  const std::vector<unsigned char>& dealias_mask() const { return mask_; }

  /// Retained modes of the stored half plane, in storage order.
  const std::vector<Mode>& modes() const { return modes_; }

  /// r2c transform divided by n^2. Only columns k2 <= kmax are computed; the
  /// rest of `out` is zeroed.
  void forward(const double* in, complex* out) const {
    auto* c = reinterpret_cast<fftw_complex*>(out);
    fftw_execute_dft_r2c(rows_r2c_, const_cast<double*>(in), c);
    fftw_execute_dft(cols_fwd_, c, c);
    const double norm = 1.0 / static_cast<double>(physical_size());
    for (int a = 0; a < n_; ++a) {
      complex* row = out + index(a, 0);
      for (int b = 0; b <= kmax_; ++b) row[b] *= norm;
      std::fill(row + kmax_ + 1, row + half_, complex{});
    }
  }

  /// c2r synthesis of the columns k2 <= kmax; `in` is clobbered.
  void inverse_inplace(complex* in, double* out) const {
    auto* c = reinterpret_cast<fftw_complex*>(in);
    fftw_execute_dft(cols_bwd_, c, c);
    for (int a = 0; a < n_; ++a) std::fill(in + index(a, kmax_ + 1), in + index(a, half_), complex{});
    fftw_execute_dft_c2r(rows_c2r_, c, out);
  }

 private:
  int n_;
  double length_;
  int kmax_ = 0;
  int half_ = 0;
  std::vector<unsigned char> mask_;
  std::vector<Mode> modes_;
  fftw_plan rows_r2c_ = nullptr, cols_fwd_ = nullptr;
  fftw_plan cols_bwd_ = nullptr, rows_c2r_ = nullptr;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

inline GridPtr make_grid(int n, double length) {
  return std::make_shared<const SpectralGrid>(n, length);
}

inline void require_same_grid(const GridPtr& a, const GridPtr& b) {
  if (a != b && (a->n() != b->n() || a->length() != b->length()))
    throw std::invalid_argument("fields live on different grids");
}

/// Samples of a real field on the n x n collocation grid, x-index major:
/// value(i, j) sits at (i L/n, j L/n).
class PhysicalField {
 public:
  explicit PhysicalField(GridPtr grid)
      : grid_(std::move(grid)), values_(grid_->physical_size(), 0.0) {}

  const GridPtr& grid_ptr() const { return grid_; }
  const SpectralGrid& grid() const { return *grid_; }

  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(i) * grid_->n() + j]; }
  double operator()(int i, int j) const {
    return values_[static_cast<std::size_t>(i) * grid_->n() + j];
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

 private:
  GridPtr grid_;
  AlignedVector<double> values_;
};

struct StreamKind {};
struct VorticityKind {};

/// Scalar field in spectral space. The Kind tag separates stream functions
/// from vorticity-like quantities (curls, Jacobians, forcing curls).
template <class Kind>
class SpectralScalar {
 public:
  explicit SpectralScalar(GridPtr grid)
      : grid_(std::move(grid)), coeffs_(grid_->spectral_size(), complex{}) {}

  const GridPtr& grid_ptr() const { return grid_; }
  const SpectralGrid& grid() const { return *grid_; }

  std::span<complex> coeffs() { return coeffs_; }
  std::span<const complex> coeffs() const { return coeffs_; }
  complex& operator[](std::size_t idx) { return coeffs_[idx]; }
  const complex& operator[](std::size_t idx) const { return coeffs_[idx]; }
  complex* data() { return coeffs_.data(); }
  const complex* data() const { return coeffs_.data(); }

  /// Coefficient of any integer wavevector; zero outside the stored range.
  complex at(int k1, int k2) const {
    const int n = grid_->n();
    if (k2 < 0) {
      k1 = -k1;
      k2 = -k2;
      if (std::abs(k1) >= n / 2 || k2 >= n / 2) return {};
      return std::conj(coeffs_[grid_->index(grid_->row_of_k1(k1), k2)]);
    }
    if (std::abs(k1) >= n / 2 || k2 >= n / 2) return {};
    return coeffs_[grid_->index(grid_->row_of_k1(k1), k2)];
  }

  /// Sets mode k and its conjugate partner -k.
  void set(int k1, int k2, complex value) {
    if (k2 < 0) {
      k1 = -k1;
      k2 = -k2;
      value = std::conj(value);
    }
    const int n = grid_->n();
    if (std::abs(k1) >= n / 2 || k2 >= n / 2)
      throw std::out_of_range("wavevector outside the representable range");
    if (k2 == 0 && k1 == 0) value = value.real();
    coeffs_[grid_->index(grid_->row_of_k1(k1), k2)] = value;
    if (k2 == 0) coeffs_[grid_->index(grid_->row_of_k1(-k1), 0)] = std::conj(value);
  }

  SpectralScalar& operator+=(const SpectralScalar& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralScalar& operator-=(const SpectralScalar& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralScalar& operator*=(double s) {
    for (auto& c : coeffs_) c *= s;
    return *this;
  }
  friend SpectralScalar operator+(SpectralScalar a, const SpectralScalar& b) { return a += b; }
  friend SpectralScalar operator-(SpectralScalar a, const SpectralScalar& b) { return a -= b; }
  friend SpectralScalar operator*(double s, SpectralScalar a) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& c : coeffs_) m = std::max(m, std::abs(c));
    return m;
  }

 private:
  GridPtr grid_;
  AlignedVector<complex> coeffs_;
};

using StreamField = SpectralScalar<StreamKind>;
using VorticityField = SpectralScalar<VorticityKind>;

/// Two-component velocity-like field in spectral space.
class VectorFieldHat {
 public:
  explicit VectorFieldHat(GridPtr grid)
      : grid_(std::move(grid)),
        u1_(grid_->spectral_size(), complex{}),
        u2_(grid_->spectral_size(), complex{}) {}

  const GridPtr& grid_ptr() const { return grid_; }
  const SpectralGrid& grid() const { return *grid_; }

  std::span<complex> component(int c) { return c == 0 ? std::span<complex>(u1_) : u2_; }
  std::span<const complex> component(int c) const {
    return c == 0 ? std::span<const complex>(u1_) : u2_;
  }

  /// Set by operations whose output satisfies k.u_k = 0 for every mode.
  bool divergence_free() const { return divergence_free_; }
  void mark_divergence_free(bool flag) { divergence_free_ = flag; }

  complex at(int c, int k1, int k2) const {
    const auto& comp = c == 0 ? u1_ : u2_;
    const int n = grid_->n();
    bool flip = false;
    if (k2 < 0) {
      k1 = -k1;
      k2 = -k2;
      flip = true;
    }
    if (std::abs(k1) >= n / 2 || k2 >= n / 2) return {};
    const complex v = comp[grid_->index(grid_->row_of_k1(k1), k2)];
    return flip ? std::conj(v) : v;
  }

  void set(int c, int k1, int k2, complex value) {
    auto& comp = c == 0 ? u1_ : u2_;
    if (k2 < 0) {
      k1 = -k1;
      k2 = -k2;
      value = std::conj(value);
    }
    const int n = grid_->n();
    if (std::abs(k1) >= n / 2 || k2 >= n / 2)
      throw std::out_of_range("wavevector outside the representable range");
    if (k2 == 0 && k1 == 0) value = value.real();
    comp[grid_->index(grid_->row_of_k1(k1), k2)] = value;
    if (k2 == 0) comp[grid_->index(grid_->row_of_k1(-k1), 0)] = std::conj(value);
    divergence_free_ = false;
  }

  VectorFieldHat& operator+=(const VectorFieldHat& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t i = 0; i < u1_.size(); ++i) {
      u1_[i] += o.u1_[i];
      u2_[i] += o.u2_[i];
    }
    divergence_free_ = divergence_free_ && o.divergence_free_;
    return *this;
  }
  VectorFieldHat& operator-=(const VectorFieldHat& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t i = 0; i < u1_.size(); ++i) {
      u1_[i] -= o.u1_[i];
      u2_[i] -= o.u2_[i];
    }
    divergence_free_ = divergence_free_ && o.divergence_free_;
    return *this;
  }
  VectorFieldHat& operator*=(double s) {
    for (std::size_t i = 0; i < u1_.size(); ++i) {
      u1_[i] *= s;
      u2_[i] *= s;
    }
    return *this;
  }
  friend VectorFieldHat operator+(VectorFieldHat a, const VectorFieldHat& b) { return a += b; }
  friend VectorFieldHat operator-(VectorFieldHat a, const VectorFieldHat& b) { return a -= b; }
  friend VectorFieldHat operator*(double s, VectorFieldHat a) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (std::size_t i = 0; i < u1_.size(); ++i)
      m = std::max({m, std::abs(u1_[i]), std::abs(u2_[i])});
    return m;
  }

 private:
  GridPtr grid_;
  AlignedVector<complex> u1_;
  AlignedVector<complex> u2_;
  bool divergence_free_ = false;
};

// ---------------------------------------------------------------------------
// Transforms

template <class Kind>
PhysicalField transform_to_physical(const SpectralScalar<Kind>& field) {
  const auto& g = field.grid();
  AlignedVector<complex> scratch(field.coeffs().begin(), field.coeffs().end());
  PhysicalField out(field.grid_ptr());
  g.inverse_inplace(scratch.data(), out.data());
  return out;
}

inline std::array<PhysicalField, 2> transform_to_physical(const VectorFieldHat& field) {
  const auto& g = field.grid();
  std::array<PhysicalField, 2> out{PhysicalField(field.grid_ptr()), PhysicalField(field.grid_ptr())};
  for (int c = 0; c < 2; ++c) {
    AlignedVector<complex> scratch(field.component(c).begin(), field.component(c).end());
    g.inverse_inplace(scratch.data(), out[c].data());
  }
  return out;
}

namespace detail {

inline void apply_mask(const SpectralGrid& g, std::span<complex> coeffs) {
  const auto& mask = g.dealias_mask();
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    if (!mask[i]) coeffs[i] = complex{};
}

}  // namespace detail

/// Analysis onto the dealiased mode set. The mean (zero) mode is dropped
/// along with everything outside the 2/3 square.
template <class Kind = VorticityKind>
SpectralScalar<Kind> transform_to_spectral(const PhysicalField& samples) {
  SpectralScalar<Kind> out(samples.grid_ptr());
  samples.grid().forward(samples.data(), out.data());
  detail::apply_mask(samples.grid(), out.coeffs());
  return out;
}

inline VectorFieldHat transform_to_spectral(const PhysicalField& u1, const PhysicalField& u2) {
  require_same_grid(u1.grid_ptr(), u2.grid_ptr());
  VectorFieldHat out(u1.grid_ptr());
  const auto& g = u1.grid();
  g.forward(u1.data(), out.component(0).data());
  g.forward(u2.data(), out.component(1).data());
  detail::apply_mask(g, out.component(0));
  detail::apply_mask(g, out.component(1));
  return out;
}

// ---------------------------------------------------------------------------
// Calculus

/// Leray-Helmholtz projection: u_k - (k.u_k / |k|^2) k on every mode.
inline VectorFieldHat leray_project(const VectorFieldHat& u) {
  VectorFieldHat out(u.grid_ptr());
  auto in1 = u.component(0);
  auto in2 = u.component(1);
  auto o1 = out.component(0);
  auto o2 = out.component(1);
  for (const Mode& m : u.grid().modes()) {
    const double k1 = m.k1, k2 = m.k2;
    const complex a = in1[m.index], b = in2[m.index];
    const complex coef = (k1 * a + k2 * b) / (k1 * k1 + k2 * k2);
    o1[m.index] = a - coef * k1;
    o2[m.index] = b - coef * k2;
  }
  out.mark_divergence_free(true);
  return out;
}

/// Squared V^alpha norm, L^2 sum_{k != 0} |k|^{2 alpha} |u_k|^2 with integer |k|.
inline double v_alpha_norm_sq(const VectorFieldHat& u, double alpha) {
  const auto& g = u.grid();
  auto c1 = u.component(0);
  auto c2 = u.component(1);
  double sum = 0.0;
  for (const Mode& m : g.modes()) {
    const double k_sq = static_cast<double>(m.k1) * m.k1 + static_cast<double>(m.k2) * m.k2;
    const double w = alpha == 0.0 ? 1.0 : std::pow(k_sq, alpha);
    sum += m.weight * w * (std::norm(c1[m.index]) + std::norm(c2[m.index]));
  }
  return g.length() * g.length() * sum;
}

/// u = (-d psi/dy, d psi/dx), so curl u = laplacian psi.
inline VectorFieldHat velocity_from_stream(const StreamField& psi) {
  const auto& g = psi.grid();
  const double s = g.scale();
  VectorFieldHat out(psi.grid_ptr());
  auto o1 = out.component(0);
  auto o2 = out.component(1);
  for (const Mode& m : g.modes()) {
    const complex ip = i_times(s, psi[m.index]);
    o1[m.index] = -static_cast<double>(m.k2) * ip;
    o2[m.index] = static_cast<double>(m.k1) * ip;
  }
  out.mark_divergence_free(true);
  return out;
}

/// Scalar curl d u2/dx - d u1/dy.
inline VorticityField curl_scalar(const VectorFieldHat& u) {
  const auto& g = u.grid();
  const double s = g.scale();
  VorticityField out(u.grid_ptr());
  auto c1 = u.component(0);
  auto c2 = u.component(1);
  for (const Mode& m : g.modes())
    out[m.index] = i_times(s, static_cast<double>(m.k1) * c2[m.index] -
                                  static_cast<double>(m.k2) * c1[m.index]);
  return out;
}

inline VorticityField laplacian(const StreamField& psi) {
  const auto& g = psi.grid();
  const double s2 = g.scale() * g.scale();
  VorticityField out(psi.grid_ptr());
  for (const Mode& m : g.modes())
    out[m.index] = -s2 * static_cast<double>(m.k1 * m.k1 + m.k2 * m.k2) * psi[m.index];
  return out;
}

/// Inverse of the Laplacian on mean-free fields.
inline StreamField inverse_laplacian(const VorticityField& omega) {
  const auto& g = omega.grid();
  if (omega[g.index(0, 0)] != complex{})
    throw std::domain_error("inverse_laplacian requires a zero mean mode");
  const double s2 = g.scale() * g.scale();
  StreamField out(omega.grid_ptr());
  for (const Mode& m : g.modes())
    out[m.index] = omega[m.index] / (-s2 * static_cast<double>(m.k1 * m.k1 + m.k2 * m.k2));
  return out;
}

/// L^2 pairing L^2 sum_k a_k conj(b_k) over retained modes (real fields).
template <class KindA, class KindB>
double inner_product(const SpectralScalar<KindA>& a, const SpectralScalar<KindB>& b) {
  require_same_grid(a.grid_ptr(), b.grid_ptr());
  const auto& g = a.grid();
  double sum = 0.0;
  for (const Mode& m : g.modes()) {
    const complex x = a[m.index], y = b[m.index];
    sum += m.weight * (x.real() * y.real() + x.imag() * y.imag());
  }
  return g.length() * g.length() * sum;
}

template <class Kind>
double l2_norm(const SpectralScalar<Kind>& a) {
  return std::sqrt(inner_product(a, a));
}

}  // namespace nudge2d
