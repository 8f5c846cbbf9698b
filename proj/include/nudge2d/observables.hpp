#pragma once

/// Coarse nodal observations of the velocity field and the interpolant
/// operators that turn them back into spectral fields.
///
/// The domain is tiled by K x K squares of side h = L/K. Node (a, b) sits at
/// the center ((a + 1/2) h, (b + 1/2) h); samples are stored with a running
/// fastest, i.e. at offset b*K + a.

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nudge2d/spectral.hpp"

namespace nudge2d {

enum class ObservationKind { nodal, nodal_smoothed, modal };

inline std::string to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::nodal: return "nodal";
    case ObservationKind::nodal_smoothed: return "nodal_smoothed";
    case ObservationKind::modal: return "modal";
  }
  return "unknown";
}

inline ObservationKind parse_observation_kind(const std::string& s) {
  if (s == "nodal") return ObservationKind::nodal;
  if (s == "nodal_smoothed" || s == "smoothed") return ObservationKind::nodal_smoothed;
  if (s == "modal") return ObservationKind::modal;
  throw std::invalid_argument("unknown observation kind '" + s + "'");
}

struct ObservationSpec {
  ObservationKind kind = ObservationKind::nodal;
  int K = 1;          ///< nodes per dimension
  double eta = 0.0;   ///< mollifier width in units of h (nodal_smoothed)
  int modal_radius = 0;

  /// Nodal kinds with eta == 0 reduce to the plain interpolant.
  static ObservationSpec nodal_with_eta(int K, double eta) {
    return {eta > 0.0 ? ObservationKind::nodal_smoothed : ObservationKind::nodal, K, eta, 0};
  }
};

struct Point {
  double x;
  double y;
};

inline std::vector<Point> node_centers(int K, double length) {
  if (K < 1) throw std::invalid_argument("node count per dimension must be >= 1");
  const double h = length / K;
  std::vector<Point> centers;
  centers.reserve(static_cast<std::size_t>(K) * K);
  for (int b = 0; b < K; ++b)
    for (int a = 0; a < K; ++a) centers.push_back({(a + 0.5) * h, (b + 0.5) * h});
  return centers;
}

/// Velocity pairs at the K^2 node centers.
struct NodeSamples {
  int K = 0;
  std::vector<std::array<double, 2>> values;

  NodeSamples() = default;
  explicit NodeSamples(int k) : K(k), values(static_cast<std::size_t>(k) * k, {0.0, 0.0}) {}

  std::array<double, 2>& at(int a, int b) { return values[static_cast<std::size_t>(b) * K + a]; }
  const std::array<double, 2>& at(int a, int b) const {
    return values[static_cast<std::size_t>(b) * K + a];
  }

  NodeSamples& operator-=(const NodeSamples& o) {
    if (o.K != K) throw std::invalid_argument("node sample sets differ in K");
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i][0] -= o.values[i][0];
      values[i][1] -= o.values[i][1];
    }
    return *this;
  }
  friend NodeSamples operator-(NodeSamples a, const NodeSamples& b) { return a -= b; }
  bool operator==(const NodeSamples&) const = default;
};

namespace detail {

/// e^{i pi m / K} for integer m, reduced exactly mod 2K.
inline complex half_root(long long m, int K) {
  const long long r = ((m % (2 * K)) + 2 * K) % (2 * K);
  const double phase = std::numbers::pi * static_cast<double>(r) / K;
  return {std::cos(phase), std::sin(phase)};
}

inline complex cmul(complex a, complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace detail

/// Exact evaluation of u = (-psi_y, psi_x) at node centers.
///
/// At x_p = (p + 1/2) h the phase of wavenumber k is pi k (2p + 1) / K, so
/// e^{i k x_p} = e^{i pi k/K} e^{2 pi i k p/K}: folding wavenumbers into
/// residues mod K reduces each direction to a K-point DFT.
class NodeSampler {
 public:
  NodeSampler(GridPtr grid, int K) : grid_(std::move(grid)), K_(K) {
    if (K < 1) throw std::invalid_argument("node count per dimension must be >= 1");
    if (K > grid_->kmax())
      throw std::invalid_argument("K=" + std::to_string(K) + " exceeds grid kmax=" +
                                  std::to_string(grid_->kmax()));
    const int kmax = grid_->kmax();
    shift_.resize(2 * kmax + 1);
    residue_.resize(2 * kmax + 1);
    for (int k = -kmax; k <= kmax; ++k) {
      shift_[k + kmax] = detail::half_root(k, K);
      residue_[k + kmax] = ((k % K) + K) % K;
    }
    dft_.resize(static_cast<std::size_t>(K) * K);
    for (int p = 0; p < K; ++p)
      for (int m = 0; m < K; ++m) dft_[p * K + m] = detail::half_root(2LL * m * p, K);
  }

  int K() const { return K_; }

  NodeSamples sample(const StreamField& psi) const {
    require_same_grid(grid_, psi.grid_ptr());
    const auto& g = *grid_;
    const int K = K_;
    const int kmax = g.kmax();
    const int cols = kmax + 1;
    const double s = g.scale();

    // F(m, k2) = sum_{k1 = m mod K} psi(k1,k2) e^{i pi k1/K}, G the same weighted by k1
    std::vector<complex> F(static_cast<std::size_t>(K) * cols), G(F.size());
    for (int k1 = -kmax; k1 <= kmax; ++k1) {
      const complex* row = psi.data() + g.index(g.row_of_k1(k1), 0);
      const complex t = shift_[k1 + kmax];
      const double kf = k1;
      complex* f = &F[residue_[k1 + kmax] * cols];
      complex* gk = &G[residue_[k1 + kmax] * cols];
      for (int k2 = 0; k2 <= kmax; ++k2) {
        const complex z = detail::cmul(row[k2], t);
        f[k2] += z;
        gk[k2] += kf * z;
      }
    }
    // A(p, k2) = sum_m e^{2 pi i m p/K} F(m, k2), likewise B from G; then fold k2
    // with weight w(k2) e^{i pi k2/K} into H1 (times k2) and H2.
    std::vector<complex> A(cols), B(cols);
    std::vector<complex> H1(static_cast<std::size_t>(K) * K), H2(H1.size());
    for (int p = 0; p < K; ++p) {
      std::fill(A.begin(), A.end(), complex{});
      std::fill(B.begin(), B.end(), complex{});
      for (int m = 0; m < K; ++m) {
        const complex t = dft_[p * K + m];
        const complex* f = &F[m * cols];
        const complex* gk = &G[m * cols];
        for (int k2 = 0; k2 <= kmax; ++k2) {
          A[k2] += detail::cmul(f[k2], t);
          B[k2] += detail::cmul(gk[k2], t);
        }
      }
      for (int k2 = 0; k2 <= kmax; ++k2) {
        const double w = k2 == 0 ? 1.0 : 2.0;
        const complex t = shift_[k2 + kmax];
        const int r = residue_[k2 + kmax];
        H1[p * K + r] += (w * k2) * detail::cmul(A[k2], t);
        H2[p * K + r] += w * detail::cmul(B[k2], t);
      }
    }
    NodeSamples out(K);
    for (int p = 0; p < K; ++p)
      for (int q = 0; q < K; ++q) {
        double u1 = 0.0, u2 = 0.0;
        for (int m = 0; m < K; ++m) {
          const complex t = dft_[q * K + m];
          const complex h1 = H1[p * K + m], h2 = H2[p * K + m];
          u1 += h1.real() * t.imag() + h1.imag() * t.real();
          u2 += h2.real() * t.imag() + h2.imag() * t.real();
        }
        // u1 = Re(-i s sum k2 ...) = s Im(.), u2 = Re(i s sum k1 ...) = -s Im(.)
        out.at(p, q) = {s * u1, -s * u2};
      }
    return out;
  }

 private:
  GridPtr grid_;
  int K_;
  std::vector<complex> shift_;  // e^{i pi k/K}, k = -kmax..kmax
  std::vector<int> residue_;    // k mod K
  std::vector<complex> dft_;    // e^{2 pi i m p/K}
};

inline NodeSamples sample_velocity(const StreamField& psi, int K) {
  return NodeSampler(psi.grid_ptr(), K).sample(psi);
}

/// Piecewise-constant field sum_i u(x_i) chi_{Q_i} on the collocation grid.
/// Grid point x_j = j L/n belongs to square floor(j K / n).
inline std::array<PhysicalField, 2> rasterize(const NodeSamples& s, const GridPtr& grid) {
  const int n = grid->n();
  const int K = s.K;
  if (K < 1 || s.values.size() != static_cast<std::size_t>(K) * K)
    throw std::invalid_argument("malformed node samples");
  std::vector<int> square(n);
  for (int i = 0; i < n; ++i) square[i] = static_cast<int>((static_cast<long long>(i) * K) / n);
  std::array<PhysicalField, 2> out{PhysicalField(grid), PhysicalField(grid)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& v = s.at(square[i], square[j]);
      out[0](i, j) = v[0];
      out[1](i, j) = v[1];
    }
  return out;
}

/// One-dimensional bump exp(-1/(1 - xi^2)) on |xi| < 1.
inline double bump(double xi) {
  const double r = 1.0 - xi * xi;
  return r > 0.0 ? std::exp(-1.0 / r) : 0.0;
}

/// rho_eps sampled on the collocation grid (periodized), scaled to unit
/// discrete mass: sum rho(x_ij) (L/n)^2 = 1.
inline PhysicalField sampled_mollifier(const GridPtr& grid, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("mollifier width must be positive");
  const int n = grid->n();
  const double L = grid->length();
  const double dx = grid->spacing();
  const int images = static_cast<int>(std::ceil(eps / L)) + 1;
  std::vector<double> profile(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double d = std::min(i, n - i) * dx;
    double acc = 0.0;
    for (int m = -images; m <= images; ++m) acc += bump((d + m * L) / eps);
    profile[i] = acc;
  }
  double mass = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mass += profile[i] * profile[j];
  mass *= dx * dx;
  PhysicalField rho(grid);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rho(i, j) = profile[i] * profile[j] / mass;
  return rho;
}

/// Spectral multiplier of convolution with the sampled mollifier,
/// L^2 rho_hat_k (equals 1 at k = 0).
inline std::vector<double> mollifier_multiplier(const GridPtr& grid, double eps) {
  const PhysicalField rho = sampled_mollifier(grid, eps);
  AlignedVector<complex> hat(grid->spectral_size());
  grid->forward(rho.data(), hat.data());
  const double area = grid->length() * grid->length();
  std::vector<double> mult(hat.size());
  for (std::size_t i = 0; i < hat.size(); ++i) mult[i] = area * hat[i].real();
  return mult;
}

namespace detail {

/// Discrete transform of a rasterized node field restricted to the retained
/// modes. The raster is constant on blocks, so its DFT factors into per-square
/// geometric sums S_a(k) = sum_{i in square a} e^{-2 pi i k i/n}. When K
/// divides n the squares are translates, S_a(k) = e^{-2 pi i k a/K} S_0(k),
/// and the whole transform is S_0(k1) S_0(k2) times a K x K DFT of the samples.
/// Agrees with rasterize + forward transform up to rounding.
class RasterTransform {
 public:
  RasterTransform(const GridPtr& grid, int K)
      : grid_(grid), K_(K), kmax_(grid->kmax()), uniform_(grid->n() % K == 0) {
    const int n = grid->n();
    width_ = 2 * kmax_ + 1;
    std::vector<complex> roots(n);
    for (int m = 0; m < n; ++m) {
      const double phase = -2.0 * std::numbers::pi * m / n;
      roots[m] = complex(std::cos(phase), std::sin(phase));
    }
    const int blocks = uniform_ ? 1 : K;
    sums_.assign(static_cast<std::size_t>(blocks) * width_, complex{});
    for (int i = 0; i < n; ++i) {
      const int a = static_cast<int>((static_cast<long long>(i) * K) / n);
      if (a >= blocks) break;
      for (int k = -kmax_; k <= kmax_; ++k) {
        const int m = ((k * i) % n + n) % n;
        sums_[a * width_ + k + kmax_] += roots[m];
      }
    }
    norm_ = 1.0 / (static_cast<double>(n) * n);
    if (uniform_) {
      dft_.resize(static_cast<std::size_t>(K) * K);
      for (int a = 0; a < K; ++a)
        for (int m = 0; m < K; ++m) dft_[a * K + m] = detail::half_root(-2LL * m * a, K);
      for (const Mode& m : grid->modes()) {
        const int r1 = ((m.k1 % K) + K) % K;
        slot_.push_back(r1 * K + m.k2 % K);
        factor_.push_back(norm_ * detail::cmul(sums_[m.k1 + kmax_], sums_[m.k2 + kmax_]));
      }
    }
  }

  void apply_into(const NodeSamples& s, VectorFieldHat& out) const {
    if (s.K != K_) throw std::invalid_argument("node samples do not match the transform's K");
    require_same_grid(grid_, out.grid_ptr());
    for (int c = 0; c < 2; ++c) std::fill(out.component(c).begin(), out.component(c).end(), complex{});
    if (uniform_)
      apply_uniform(s, out);
    else
      apply_general(s, out);
    out.mark_divergence_free(false);
  }

  VectorFieldHat apply(const NodeSamples& s) const {
    VectorFieldHat out(grid_);
    apply_into(s, out);
    return out;
  }

 private:
  void apply_uniform(const NodeSamples& s, VectorFieldHat& out) const {
    const auto& g = *grid_;
    const int K = K_;
    // V(m1, m2) = sum_{a,b} v(a,b) e^{-2 pi i (m1 a + m2 b)/K}
    std::vector<complex> row_dft(static_cast<std::size_t>(K) * K);
    std::vector<complex> V(static_cast<std::size_t>(K) * K);
    for (int c = 0; c < 2; ++c) {
      std::fill(row_dft.begin(), row_dft.end(), complex{});
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
          const double v = s.at(a, b)[c];
          for (int m2 = 0; m2 < K; ++m2) row_dft[a * K + m2] += v * dft_[b * K + m2];
        }
      std::fill(V.begin(), V.end(), complex{});
      for (int m1 = 0; m1 < K; ++m1)
        for (int a = 0; a < K; ++a) {
          const complex t = dft_[a * K + m1];
          for (int m2 = 0; m2 < K; ++m2) V[m1 * K + m2] += detail::cmul(t, row_dft[a * K + m2]);
        }
      auto comp = out.component(c);
      const auto& modes = g.modes();
      for (std::size_t i = 0; i < modes.size(); ++i)
        comp[modes[i].index] = detail::cmul(factor_[i], V[slot_[i]]);
    }
  }

  void apply_general(const NodeSamples& s, VectorFieldHat& out) const {
    const auto& g = *grid_;
    const int cols = kmax_ + 1;
    std::vector<complex> W(static_cast<std::size_t>(K_) * cols);
    for (int c = 0; c < 2; ++c) {
      // W(a, k2) = sum_b v(a, b) S_b(k2)
      std::fill(W.begin(), W.end(), complex{});
      for (int a = 0; a < K_; ++a)
        for (int b = 0; b < K_; ++b) {
          const double v = s.at(a, b)[c];
          const complex* sy = &sums_[b * width_ + kmax_];
          complex* w = &W[a * cols];
          for (int k2 = 0; k2 <= kmax_; ++k2) w[k2] += v * sy[k2];
        }
      auto comp = out.component(c);
      for (int k1 = -kmax_; k1 <= kmax_; ++k1) {
        complex* row = comp.data() + g.index(g.row_of_k1(k1), 0);
        for (int a = 0; a < K_; ++a) {
          const complex t = sums_[a * width_ + k1 + kmax_];
          const complex* w = &W[a * cols];
          for (int k2 = 0; k2 <= kmax_; ++k2) row[k2] += detail::cmul(t, w[k2]);
        }
        for (int k2 = 0; k2 <= kmax_; ++k2) row[k2] *= norm_;
      }
      comp[g.index(0, 0)] = complex{};
    }
  }

  GridPtr grid_;
  int K_;
  int kmax_;
  bool uniform_;
  int width_ = 0;
  double norm_ = 0.0;
  std::vector<complex> sums_;
  std::vector<complex> dft_;  // e^{-2 pi i m a/K}
  std::vector<int> slot_;        // per retained mode, (k1 mod K) * K + (k2 mod K)
  std::vector<complex> factor_;  // per retained mode, S_0(k1) S_0(k2) / n^2
};

inline VectorFieldHat raster_to_spectral(const NodeSamples& s, const GridPtr& grid) {
  const auto raster = rasterize(s, grid);
  // the dealias mask also drops the mean mode, which is the average subtraction
  return transform_to_spectral(raster[0], raster[1]);
}

}  // namespace detail

/// Mean-removed piecewise-constant interpolant I_h.
inline VectorFieldHat interp_nodal(const NodeSamples& s, const GridPtr& grid) {
  return detail::raster_to_spectral(s, grid);
}

/// Mean-removed interpolant with each square indicator mollified at width
/// eps = eta h.
inline VectorFieldHat interp_smoothed(const NodeSamples& s, const GridPtr& grid, double eta,
                                      const std::vector<double>* multiplier = nullptr) {
  if (!(eta > 0.0)) throw std::invalid_argument("smoothed interpolant needs eta > 0");
  std::vector<double> local;
  if (multiplier == nullptr) {
    local = mollifier_multiplier(grid, eta * grid->length() / s.K);
    multiplier = &local;
  }
  VectorFieldHat out = detail::raster_to_spectral(s, grid);
  for (int c = 0; c < 2; ++c) {
    auto comp = out.component(c);
    for (const Mode& m : grid->modes()) comp[m.index] *= (*multiplier)[m.index];
  }
  return out;
}

/// Zeroes every mode with |k| > radius.
inline VectorFieldHat modal_project(const VectorFieldHat& u, double radius) {
  VectorFieldHat out = u;
  const double r2 = radius * radius;
  for (int c = 0; c < 2; ++c) {
    auto comp = out.component(c);
    for (const Mode& m : u.grid().modes())
      if (static_cast<double>(m.k1) * m.k1 + static_cast<double>(m.k2) * m.k2 > r2)
        comp[m.index] = complex{};
  }
  out.mark_divergence_free(u.divergence_free());
  return out;
}

/// What the assimilating model is allowed to see of a field: node samples
/// for the nodal kinds, the low Fourier modes of the velocity for `modal`.
using Observation = std::variant<NodeSamples, VectorFieldHat>;

/// Observation operator bound to one grid and spec. The precomputed kernels
/// (node twiddles, mollifier multiplier) are immutable and shared between copies.
class Observer {
 public:
  Observer(GridPtr grid, ObservationSpec spec) : grid_(std::move(grid)), spec_(spec) {
    auto kernel = std::make_shared<Kernel>();
    switch (spec_.kind) {
      case ObservationKind::nodal_smoothed:
        if (!(spec_.eta > 0.0)) throw std::invalid_argument("nodal_smoothed requires eta > 0");
        kernel->multiplier = mollifier_multiplier(grid_, spec_.eta * grid_->length() / spec_.K);
        [[fallthrough]];
      case ObservationKind::nodal:
        kernel->sampler = std::make_shared<const NodeSampler>(grid_, spec_.K);
        kernel->raster = std::make_shared<const detail::RasterTransform>(grid_, spec_.K);
        break;
      case ObservationKind::modal:
        if (spec_.modal_radius < 1 || spec_.modal_radius > grid_->kmax())
          throw std::invalid_argument("modal radius must lie in [1, kmax]");
        break;
    }
    kernel_ = std::move(kernel);
  }

  const ObservationSpec& spec() const { return spec_; }
  const GridPtr& grid_ptr() const { return grid_; }

  Observation observe(const StreamField& psi) const {
    if (spec_.kind == ObservationKind::modal)
      return modal_project(velocity_from_stream(psi), spec_.modal_radius);
    return kernel_->sampler->sample(psi);
  }

  /// I_h or the smoothed variant, per spec.
  void interpolate_into(const NodeSamples& s, VectorFieldHat& out) const {
    kernel_->raster->apply_into(s, out);
    if (spec_.kind == ObservationKind::nodal_smoothed) {
      for (int c = 0; c < 2; ++c) {
        auto comp = out.component(c);
        for (const Mode& m : grid_->modes()) comp[m.index] *= kernel_->multiplier[m.index];
      }
    }
  }

  VectorFieldHat interpolate(const NodeSamples& s) const {
    VectorFieldHat out(grid_);
    interpolate_into(s, out);
    return out;
  }

  /// R_h(model - reference) = curl P_sigma I_h(model - reference), written
  /// into `out`; `scratch` receives the interpolated field.
  void feedback_into(const Observation& model, const Observation& reference, VorticityField& out,
                     VectorFieldHat& scratch) const {
    if (spec_.kind == ObservationKind::modal) {
      scratch = std::get<VectorFieldHat>(model) - std::get<VectorFieldHat>(reference);
    } else {
      interpolate_into(std::get<NodeSamples>(model) - std::get<NodeSamples>(reference), scratch);
    }
    project_curl(scratch, out);
  }

  VorticityField feedback(const NodeSamples& diff) const {
    VectorFieldHat w(grid_);
    interpolate_into(diff, w);
    VorticityField out(grid_);
    project_curl(w, out);
    return out;
  }

  VorticityField feedback(const Observation& model, const Observation& reference) const {
    VectorFieldHat scratch(grid_);
    VorticityField out(grid_);
    feedback_into(model, reference, out, scratch);
    return out;
  }

 private:
  struct Kernel {
    std::shared_ptr<const NodeSampler> sampler;
    std::shared_ptr<const detail::RasterTransform> raster;
    std::vector<double> multiplier;
  };

  // leray_project followed by curl_scalar, fused per mode
  void project_curl(const VectorFieldHat& w, VorticityField& out) const {
    const double sc = grid_->scale();
    auto w1 = w.component(0);
    auto w2 = w.component(1);
    for (const Mode& m : grid_->modes()) {
      const double k1 = m.k1, k2 = m.k2;
      const complex a = w1[m.index], b = w2[m.index];
      const complex coef = (k1 * a + k2 * b) / (k1 * k1 + k2 * k2);
      const complex p1 = a - coef * k1;
      const complex p2 = b - coef * k2;
      out[m.index] = i_times(sc, k1 * p2 - k2 * p1);
    }
  }

  GridPtr grid_;
  ObservationSpec spec_;
  std::shared_ptr<const Kernel> kernel_;
};

/// R_h(delta) = curl P_sigma I_h(u(delta)) for the nodal kinds.
inline VorticityField feedback_Rh(const StreamField& delta, const ObservationSpec& spec,
                                  const GridPtr& grid) {
  if (spec.kind == ObservationKind::modal)
    throw std::invalid_argument("feedback_Rh handles nodal kinds only; use modal_project");
  require_same_grid(grid, delta.grid_ptr());
  const Observer obs(grid, spec);
  return obs.feedback(std::get<NodeSamples>(obs.observe(delta)));
}

}  // namespace nudge2d
