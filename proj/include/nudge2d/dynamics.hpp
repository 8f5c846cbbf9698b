#pragma once

/// Stream-function dynamics: the dealiased Jacobian and the split-Euler
/// stepper that integrates the linear (viscous + forcing) part exactly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nudge2d/observables.hpp"
#include "nudge2d/spectral.hpp"

namespace nudge2d {

/// beta(psi) = J(psi, lap psi) through the Basdevant form
///   ((psi_x)^2 - (psi_y)^2)_xy - (psi_x psi_y)_xx + (psi_x psi_y)_yy,
/// using two inverse and two forward transforms. Holds its own scratch, so
/// one instance must not be shared between threads.
class NonlinearTerm {
 public:
  explicit NonlinearTerm(GridPtr grid)
      : grid_(std::move(grid)),
        hx_(grid_->spectral_size()),
        hy_(grid_->spectral_size()),
        px_(grid_->physical_size()),
        py_(grid_->physical_size()) {}

  void evaluate(const StreamField& psi, VorticityField& out) {
    const auto& g = *grid_;
    require_same_grid(grid_, psi.grid_ptr());
    require_same_grid(grid_, out.grid_ptr());
    const double s = g.scale();

    // the scratch spectra hold the previous product; only the aliased rows and
    // the mean can be nonzero outside the retained set
    const int kmax = g.kmax();
    for (auto* h : {&hx_, &hy_}) {
      (*h)[0] = complex{};
      for (int a = kmax + 1; a < g.n() - kmax; ++a)
        std::fill_n(h->begin() + static_cast<std::ptrdiff_t>(g.index(a, 0)), kmax + 1, complex{});
    }
    for (const Mode& m : g.modes()) {
      const complex ip = i_times(s, psi[m.index]);
      hx_[m.index] = static_cast<double>(m.k1) * ip;
      hy_[m.index] = static_cast<double>(m.k2) * ip;
    }
    g.inverse_inplace(hx_.data(), px_.data());
    g.inverse_inplace(hy_.data(), py_.data());

    for (std::size_t i = 0; i < px_.size(); ++i) {
      const double a = px_[i], b = py_[i];
      px_[i] = a * a - b * b;
      py_[i] = a * b;
    }
    g.forward(px_.data(), hx_.data());
    g.forward(py_.data(), hy_.data());

    const double s2 = s * s;
    for (const Mode& m : g.modes()) {
      const double k1 = m.k1, k2 = m.k2;
      out[m.index] = s2 * (-k1 * k2 * hx_[m.index] + (k1 * k1 - k2 * k2) * hy_[m.index]);
    }
  }

 private:
  GridPtr grid_;
  AlignedVector<complex> hx_, hy_;
  AlignedVector<double> px_, py_;
};

inline VorticityField jacobian_beta(const StreamField& psi) {
  NonlinearTerm term(psi.grid_ptr());
  VorticityField out(psi.grid_ptr());
  term.evaluate(psi, out);
  return out;
}

/// Per-mode factors of the exact linear update
///   psi <- e^{-nu kappa^2 dt} (psi + dt/kappa^2 * tendency) - g/(nu kappa^4) (1 - e^{-nu kappa^2 dt})
/// with kappa the physical wavenumber.
class LinearPropagator {
 public:
  LinearPropagator(GridPtr grid, double nu, double dt, const VorticityField& ghat)
      : grid_(std::move(grid)) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    if (!(nu > 0.0)) throw std::invalid_argument("viscosity must be positive");
    require_same_grid(grid_, ghat.grid_ptr());
    const double s2 = grid_->scale() * grid_->scale();
    const auto& modes = grid_->modes();
    decay_.resize(modes.size());
    gain_.resize(modes.size());
    offset_.resize(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const double kappa2 = s2 * static_cast<double>(modes[i].k1 * modes[i].k1 + modes[i].k2 * modes[i].k2);
      const double x = nu * kappa2 * dt;
      decay_[i] = std::exp(-x);
      gain_[i] = dt / kappa2;
      offset_[i] = ghat[modes[i].index] / (nu * kappa2 * kappa2) * (-std::expm1(-x));
    }
  }

  void advance(StreamField& psi, const VorticityField& tendency) const {
    const auto& modes = grid_->modes();
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::size_t k = modes[i].index;
      psi[k] = decay_[i] * (psi[k] + gain_[i] * tendency[k]) - offset_[i];
    }
  }

  /// Same update with tendency beta + mu * feedback.
  void advance(StreamField& psi, const VorticityField& beta, double mu,
               const VorticityField& feedback) const {
    const auto& modes = grid_->modes();
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::size_t k = modes[i].index;
      psi[k] = decay_[i] * (psi[k] + gain_[i] * (beta[k] + mu * feedback[k])) - offset_[i];
    }
  }

 private:
  GridPtr grid_;
  std::vector<double> decay_, gain_;
  std::vector<complex> offset_;
};

struct StepperState {
  StreamField psi;
  std::optional<StreamField> phi;
  double t = 0.0;
  double dt = 0.0;
  VorticityField ghat;
  double nu = 0.0;
  double mu = 0.0;
  std::optional<ObservationSpec> obs;

  StepperState(StreamField psi0, VorticityField g, double nu_, double dt_)
      : psi(std::move(psi0)), dt(dt_), ghat(std::move(g)), nu(nu_) {}
};

/// Reusable stepper for a reference/assimilated pair. The assimilated
/// update sees the reference only through an Observation.
class Stepper {
 public:
  Stepper(GridPtr grid, double nu, double dt, const VorticityField& ghat, double mu = 0.0,
          std::optional<ObservationSpec> obs = std::nullopt)
      : grid_(grid),
        propagator_(std::make_shared<const LinearPropagator>(grid, nu, dt, ghat)),
        work_(std::make_shared<Workspace>(grid)),
        mu_(mu) {
    if (mu < 0.0) throw std::invalid_argument("nudging coefficient must be >= 0");
    if (obs) observer_.emplace(grid, *obs);
  }

  explicit Stepper(const StepperState& st)
      : Stepper(st.psi.grid_ptr(), st.nu, st.dt, st.ghat, st.mu, st.obs) {}

  Stepper(const Stepper&) = delete;
  Stepper& operator=(const Stepper&) = delete;
  Stepper(Stepper&&) = default;
  Stepper& operator=(Stepper&&) = default;

  /// Same dynamics with another mu and observation. Siblings share scratch
  /// space, so they must all be driven from one thread.
  Stepper sibling(double mu, std::optional<ObservationSpec> obs) const {
    if (mu < 0.0) throw std::invalid_argument("nudging coefficient must be >= 0");
    Stepper out(grid_, propagator_, work_, mu);
    if (obs) out.observer_.emplace(grid_, *obs);
    return out;
  }

  double mu() const { return mu_; }
  const std::optional<Observer>& observer() const { return observer_; }

  void step_reference(StreamField& psi) {
    work_->nonlinear.evaluate(psi, work_->beta);
    propagator_->advance(psi, work_->beta);
  }

  Observation observe(const StreamField& psi) const { return require_observer().observe(psi); }

  /// Advances phi given the reference's observation at the start of the step.
  void step_assimilated(StreamField& phi, const Observation& reference) {
    const Observer& obs = require_observer();
    Workspace& w = *work_;
    obs.feedback_into(obs.observe(phi), reference, w.feedback, w.scratch);
    w.nonlinear.evaluate(phi, w.beta);
    propagator_->advance(phi, w.beta, mu_, w.feedback);
  }

  /// Coupled step: observe psi at time t, then advance psi and phi.
  void step(StepperState& st) {
    if (!st.phi) {
      step_reference(st.psi);
    } else {
      const Observation ref = observe(st.psi);
      step_reference(st.psi);
      step_assimilated(*st.phi, ref);
    }
    st.t += st.dt;
  }

 private:
  struct Workspace {
    explicit Workspace(const GridPtr& g) : nonlinear(g), beta(g), feedback(g), scratch(g) {}
    NonlinearTerm nonlinear;
    VorticityField beta;
    VorticityField feedback;
    VectorFieldHat scratch;
  };

  Stepper(GridPtr grid, std::shared_ptr<const LinearPropagator> prop, std::shared_ptr<Workspace> work, double mu)
      : grid_(std::move(grid)), propagator_(std::move(prop)), work_(std::move(work)), mu_(mu) {}

  const Observer& require_observer() const {
    if (!observer_) throw std::logic_error("assimilated step requires an observation spec");
    return *observer_;
  }

  GridPtr grid_;
  std::shared_ptr<const LinearPropagator> propagator_;
  std::shared_ptr<Workspace> work_;
  double mu_;
  std::optional<Observer> observer_;
};

inline StepperState step_reference(StepperState st) {
  Stepper stepper(st.psi.grid_ptr(), st.nu, st.dt, st.ghat);
  stepper.step_reference(st.psi);
  st.t += st.dt;
  return st;
}

inline StepperState step_assimilated(StepperState st) {
  if (!st.phi) throw std::invalid_argument("assimilated step requires phi");
  if (!st.obs) throw std::invalid_argument("assimilated step requires an observation spec");
  Stepper stepper(st);
  stepper.step(st);
  return st;
}

/// (n dt / 2L) max_x (|u1| + |u2|) over the collocation grid.
inline double cfl_number(const StreamField& psi, double dt, int n) {
  const auto u = transform_to_physical(velocity_from_stream(psi));
  double peak = 0.0;
  const auto a = u[0].values();
  const auto b = u[1].values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double speed = std::abs(a[i]) + std::abs(b[i]);
    if (std::isnan(speed)) return speed;
    peak = std::max(peak, speed);
  }
  return n * dt / (2.0 * psi.grid().length()) * peak;
}

}  // namespace nudge2d
