#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "test_util.hpp"

using namespace nudge2d;
using testutil::random_stream;

constexpr double pi = std::numbers::pi;

namespace {

// J(psi, lap psi) = psi_x (lap psi)_y - psi_y (lap psi)_x by explicit
// convolution over all retained wavevector pairs, projected onto the retained set.
VorticityField convolution_beta(const StreamField& psi) {
  const auto& g = psi.grid();
  const int kmax = g.kmax();
  const double s = g.scale();
  std::vector<std::array<int, 2>> ks;
  for (int k1 = -kmax; k1 <= kmax; ++k1)
    for (int k2 = -kmax; k2 <= kmax; ++k2)
      if ((k1 != 0 || k2 != 0) && psi.at(k1, k2) != complex{}) ks.push_back({k1, k2});
  std::map<std::pair<int, int>, complex> acc;
  for (const auto& p : ks)
    for (const auto& q : ks) {
      const int r1 = p[0] + q[0], r2 = p[1] + q[1];
      if (std::max(std::abs(r1), std::abs(r2)) > kmax || (r1 == 0 && r2 == 0)) continue;
      const complex a = psi.at(p[0], p[1]);
      const complex lap_q = -s * s * static_cast<double>(q[0] * q[0] + q[1] * q[1]) * psi.at(q[0], q[1]);
      // (i s p1 a)(i s q2 lap_q) - (i s p2 a)(i s q1 lap_q)
      acc[{r1, r2}] += -s * s * static_cast<double>(p[0] * q[1] - p[1] * q[0]) * a * lap_q;
    }
  VorticityField out(psi.grid_ptr());
  for (const auto& [k, v] : acc)
    if (k.second > 0 || (k.second == 0 && k.first > 0)) out.set(k.first, k.second, v);
  return out;
}

StreamField sparse_random(const GridPtr& g, std::mt19937_64& rng, int radius) {
  std::normal_distribution<double> normal;
  StreamField psi(g);
  for (const auto& m : g->modes())
    if (m.k1 * m.k1 + m.k2 * m.k2 <= radius * radius) psi.set(m.k1, m.k2, complex(normal(rng), normal(rng)));
  return psi;
}

// The displayed update evaluated mode by mode.
StreamField formula_step(const StreamField& psi, const VorticityField& tendency, const VorticityField& ghat,
                         double nu, double dt) {
  StreamField out(psi.grid_ptr());
  const double s2 = psi.grid().scale() * psi.grid().scale();
  for (const auto& m : psi.grid().modes()) {
    const double kappa2 = s2 * (m.k1 * m.k1 + m.k2 * m.k2);
    const double e = std::exp(-nu * kappa2 * dt);
    out[m.index] = e * (psi[m.index] + dt / kappa2 * tendency[m.index]) -
                   ghat[m.index] / (nu * kappa2 * kappa2) * (1.0 - e);
  }
  return out;
}

}  // namespace

TEST(Jacobian, CosineOracle) {
  auto g = make_grid(64, 2 * pi);
  StreamField psi(g);
  psi.set(1, 0, 0.5);
  psi.set(0, 2, 0.5);
  const auto beta = jacobian_beta(psi);
  // -6 sin x sin 2y = 3 cos(x + 2y) - 3 cos(x - 2y)
  VorticityField expect(g);
  expect.set(1, 2, 1.5);
  expect.set(1, -2, -1.5);
  EXPECT_LE((beta - expect).max_abs(), 1e-12);
}

TEST(Jacobian, SingleShellVanishes) {
  auto g = make_grid(64, 2 * pi);
  std::uniform_real_distribution<double> phase(0.0, 2 * pi);
  std::mt19937_64 rng(1);
  for (int r2 : {1, 2, 4, 5, 8, 9, 25, 50, 65, 100, 200, 400}) {
    for (int trial = 0; trial < 5; ++trial) {
      StreamField psi(g);
      double amplitude = 0.0;
      for (const auto& m : g->modes())
        if (m.k1 * m.k1 + m.k2 * m.k2 == r2) {
          psi.set(m.k1, m.k2, std::polar(0.5, phase(rng)));  // unit-amplitude wave
          amplitude += 1.0;
        }
      const double beta = jacobian_beta(psi).max_abs();
      if (r2 <= 10) {
        EXPECT_LE(beta, 1e-13) << r2;
      } else {
        // roundoff of the quadratic products grows like |k|^4 times the squared amplitude
        EXPECT_LE(beta, 1e-15 * r2 * r2 * amplitude * amplitude) << r2;
      }
    }
  }
}

TEST(Jacobian, MatchesExplicitConvolution) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(2);
  const StreamField psi = sparse_random(g, rng, 6);
  const auto fast = jacobian_beta(psi);
  const auto slow = convolution_beta(psi);
  EXPECT_LE((fast - slow).max_abs(), 1e-12 * slow.max_abs());
}

TEST(Jacobian, ConservesEnergyAndEnstrophy) {
  auto g = make_grid(64, 2 * pi);
  std::mt19937_64 rng(3);
  NonlinearTerm term(g);
  VorticityField beta(g);
  for (int trial = 0; trial < 100; ++trial) {
    const StreamField psi = random_stream(g, rng, 1.5);
    term.evaluate(psi, beta);
    const auto lap = laplacian(psi);
    EXPECT_LE(std::abs(inner_product(beta, psi)), 1e-12 * l2_norm(beta) * l2_norm(psi));
    EXPECT_LE(std::abs(inner_product(beta, lap)), 1e-12 * l2_norm(beta) * l2_norm(lap));
  }
}

TEST(Stepper, ExactLinearDecay) {
  auto g = make_grid(64, 2 * pi);
  const double nu = 1e-3, dt = 1e-2;
  StreamField psi(g);
  psi.set(3, 0, complex(0.4, -0.2));
  const complex initial = psi.at(3, 0);
  Stepper stepper(g, nu, dt, VorticityField(g));
  for (int i = 0; i < 10000; ++i) stepper.step_reference(psi);
  const complex expect = std::exp(-nu * 9.0 * dt * 10000) * initial;
  EXPECT_LE(std::abs(psi.at(3, 0) - expect), 1e-12 * std::abs(expect));
  psi.set(3, 0, 0.0);
  EXPECT_EQ(psi.max_abs(), 0.0);
}

TEST(Stepper, ForcedShellFixedPoint) {
  auto g = make_grid(32, 2 * pi);
  const double nu = 0.01, dt = 0.05;
  VorticityField ghat(g);
  ghat.set(3, 4, complex(0.2, 0.1));
  ghat.set(5, 0, complex(-0.3, 0.0));
  StreamField psi(g);
  const double kappa4 = 25.0 * 25.0;
  for (const auto& m : g->modes()) psi[m.index] = -ghat[m.index] / (nu * kappa4);
  const StreamField start = psi;
  Stepper stepper(g, nu, dt, ghat);
  for (int i = 0; i < 100; ++i) stepper.step_reference(psi);
  EXPECT_LE((psi - start).max_abs(), 1e-15 * start.max_abs());
}

TEST(Stepper, OneStepMatchesFormula) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(4);
  const StreamField psi0 = sparse_random(g, rng, 7);
  VorticityField ghat(g);
  ghat.set(2, 3, complex(0.5, -0.25));
  const double nu = 2e-3, dt = 1.0 / 256;
  StreamField psi = psi0;
  Stepper(g, nu, dt, ghat).step_reference(psi);
  const StreamField expect = formula_step(psi0, jacobian_beta(psi0), ghat, nu, dt);
  EXPECT_LE((psi - expect).max_abs(), 1e-15 * psi0.max_abs());
  const StreamField via_convolution = formula_step(psi0, convolution_beta(psi0), ghat, nu, dt);
  EXPECT_LE((psi - via_convolution).max_abs(), 1e-14 * psi0.max_abs());
}

TEST(Stepper, AssimilatedStepMatchesFormula) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(5);
  const StreamField psi0 = sparse_random(g, rng, 6);
  const StreamField phi0 = sparse_random(g, rng, 6);
  VorticityField ghat(g);
  ghat.set(1, 3, complex(0.1, 0.2));
  const double nu = 1e-3, dt = 1.0 / 512, mu = 3.0;
  const int K = 5;
  const ObservationSpec spec = ObservationSpec::nodal_with_eta(K, 0.0);
  Stepper stepper(g, nu, dt, ghat, mu, spec);

  StepperState st(psi0, ghat, nu, dt);
  st.phi = phi0;
  st.mu = mu;
  st.obs = spec;
  const StepperState next = step_assimilated(st);

  // R_h(phi - psi) through separately computed stages
  NodeSamples diff(K);
  const auto centers = node_centers(K, g->length());
  const auto dv = velocity_from_stream(phi0 - psi0);
  for (int i = 0; i < K * K; ++i)
    for (int c = 0; c < 2; ++c)
      diff.values[i][c] = testutil::direct_sum(*g, [&](int k1, int k2) { return dv.at(c, k1, k2); },
                                               centers[i].x, centers[i].y)
                              .real();
  const auto rh = curl_scalar(leray_project(interp_nodal(diff, g)));
  VorticityField tendency = convolution_beta(phi0);
  for (const auto& m : g->modes()) tendency[m.index] += mu * rh[m.index];
  const StreamField expect_phi = formula_step(phi0, tendency, ghat, nu, dt);
  const StreamField expect_psi = formula_step(psi0, convolution_beta(psi0), ghat, nu, dt);
  EXPECT_LE((*next.phi - expect_phi).max_abs(), 1e-15 * phi0.max_abs());
  EXPECT_LE((next.psi - expect_psi).max_abs(), 1e-15 * psi0.max_abs());
  EXPECT_DOUBLE_EQ(next.t, dt);
}

TEST(Stepper, ZeroMuReducesToReference) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(6);
  const StreamField psi0 = random_stream(g, rng), phi0 = random_stream(g, rng);
  VorticityField ghat(g);
  ghat.set(2, 2, 0.3);
  Stepper coupled(g, 1e-3, 1e-3, ghat, 0.0, ObservationSpec::nodal_with_eta(4, 0.7));
  Stepper plain(g, 1e-3, 1e-3, ghat);
  StreamField phi = phi0, alone = phi0;
  for (int i = 0; i < 20; ++i) {
    coupled.step_assimilated(phi, coupled.observe(psi0));
    plain.step_reference(alone);
  }
  EXPECT_EQ((phi - alone).max_abs(), 0.0);
}

TEST(Stepper, SynchronizedPairStaysIdentical) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(7);
  VorticityField ghat(g);
  ghat.set(3, 1, complex(0.5, 0.5));
  StepperState st(random_stream(g, rng), ghat, 1e-3, 1.0 / 512);
  st.phi = st.psi;
  st.mu = 2.0;
  st.obs = ObservationSpec::nodal_with_eta(6, 0.7);
  Stepper stepper(st);
  for (int i = 0; i < 500; ++i) stepper.step(st);
  EXPECT_EQ(error_V(st.psi, *st.phi), 0.0);
  EXPECT_NEAR(st.t, 500.0 / 512, 1e-12);
}

TEST(Stepper, DeterministicAndMasked) {
  auto g = make_grid(32, 2 * pi);
  std::mt19937_64 rng(8);
  const StreamField psi0 = random_stream(g, rng);
  VorticityField ghat(g);
  ghat.set(1, 2, 0.1);
  StreamField a = psi0, b = psi0;
  Stepper s1(g, 1e-3, 1e-3, ghat), s2(g, 1e-3, 1e-3, ghat);
  for (int i = 0; i < 50; ++i) {
    s1.step_reference(a);
    s2.step_reference(b);
  }
  EXPECT_EQ((a - b).max_abs(), 0.0);
  const auto& mask = g->dealias_mask();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) {
      EXPECT_EQ(a[i], complex{});
    }
}

TEST(Stepper, ValidatesParameters) {
  auto g = make_grid(16, 2 * pi);
  VorticityField ghat(g);
  EXPECT_THROW(Stepper(g, 1e-3, 0.0, ghat), std::invalid_argument);
  EXPECT_THROW(Stepper(g, 0.0, 1e-3, ghat), std::invalid_argument);
  EXPECT_THROW(Stepper(g, 1e-3, 1e-3, ghat, -1.0), std::invalid_argument);
  StreamField phi(g);
  Stepper no_obs(g, 1e-3, 1e-3, ghat);
  EXPECT_THROW(no_obs.step_assimilated(phi, NodeSamples(2)), std::logic_error);

  StepperState st(StreamField(g), ghat, 1e-3, 1e-3);
  EXPECT_THROW(step_assimilated(st), std::invalid_argument);
  st.phi = StreamField(g);
  EXPECT_THROW(step_assimilated(st), std::invalid_argument);
  const StepperState next = step_reference(st);
  EXPECT_DOUBLE_EQ(next.t, 1e-3);
}

TEST(Cfl, Examples) {
  auto g = make_grid(512, 2 * pi);
  EXPECT_EQ(cfl_number(StreamField(g), 1.0 / 2048, 512), 0.0);
  StreamField psi(g);
  psi.set(1, 0, -0.5);  // psi = -cos x, u = (0, sin x)
  EXPECT_NEAR(cfl_number(psi, 1.0 / 2048, 512), (512.0 / 2048) / (4 * pi), 1e-15);
  EXPECT_NEAR(cfl_number(psi, 1.0 / 2048, 512), 0.0199, 1e-4);
  psi.set(2, 3, complex(std::numeric_limits<double>::quiet_NaN(), 0.0));
  EXPECT_TRUE(std::isnan(cfl_number(psi, 1.0 / 2048, 512)));
}
