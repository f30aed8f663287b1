#include "dlambda/liouvillian.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dlambda;

namespace {

AtomParams cold() { return {hz(6e6), hz(10), hz(10), hz(800e6), 0.15, 0.075}; }
AtomParams warm() { return {hz(500e6), hz(25), hz(28), hz(800e6), 15.0, 0.075}; }
DriveConfig cold_drive(double delta_b_hz, double phi) {
  return DriveConfig(hz(delta_b_hz), phi, hz(20e3), hz(5e3));
}
DriveConfig warm_drive(double delta_b_hz, double phi) {
  return DriveConfig(hz(delta_b_hz), phi, hz(240e3), hz(60e3));
}

Liouvillian at_input(const AtomParams& p, const DriveConfig& d) {
  return build_liouvillian(p, d, input_fields(d));
}

double max_abs_diff(const Matrix4c& a, const Matrix4c& b) { return (a - b).cwiseAbs().maxCoeff(); }

double gnorm(const Matrix16c& g) { return g.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

TEST(Hamiltonian, ZeroDriveZeroSplittingIsZero) {
  AtomParams p = cold();
  p.delta_exc = 0.0;
  const Matrix4c h = build_hamiltonian_circular(p, DriveConfig(), FieldPair{});
  EXPECT_EQ(h.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hamiltonian, DiagonalZeemanCase) {
  const AtomParams p = cold();
  const Matrix4c h = build_hamiltonian_circular(p, DriveConfig(hz(80.0), 0.0, 0.0, 0.0), FieldPair{});
  Matrix4c expect = Matrix4c::Zero();
  expect(0, 0) = p.delta_exc;
  expect(2, 2) = std::numbers::pi * 80.0;
  expect(3, 3) = -std::numbers::pi * 80.0;
  EXPECT_LT(max_abs_diff(h, expect), 1e-9);
}

TEST(Hamiltonian, CouplingPattern) {
  using namespace level;
  const FieldPair f{cplx(1.0, 2.0), cplx(-0.5, 0.25)};
  const Matrix4c h = build_hamiltonian_circular(cold(), DriveConfig(), f);
  EXPECT_EQ(h(e2, g3), f.omega1);
  EXPECT_EQ(h(e2, g4), f.omega2);
  EXPECT_EQ(h(e1, g3), f.omega1);
  EXPECT_EQ(h(e1, g4), -f.omega2);
  EXPECT_EQ(h(g3, e2), std::conj(f.omega1));
  EXPECT_EQ(h(e1, e2), cplx(0.0));
}

TEST(Hamiltonian, HermitianForRandomDrives) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const DriveConfig d = oracle::random_drive(rng, k % 2 == 0);
    const Matrix4c h = build_hamiltonian_circular(cold(), d, input_fields(d));
    EXPECT_LT(max_abs_diff(h, h.adjoint()), 1e-15);
  }
}

TEST(Hamiltonian, LinearBasisIsRotatedCircular) {
  std::mt19937_64 rng(5);
  const Matrix4c u = circular_to_linear_unitary();
  for (int k = 0; k < 20; ++k) {
    const DriveConfig d = oracle::random_drive(rng, true);
    const Matrix4c hc = build_hamiltonian_circular(warm(), d, input_fields(d));
    const Matrix4c hl = build_hamiltonian_linear(warm(), d.delta_b, d.control(), d.probe());
    EXPECT_LT(max_abs_diff(u * hc * u.adjoint(), hl), 1e-6);
  }
}

TEST(Generator, PreservesTrace) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    const AtomParams p = k % 2 ? warm() : cold();
    const DriveConfig d = oracle::random_drive(rng, k % 2);
    const Matrix16c g = at_input(p, d).generator;
    EXPECT_LT((trace_row<4>() * g).cwiseAbs().maxCoeff(), 1e-12 * gnorm(g));
  }
}

TEST(Generator, ZeroDriveAnnihilatesUnpolarizedMixture) {
  const Liouvillian l = at_input(warm(), DriveConfig());
  const Vector16c v = l.apply(vectorize(DensityMatrix::unpolarized().matrix()));
  EXPECT_LT(v.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Generator, ColdCaptionParametersHaveRankFifteen) {
  for (double db : {0.0, 10.0, 80.0})
    EXPECT_EQ(generator_rank(at_input(cold(), cold_drive(db, 0.7)).generator), 15);
}

TEST(Generator, RejectsCoherenceFasterThanPopulationDecay) {
  AtomParams p = cold();
  p.gamma_coh = 0.5 * p.gamma_pop;
  try {
    jump_operators(p);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gamma_coh"), std::string::npos);
    EXPECT_NE(msg.find("gamma_pop"), std::string::npos);
  }
}

TEST(Generator, GroundRatesMatchParameters) {
  // Free evolution of the ground block: population difference decays at
  // gamma_pop and the ground coherence at gamma_coh.
  using namespace level;
  const AtomParams p = warm();
  const Matrix16c g = at_input(p, DriveConfig()).generator;
  Matrix4c diff = Matrix4c::Zero();
  diff(g3, g3) = 1.0;
  diff(g4, g4) = -1.0;
  const Matrix4c d_out = unvectorize(g * vectorize(diff));
  EXPECT_NEAR(d_out(g3, g3).real(), -p.gamma_pop, 1e-9 * p.gamma_pop);
  Matrix4c coh = Matrix4c::Zero();
  coh(g3, g4) = 1.0;
  const Matrix4c c_out = unvectorize(g * vectorize(coh));
  EXPECT_NEAR(c_out(g3, g4).real(), -p.gamma_coh, 1e-9 * p.gamma_coh);
}

TEST(SteadyState, ZeroDriveIsUnpolarized) {
  const DensityMatrix rho = steady_state(at_input(cold(), DriveConfig()));
  EXPECT_LT(max_abs_diff(rho.matrix(), DensityMatrix::unpolarized().matrix()), 1e-12);
}

TEST(SteadyState, ColdZeroFieldPhaseDependenceIsFarDetunedLeakage) {
  // With only the near excited state the phase is a gauge of |Y>; what is
  // left comes from the far state and falls off as 1/delta_exc.
  auto spread = [](double scale) {
    AtomParams p = cold();
    p.delta_exc *= scale;
    auto lin = [&](double phi) {
      return basis_change_state(steady_state(at_input(p, cold_drive(0.0, phi))), Basis::linear).matrix();
    };
    return (lin(0.0).cwiseAbs() - lin(1.3).cwiseAbs()).cwiseAbs().maxCoeff();
  };
  const double s1 = spread(1.0), s10 = spread(10.0), s100 = spread(100.0);
  EXPECT_LT(s1, 1e-3);
  EXPECT_NEAR(s10 / s1, 0.1, 0.01);
  EXPECT_NEAR(s100 / s10, 0.1, 0.01);
}

TEST(SteadyState, SatisfiesInvariantsAndSmallResidual) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 40; ++k) {
    const bool w = k % 2;
    const DriveConfig d = oracle::random_drive(rng, w);
    const SteadyStateResult r = solve_steady_state(at_input(w ? warm() : cold(), d).generator);
    EXPECT_TRUE(r.rho.valid()) << r.rho.invariant_violation();
    EXPECT_LT(r.residual, 1e-10);
  }
}

TEST(SteadyState, DegenerateGeneratorReported) {
  // No relaxation at all in the ground block leaves every ground state stationary.
  Matrix16c g = Matrix16c::Zero();
  EXPECT_THROW(solve_steady_state(g), DegenerateSteadyState);
}

TEST(SteadyState, MatchesLongTimeEvolution) {
  std::mt19937_64 rng(1234);
  for (int k = 0; k < 4; ++k) {
    const bool w = k % 2;
    const AtomParams p = w ? warm() : cold();
    const Liouvillian l = at_input(p, oracle::random_drive(rng, w));
    const DensityMatrix ss = steady_state(l);
    const DensityMatrix te = time_evolve(DensityMatrix::unpolarized(), l,
                                         50.0 / std::min(p.gamma_pop, p.gamma_coh), 1.0 / gnorm(l.generator));
    EXPECT_LT(max_abs_diff(ss.matrix(), te.matrix()), 1e-6);
  }
}

TEST(TimeEvolve, ZeroDurationReturnsInput) {
  std::mt19937_64 rng(2);
  const DensityMatrix rho = oracle::random_state(rng);
  const DensityMatrix out = time_evolve(rho, at_input(cold(), cold_drive(10.0, 0.3)), 0.0, 1e-9);
  EXPECT_EQ(max_abs_diff(rho.matrix(), out.matrix()), 0.0);
}

TEST(TimeEvolve, GroundPopulationRelaxesAtGammaPop) {
  using namespace level;
  const AtomParams p = cold();
  const Liouvillian l = at_input(p, DriveConfig());
  for (double t : {0.01, 0.02, 0.05}) {
    const DensityMatrix rho = time_evolve(DensityMatrix::pure(g3), l, t, 1.0 / gnorm(l.generator));
    const double diff = (rho(g3, g3) - rho(g4, g4)).real();
    EXPECT_NEAR(diff, std::exp(-p.gamma_pop * t), 1e-9);
    EXPECT_NEAR((rho(g3, g3) + rho(g4, g4)).real(), 1.0, 1e-9);
  }
}

TEST(TimeEvolve, FourthOrderConvergence) {
  std::mt19937_64 rng(77);
  const AtomParams p = cold();
  const Liouvillian l = at_input(p, oracle::random_drive(rng, false));
  const double h = 0.4 / gnorm(l.generator);
  const double t = 4000.0 * h;
  const Matrix4c a = time_evolve(DensityMatrix::unpolarized(), l, t, h).matrix();
  const Matrix4c b = time_evolve(DensityMatrix::unpolarized(), l, t, h / 2).matrix();
  const Matrix4c c = time_evolve(DensityMatrix::unpolarized(), l, t, h / 4).matrix();
  const double e1 = max_abs_diff(a, b), e2 = max_abs_diff(b, c);
  ASSERT_GT(e2, 0.0);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.3);
}

TEST(TimeEvolve, OversizedStepRaisesInstability) {
  const Liouvillian l = at_input(warm(), warm_drive(0.0, 0.0));
  EXPECT_THROW(time_evolve(DensityMatrix::unpolarized(), l, 1e-3, 100.0 / gnorm(l.generator)),
               StepSizeInstability);
  EXPECT_THROW(time_evolve(DensityMatrix::unpolarized(), l, 1e-3, 0.0), InvalidArgument);
  EXPECT_THROW(time_evolve(DensityMatrix::unpolarized(), l, -1.0, 1e-9), InvalidArgument);
}

TEST(Substitution, Examples) {
  const DriveConfig a = substitution_image(DriveConfig(hz(40.0), 0.0, 1.0, 1.0));
  EXPECT_DOUBLE_EQ(a.delta_b, hz(-40.0));
  EXPECT_DOUBLE_EQ(a.phi, std::numbers::pi);
  const DriveConfig b = substitution_image(DriveConfig(0.0, 1.0, 1.0, 1.0));
  EXPECT_EQ(b.delta_b, 0.0);
  EXPECT_DOUBLE_EQ(b.phi, 1.0 + std::numbers::pi);
}

TEST(Substitution, IsAnInvolution) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const DriveConfig d = oracle::random_drive(rng, k % 2);
    const DriveConfig dd = substitution_image(substitution_image(d));
    EXPECT_EQ(dd.delta_b, d.delta_b);
    EXPECT_NEAR(std::remainder(dd.phi - d.phi, two_pi), 0.0, 1e-14);
  }
}

TEST(Substitution, ProbeCoherenceMagnitudeUnchanged) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const bool w = k % 2;
    const AtomParams p = w ? warm() : cold();
    const DriveConfig d = oracle::random_drive(rng, w);
    const cplx a = probe_coherence(steady_state(at_input(p, d)));
    const cplx b = probe_coherence(steady_state(at_input(p, substitution_image(d))));
    EXPECT_NEAR(std::abs(a), std::abs(b), 1e-10);
  }
}

TEST(GaugeInvariance, CommonPhaseLeavesPopulationsAndMagnitudes) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 10; ++k) {
    const bool w = k % 2;
    const AtomParams p = w ? warm() : cold();
    const DriveConfig d = oracle::random_drive(rng, w);
    const cplx rot = std::polar(1.0, 0.9 + k);
    const FieldPair f = input_fields(d);
    const FieldPair fr{f.omega1 * rot, f.omega2 * rot};
    const Matrix4c a = steady_state(build_liouvillian(p, d, f)).matrix();
    const Matrix4c b = steady_state(build_liouvillian(p, d, fr)).matrix();
    EXPECT_LT((a.cwiseAbs() - b.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-12);
  }
}
