#include "dlambda/propagation.hpp"
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

PropagateOptions no_refinement() {
  PropagateOptions o;
  o.refinement_check = false;
  return o;
}

}  // namespace

TEST(Kappa, ZeroDepthGivesZero) {
  AtomParams p = cold();
  p.optical_depth = 0.0;
  EXPECT_EQ(calibrate_kappa(p), 0.0);
}

TEST(Kappa, RejectsBadGeometry) {
  AtomParams p = cold();
  p.cell_length = 0.0;
  EXPECT_THROW(calibrate_kappa(p), InvalidArgument);
  p = cold();
  p.optical_depth = -0.1;
  EXPECT_THROW(calibrate_kappa(p), InvalidArgument);
}

TEST(Kappa, BareTransitionFollowsBeerLambert) {
  for (double od : {0.15, 1.0, 15.0}) {
    AtomParams p = cold();
    p.optical_depth = od;
    EXPECT_NEAR(bare_transition_transmission(p) / std::exp(-od), 1.0, 1e-4) << "od " << od;
  }
}

TEST(Propagate, ZeroDepthKeepsFieldsConstant) {
  AtomParams p = warm();
  p.optical_depth = 0.0;
  const DriveConfig d = warm_drive(40.0, 0.8);
  const FieldPair in = input_fields(d);
  const auto r = propagate(in, p, d, 32);
  ASSERT_EQ(r.fields_along_z.size(), 33u);
  for (const auto& f : r.fields_along_z) {
    EXPECT_EQ(f.omega1, in.omega1);
    EXPECT_EQ(f.omega2, in.omega2);
  }
  EXPECT_EQ(r.z_grid.front(), 0.0);
  EXPECT_EQ(r.z_grid.back(), p.cell_length);
  EXPECT_EQ(r.probe_power_out, 1.0);
}

TEST(Propagate, ControlOnlyAtZeroFieldGeneratesNoProbe) {
  DriveConfig d = warm_drive(0.0, 0.0);
  d.omega_p = 0.0;
  const auto r = propagate(input_fields(d), warm(), d, 64, no_refinement());
  const LinearFields out = to_linear(r.output());
  EXPECT_LT(std::norm(out.probe), 1e-20 * std::norm(out.control));
  EXPECT_LT(r.control_power_out, 1.0);
}

TEST(Propagate, RejectsBadArguments) {
  const DriveConfig d = cold_drive(0.0, 0.0);
  EXPECT_THROW(propagate(input_fields(d), cold(), d, 8), InvalidArgument);
  DriveConfig detuned = d;
  detuned.delta_probe = hz(5.0);
  EXPECT_THROW(propagate(input_fields(detuned), cold(), detuned, 64), InvalidArgument);
  const FieldPair nan_in{cplx(std::nan(""), 0.0), 0.0};
  EXPECT_THROW(propagate(nan_in, cold(), d, 64), InvalidArgument);
  DriveConfig no_probe = d;
  no_probe.omega_p = 0.0;
  EXPECT_THROW(transmission(cold(), no_probe), InvalidArgument);
}

TEST(Propagate, StatesAlongTheCellAreValid) {
  int count = 0;
  PropagateOptions o = no_refinement();
  o.on_state = [&](double z, const DensityMatrix& rho) {
    ++count;
    EXPECT_GE(z, 0.0);
    EXPECT_TRUE(rho.valid()) << rho.invariant_violation();
  };
  const DriveConfig d = warm_drive(-40.0, 2.0);
  propagate(input_fields(d), warm(), d, 16, o);
  EXPECT_EQ(count, 16 * 4);
}

TEST(Propagate, TotalPowerNeverGrows) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 8; ++k) {
    const bool w = k % 2;
    const DriveConfig d = oracle::random_drive(rng, w);
    const FieldPair in = input_fields(d);
    const auto r = propagate(in, w ? warm() : cold(), d, 32, no_refinement());
    for (const auto& f : r.fields_along_z) EXPECT_LE(f.total_power(), in.total_power() * (1.0 + 1e-12));
  }
}

TEST(Propagate, WarmGridRefinementBelowTolerance) {
  const DriveConfig d = warm_drive(0.0, 0.0);
  const auto r = propagate(input_fields(d), warm(), d, default_propagation_steps);
  EXPECT_LT(r.refinement_delta, 1e-6);
  EXPECT_GT(r.refinement_delta, 0.0);
  const double t256 = transmission(warm(), d, 256, no_refinement());
  const double t512 = transmission(warm(), d, 512, no_refinement());
  EXPECT_LT(std::abs(t256 - t512) / t512, 1e-6);
}

TEST(Propagate, CoarseGridRaisesRefinementWarning) {
  const DriveConfig d = warm_drive(0.0, 0.0);
  PropagateOptions o;
  o.refinement_tol = 1e-14;
  const auto r = propagate(input_fields(d), warm(), d, 16, o);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.back().find("refinement"), std::string::npos);
}

TEST(ProbePower, Examples) {
  const ProbePower c = probe_power({cplx(0.3, 0.4), cplx(0.3, 0.4)});
  EXPECT_NEAR(c.power, 0.0, 1e-15);
  EXPECT_NEAR(c.power_linear, 0.0, 1e-15);
  const ProbePower p = probe_power({inv_sqrt2, -inv_sqrt2});
  EXPECT_NEAR(p.power, 1.0, 1e-15);
  EXPECT_NEAR(std::abs(p.theta), std::numbers::pi, 1e-15);
}

TEST(ProbePower, InterferenceFormMatchesLinearTransform) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const FieldPair f{cplx(n(rng), n(rng)), cplx(n(rng), n(rng))};
    const ProbePower p = probe_power(f);
    EXPECT_NEAR(p.power, p.power_linear, 1e-12 * (1.0 + f.total_power()));
  }
}

TEST(Transmission, ZeroDepthIsExactlyOne) {
  AtomParams p = warm();
  p.optical_depth = 0.0;
  EXPECT_EQ(transmission(p, warm_drive(33.0, 1.1)), 1.0);
}

TEST(Transmission, FullPeriodPhaseShiftIsIdentical) {
  const DriveConfig a = warm_drive(20.0, 0.4);
  const DriveConfig b = warm_drive(20.0, 0.4 + two_pi);
  EXPECT_NEAR(a.phi, b.phi, 1e-15);
  const double ta = transmission(warm(), a, 32, no_refinement());
  EXPECT_NEAR(ta, transmission(warm(), b, 32, no_refinement()), 1e-13 * ta);
  EXPECT_EQ(ta, transmission(warm(), a, 32, no_refinement()));
}

TEST(Transmission, WarmSubstitutionSymmetryAtFortyHertz) {
  for (double phi : {0.0, 0.9, 2.5, 4.4}) {
    const DriveConfig d = warm_drive(40.0, phi);
    const double a = transmission(warm(), d, 64, no_refinement());
    const double b = transmission(warm(), substitution_image(d), 64, no_refinement());
    EXPECT_NEAR(a, b, 1e-8) << "phi " << phi;
  }
}

TEST(Transmission, ColdZeroFieldNearlyPhaseIndependent) {
  // Residual phase dependence comes from Raman leakage through the far
  // excited state and scales as 1/delta_exc.
  double lo = INFINITY, hi = -INFINITY, sum = 0.0;
  const int n = 16;
  for (int k = 0; k < n; ++k) {
    const double t = transmission(cold(), cold_drive(0.0, two_pi * k / n), 64, no_refinement());
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    sum += t;
  }
  const double rel = (hi - lo) / (sum / n);
  EXPECT_LT(rel, 5e-3);

  AtomParams far = cold();
  far.delta_exc *= 10.0;
  lo = INFINITY;
  hi = -INFINITY;
  sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = transmission(far, cold_drive(0.0, two_pi * k / n), 64, no_refinement());
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    sum += t;
  }
  EXPECT_LT((hi - lo) / (sum / n), 0.2 * rel);
}
