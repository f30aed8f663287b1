#pragma once

// Slowly-varying-amplitude propagation of the two circular fields through the
// cell, with the atoms in their local steady state at every z.

#include "dlambda/core.hpp"
#include "dlambda/liouvillian.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace dlambda {

class PropagationError : public Error {
public:
  using Error::Error;
};

/// Coupling constant kappa (rad/s per meter) fixed by the optical depth: a
/// weak resonant field on a bare two-level transition with all population in
/// the ground state has intensity transmission exp(-OD) over the cell.
/// With Rabi couplings written as Omega (not Omega/2) the optical coherence
/// is -2i Omega / gamma_e, so the intensity attenuation is 4 kappa / gamma_e.
inline double calibrate_kappa(const AtomParams& params) {
  if (!(params.optical_depth >= 0.0) || !(params.cell_length > 0.0))
    throw InvalidArgument("calibrate_kappa: need optical_depth >= 0 and cell_length > 0");
  return params.optical_depth * params.gamma_e / (4.0 * params.cell_length);
}

/// Field-equation source terms (rho_23 + rho_13, rho_24 - rho_14).
inline FieldPair polarization_source(const Matrix4c& rho) {
  using namespace level;
  return {rho(e2, g3) + rho(e1, g3), rho(e2, g4) - rho(e1, g4)};
}

struct PropagateOptions {
  /// Rerun with 2 n_steps and report the relative change in the output fields.
  bool refinement_check = true;
  double refinement_tol = 1e-6;
  /// Called with every steady state solved along the way.
  std::function<void(double z, const DensityMatrix&)> on_state;
};

struct PropagationResult {
  std::vector<double> z_grid;
  std::vector<FieldPair> fields_along_z;
  double probe_power_out = 0.0;    // |Omega_p(L)|^2 / |Omega_p(0)|^2
  double control_power_out = 0.0;  // |Omega_c(L)|^2 / |Omega_c(0)|^2
  double refinement_delta = 0.0;   // relative output change n -> 2n (0 if not run)
  double max_residual = 0.0;
  std::vector<std::string> warnings;

  const FieldPair& output() const { return fields_along_z.back(); }
};

namespace detail {

inline double ratio_or_raw(double num, double den) { return den > 0.0 ? num / den : num; }

struct FieldIntegration {
  std::vector<double> z;
  std::vector<FieldPair> fields;
  double max_residual = 0.0;
};

inline FieldIntegration integrate_fields(const FieldPair& in, const AtomParams& params,
                                         const DriveConfig& drive, int n_steps,
                                         const PropagateOptions& opt) {
  const double kappa = calibrate_kappa(params);
  const double h = params.cell_length / n_steps;
  const Matrix16c dissipator = dissipator_superop<4>(jump_operators(params));

  FieldIntegration out;
  out.z.reserve(n_steps + 1);
  out.fields.reserve(n_steps + 1);

  auto rhs = [&](double z, const FieldPair& f) -> FieldPair {
    if (kappa == 0.0) return {};
    Matrix16c g = commutator_superop<4>(build_hamiltonian_circular(params, drive, f)) + dissipator;
    double residual = 0.0;
    Matrix4c rho;
    try {
      rho = steady_state_matrix<4>(g, &residual);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "propagation failed at z = " << z << " m: " << e.what();
      throw PropagationError(msg.str());
    }
    out.max_residual = std::max(out.max_residual, residual);
    if (opt.on_state) opt.on_state(z, DensityMatrix(rho));
    const FieldPair s = polarization_source(rho);
    const cplx mik{0.0, -kappa};
    return {mik * s.omega1, mik * s.omega2};
  };
  auto axpy = [](const FieldPair& y, double a, const FieldPair& k) -> FieldPair {
    return {y.omega1 + a * k.omega1, y.omega2 + a * k.omega2};
  };

  FieldPair y = in;
  out.z.push_back(0.0);
  out.fields.push_back(y);
  for (int n = 0; n < n_steps; ++n) {
    const double z = n * h;
    const FieldPair k1 = rhs(z, y);
    const FieldPair k2 = rhs(z + 0.5 * h, axpy(y, 0.5 * h, k1));
    const FieldPair k3 = rhs(z + 0.5 * h, axpy(y, 0.5 * h, k2));
    const FieldPair k4 = rhs(z + h, axpy(y, h, k3));
    y.omega1 += h / 6.0 * (k1.omega1 + 2.0 * k2.omega1 + 2.0 * k3.omega1 + k4.omega1);
    y.omega2 += h / 6.0 * (k1.omega2 + 2.0 * k2.omega2 + 2.0 * k3.omega2 + k4.omega2);
    if (!y.finite()) {
      std::ostringstream msg;
      msg << "propagation produced non-finite fields at z = " << z + h << " m";
      throw PropagationError(msg.str());
    }
    out.z.push_back(n + 1 == n_steps ? params.cell_length : z + h);
    out.fields.push_back(y);
  }
  return out;
}

}  // namespace detail

inline constexpr int min_propagation_steps = 16;
inline constexpr int default_propagation_steps = 256;

inline PropagationResult propagate(const FieldPair& fields_in, const AtomParams& params,
                                   const DriveConfig& drive, int n_steps,
                                   const PropagateOptions& opt = {}) {
  if (n_steps < min_propagation_steps)
    throw InvalidArgument("propagate: n_steps must be >= " + std::to_string(min_propagation_steps));
  if (!fields_in.finite()) throw InvalidArgument("propagate: non-finite input fields");
  // A detuned CW probe has no steady state; detuned light goes through SidebandPropagator.
  if (drive.delta_probe != 0.0)
    throw InvalidArgument("propagate: delta_probe must be 0 (use the sideband propagator)");
  params.validate();

  auto run = detail::integrate_fields(fields_in, params, drive, n_steps, opt);

  PropagationResult r;
  r.z_grid = std::move(run.z);
  r.fields_along_z = std::move(run.fields);
  r.max_residual = run.max_residual;
  r.warnings = params.warnings();

  const LinearFields in = to_linear(fields_in);
  const LinearFields out = to_linear(r.output());
  r.probe_power_out = detail::ratio_or_raw(std::norm(out.probe), std::norm(in.probe));
  r.control_power_out = detail::ratio_or_raw(std::norm(out.control), std::norm(in.control));

  if (opt.refinement_check && calibrate_kappa(params) != 0.0) {
    PropagateOptions quiet = opt;
    quiet.on_state = nullptr;
    const auto fine = detail::integrate_fields(fields_in, params, drive, 2 * n_steps, quiet);
    const FieldPair& a = r.output();
    const FieldPair& b = fine.fields.back();
    const double scale = std::sqrt(std::max(b.total_power(), 1e-300));
    r.refinement_delta =
        std::sqrt(std::norm(a.omega1 - b.omega1) + std::norm(a.omega2 - b.omega2)) / scale;
    if (r.refinement_delta > opt.refinement_tol) {
      std::ostringstream msg;
      msg << "refinement: output changed by " << r.refinement_delta << " (relative) between "
          << n_steps << " and " << 2 * n_steps << " steps";
      r.warnings.push_back(msg.str());
    }
  }
  return r;
}

struct ProbePower {
  double power = 0.0;         // interference form (|W1|^2 + |W2|^2 - 2|W1||W2| cos theta)/2
  double power_linear = 0.0;  // |Omega_p|^2 from the linear-basis transform
  double theta = 0.0;         // arg(W1) - arg(W2), in (-pi, pi]
};

inline ProbePower probe_power(const FieldPair& f) {
  ProbePower p;
  const double a1 = std::abs(f.omega1);
  const double a2 = std::abs(f.omega2);
  p.theta = (a1 > 0.0 && a2 > 0.0) ? std::arg(f.omega1 * std::conj(f.omega2)) : 0.0;
  p.power = 0.5 * (a1 * a1 + a2 * a2 - 2.0 * a1 * a2 * std::cos(p.theta));
  p.power_linear = std::norm(to_linear(f).probe);
  return p;
}

struct TransmissionResult {
  double value = 0.0;
  double refinement_delta = 0.0;
  double max_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Probe output power over probe input power.  Values above 1 (gain) are allowed.
inline TransmissionResult transmission_result(const AtomParams& params, const DriveConfig& drive,
                                              int n_steps = default_propagation_steps,
                                              const PropagateOptions& opt = {}) {
  if (!(drive.omega_p > 0.0)) throw InvalidArgument("transmission: omega_p must be > 0");
  const FieldPair in = input_fields(drive);
  auto r = propagate(in, params, drive, n_steps, opt);
  TransmissionResult t;
  t.value = probe_power(r.output()).power_linear / probe_power(in).power_linear;
  t.refinement_delta = r.refinement_delta;
  t.max_residual = r.max_residual;
  t.warnings = std::move(r.warnings);
  return t;
}

inline double transmission(const AtomParams& params, const DriveConfig& drive,
                           int n_steps = default_propagation_steps,
                           const PropagateOptions& opt = {}) {
  return transmission_result(params, drive, n_steps, opt).value;
}

/// Weak resonant field through a genuine two-level medium (ground |g>, excited
/// |e>, decay gamma_e, all population in |g>) using the same kappa and the
/// same steady-state-per-step propagation.  Returns the intensity transmission.
inline double bare_transition_transmission(const AtomParams& params,
                                           int n_steps = default_propagation_steps) {
  params.validate();
  const double kappa = calibrate_kappa(params);
  const double h = params.cell_length / n_steps;
  std::vector<SquareMatrix<2>> jumps(1, SquareMatrix<2>::Zero());
  jumps[0](0, 1) = std::sqrt(params.gamma_e);  // |g><e|, g = 0, e = 1
  const SuperOperator<2> diss = dissipator_superop<2>(jumps);

  auto rhs = [&](cplx omega) -> cplx {
    SquareMatrix<2> ham = SquareMatrix<2>::Zero();
    ham(1, 0) = omega;
    ham(0, 1) = std::conj(omega);
    const SquareMatrix<2> rho = steady_state_matrix<2>(commutator_superop<2>(ham) + diss);
    return cplx{0.0, -kappa} * rho(1, 0);
  };

  const cplx omega0 = 1e-5 * params.gamma_e;
  cplx y = omega0;
  for (int n = 0; n < n_steps; ++n) {
    const cplx k1 = rhs(y);
    const cplx k2 = rhs(y + 0.5 * h * k1);
    const cplx k3 = rhs(y + 0.5 * h * k2);
    const cplx k4 = rhs(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return std::norm(y) / std::norm(omega0);
}

}  // namespace dlambda
