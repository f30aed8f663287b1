#pragma once

// Domain types and basis transforms for the four-level double-lambda atom.
//
// Level ordering used everywhere: index 0 = |1> (upper excited state),
// 1 = |2> (lower excited state), 2 and 3 = the two ground states.  In the
// circular basis the ground states are |3>, |4> (Zeeman sublevels); in the
// linear basis they are |X> = (|3>+|4>)/sqrt2 and |Y> = (|3>-|4>)/sqrt2.
//
// All frequencies are angular (rad/s).  Conversion from ordinary frequency
// happens only at the configuration boundary (see hz()).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dlambda {

using cplx = std::complex<double>;
using Matrix4c = Eigen::Matrix<cplx, 4, 4>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double inv_sqrt2 = 0.70710678118654752440;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
constexpr double hz(double f) { return two_pi * f; }
constexpr double to_hz(double omega) { return omega / two_pi; }

// CODATA 2018: mu_B / h in Hz/T.
inline constexpr double bohr_magneton_over_h = 13.996244936e9;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

namespace level {
inline constexpr int e1 = 0;  // |1>
inline constexpr int e2 = 1;  // |2>
inline constexpr int g3 = 2;  // |3> or |X>
inline constexpr int g4 = 3;  // |4> or |Y>
inline constexpr int gx = 2;
inline constexpr int gy = 3;
}  // namespace level

struct AtomParams {
  double gamma_e = 0.0;        // excited-state decay rate
  double gamma_pop = 0.0;      // ground population-difference decay
  double gamma_coh = 0.0;      // ground coherence decay
  double delta_exc = 0.0;      // excited-state splitting
  double optical_depth = 0.0;
  double cell_length = 0.0;    // meters

  /// Throws InvalidArgument when an invariant is broken.
  void validate() const {
    if (!(gamma_e > 0.0) || !(gamma_pop > 0.0) || !(gamma_coh > 0.0) || !(delta_exc > 0.0))
      throw InvalidArgument("AtomParams: all rates must be strictly positive");
    if (!(optical_depth >= 0.0)) throw InvalidArgument("AtomParams: optical_depth must be >= 0");
    if (!(cell_length > 0.0)) throw InvalidArgument("AtomParams: cell_length must be > 0");
  }

  /// Soft conditions that are allowed but outside the model's intended regime.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (gamma_pop >= 1e-2 * gamma_e)
      w.emplace_back("gamma_pop is not much smaller than gamma_e");
    if (gamma_coh >= 1e-2 * gamma_e)
      w.emplace_back("gamma_coh is not much smaller than gamma_e");
    return w;
  }

  friend bool operator==(const AtomParams&, const AtomParams&) = default;
};

inline double reduce_phase(double phi) {
  double r = std::fmod(phi, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r = 0.0;
  return r;
}

/// Per-run drive knobs.  The relative phase lives on the probe:
/// Omega_p = |Omega_p| e^{i phi}, Omega_c real and non-negative.
struct DriveConfig {
  double delta_b = 0.0;      // Zeeman splitting of the ground states (signed)
  double phi = 0.0;          // relative probe/control phase, kept in [0, 2pi)
  double omega_c = 0.0;      // control Rabi magnitude
  double omega_p = 0.0;      // probe Rabi magnitude
  double delta_probe = 0.0;  // probe one-photon detuning

  DriveConfig() = default;
  DriveConfig(double delta_b_, double phi_, double omega_c_, double omega_p_,
              double delta_probe_ = 0.0)
      : delta_b(delta_b_), phi(reduce_phase(phi_)), omega_c(omega_c_),
        omega_p(omega_p_), delta_probe(delta_probe_) {
    if (!(omega_c >= 0.0) || !(omega_p >= 0.0))
      throw InvalidArgument("DriveConfig: Rabi magnitudes must be >= 0");
  }

  DriveConfig with_phi(double p) const {
    DriveConfig d = *this;
    d.phi = reduce_phase(p);
    return d;
  }
  DriveConfig with_delta_b(double b) const {
    DriveConfig d = *this;
    d.delta_b = b;
    return d;
  }

  cplx control() const { return {omega_c, 0.0}; }
  cplx probe() const { return std::polar(omega_p, phi); }

  friend bool operator==(const DriveConfig&, const DriveConfig&) = default;
};

/// Complex circular Rabi amplitudes (Omega_1, Omega_2).
struct FieldPair {
  cplx omega1{};
  cplx omega2{};

  bool finite() const {
    return std::isfinite(omega1.real()) && std::isfinite(omega1.imag()) &&
           std::isfinite(omega2.real()) && std::isfinite(omega2.imag());
  }
  double total_power() const { return std::norm(omega1) + std::norm(omega2); }
};

struct LinearFields {
  cplx control{};
  cplx probe{};
};

inline FieldPair to_circular(cplx omega_c, cplx omega_p) {
  return {(omega_c + omega_p) * inv_sqrt2, (omega_c - omega_p) * inv_sqrt2};
}

inline LinearFields to_linear(const FieldPair& f) {
  return {(f.omega1 + f.omega2) * inv_sqrt2, (f.omega1 - f.omega2) * inv_sqrt2};
}

/// Circular input fields for a drive (phase on the probe).
inline FieldPair input_fields(const DriveConfig& drive) {
  return to_circular(drive.control(), drive.probe());
}

/// delta_B in rad/s for a ground sublevel pair: 2 pi g mu_B m B / h.
inline double zeeman_shift(double b_field_tesla, double g_factor, int m_quantum) {
  return two_pi * g_factor * bohr_magneton_over_h * static_cast<double>(m_quantum) * b_field_tesla;
}

enum class Basis { circular, linear };

class DensityMatrix {
public:
  static constexpr double hermiticity_tol = 1e-12;
  static constexpr double trace_tol = 1e-10;
  static constexpr double eigen_floor = -1e-9;

  DensityMatrix() : rho_(Matrix4c::Zero()) { rho_(2, 2) = rho_(3, 3) = 0.5; }
  explicit DensityMatrix(const Matrix4c& rho, Basis basis = Basis::circular)
      : rho_(rho), basis_(basis) {}

  /// Unpolarized ground-state mixture diag(0, 0, 1/2, 1/2).
  static DensityMatrix unpolarized() { return DensityMatrix{}; }

  static DensityMatrix pure(int lvl, Basis basis = Basis::circular) {
    Matrix4c m = Matrix4c::Zero();
    m(lvl, lvl) = 1.0;
    return DensityMatrix(m, basis);
  }

  const Matrix4c& matrix() const { return rho_; }
  Basis basis() const { return basis_; }
  cplx operator()(int i, int j) const { return rho_(i, j); }

  cplx trace() const { return rho_.trace(); }

  double hermiticity_error() const {
    return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
  }

  Eigen::Vector4d eigenvalues() const {
    Matrix4c herm = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(herm, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  /// Empty string when all invariants hold, otherwise a description of the first violation.
  std::string invariant_violation() const {
    if (!rho_.allFinite()) return "non-finite entries";
    if (std::abs(trace() - 1.0) > trace_tol)
      return "trace deviates from 1 by " + std::to_string(std::abs(trace() - 1.0));
    if (hermiticity_error() > hermiticity_tol)
      return "not Hermitian (max |rho - rho^H| = " + std::to_string(hermiticity_error()) + ")";
    if (eigenvalues().minCoeff() < eigen_floor)
      return "negative eigenvalue " + std::to_string(eigenvalues().minCoeff());
    return {};
  }
  bool valid() const { return invariant_violation().empty(); }

private:
  Matrix4c rho_;
  Basis basis_ = Basis::circular;
};

/// Unitary taking circular-basis components to linear-basis components.
/// Only the ground block mixes: |X> = (|3>+|4>)/sqrt2, |Y> = (|3>-|4>)/sqrt2.
inline Matrix4c circular_to_linear_unitary() {
  Matrix4c u = Matrix4c::Zero();
  u(0, 0) = u(1, 1) = 1.0;
  u(2, 2) = u(2, 3) = u(3, 2) = inv_sqrt2;
  u(3, 3) = -inv_sqrt2;
  return u;
}

/// rho' = U rho U^H.  The ground-block unitary is real symmetric and its own
/// inverse, so the same matrix serves both directions.
inline DensityMatrix basis_change_state(const DensityMatrix& rho, Basis target) {
  if (rho.basis() == target) return rho;
  const Matrix4c u = circular_to_linear_unitary();
  return DensityMatrix(u * rho.matrix() * u.adjoint(), target);
}

using CurveValue = std::variant<double, cplx>;

/// Sampled 1-D result.  Abscissa must be strictly increasing.
template <typename Y>
struct BasicCurve {
  std::string abscissa_name;
  std::string ordinate_name;
  std::vector<std::pair<double, Y>> points;

  void push_back(double x, Y y) {
    if (!points.empty() && !(x > points.back().first))
      throw InvalidArgument("Curve: abscissa must be strictly increasing");
    points.emplace_back(x, y);
  }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

using Curve = BasicCurve<double>;
using ComplexCurve = BasicCurve<cplx>;

}  // namespace dlambda
