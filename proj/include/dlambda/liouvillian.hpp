#pragma once

// Master-equation generator for the double-lambda atom, its steady state, and
// a fixed-step time integrator used as an independent oracle.
//
// The density matrix is column-vectorized: vec(rho)[i + 4 j] = rho(i, j), so
// vec(A X B) = (B^T kron A) vec(X).

#include "dlambda/core.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace dlambda {

using Matrix16c = Eigen::Matrix<cplx, 16, 16>;
using Vector16c = Eigen::Matrix<cplx, 16, 1>;

class DegenerateSteadyState : public Error {
public:
  using Error::Error;
};

class SolverFailure : public Error {
public:
  using Error::Error;
};

class StepSizeInstability : public Error {
public:
  using Error::Error;
};

inline Vector16c vectorize(const Matrix4c& m) {
  return Eigen::Map<const Vector16c>(m.data());
}

inline Matrix4c unvectorize(const Vector16c& v) {
  return Eigen::Map<const Matrix4c>(v.data());
}

/// Row vector r with r * vec(rho) = trace(rho).
template <int N = 4>
Eigen::Matrix<cplx, 1, N * N> trace_row() {
  Eigen::Matrix<cplx, 1, N * N> r = Eigen::Matrix<cplx, 1, N * N>::Zero();
  for (int i = 0; i < N; ++i) r(i + N * i) = 1.0;
  return r;
}

/// H = (dB/2)(|3><3| - |4><4|) + Delta |1><1|
///     + W1 |2><3| + W2 |2><4| + W1 |1><3| - W2 |1><4| + h.c.
inline Matrix4c build_hamiltonian_circular(const AtomParams& params, const DriveConfig& drive,
                                           const FieldPair& fields) {
  using namespace level;
  Matrix4c coupling = Matrix4c::Zero();
  coupling(e2, g3) = fields.omega1;
  coupling(e2, g4) = fields.omega2;
  coupling(e1, g3) = fields.omega1;
  coupling(e1, g4) = -fields.omega2;
  Matrix4c h = coupling + coupling.adjoint();
  h(e1, e1) = params.delta_exc;
  h(g3, g3) = 0.5 * drive.delta_b;
  h(g4, g4) = -0.5 * drive.delta_b;
  return h;
}

/// Same Hamiltonian written directly in the linear ground basis {|X>, |Y>}.
/// The Zeeman term becomes a coherent X-Y coupling of strength dB/2.
inline Matrix4c build_hamiltonian_linear(const AtomParams& params, double delta_b, cplx omega_c,
                                         cplx omega_p) {
  using namespace level;
  Matrix4c h = Matrix4c::Zero();
  h(e1, e1) = params.delta_exc;
  h(gx, gy) = h(gy, gx) = 0.5 * delta_b;
  h(e2, gx) = omega_c;
  h(e2, gy) = omega_p;
  h(e1, gx) = omega_p;
  h(e1, gy) = omega_c;
  for (int e : {e1, e2})
    for (int g : {gx, gy}) h(g, e) = std::conj(h(e, g));
  return h;
}

/// Jump operators, written in the circular basis and rotated if requested:
///  - each excited state decays at gamma_e, split equally into |3> and |4>;
///  - the ground block relaxes toward diag(1/2, 1/2) at gamma_pop
///    (four operators sqrt(gamma_pop/2)|g><g'|);
///  - extra pure dephasing of rho_34 at gamma_coh - gamma_pop.
inline std::vector<Matrix4c> jump_operators(const AtomParams& params, Basis basis = Basis::circular) {
  using namespace level;
  if (params.gamma_coh < params.gamma_pop) {
    std::ostringstream msg;
    msg << "ground coherence decay gamma_coh (" << params.gamma_coh
        << " rad/s) must not be smaller than population decay gamma_pop (" << params.gamma_pop
        << " rad/s)";
    throw InvalidArgument(msg.str());
  }
  std::vector<Matrix4c> ops;
  const double branch = std::sqrt(0.5 * params.gamma_e);
  for (int e : {e1, e2})
    for (int g : {g3, g4}) {
      Matrix4c l = Matrix4c::Zero();
      l(g, e) = branch;
      ops.push_back(l);
    }
  const double reset = std::sqrt(0.5 * params.gamma_pop);
  for (int g : {g3, g4})
    for (int gp : {g3, g4}) {
      Matrix4c l = Matrix4c::Zero();
      l(g, gp) = reset;
      ops.push_back(l);
    }
  const double extra = params.gamma_coh - params.gamma_pop;
  if (extra > 0.0) {
    Matrix4c l = Matrix4c::Zero();
    l(g3, g3) = std::sqrt(0.5 * extra);
    l(g4, g4) = -std::sqrt(0.5 * extra);
    ops.push_back(l);
  }
  if (basis == Basis::linear) {
    const Matrix4c u = circular_to_linear_unitary();
    for (auto& l : ops) l = u * l * u.adjoint();
  }
  return ops;
}

template <int N>
using SquareMatrix = Eigen::Matrix<cplx, N, N>;

template <int N>
using SuperOperator = Eigen::Matrix<cplx, N * N, N * N>;

/// Superoperator of rho -> -i [H, rho].
template <int N>
SuperOperator<N> commutator_superop(const SquareMatrix<N>& h) {
  SuperOperator<N> g = SuperOperator<N>::Zero();
  const cplx mi{0.0, -1.0};
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < N; ++k) {
        g(i + N * j, k + N * j) += mi * h(i, k);
        g(i + N * j, i + N * k) -= mi * h(k, j);
      }
  return g;
}

/// Superoperator of sum_k (L rho L^H - {L^H L, rho}/2).
template <int N>
SuperOperator<N> dissipator_superop(const std::vector<SquareMatrix<N>>& jumps) {
  SuperOperator<N> d = SuperOperator<N>::Zero();
  for (const auto& l : jumps) {
    const SquareMatrix<N> ldl = l.adjoint() * l;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k)
          for (int m = 0; m < N; ++m) {
            // (conj(L) kron L)[(i,j),(k,m)] = conj(L(j,m)) L(i,k)
            cplx v = std::conj(l(j, m)) * l(i, k);
            if (m == j) v -= 0.5 * ldl(i, k);
            if (k == i) v -= 0.5 * ldl(m, j);
            d(i + N * j, k + N * m) += v;
          }
  }
  return d;
}

struct Liouvillian {
  Matrix16c generator;
  AtomParams params;
  DriveConfig drive;
  FieldPair fields;
  Basis basis = Basis::circular;

  Vector16c apply(const Vector16c& v) const { return generator * v; }
};

inline Liouvillian build_liouvillian(const AtomParams& params, const DriveConfig& drive,
                                     const FieldPair& fields) {
  Liouvillian l;
  l.generator = commutator_superop<4>(build_hamiltonian_circular(params, drive, fields)) +
                dissipator_superop<4>(jump_operators(params));
  l.params = params;
  l.drive = drive;
  l.fields = fields;
  return l;
}

/// Generator in the linear ground basis for given linear-polarization fields.
inline Matrix16c linear_generator(const AtomParams& params, double delta_b, cplx omega_c,
                                  cplx omega_p) {
  return commutator_superop<4>(build_hamiltonian_linear(params, delta_b, omega_c, omega_p)) +
         dissipator_superop<4>(jump_operators(params, Basis::linear));
}

/// Numerical rank from singular values relative to the largest one.
inline int generator_rank(const Matrix16c& g, double rel_tol = 1e-13) {
  Eigen::JacobiSVD<Matrix16c> svd(g);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++rank;
  return rank;
}

inline constexpr double steady_state_residual_tol = 1e-8;
inline constexpr double degenerate_rcond = 1e-14;

/// Reciprocal condition estimate of an LU factorization.  Eigen's estimate
/// reports 1 for an exactly zero pivot, so the pivot ratio bounds it as well.
template <typename Lu>
double lu_rcond(const Lu& lu) {
  const auto piv = lu.matrixLU().diagonal().cwiseAbs();
  const double ratio = piv.maxCoeff() > 0.0 ? piv.minCoeff() / piv.maxCoeff() : 0.0;
  return std::min(lu.rcond(), ratio);
}

/// Null vector of an N^2 x N^2 trace-preserving generator normalized to unit
/// trace.  The first row of G (the first population equation, implied by
/// trace preservation) is replaced by the trace constraint.  Returns the
/// Hermitian part; residual and rcond are reported through the out-params.
template <int N>
SquareMatrix<N> steady_state_matrix(const SuperOperator<N>& g, double* residual_out = nullptr,
                                    double* rcond_out = nullptr) {
  using Vec = Eigen::Matrix<cplx, N * N, 1>;
  const double gnorm = g.cwiseAbs().rowwise().sum().maxCoeff();
  const double scale = gnorm > 0.0 ? gnorm : 1.0;
  SuperOperator<N> a = g;
  a.row(0) = scale * trace_row<N>();
  Vec b = Vec::Zero();
  b(0) = scale;

  Eigen::PartialPivLU<SuperOperator<N>> lu(a);
  const double rcond = lu_rcond(lu);
  if (rcond_out) *rcond_out = rcond;
  if (!(rcond > degenerate_rcond))
    throw DegenerateSteadyState(
        "degenerate steady state: generator has more than one null vector (rcond = " +
        std::to_string(rcond) + ")");
  Vec x = lu.solve(b);
  x += lu.solve(b - a * x);

  SquareMatrix<N> rho = Eigen::Map<const SquareMatrix<N>>(x.data());
  rho = (0.5 * (rho + rho.adjoint())).eval();
  rho /= rho.trace();

  const double residual = (g * Eigen::Map<const Vec>(rho.data())).norm() / scale;
  if (residual_out) *residual_out = residual;
  if (!(residual <= steady_state_residual_tol)) {
    std::ostringstream msg;
    msg << "steady-state solver failure: relative residual " << residual;
    throw SolverFailure(msg.str());
  }
  return rho;
}

struct SteadyStateResult {
  DensityMatrix rho;
  double residual = 0.0;  // ||G vec(rho)|| / ||G||
  double rcond = 0.0;     // reciprocal condition estimate of the trace-replaced system
};

inline SteadyStateResult solve_steady_state(const Matrix16c& g, Basis basis = Basis::circular) {
  SteadyStateResult r;
  r.rho = DensityMatrix(steady_state_matrix<4>(g, &r.residual, &r.rcond), basis);
  return r;
}

inline DensityMatrix steady_state(const Liouvillian& liou) {
  return solve_steady_state(liou.generator, liou.basis).rho;
}

using Matrix16e = Eigen::Matrix<std::complex<long double>, 16, 16>;
using Vector16e = Eigen::Matrix<std::complex<long double>, 16, 1>;

/// One classical RK4 step of d/dt v = G v as a linear map.
inline Matrix16e rk4_step_map(const Matrix16c& g, double dt) {
  const Matrix16e a = g.cast<std::complex<long double>>() * static_cast<long double>(dt);
  const Matrix16e a2 = a * a;
  const Matrix16e a3 = a2 * a;
  const Matrix16e a4 = a3 * a;
  return Matrix16e::Identity() + a + a2 / 2.0L + a3 / 6.0L + a4 / 24.0L;
}

inline constexpr double trace_drift_tol = 1e-6;

/// Integrates d rho/dt = G rho with fixed-step RK4 from 0 to t_final.
///
/// The generator is time independent, so n RK4 steps are the n-th power of a
/// single step map; the power is taken by binary exponentiation in extended
/// precision, which allows the ~1e9 steps needed to cover ground-state time
/// scales at optical step sizes.  The step is shrunk so that t_final is an
/// integer number of steps no larger than dt.
inline DensityMatrix time_evolve(const DensityMatrix& rho0, const Liouvillian& liou, double t_final,
                                 double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("time_evolve: dt must be > 0");
  if (!(t_final >= 0.0)) throw InvalidArgument("time_evolve: t_final must be >= 0");
  if (t_final == 0.0) return rho0;

  const double nd = std::ceil(t_final / dt);
  if (nd > 9.0e18) throw InvalidArgument("time_evolve: too many steps");
  auto n = static_cast<unsigned long long>(nd);
  const double h = t_final / static_cast<double>(n);

  auto blown = [](const auto& m) {
    return !m.allFinite() || m.cwiseAbs().maxCoeff() > 1e6L;
  };
  Matrix16e power = rk4_step_map(liou.generator, h);
  Vector16e v = vectorize(rho0.matrix()).cast<std::complex<long double>>();
  bool unstable = false;
  while (n > 0) {
    if (n & 1ULL) v = power * v;
    n >>= 1;
    if (n > 0) power = (power * power).eval();
    if (blown(power)) {
      unstable = true;
      break;
    }
  }

  const Matrix4c rho = unvectorize(v.cast<cplx>());
  const double drift = std::abs(rho.trace() - rho0.trace());
  if (unstable || !rho.allFinite() || rho.norm() > 10.0 || drift > trace_drift_tol) {
    std::ostringstream msg;
    msg << "time_evolve: step-size instability (trace drift " << drift
        << "); use a smaller dt than " << dt << " s";
    throw StepSizeInstability(msg.str());
  }
  return DensityMatrix(rho, rho0.basis());
}

/// Drive guaranteed to give identical probe observables:
/// delta_B -> -delta_B, phi -> phi + pi.
inline DriveConfig substitution_image(const DriveConfig& drive) {
  DriveConfig d = drive;
  d.delta_b = -drive.delta_b;
  d.phi = reduce_phase(drive.phi + std::numbers::pi);
  return d;
}

/// Probe-coupled coherence rho_1X + rho_2Y of a circular-basis state.
inline cplx probe_coherence(const DensityMatrix& rho) {
  const DensityMatrix lin = basis_change_state(rho, Basis::linear);
  return lin(level::e1, level::gx) + lin(level::e2, level::gy);
}

}  // namespace dlambda
