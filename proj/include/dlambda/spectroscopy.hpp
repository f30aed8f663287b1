#pragma once

// Parameter sweeps, weak-probe linear response, group-velocity classification
// and frequency-domain pulse propagation.
//
// Weak-probe response.  The probe is treated as a phase-locked pair of
// sidebands around the control carrier (a real envelope times e^{i phi}), so
// at detuning delta the atoms see, at e^{-i delta t},
//   W = e^{i phi} (|1><X| + |2><Y|) + e^{-i phi} (|X><1| + |Y><2|).
// The second term is the conjugate-sideband (four-wave-mixing) drive that
// makes the response depend on the relative phase.  First-order harmonic
// balance then gives (G0 + i delta) x = i [W, rho0], where rho0 is the
// steady state with the probe off.

#include "dlambda/core.hpp"
#include "dlambda/liouvillian.hpp"
#include "dlambda/propagation.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <string>
#include <thread>
#include <vector>

namespace dlambda {

/// Evaluates fn(i) for i in [0, n) on up to hardware_concurrency workers and
/// returns the results in index order.  The first exception is rethrown.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn, unsigned max_workers = 0)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  unsigned workers = max_workers ? max_workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> jobs;
  for (unsigned w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

enum class SweepVariable { phase, b_field, probe_detuning };

/// Grid values are radians for phase and rad/s for the two frequency axes.
struct SweepSpec {
  SweepVariable variable = SweepVariable::phase;
  std::vector<double> grid;
  DriveConfig base_drive;
  AtomParams params;

  void validate(SweepVariable expected) const {
    if (variable != expected) throw InvalidArgument("SweepSpec: wrong sweep variable for this operation");
    if (grid.empty()) throw InvalidArgument("SweepSpec: empty grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) throw InvalidArgument("SweepSpec: grid must be strictly increasing");
  }
};

/// n points uniformly covering [lo, hi) (periodic) or [lo, hi] (closed).
inline std::vector<double> uniform_grid(double lo, double hi, int n, bool periodic) {
  if (n < 1) throw InvalidArgument("uniform_grid: need at least one point");
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double step = (hi - lo) / (periodic ? n : n - 1);
  for (int i = 0; i < n; ++i) g[i] = lo + step * i;
  if (!periodic) g.back() = hi;
  return g;
}

struct SweepDiagnostics {
  double max_refinement_delta = 0.0;
  double max_residual = 0.0;
  std::vector<std::string> warnings;  // prefixed with the grid point
};

struct SweepOptions {
  int n_steps = default_propagation_steps;
  bool refinement_check = true;
  unsigned workers = 0;
  /// Receives every steady state computed; must be thread safe when workers != 1.
  std::function<void(double z, const DensityMatrix&)> on_state;
  SweepDiagnostics* diagnostics = nullptr;
};

namespace detail {

inline Curve sweep(const SweepSpec& spec, const SweepOptions& opt, const char* xname,
                   DriveConfig (*make)(const DriveConfig&, double)) {
  PropagateOptions popt;
  popt.refinement_check = opt.refinement_check;
  popt.on_state = opt.on_state;
  const auto results = parallel_map(
      spec.grid.size(),
      [&](std::size_t i) {
        const DriveConfig d = make(spec.base_drive, spec.grid[i]);
        try {
          return transmission_result(spec.params, d, opt.n_steps, popt);
        } catch (const Error& e) {
          throw Error(std::string("sweep point ") + xname + " = " + std::to_string(spec.grid[i]) +
                      ": " + e.what());
        }
      },
      opt.workers);
  Curve c;
  c.abscissa_name = xname;
  c.ordinate_name = "transmission";
  for (std::size_t i = 0; i < results.size(); ++i) {
    c.push_back(spec.grid[i], results[i].value);
    if (opt.diagnostics) {
      auto& d = *opt.diagnostics;
      d.max_refinement_delta = std::max(d.max_refinement_delta, results[i].refinement_delta);
      d.max_residual = std::max(d.max_residual, results[i].max_residual);
      for (const auto& w : results[i].warnings)
        d.warnings.push_back(std::string(xname) + " = " + std::to_string(spec.grid[i]) + ": " + w);
    }
  }
  return c;
}

}  // namespace detail

/// Probe transmission vs relative phase.
inline Curve sweep_phase(const SweepSpec& spec, const SweepOptions& opt = {}) {
  spec.validate(SweepVariable::phase);
  // The grid is used as given; phases are not reduced here so the abscissa stays monotone.
  return detail::sweep(spec, opt, "phi_rad", [](const DriveConfig& d, double x) {
    DriveConfig r = d;
    r.phi = reduce_phase(x);
    return r;
  });
}

/// Probe transmission vs Zeeman splitting at fixed phase.
inline Curve sweep_bfield(const SweepSpec& spec, const SweepOptions& opt = {}) {
  spec.validate(SweepVariable::b_field);
  return detail::sweep(spec, opt, "delta_b_rad_s",
                       [](const DriveConfig& d, double x) { return d.with_delta_b(x); });
}

/// Max minus min of the ordinate.
inline double modulation_depth(const Curve& c) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [x, y] : c.points) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  return hi - lo;
}

inline double mean_value(const Curve& c) {
  double s = 0.0;
  for (const auto& [x, y] : c.points) s += y;
  return c.empty() ? 0.0 : s / static_cast<double>(c.size());
}

struct ProbeResponse {
  cplx chi;                        // -(rho_1X + rho_2Y) / Omega_p, first order
  double truncation_estimate = 0;  // |second-order sideband| / |first-order sideband|
  std::vector<std::string> warnings;
};

inline constexpr double truncation_warn_level = 1e-2;

namespace detail {

/// Solves (G + i shift) x = rhs for a traceless x.  The first-population row
/// is replaced by tr(x) = 0, which every first-order response satisfies and
/// which keeps the system regular at shift = 0.
class ShiftedSolver {
public:
  ShiftedSolver(const Matrix16c& g, double shift) {
    scale_ = std::max(1.0, g.cwiseAbs().rowwise().sum().maxCoeff());
    Matrix16c a = g;
    a.diagonal().array() += cplx{0.0, shift};
    a.row(0) = scale_ * trace_row<4>();
    lu_.compute(a);
    if (!(lu_rcond(lu_) > degenerate_rcond))
      throw SolverFailure("linear-response system is singular");
  }

  Matrix4c solve(const Matrix4c& rhs) const {
    Vector16c b = vectorize(rhs);
    b(0) = 0.0;
    return unvectorize(lu_.solve(b));
  }

private:
  double scale_ = 1.0;
  Eigen::PartialPivLU<Matrix16c> lu_;
};

inline Matrix4c commutator(const Matrix4c& a, const Matrix4c& b) { return a * b - b * a; }

}  // namespace detail

/// Unit-amplitude probe-sideband perturbation W in the linear basis.
inline Matrix4c probe_sideband_operator(double phi) {
  using namespace level;
  Matrix4c w = Matrix4c::Zero();
  const cplx ph = std::polar(1.0, phi);
  w(e1, gx) = w(e2, gy) = ph;
  w(gx, e1) = w(gy, e2) = std::conj(ph);
  return w;
}

/// First-order probe response at detuning drive.delta_probe, control on
/// resonance.  Re chi is proportional to the probe refractive index and
/// Im chi > 0 means absorption.
inline ProbeResponse weak_probe_response(const AtomParams& params, const DriveConfig& drive) {
  using namespace level;
  params.validate();
  ProbeResponse out;
  if (drive.omega_p > drive.omega_c / 3.0)
    out.warnings.emplace_back("weak-probe condition: omega_p exceeds omega_c / 3");

  const Matrix16c g0 = linear_generator(params, drive.delta_b, drive.control(), 0.0);
  const Matrix4c rho0 = steady_state_matrix<4>(g0);
  const cplx i{0.0, 1.0};
  const Matrix4c w = probe_sideband_operator(drive.phi);

  const detail::ShiftedSolver first(g0, drive.delta_probe);
  const Matrix4c x = first.solve(i * detail::commutator(w, rho0));
  out.chi = -(x(e1, gx) + x(e2, gy)) / std::polar(1.0, drive.phi);

  // Next sideband driven by the first-order response, scaled by |Omega_p|.
  const detail::ShiftedSolver second(g0, 2.0 * drive.delta_probe);
  const Matrix4c y = second.solve(i * detail::commutator(w, x));
  const double xn = x.norm();
  out.truncation_estimate = xn > 0.0 ? drive.omega_p * y.norm() / xn : 0.0;
  if (out.truncation_estimate > truncation_warn_level)
    out.warnings.emplace_back("first-sideband truncation estimate " +
                              std::to_string(out.truncation_estimate) + " exceeds 1%");
  return out;
}

/// Re chi over a probe-detuning grid (rad/s).
inline Curve refractive_spectrum(const SweepSpec& spec, unsigned workers = 0) {
  spec.validate(SweepVariable::probe_detuning);
  const auto chis = parallel_map(
      spec.grid.size(),
      [&](std::size_t k) {
        DriveConfig d = spec.base_drive;
        d.delta_probe = spec.grid[k];
        return weak_probe_response(spec.params, d).chi;
      },
      workers);
  Curve c;
  c.abscissa_name = "delta_probe_rad_s";
  c.ordinate_name = "re_chi";
  for (std::size_t k = 0; k < chis.size(); ++k) {
    if (!std::isfinite(chis[k].real())) throw SolverFailure("non-finite response in spectrum");
    c.push_back(spec.grid[k], chis[k].real());
  }
  return c;
}

inline ComplexCurve complex_spectrum(const SweepSpec& spec, unsigned workers = 0) {
  spec.validate(SweepVariable::probe_detuning);
  const auto chis = parallel_map(
      spec.grid.size(),
      [&](std::size_t k) {
        DriveConfig d = spec.base_drive;
        d.delta_probe = spec.grid[k];
        return weak_probe_response(spec.params, d).chi;
      },
      workers);
  ComplexCurve c;
  c.abscissa_name = "delta_probe_rad_s";
  c.ordinate_name = "chi";
  for (std::size_t k = 0; k < chis.size(); ++k) c.push_back(spec.grid[k], chis[k]);
  return c;
}

enum class LightClass { slow, fast, flat };

inline const char* to_string(LightClass c) {
  switch (c) {
    case LightClass::slow: return "slow";
    case LightClass::fast: return "fast";
    case LightClass::flat: return "flat";
  }
  return "?";
}

struct GroupVelocity {
  double slope = 0.0;           // d(Re chi)/d(abscissa) by least squares
  double slope_std_error = 0.0;
  LightClass classification = LightClass::flat;
  int points_used = 0;
};

/// Least-squares slope of the spectrum over [-window, window].  A positive
/// slope (normal dispersion, dn/domega > 0) is slow light.  The slope counts
/// as flat when slope * window is within 1e-3 of the largest |ordinate| in
/// the window.
inline GroupVelocity group_velocity_class(const Curve& spectrum, double window) {
  if (!(window > 0.0)) throw InvalidArgument("group_velocity_class: window must be > 0");
  std::vector<std::pair<double, double>> pts;
  double xmin = INFINITY, xmax = -INFINITY;
  for (const auto& [x, y] : spectrum.points) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    if (std::abs(x) <= window * (1.0 + 1e-12)) pts.emplace_back(x, y);
  }
  if (pts.size() < 5 || xmin > -window * (1.0 - 1e-12) || xmax < window * (1.0 - 1e-12))
    throw InvalidArgument("group_velocity_class: need >= 5 points spanning [-window, window]");

  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, ymax = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    ymax = std::max(ymax, std::abs(y));
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  GroupVelocity gv;
  gv.points_used = static_cast<int>(pts.size());
  gv.slope = sxy / sxx;
  double ssr = 0;
  for (const auto& [x, y] : pts) {
    const double r = y - (my + gv.slope * (x - mx));
    ssr += r * r;
  }
  gv.slope_std_error = std::sqrt(ssr / (n - 2.0) / sxx);
  const double tol = 1e-3 * ymax / window;
  gv.classification = gv.slope > tol ? LightClass::slow
                      : gv.slope < -tol ? LightClass::fast
                                        : LightClass::flat;
  return gv;
}

/// Gaussian probe pulse.  fwhm refers to the intensity envelope.
struct PulseSpec {
  double fwhm = 5e-3;
  double peak_omega_p = 0.0;
  double carrier_detuning = 0.0;
  double time_window = 80e-3;
  int n_samples = 512;

  void validate() const {
    if (!(fwhm > 0.0)) throw InvalidArgument("PulseSpec: fwhm must be > 0");
    if (!(time_window >= 8.0 * fwhm)) throw InvalidArgument("PulseSpec: time_window must be >= 8 fwhm");
    if (n_samples < 256 || (n_samples & (n_samples - 1)) != 0)
      throw InvalidArgument("PulseSpec: n_samples must be a power of two >= 256");
  }
};

/// Single-pass transfer of weak probe sidebands through the cell.
///
/// The control carrier (and any probe-polarized light it generates through
/// the Zeeman coupling) is propagated first; the probe is then a first-order
/// perturbation of the two circular fields at e^{-i delta t}, coupled to the
/// conjugate of the perturbation at e^{+i delta t}.  The state
///   y = (dW1(+d), dW2(+d), conj dW1(-d), conj dW2(-d))
/// obeys a linear 4x4 system along z whose coefficients come from the
/// linear response of the local carrier steady state.
class SidebandPropagator {
public:
  SidebandPropagator(const AtomParams& params, const DriveConfig& drive,
                     int n_steps = default_propagation_steps)
      : params_(params), drive_(drive), n_steps_(n_steps) {
    if (n_steps < min_propagation_steps)
      throw InvalidArgument("SidebandPropagator: n_steps must be >= " +
                            std::to_string(min_propagation_steps));
    params.validate();
    kappa_ = calibrate_kappa(params);
    DriveConfig carrier_drive = drive;
    carrier_drive.omega_p = 0.0;
    carrier_drive.delta_probe = 0.0;
    // Carrier sampled at half steps so every RK4 stage position is a node.
    PropagateOptions opt;
    opt.refinement_check = false;
    const auto carrier = propagate(input_fields(carrier_drive), params, carrier_drive,
                                   2 * n_steps, opt);
    const Matrix16c diss = dissipator_superop<4>(jump_operators(params));
    nodes_.reserve(carrier.fields_along_z.size());
    for (const auto& f : carrier.fields_along_z) {
      Node node;
      node.generator = commutator_superop<4>(build_hamiltonian_circular(params, carrier_drive, f)) + diss;
      node.rho = steady_state_matrix<4>(node.generator);
      nodes_.push_back(std::move(node));
    }
    carrier_out_ = carrier.output();
  }

  /// Transfer matrix y(L) = T y(0) for sideband detuning delta.
  Eigen::Matrix4cd transfer_matrix(double delta) const {
    const double h = params_.cell_length / n_steps_;
    Eigen::Matrix4cd total = Eigen::Matrix4cd::Identity();
    if (kappa_ == 0.0) return total;
    std::vector<Eigen::Matrix4cd> coeff(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) coeff[k] = coupling(nodes_[k], delta);
    const Eigen::Matrix4cd id = Eigen::Matrix4cd::Identity();
    for (int n = 0; n < n_steps_; ++n) {
      const auto& c1 = coeff[2 * n];
      const auto& c2 = coeff[2 * n + 1];
      const auto& c4 = coeff[2 * n + 2];
      const Eigen::Matrix4cd k1 = c1;
      const Eigen::Matrix4cd k2 = c2 * (id + 0.5 * h * k1);
      const Eigen::Matrix4cd k3 = c2 * (id + 0.5 * h * k2);
      const Eigen::Matrix4cd k4 = c4 * (id + h * k3);
      const Eigen::Matrix4cd step = id + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      total = (step * total).eval();
    }
    return total;
  }

  /// Output probe sideband at +delta over input probe sideband, for a probe
  /// with real envelope and phase phi (so the -delta sideband is its mirror).
  cplx probe_transfer(double delta) const {
    const cplx ph = std::polar(1.0, drive_.phi);
    Eigen::Vector4cd y0;
    y0 << ph * inv_sqrt2, -ph * inv_sqrt2, std::conj(ph) * inv_sqrt2, -std::conj(ph) * inv_sqrt2;
    const Eigen::Vector4cd y = transfer_matrix(delta) * y0;
    return (y(0) - y(1)) * inv_sqrt2 / ph;
  }

  const FieldPair& carrier_output() const { return carrier_out_; }
  double kappa() const { return kappa_; }

private:
  struct Node {
    Matrix16c generator;
    Matrix4c rho;
  };

  Eigen::Matrix4cd coupling(const Node& node, double delta) const {
    using namespace level;
    static const std::array<Matrix4c, 4> basis_ops = [] {
      std::array<Matrix4c, 4> ops;
      Matrix4c m1 = Matrix4c::Zero(), m2 = Matrix4c::Zero();
      m1(e2, g3) = 1.0;
      m1(e1, g3) = 1.0;
      m2(e2, g4) = 1.0;
      m2(e1, g4) = -1.0;
      ops = {m1, m2, m1.adjoint(), m2.adjoint()};
      return ops;
    }();
    const detail::ShiftedSolver solver(node.generator, delta);
    const cplx i{0.0, 1.0};
    Eigen::Matrix4cd c;
    for (int k = 0; k < 4; ++k) {
      const Matrix4c r = solver.solve(i * detail::commutator(basis_ops[k], node.rho));
      c(0, k) = cplx{0.0, -kappa_} * (r(e2, g3) + r(e1, g3));
      c(1, k) = cplx{0.0, -kappa_} * (r(e2, g4) - r(e1, g4));
      c(2, k) = cplx{0.0, kappa_} * (r(g3, e2) + r(g3, e1));
      c(3, k) = cplx{0.0, kappa_} * (r(g4, e2) - r(g4, e1));
    }
    return c;
  }

  AtomParams params_;
  DriveConfig drive_;
  int n_steps_;
  double kappa_ = 0.0;
  std::vector<Node> nodes_;
  FieldPair carrier_out_;
};

struct PulseResult {
  Curve input_envelope;   // |Omega_p(t)|^2 / peak input, time in seconds
  Curve output_envelope;  // same normalization
  double fractional_delay = 0.0;        // (t_out - t_in) / fwhm, negative for advance
  double group_delay_estimate = 0.0;    // d arg T / d delta at the carrier, / fwhm
};

namespace detail {

/// Peak time with a parabolic fit through the largest sample and its neighbours.
inline double peak_time(const std::vector<double>& t, const std::vector<double>& p) {
  const auto it = std::max_element(p.begin(), p.end());
  const std::size_t k = static_cast<std::size_t>(it - p.begin());
  if (k == 0 || k + 1 == p.size()) return t[k];
  const double ym = p[k - 1], y0 = p[k], yp = p[k + 1];
  const double den = ym - 2.0 * y0 + yp;
  const double off = den != 0.0 ? 0.5 * (ym - yp) / den : 0.0;
  return t[k] + off * (t[1] - t[0]);
}

}  // namespace detail

/// Propagates a Gaussian probe pulse through the cell by filtering its
/// spectrum with the sideband transfer function.
inline PulseResult pulse_response(const AtomParams& params, const DriveConfig& drive,
                                  const PulseSpec& pulse, int n_steps = default_propagation_steps,
                                  unsigned workers = 0) {
  pulse.validate();
  const int n = pulse.n_samples;
  const double dt = pulse.time_window / n;
  const double t0 = 0.5 * pulse.time_window;
  // Amplitude exp(-2 ln2 t^2 / fwhm^2) gives an intensity FWHM of fwhm.
  const double a = 2.0 * std::log(2.0) / (pulse.fwhm * pulse.fwhm);

  std::vector<double> t(n);
  std::vector<cplx> envelope(n);
  for (int k = 0; k < n; ++k) {
    t[k] = k * dt;
    const double s = t[k] - t0;
    envelope[k] = std::exp(-a * s * s) * std::polar(1.0, -pulse.carrier_detuning * s);
  }

  Eigen::FFT<double> fft;
  std::vector<cplx> spectrum;
  fft.fwd(spectrum, envelope);

  // Eigen's inverse transform is sum_k X_k e^{+i w_k t}, i.e. the sideband
  // e^{-i delta t} with delta = -w_k.
  std::vector<double> delta(n);
  double peak = 0.0;
  for (int k = 0; k < n; ++k) {
    const int kk = k <= n / 2 ? k : k - n;
    delta[k] = -two_pi * kk / pulse.time_window;
    peak = std::max(peak, std::abs(spectrum[k]));
  }
  if (std::abs(spectrum[n / 2]) > 1e-6 * peak)
    throw InvalidArgument("pulse_response: pulse bandwidth exceeds the sampled frequency span");

  std::vector<std::size_t> active;
  for (int k = 0; k < n; ++k)
    if (std::abs(spectrum[k]) > 1e-13 * peak) active.push_back(static_cast<std::size_t>(k));

  PulseResult out;
  std::vector<cplx> filtered(n, cplx{});
  const bool transparent = params.optical_depth == 0.0;
  if (transparent) {
    filtered = spectrum;
  } else {
    const SidebandPropagator prop(params, drive, n_steps);
    const auto transfer = parallel_map(
        active.size(), [&](std::size_t i) { return prop.probe_transfer(delta[active[i]]); }, workers);
    for (std::size_t i = 0; i < active.size(); ++i)
      filtered[active[i]] = spectrum[active[i]] * transfer[i];
    const double d = two_pi * 1e-3 / pulse.fwhm;
    const cplx tp = prop.probe_transfer(pulse.carrier_detuning + d);
    const cplx tm = prop.probe_transfer(pulse.carrier_detuning - d);
    out.group_delay_estimate = std::arg(tp / tm) / (2.0 * d) / pulse.fwhm;
  }

  std::vector<cplx> output;
  fft.inv(output, filtered);

  std::vector<double> pin(n), pout(n);
  for (int k = 0; k < n; ++k) {
    pin[k] = std::norm(envelope[k]);
    pout[k] = transparent ? pin[k] : std::norm(output[k]);
  }
  out.input_envelope.abscissa_name = out.output_envelope.abscissa_name = "t_s";
  out.input_envelope.ordinate_name = "input_power";
  out.output_envelope.ordinate_name = "output_power";
  for (int k = 0; k < n; ++k) {
    out.input_envelope.push_back(t[k], pin[k]);
    out.output_envelope.push_back(t[k], pout[k]);
  }
  out.fractional_delay = transparent ? 0.0 : (detail::peak_time(t, pout) - detail::peak_time(t, pin)) / pulse.fwhm;
  return out;
}

}  // namespace dlambda
