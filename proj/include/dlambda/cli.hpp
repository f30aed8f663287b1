#pragma once

// Run configuration, key = value parsing and emission, presets, and the run
// driver that produces a CSV table plus a JSON sidecar.
//
// Configuration values are in boundary units: frequencies in Hz, phases in
// radians, lengths in meters, times in seconds.  The 2 pi is applied when the
// config is turned into AtomParams / DriveConfig.

#include "dlambda/core.hpp"
#include "dlambda/liouvillian.hpp"
#include "dlambda/propagation.hpp"
#include "dlambda/spectroscopy.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dlambda::cli {

enum class Mode { steady, transmit, sweep_phase, sweep_b, spectrum, pulse };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::steady: return "steady";
    case Mode::transmit: return "transmit";
    case Mode::sweep_phase: return "sweep-phase";
    case Mode::sweep_b: return "sweep-b";
    case Mode::spectrum: return "spectrum";
    case Mode::pulse: return "pulse";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::steady, Mode::transmit, Mode::sweep_phase, Mode::sweep_b, Mode::spectrum,
                 Mode::pulse})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

/// Line 0 means the value came from the command line or a preset.
class ConfigError : public InvalidArgument {
public:
  ConfigError(int line, const std::string& msg)
      : InvalidArgument(location(line) + msg), line_(line) {}
  int line() const { return line_; }

private:
  static std::string location(int line) {
    return line > 0 ? "line " + std::to_string(line) + ": " : "";
  }
  int line_;
};

struct RunConfig {
  Mode mode = Mode::transmit;
  std::string preset;

  double gamma_e_hz = 0.0;
  double gamma_pop_hz = 0.0;
  double gamma_coh_hz = 0.0;
  double delta_exc_hz = 0.0;
  double od = 0.0;
  double cell_length_m = 0.0;

  double delta_b_hz = 0.0;
  double phi_rad = 0.0;
  double omega_c_hz = 0.0;
  double omega_p_hz = 0.0;
  double delta_probe_hz = 0.0;

  double phi_min_rad = 0.0;
  double phi_max_rad = two_pi;  // excluded: the phase grid is periodic
  double delta_b_min_hz = -100.0;
  double delta_b_max_hz = 100.0;
  double delta_probe_min_hz = -50.0;
  double delta_probe_max_hz = 50.0;
  int points = 64;

  double window_hz = 10.0;
  double pulse_fwhm_s = 5e-3;
  double pulse_window_s = 80e-3;
  int pulse_samples = 512;

  int steps = default_propagation_steps;
  int workers = 0;
  std::string out = "out.csv";

  AtomParams atom() const {
    AtomParams p;
    p.gamma_e = hz(gamma_e_hz);
    p.gamma_pop = hz(gamma_pop_hz);
    p.gamma_coh = hz(gamma_coh_hz);
    p.delta_exc = hz(delta_exc_hz);
    p.optical_depth = od;
    p.cell_length = cell_length_m;
    return p;
  }
  DriveConfig drive() const {
    return DriveConfig(hz(delta_b_hz), phi_rad, hz(omega_c_hz), hz(omega_p_hz), hz(delta_probe_hz));
  }
  std::vector<double> grid() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

using Member = std::variant<double RunConfig::*, int RunConfig::*, std::string RunConfig::*>;

struct KeySpec {
  const char* name;
  Member member;
  bool required;
  // Returns an empty string when the value is acceptable, else the complaint.
  std::string (*check)(double);
};

inline std::string positive(double v) { return v > 0.0 ? "" : "must be > 0"; }
inline std::string non_negative(double v) { return v >= 0.0 ? "" : "must be >= 0"; }
inline std::string any_finite(double v) { return std::isfinite(v) ? "" : "must be finite"; }
inline std::string at_least_one(double v) { return v >= 1.0 ? "" : "must be >= 1"; }
inline std::string steps_range(double v) {
  return v >= min_propagation_steps ? "" : "must be >= " + std::to_string(min_propagation_steps);
}
inline std::string power_of_two(double v) {
  const auto n = static_cast<long long>(v);
  return n >= 256 && (n & (n - 1)) == 0 ? "" : "must be a power of two >= 256";
}

inline const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"gamma_e_hz", &RunConfig::gamma_e_hz, true, positive},
      {"gamma_pop_hz", &RunConfig::gamma_pop_hz, true, positive},
      {"gamma_coh_hz", &RunConfig::gamma_coh_hz, true, positive},
      {"delta_exc_hz", &RunConfig::delta_exc_hz, true, positive},
      {"od", &RunConfig::od, true, non_negative},
      {"cell_length_m", &RunConfig::cell_length_m, true, positive},
      {"delta_b_hz", &RunConfig::delta_b_hz, false, any_finite},
      {"phi_rad", &RunConfig::phi_rad, false, any_finite},
      {"omega_c_hz", &RunConfig::omega_c_hz, true, non_negative},
      {"omega_p_hz", &RunConfig::omega_p_hz, true, non_negative},
      {"delta_probe_hz", &RunConfig::delta_probe_hz, false, any_finite},
      {"phi_min_rad", &RunConfig::phi_min_rad, false, any_finite},
      {"phi_max_rad", &RunConfig::phi_max_rad, false, any_finite},
      {"delta_b_min_hz", &RunConfig::delta_b_min_hz, false, any_finite},
      {"delta_b_max_hz", &RunConfig::delta_b_max_hz, false, any_finite},
      {"delta_probe_min_hz", &RunConfig::delta_probe_min_hz, false, any_finite},
      {"delta_probe_max_hz", &RunConfig::delta_probe_max_hz, false, any_finite},
      {"points", &RunConfig::points, false, at_least_one},
      {"window_hz", &RunConfig::window_hz, false, positive},
      {"pulse_fwhm_s", &RunConfig::pulse_fwhm_s, false, positive},
      {"pulse_window_s", &RunConfig::pulse_window_s, false, positive},
      {"pulse_samples", &RunConfig::pulse_samples, false, power_of_two},
      {"steps", &RunConfig::steps, false, steps_range},
      {"workers", &RunConfig::workers, false, non_negative},
      {"out", &RunConfig::out, false, nullptr},
  };
  return table;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// One `key = value` line of a configuration document.
struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Splits a document into entries.  Blank lines and '#' comments are
/// skipped; duplicate keys are rejected.
inline std::vector<Entry> parse_document(std::string_view text) {
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = detail::trim(std::string_view(raw).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    Entry e{detail::trim(std::string_view(body).substr(0, eq)),
            detail::trim(std::string_view(body).substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(line, "missing key before '='");
    if (e.value.empty()) throw ConfigError(line, "missing value for '" + e.key + "'");
    for (const auto& prev : entries)
      if (prev.key == e.key)
        throw ConfigError(line, "duplicate key '" + e.key + "' (first set on line " +
                                    std::to_string(prev.line) + ")");
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Replaces or appends entries; used for command-line overrides.
inline void merge_entries(std::vector<Entry>& base, const std::vector<Entry>& overrides) {
  for (const auto& o : overrides) {
    bool found = false;
    for (auto& b : base)
      if (b.key == o.key) {
        b = o;
        found = true;
      }
    if (!found) base.push_back(o);
  }
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig3-cold", "fig4-warm"};
  return names;
}

/// Key/value pairs a preset supplies.  Explicit keys override them.
inline std::vector<Entry> preset_entries(const std::string& name) {
  if (name == "fig3-cold")
    return {{"gamma_e_hz", "6e6"},      {"gamma_pop_hz", "10"},    {"gamma_coh_hz", "10"},
            {"delta_exc_hz", "800e6"},  {"od", "0.15"},           {"cell_length_m", "0.075"},
            {"omega_c_hz", "20e3"},     {"omega_p_hz", "5e3"}};
  if (name == "fig4-warm")
    return {{"gamma_e_hz", "500e6"},    {"gamma_pop_hz", "25"},    {"gamma_coh_hz", "28"},
            {"delta_exc_hz", "800e6"},  {"od", "15"},             {"cell_length_m", "0.075"},
            {"omega_c_hz", "240e3"},    {"omega_p_hz", "60e3"}};
  return {};
}

inline bool is_sweep(Mode m) {
  return m == Mode::sweep_phase || m == Mode::sweep_b || m == Mode::spectrum;
}

/// Builds and validates a RunConfig from entries (preset first, then keys).
inline RunConfig build_config(const std::vector<Entry>& entries, int last_line = 0) {
  RunConfig c;
  std::map<std::string, int> seen;  // key -> line (0 for preset)

  std::vector<Entry> resolved;
  for (const auto& e : entries)
    if (e.key == "preset") {
      if (preset_entries(e.value).empty()) {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError(e.line, "unknown preset '" + e.value + "' (known: " + known + ")");
      }
      c.preset = e.value;
      resolved = preset_entries(e.value);
    }
  for (const auto& e : entries)
    if (e.key != "preset") merge_entries(resolved, {e});

  bool have_mode = false;
  for (const auto& e : resolved) {
    if (e.key == "mode") {
      const auto m = parse_mode(e.value);
      if (!m) throw ConfigError(e.line, "unknown mode '" + e.value + "'");
      c.mode = *m;
      have_mode = true;
      continue;
    }
    const detail::KeySpec* spec = nullptr;
    for (const auto& k : detail::key_table())
      if (e.key == k.name) spec = &k;
    if (!spec) throw ConfigError(e.line, "unknown key '" + e.key + "'");
    seen[e.key] = e.line;

    if (const auto* s = std::get_if<std::string RunConfig::*>(&spec->member)) {
      c.*(*s) = e.value;
      continue;
    }
    double v = 0.0;
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v))
      throw ConfigError(e.line, "'" + e.key + "' expects a number, got '" + e.value + "'");
    if (const std::string why = spec->check(v); !why.empty())
      throw ConfigError(e.line, "'" + e.key + "' " + why + " (got " + e.value + ")");
    if (const auto* d = std::get_if<double RunConfig::*>(&spec->member)) {
      c.*(*d) = v;
    } else {
      const auto* i = std::get_if<int RunConfig::*>(&spec->member);
      if (v != std::floor(v) || std::abs(v) > 1e9)
        throw ConfigError(e.line, "'" + e.key + "' expects an integer, got '" + e.value + "'");
      c.*(*i) = static_cast<int>(v);
    }
  }

  std::vector<std::string> missing;
  if (!have_mode) missing.emplace_back("mode");
  for (const auto& k : detail::key_table())
    if (k.required && !seen.count(k.name)) missing.emplace_back(k.name);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError(last_line, "missing required keys: " + list);
  }

  auto line_of = [&](const char* key) { return seen.count(key) ? seen[key] : 0; };
  if (c.gamma_coh_hz < c.gamma_pop_hz)
    throw ConfigError(line_of("gamma_coh_hz"),
                      "gamma_coh_hz (" + detail::format_double(c.gamma_coh_hz) +
                          ") must be >= gamma_pop_hz (" + detail::format_double(c.gamma_pop_hz) + ")");
  if (is_sweep(c.mode) && c.points < 2)
    throw ConfigError(line_of("points"), "sweep modes need points >= 2");
  if (c.mode != Mode::steady && !(c.omega_p_hz > 0.0))
    throw ConfigError(line_of("omega_p_hz"), "mode " + std::string(to_string(c.mode)) +
                                                 " needs omega_p_hz > 0");
  auto check_bounds = [&](double lo, double hi, const char* lo_key, const char* hi_key) {
    if (!(hi > lo))
      throw ConfigError(std::max(line_of(lo_key), line_of(hi_key)),
                        std::string(hi_key) + " must exceed " + lo_key);
  };
  if (c.mode == Mode::sweep_phase) check_bounds(c.phi_min_rad, c.phi_max_rad, "phi_min_rad", "phi_max_rad");
  if (c.mode == Mode::sweep_b)
    check_bounds(c.delta_b_min_hz, c.delta_b_max_hz, "delta_b_min_hz", "delta_b_max_hz");
  if (c.mode == Mode::spectrum) {
    check_bounds(c.delta_probe_min_hz, c.delta_probe_max_hz, "delta_probe_min_hz",
                 "delta_probe_max_hz");
    if (c.delta_probe_min_hz > -c.window_hz || c.delta_probe_max_hz < c.window_hz)
      throw ConfigError(line_of("window_hz"), "spectrum grid must span [-window_hz, window_hz]");
  }
  if (c.mode == Mode::pulse && c.pulse_window_s < 8.0 * c.pulse_fwhm_s)
    throw ConfigError(line_of("pulse_window_s"), "pulse_window_s must be >= 8 pulse_fwhm_s");
  if (c.mode == Mode::transmit || c.mode == Mode::sweep_phase || c.mode == Mode::sweep_b ||
      c.mode == Mode::steady) {
    if (c.delta_probe_hz != 0.0)
      throw ConfigError(line_of("delta_probe_hz"),
                        "delta_probe_hz must be 0 in mode " + std::string(to_string(c.mode)));
  }
  return c;
}

inline RunConfig parse_config(std::string_view text) {
  const auto entries = parse_document(text);
  int lines = 0;
  for (char ch : text) lines += ch == '\n';
  if (!text.empty() && text.back() != '\n') ++lines;
  return build_config(entries, lines);
}

/// Every key written explicitly, so the output does not depend on presets.
inline std::string emit_config(const RunConfig& c) {
  std::ostringstream out;
  out << "mode = " << to_string(c.mode) << "\n";
  if (!c.preset.empty()) out << "preset = " << c.preset << "\n";
  for (const auto& k : detail::key_table()) {
    out << k.name << " = ";
    std::visit(
        [&](auto member) {
          if constexpr (std::is_same_v<std::remove_cvref_t<decltype(c.*member)>, double>)
            out << detail::format_double(c.*member);
          else
            out << c.*member;
        },
        k.member);
    out << "\n";
  }
  return out.str();
}

inline std::vector<double> RunConfig::grid() const {
  switch (mode) {
    case Mode::sweep_phase: return uniform_grid(phi_min_rad, phi_max_rad, points, true);
    case Mode::sweep_b: return uniform_grid(delta_b_min_hz, delta_b_max_hz, points, false);
    case Mode::spectrum: return uniform_grid(delta_probe_min_hz, delta_probe_max_hz, points, false);
    default: return {};
  }
}

struct RunOutput {
  std::string csv;
  std::string json;
};

namespace detail {

class CsvWriter {
public:
  explicit CsvWriter(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << "\n";
  }
  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      out_ << (first ? "" : ",") << format_double(v);
      first = false;
    }
    out_ << "\n";
  }
  std::string str() const { return out_.str(); }

private:
  std::ostringstream out_;
};

inline void add_unique(nlohmann::ordered_json& list, const std::string& w) {
  for (const auto& x : list)
    if (x == w) return;
  list.push_back(w);
}

}  // namespace detail

/// Computes the artifacts for a validated configuration.  Throws on solver failure.
inline RunOutput run(const RunConfig& c) {
  using nlohmann::ordered_json;
  const AtomParams params = c.atom();
  const DriveConfig drive = c.drive();
  const unsigned workers = static_cast<unsigned>(c.workers);

  ordered_json cfg = ordered_json::object();
  cfg["mode"] = to_string(c.mode);
  if (!c.preset.empty()) cfg["preset"] = c.preset;
  for (const auto& k : detail::key_table())
    std::visit([&](auto member) { cfg[k.name] = c.*member; }, k.member);
  ordered_json diag = ordered_json::object();
  ordered_json summary = ordered_json::object();
  ordered_json warnings = ordered_json::array();
  for (const auto& w : params.warnings()) detail::add_unique(warnings, w);
  std::string csv;

  switch (c.mode) {
    case Mode::steady: {
      const Liouvillian liou = build_liouvillian(params, drive, input_fields(drive));
      const SteadyStateResult ss = solve_steady_state(liou.generator, Basis::circular);
      const Matrix4c& rho = ss.rho.matrix();
      detail::CsvWriter w({"row_index", "col_index", "re_rho_dimless", "im_rho_dimless"});
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) w.row({double(i), double(j), rho(i, j).real(), rho(i, j).imag()});
      csv = w.str();
      diag["residual"] = ss.residual;
      diag["rcond"] = ss.rcond;
      diag["trace_error"] = std::abs(ss.rho.trace() - 1.0);
      diag["hermiticity_error"] = ss.rho.hermiticity_error();
      diag["min_eigenvalue"] = ss.rho.eigenvalues().minCoeff();
      summary["basis"] = "circular";
      break;
    }
    case Mode::transmit: {
      PropagateOptions opt;
      const auto t = transmission_result(params, drive, c.steps, opt);
      detail::CsvWriter w({"delta_b_hz", "phi_rad", "transmission_dimless"});
      w.row({c.delta_b_hz, drive.phi, t.value});
      csv = w.str();
      diag["max_residual"] = t.max_residual;
      diag["refinement_delta"] = t.refinement_delta;
      for (const auto& x : t.warnings) detail::add_unique(warnings, x);
      summary["transmission"] = t.value;
      break;
    }
    case Mode::sweep_phase:
    case Mode::sweep_b: {
      const bool phase = c.mode == Mode::sweep_phase;
      SweepSpec spec;
      spec.variable = phase ? SweepVariable::phase : SweepVariable::b_field;
      spec.base_drive = drive;
      spec.params = params;
      const auto xs = c.grid();
      for (double x : xs) spec.grid.push_back(phase ? x : hz(x));
      SweepDiagnostics sd;
      SweepOptions opt;
      opt.n_steps = c.steps;
      opt.workers = workers;
      opt.diagnostics = &sd;
      const Curve curve = phase ? sweep_phase(spec, opt) : sweep_bfield(spec, opt);
      detail::CsvWriter w({phase ? "phi_rad" : "delta_b_hz", "transmission_dimless"});
      for (std::size_t k = 0; k < curve.size(); ++k) w.row({xs[k], curve.points[k].second});
      csv = w.str();
      diag["max_residual"] = sd.max_residual;
      diag["max_refinement_delta"] = sd.max_refinement_delta;
      for (const auto& x : sd.warnings) detail::add_unique(warnings, x);
      const double mean = mean_value(curve);
      summary["mean_transmission"] = mean;
      summary["modulation_depth"] = modulation_depth(curve);
      summary["relative_variation"] = modulation_depth(curve) / mean;
      break;
    }
    case Mode::spectrum: {
      const auto xs = c.grid();
      std::vector<ProbeResponse> resp = parallel_map(
          xs.size(),
          [&](std::size_t k) {
            DriveConfig d = drive;
            d.delta_probe = hz(xs[k]);
            try {
              return weak_probe_response(params, d);
            } catch (const Error& e) {
              throw Error("spectrum point delta_probe_hz = " + detail::format_double(xs[k]) + ": " +
                          e.what());
            }
          },
          workers);
      detail::CsvWriter w({"delta_probe_hz", "re_chi_s_per_rad", "im_chi_s_per_rad"});
      Curve re;
      double trunc = 0.0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        w.row({xs[k], resp[k].chi.real(), resp[k].chi.imag()});
        re.push_back(xs[k], resp[k].chi.real());
        trunc = std::max(trunc, resp[k].truncation_estimate);
        for (const auto& x : resp[k].warnings) detail::add_unique(warnings, x);
      }
      csv = w.str();
      diag["max_truncation_estimate"] = trunc;
      try {
        const GroupVelocity gv = group_velocity_class(re, c.window_hz);
        summary["slope_per_hz"] = gv.slope;
        summary["slope_std_error_per_hz"] = gv.slope_std_error;
        summary["points_in_window"] = gv.points_used;
        summary["classification"] = to_string(gv.classification);
      } catch (const InvalidArgument& e) {
        summary["classification"] = nullptr;
        detail::add_unique(warnings, std::string("no slope fit: ") + e.what());
      }
      break;
    }
    case Mode::pulse: {
      PulseSpec ps;
      ps.fwhm = c.pulse_fwhm_s;
      ps.time_window = c.pulse_window_s;
      ps.n_samples = c.pulse_samples;
      ps.peak_omega_p = hz(c.omega_p_hz);
      ps.carrier_detuning = hz(c.delta_probe_hz);
      DriveConfig carrier = drive;
      carrier.delta_probe = 0.0;
      const PulseResult r = pulse_response(params, carrier, ps, c.steps, workers);
      detail::CsvWriter w({"t_s", "input_power_dimless", "output_power_dimless"});
      for (std::size_t k = 0; k < r.input_envelope.size(); ++k)
        w.row({r.input_envelope.points[k].first, r.input_envelope.points[k].second,
               r.output_envelope.points[k].second});
      csv = w.str();
      summary["fractional_delay"] = r.fractional_delay;
      summary["group_delay_estimate"] = r.group_delay_estimate;
      break;
    }
  }

  diag["warnings"] = warnings;
  ordered_json doc = ordered_json::object();
  doc["config"] = cfg;
  doc["diagnostics"] = diag;
  doc["summary"] = summary;
  return {csv, doc.dump(2) + "\n"};
}

/// Sidecar path: the CSV path with its extension replaced by .json.
inline std::string sidecar_path(const std::string& out) {
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return out.substr(0, dot) + ".json";
  return out + ".json";
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << contents;
  if (!f) throw Error("failed writing '" + path + "'");
}

}  // namespace dlambda::cli
