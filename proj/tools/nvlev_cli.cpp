// nvlev: command-line front end. Every subcommand reads a unit-annotated
// config (flat text or JSON) plus --set overrides, writes CSV data and a JSON
// run record, and exits 0 (ok), 1 (runtime/physics error) or 2 (usage).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nvlev/berry.hpp"
#include "nvlev/config.hpp"
#include "nvlev/langevin_cooling.hpp"
#include "nvlev/odmr.hpp"
#include "nvlev/rabi.hpp"
#include "nvlev/rotor_thermal.hpp"
#include "nvlev/trap.hpp"

#ifndef NVLEV_VERSION
#define NVLEV_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using nvlev::config::Dim;
using nvlev::config::KeySpec;
using nvlev::config::RunConfig;

namespace {

// ------------------------------------------------------------------ output

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : ncol_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  void row(const std::vector<double>& v) {
    if (v.size() != ncol_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << fmt(v[i]);
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t ncol_;
  std::ostringstream out_;
};

struct RunContext {
  fs::path out_dir;
  std::string prefix;
  std::optional<std::uint64_t> seed;
  json results = json::object();
  json warnings = json::array();
  json outputs = json::array();

  void write(const std::string& suffix, const std::string& body) {
    const std::string name = prefix + suffix;
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw nvlev::Error(nvlev::Errc::InvalidArgument, "cannot write " + (out_dir / name).string(), "out-dir");
    f << body;
    outputs.push_back(name);
  }
  void write_csv(const std::string& suffix, const CsvWriter& w) { write(suffix, w.str()); }
  void warn(std::string w) { warnings.push_back(std::move(w)); }
};

double hz(double omega) { return omega / nvlev::kTwoPi; }

nvlev::RotationSense sense_of(const RunConfig& c) {
  return c.get_text("rotation_sense") == "clockwise" ? nvlev::RotationSense::clockwise
                                                     : nvlev::RotationSense::counterclockwise;
}

nvlev::DriveComponent component_of(const RunConfig& c) {
  return c.get_text("component") == "transverse" ? nvlev::DriveComponent::transverse
                                                 : nvlev::DriveComponent::longitudinal;
}

const std::vector<std::string> kSenses{"clockwise", "counterclockwise"};
const std::vector<std::string> kComponents{"longitudinal", "transverse"};

// Reads column 0 and column `col` of a numeric CSV with a header line.
std::pair<std::vector<double>, std::vector<double>> read_columns(const std::string& path, const std::string& key,
                                                                 std::size_t col = 1) {
  std::istringstream in(nvlev::config::read_file(path));
  std::string line;
  std::vector<double> a, b;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> cells;
    std::size_t pos = 0;
    bool ok = true;
    while (ok && pos <= line.size()) {
      const auto comma = std::min(line.find(',', pos), line.size());
      const char* s = line.data() + pos;
      const char* e = line.data() + comma;
      while (s < e && *s == ' ') ++s;
      double v = 0.0;
      const auto r = std::from_chars(s, e, v);
      ok = r.ec == std::errc{};
      cells.push_back(v);
      pos = comma + 1;
    }
    ok = ok && cells.size() > col;
    if (!ok) throw nvlev::Error(nvlev::Errc::BadValue, "malformed CSV line " + std::to_string(lineno), key);
    a.push_back(cells[0]);
    b.push_back(cells[col]);
  }
  if (a.size() < 3) throw nvlev::Error(nvlev::Errc::BadValue, "CSV has fewer than 3 data rows", key);
  return {a, b};
}

// ------------------------------------------------------------- trap-design

std::vector<KeySpec> trap_schema() {
  return {
      {"inner_radius", Dim::length, "270 um", {}, "ring electrode inner radius a"},
      {"outer_radius", Dim::length, "450 um", {}, "ring electrode outer radius b"},
      {"drive_voltage", Dim::voltage, "300 V", {}, "RF amplitude V_d"},
      {"drive_frequency", Dim::frequency, "16 kHz", {}, "RF frequency f_d (Hz, or rad/s)"},
      {"charge", Dim::charge, "2000 e", {}, "particle charge"},
      {"radius", Dim::length, "264 nm", {}, "particle radius"},
      {"density", Dim::density, "3500 kg/m^3", {}, "particle density"},
      {"profile_min", Dim::length, "20 um", {}, "profile start height"},
      {"profile_max", Dim::length, "2000 um", {}, "profile end height"},
      {"profile_points", Dim::integer, "400", {}, "profile samples"},
  };
}

void run_trap(const RunConfig& c, RunContext& ctx) {
  const nvlev::RingTrapGeometry g{c.get("inner_radius"), c.get("outer_radius")};
  const nvlev::TrapDrive d{c.get("drive_voltage"), c.get("drive_frequency")};
  const auto p = nvlev::ChargedParticle::sphere(c.get("charge"), c.get("radius"), c.get("density"));
  const auto t = nvlev::characterize_trap(g, d, p);
  const auto st = nvlev::stability_check(t.q_z);
  auto& r = ctx.results;
  r["z0_m"] = t.z0;
  r["omega_z_rad_s"] = t.omega_z;
  r["f_z_hz"] = hz(t.omega_z);
  r["q_z"] = t.q_z;
  r["stable"] = st.stable;
  r["stability_margin"] = st.margin;
  r["depth_ev"] = t.depth;
  r["depth_position_m"] = t.depth_position;
  r["geometric_factor_per_m2"] = nvlev::geometric_factor(g);
  r["mass_kg"] = p.mass;
  if (!st.stable) ctx.warn("q_z outside the first Mathieu stability region");

  const auto n = c.get_int("profile_points");
  if (n < 2) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 2 points", "profile_points");
  const auto grid = nvlev::uniform_grid(c.get("profile_min"), c.get("profile_max"), std::size_t(n));
  const auto full = nvlev::pseudopotential_profile(g, d, p, grid, nvlev::PotentialModel::full);
  const auto harm = nvlev::pseudopotential_profile(g, d, p, grid, nvlev::PotentialModel::harmonic);
  CsvWriter w({"z_m", "potential_ev", "harmonic_ev"});
  for (std::size_t i = 0; i < grid.size(); ++i) w.row({grid[i], full[i], harm[i]});
  ctx.write_csv("_profile.csv", w);
}

// ---------------------------------------------------------------- odmr-sim

std::vector<KeySpec> odmr_schema() {
  return {
      {"axis_theta", Dim::angle, "0 deg", {}, "tilt of one <111> axis from the rotation axis"},
      {"b_static", Dim::magnetic_field, "0 G", {}, "static field along z"},
      {"rotation_rate", Dim::angular_frequency, "0 MHz", {}, "rotation rate magnitude"},
      {"rotation_sense", Dim::choice, "clockwise", kSenses},
      {"component", Dim::choice, "longitudinal", kComponents},
      {"zfs", Dim::angular_frequency, "2.87 GHz", {}, "zero-field splitting D"},
      {"strain", Dim::angular_frequency, "6.7 MHz", {}, "strain splitting E"},
      {"linewidth", Dim::angular_frequency, "19 MHz", {}, "intrinsic FWHM"},
      {"contrast", Dim::dimensionless, "0.02", {}, "peak contrast per dip"},
      {"f_min", Dim::angular_frequency, "0 GHz", {}, "sweep start (0 = auto)"},
      {"f_max", Dim::angular_frequency, "0 GHz", {}, "sweep end (0 = auto)"},
      {"f_step", Dim::angular_frequency, "0.2 MHz", {}, "sweep step"},
      {"fwhm_sweep_max", Dim::angular_frequency, "0 MHz", {}, "if > 0, FWHM vs rotation up to this rate"},
      {"fwhm_sweep_points", Dim::integer, "21", {}, "points of the FWHM sweep"},
  };
}

void run_odmr(const RunConfig& c, RunContext& ctx) {
  const auto ens = nvlev::ensemble_with_axis_at(c.get("axis_theta"));
  nvlev::LineShape line;
  line.intrinsic_fwhm = c.get("linewidth");
  line.contrast_per_dip = c.get("contrast");
  line.strain = c.get("strain");
  nvlev::NVConfiguration base;
  base.zfs = c.get("zfs");
  base.strain = 0.0;
  nvlev::FieldEnvironment env;
  env.b_static = c.get("b_static");
  env.omega_r = nvlev::signed_omega(c.get("rotation_rate"), sense_of(c));
  const auto comp = component_of(c);
  const auto thetas = nvlev::tetrahedral_thetas(ens);
  const auto centers = nvlev::dip_centers(thetas, base, line, env, comp);

  auto make_grid = [&](const std::vector<double>& cs) {
    const auto [lo, hi] = std::minmax_element(cs.begin(), cs.end());
    double a = c.get("f_min"), b = c.get("f_max");
    if (a <= 0.0) a = *lo - 6.0 * line.intrinsic_fwhm;
    if (b <= 0.0) b = *hi + 6.0 * line.intrinsic_fwhm;
    const double step = c.get("f_step");
    if (!(step > 0.0) || !(b > a)) throw nvlev::Error(nvlev::Errc::BadValue, "need f_max > f_min and f_step > 0", "f_step");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step)) + 1;
    if (n > 10'000'000) throw nvlev::Error(nvlev::Errc::BadValue, "sweep has too many points", "f_step");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = a + step * double(i);
    return g;
  };

  const auto grid = make_grid(centers);
  const auto s = nvlev::synth_spectrum(ens, line, env, comp, grid, base);
  auto& r = ctx.results;
  json th = json::array(), cen = json::array();
  for (double t : thetas) th.push_back(t * 180.0 / nvlev::kPi);
  for (double x : centers) cen.push_back(hz(x));
  r["axis_angles_deg"] = th;
  r["dip_centers_hz"] = cen;
  r["fwhm_hz"] = hz(nvlev::fwhm(s));
  CsvWriter w({"freq_hz", "contrast"});
  for (std::size_t i = 0; i < s.freq.size(); ++i) w.row({hz(s.freq[i]), s.contrast[i]});
  ctx.write_csv("_spectrum.csv", w);

  const double wmax = c.get("fwhm_sweep_max");
  if (wmax > 0.0) {
    const auto n = c.get_int("fwhm_sweep_points");
    if (n < 2) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 2 points", "fwhm_sweep_points");
    CsvWriter fw({"rotation_hz", "fwhm_hz"});
    for (double wr : nvlev::uniform_grid(0.0, wmax, std::size_t(n))) {
      nvlev::FieldEnvironment e = env;
      e.omega_r = nvlev::signed_omega(wr, sense_of(c));
      const auto g = make_grid(nvlev::dip_centers(thetas, base, line, e, comp));
      fw.row({hz(wr), hz(nvlev::fwhm(nvlev::synth_spectrum(ens, line, e, comp, g, base)))});
    }
    ctx.write_csv("_fwhm.csv", fw);
  }
}

// ------------------------------------------------------------- berry-shift

std::vector<KeySpec> berry_schema() {
  return {
      {"theta", Dim::angle, "20.7 deg", {}, "NV axis angle to the rotation axis"},
      {"b_static", Dim::magnetic_field, "0 G"},
      {"rate_min", Dim::angular_frequency, "0 MHz"},
      {"rate_max", Dim::angular_frequency, "10 MHz"},
      {"points", Dim::integer, "101"},
      {"rotation_sense", Dim::choice, "clockwise", kSenses},
      {"component", Dim::choice, "longitudinal", kComponents},
      {"ms", Dim::integer, "1", {}, "target level, +1 or -1"},
      {"zfs", Dim::angular_frequency, "2.87 GHz"},
  };
}

void run_berry(const RunConfig& c, RunContext& ctx) {
  const auto n = c.get_int("points");
  if (n < 2) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 2 points", "points");
  const int ms = int(c.get_int("ms"));
  if (ms != 1 && ms != -1) throw nvlev::Error(nvlev::Errc::BadValue, "ms must be +1 or -1", "ms");
  nvlev::ResonanceQuery q;
  q.target_ms = ms;
  q.drive_component = component_of(c);
  q.cfg.theta = c.get("theta");
  q.cfg.zfs = c.get("zfs");
  q.env.b_static = c.get("b_static");
  CsvWriter w({"rotation_hz", "resonance_hz", "shift_hz", "exact_resonance_hz"});
  for (double wr : nvlev::uniform_grid(c.get("rate_min"), c.get("rate_max"), std::size_t(n))) {
    q.env.omega_r = nvlev::signed_omega(wr, sense_of(c));
    w.row({hz(wr), hz(nvlev::resonance_frequency(q)), hz(nvlev::resonance_shift(q)),
           hz(nvlev::exact_resonance_frequency(q))});
  }
  ctx.write_csv("_shift.csv", w);
  ctx.results["closed_loop_phase_rad"] = nvlev::berry_phase_closed(ms, q.cfg.theta).phase;
}

// ----------------------------------------------------------- spin-dynamics

std::vector<KeySpec> dynamics_schema() {
  return {
      {"theta", Dim::angle, "20.7 deg"},
      {"b_static", Dim::magnetic_field, "10 mT"},
      {"rotation_rate", Dim::angular_frequency, "10 MHz"},
      {"rotation_sense", Dim::choice, "clockwise", kSenses},
      {"component", Dim::choice, "longitudinal", kComponents},
      {"ms", Dim::integer, "1"},
      {"zfs", Dim::angular_frequency, "2.87 GHz"},
      {"final_rabi", Dim::angular_frequency, "0 MHz", {}, "Rabi frequency of the last sweep (0 = auto)"},
      {"step_target", Dim::dimensionless, "0.12", {}, "|H| dt per integrator step"},
      {"threads", Dim::integer, "0", {}, "worker threads (0 = all cores)"},
  };
}

void run_dynamics(const RunConfig& c, RunContext& ctx) {
  const int ms = int(c.get_int("ms"));
  if (ms != 1 && ms != -1) throw nvlev::Error(nvlev::Errc::BadValue, "ms must be +1 or -1", "ms");
  nvlev::ResonanceQuery q;
  q.target_ms = ms;
  q.drive_component = component_of(c);
  q.cfg.theta = c.get("theta");
  q.cfg.zfs = c.get("zfs");
  q.env.b_static = c.get("b_static");
  q.env.omega_r = nvlev::signed_omega(c.get("rotation_rate"), sense_of(c));
  nvlev::LocateOptions opt;
  opt.final_rabi = c.get("final_rabi");
  opt.step_target = c.get("step_target");
  opt.threads = unsigned(std::max(0LL, c.get_int("threads")));
  const auto res = nvlev::locate_resonance_dynamics(q, opt);
  const double closed = nvlev::resonance_frequency(q);
  auto& r = ctx.results;
  r["resonance_dynamics_hz"] = hz(res.frequency);
  r["closed_form_hz"] = hz(closed);
  r["exact_eigen_hz"] = hz(nvlev::exact_resonance_frequency(q));
  r["deviation_hz"] = hz(res.frequency - closed);
  r["deviation_over_rate"] = q.env.omega_r != 0.0 ? std::abs(res.frequency - closed) / std::abs(q.env.omega_r) : 0.0;
  r["peak_transfer"] = res.peak_transfer;
  r["rabi_hz"] = hz(res.rabi);
  CsvWriter w({"freq_hz", "transfer"});
  for (std::size_t i = 0; i < res.sweep.size(); ++i) w.row({hz(res.sweep[i]), res.transfer[i]});
  ctx.write_csv("_sweep.csv", w);
}

// -------------------------------------------------------------- rabi-sweep

std::vector<KeySpec> rabi_schema() {
  return {
      {"theta", Dim::angle, "22 deg"},
      {"theta_prime", Dim::angle, "8.5 deg", {}, "microwave tilt from z in the yz-plane"},
      {"reference_rabi", Dim::frequency, "0 MHz", {}, "Omega at phi = 90 deg (0 = from b_mw)"},
      {"phi_points", Dim::integer, "73"},
      {"simulate", Dim::integer, "0", {}, "1 = also propagate the spin for each phi"},
      {"b_static", Dim::magnetic_field, "0.5 mT"},
      {"b_mw", Dim::magnetic_field, "2 G", {}, "microwave amplitude"},
      {"rotation_rate", Dim::angular_frequency, "0 Hz"},
      {"pulse_duration", Dim::time, "2 us"},
      {"pulse_samples", Dim::integer, "81"},
  };
}

void run_rabi(const RunConfig& c, RunContext& ctx) {
  const nvlev::RabiGeometry g{c.get("theta"), c.get("theta_prime")};
  const auto n = c.get_int("phi_points");
  if (n < 2) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 2 points", "phi_points");
  std::vector<double> phis(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < phis.size(); ++i) phis[i] = nvlev::kTwoPi * double(i) / double(n - 1);
  double ref = c.get("reference_rabi");
  if (ref == 0.0) ref = hz(nvlev::rabi_frequency_analytic(nvlev::kGammaElectron, c.get("b_mw"), g, nvlev::kPi / 2.0));
  const auto omega = nvlev::phase_sweep(g, phis, ref);
  const bool sim = c.get_int("simulate") != 0;

  std::vector<double> sim_hz(phis.size(), std::nan(""));
  std::optional<CsvWriter> traces;
  if (sim) {
    traces.emplace(std::vector<std::string>{"phi_deg", "t_s", "population"});
    nvlev::NVConfiguration cfg;
    cfg.theta = g.theta;
    nvlev::FieldEnvironment env;
    env.b_static = c.get("b_static");
    env.mw_amplitude = c.get("b_mw");
    env.mw_tilt = g.theta_prime;
    env.omega_r = c.get("rotation_rate");
    nvlev::PulseSequence seq;
    seq.mw_duration = c.get("pulse_duration");
    if (env.omega_r != 0.0) seq.rotation_period = nvlev::kTwoPi / std::abs(env.omega_r);
    for (const auto& w : seq.warnings()) ctx.warn(w);
    const auto samples = c.get_int("pulse_samples");
    if (samples < 8) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 8 samples", "pulse_samples");
    const auto tr = nvlev::numeric::parallel_map(phis.size(), [&](std::size_t i) {
      nvlev::PulseSequence s = seq;
      s.mw_start_phase = phis[i];
      return nvlev::simulate_rabi(cfg, env, s, std::size_t(samples));
    });
    for (std::size_t i = 0; i < phis.size(); ++i) {
      sim_hz[i] = hz(nvlev::fit_rabi(tr[i]).omega);
      for (std::size_t k = 0; k < tr[i].pulse_length.size(); ++k)
        traces->row({phis[i] * 180.0 / nvlev::kPi, tr[i].pulse_length[k], tr[i].population[k]});
    }
  }
  CsvWriter w(sim ? std::vector<std::string>{"phi_deg", "rabi_factor", "rabi_hz", "simulated_rabi_hz"}
                  : std::vector<std::string>{"phi_deg", "rabi_factor", "rabi_hz"});
  for (std::size_t i = 0; i < phis.size(); ++i) {
    std::vector<double> row{phis[i] * 180.0 / nvlev::kPi, nvlev::rabi_factor(g, phis[i]), omega[i]};
    if (sim) row.push_back(sim_hz[i]);
    w.row(row);
  }
  ctx.write_csv("_phase.csv", w);
  if (traces) ctx.write_csv("_traces.csv", *traces);

  const auto [mn, mx] = std::minmax_element(omega.begin(), omega.end());
  auto& r = ctx.results;
  r["ratio_90_over_180"] = nvlev::rabi_factor(g, nvlev::kPi / 2.0) / nvlev::rabi_factor(g, nvlev::kPi);
  r["argmin_phi_deg"] = phis[std::size_t(mn - omega.begin())] * 180.0 / nvlev::kPi;
  r["argmax_phi_deg"] = phis[std::size_t(mx - omega.begin())] * 180.0 / nvlev::kPi;
  r["min_rabi_hz"] = *mn;
  r["max_rabi_hz"] = *mx;
}

// ----------------------------------------------------------------- thermal

std::vector<KeySpec> thermal_schema() {
  return {
      {"radius", Dim::length, "332 nm"},
      {"eta_532", Dim::absorption, "111 cm^-1"},
      {"eta_1064", Dim::absorption, "5.87 cm^-1"},
      {"i_532", Dim::intensity, "0.03 W/mm^2"},
      {"i_1064", Dim::intensity, "0.52 W/mm^2"},
      {"a_gas_model", Dim::choice, "fixed", {"fixed", "kinetic"}},
      {"a_gas", Dim::gas_coefficient, "1.74e-12 m^3/s/K", {}, "used when a_gas_model = fixed"},
      {"T0", Dim::temperature, "298 K"},
      {"gamma_prime", Dim::dimensionless, "1.4"},
      {"kappa", Dim::dimensionless, "1"},
      {"im_eps", Dim::dimensionless, "0", {}, "Im((eps-1)/(eps+2)); 0 = calibrate to T_plateau"},
      {"T_plateau", Dim::temperature, "350 K"},
      {"p_calibration", Dim::pressure, "6.9e-6 Torr"},
      {"p_min", Dim::pressure, "1e-8 Torr"},
      {"p_max", Dim::pressure, "10 Torr"},
      {"points", Dim::integer, "91"},
  };
}

void run_thermal(const RunConfig& c, RunContext& ctx) {
  const double R = c.get("radius");
  const double vol = 4.0 / 3.0 * nvlev::kPi * R * R * R;
  nvlev::OpticalHeating heat{{{"532", c.get("i_532"), c.get("eta_532")}, {"1064", c.get("i_1064"), c.get("eta_1064")}},
                             vol};
  nvlev::GasEnvironment gas;
  gas.T0 = c.get("T0");
  gas.gamma_prime = c.get("gamma_prime");
  gas.kappa = c.get("kappa");
  const double a_gas = c.get_text("a_gas_model") == "fixed" ? c.get("a_gas") : nvlev::gas_cooling_coefficient(gas, R);
  double im = c.get("im_eps");
  if (im == 0.0) im = nvlev::calibrate_im_eps(c.get("T_plateau"), heat.power(), a_gas, c.get("p_calibration"), gas.T0, vol);
  const nvlev::ThermalCoefficients k{heat.power(), a_gas, nvlev::BlackBodyModel{vol, im}.coefficient()};

  const double lo = c.get("p_min"), hi = c.get("p_max");
  const auto n = c.get_int("points");
  if (!(lo > 0.0 && hi > lo)) throw nvlev::Error(nvlev::Errc::BadValue, "need 0 < p_min < p_max", "p_min");
  if (n < 2) throw nvlev::Error(nvlev::Errc::BadValue, "need at least 2 points", "points");
  CsvWriter w({"pressure_torr", "pressure_pa", "temperature_k"});
  double t_lo = 0.0, t_hi = 0.0;
  for (long long i = 0; i < n; ++i) {
    const double p = lo * std::pow(hi / lo, double(i) / double(n - 1));
    const double T = nvlev::thermal_balance_solve(k, p, gas.T0);
    if (i == 0) t_lo = T;
    t_hi = T;
    w.row({p / nvlev::kPascalPerTorr, p, T});
  }
  ctx.write_csv("_balance.csv", w);
  auto& r = ctx.results;
  r["heating_w"] = k.a_heat;
  r["a_gas_m3_per_s_k"] = k.a_gas;
  r["a_bb_w_per_k5"] = k.a_bb;
  r["im_eps"] = im;
  r["temperature_at_p_min_k"] = t_lo;
  r["temperature_at_p_max_k"] = t_hi;
  r["temperature_at_calibration_k"] = nvlev::thermal_balance_solve(k, c.get("p_calibration"), gas.T0);
}

// ------------------------------------------------------------------- rotor

std::vector<KeySpec> rotor_schema() {
  return {
      {"radius", Dim::length, "264 nm"},
      {"density", Dim::density, "3500 kg/m^3"},
      {"dipole", Dim::dipole, "3.13e-25 C*m"},
      {"pressure", Dim::pressure, "1 Torr"},
      {"T0", Dim::temperature, "298 K"},
      {"eta_prime", Dim::dimensionless, "1"},
      {"e_field", Dim::electric_field, "300 V/m"},
      {"drive_rate", Dim::angular_frequency, "1 kHz"},
      {"rotation_sense", Dim::choice, "clockwise", kSenses},
      {"duration", Dim::time, "0.8 s"},
      {"ramp", Dim::time, "0.5 s"},
      {"dt", Dim::time, "10 us"},
      {"record_every", Dim::integer, "100"},
  };
}

void run_rotor(const RunConfig& c, RunContext& ctx) {
  const auto part = nvlev::ChargedParticle::sphere(0.0, c.get("radius"), c.get("density"));
  const auto rotor = nvlev::DipoleRotor::sphere(c.get("dipole"), part);
  nvlev::GasEnvironment gas;
  gas.pressure = c.get("pressure");
  gas.T0 = c.get("T0");
  gas.eta_prime = c.get("eta_prime");
  nvlev::RotatingField field{c.get("e_field"), c.get("drive_rate"),
                             sense_of(c) == nvlev::RotationSense::clockwise ? -1 : 1};
  const double gd = nvlev::gas_damping_rate(part, gas);
  nvlev::RotorOptions opt;
  opt.ramp_duration = c.get("ramp");
  const auto every = c.get_int("record_every");
  if (every < 1) throw nvlev::Error(nvlev::Errc::BadValue, "must be >= 1", "record_every");
  opt.record_every = std::size_t(every);
  const auto traj = nvlev::rotor_trajectory(rotor, field, gd, c.get("duration"), c.get("dt"), opt);
  const auto lock = nvlev::analyze_lock(traj, field, opt.ramp_duration);
  const double ratio = nvlev::lock_ratio(rotor, field, gd);
  auto& r = ctx.results;
  r["gamma_d_per_s"] = gd;
  r["inertia_kg_m2"] = rotor.inertia;
  r["threshold_field_v_per_m"] = rotor.inertia * gd * field.omega_drive / rotor.dipole;
  r["lock_ratio"] = ratio;
  r["locked"] = lock.locked;
  r["mean_rate_hz"] = hz(lock.mean_omega);
  r["beta_deg"] = lock.beta * 180.0 / nvlev::kPi;
  if (ratio <= 1.0) r["beta_expected_deg"] = std::asin(ratio) * 180.0 / nvlev::kPi;
  if (gd > 0.0) r["max_rotation_hz"] = hz(nvlev::max_rotation(rotor, field, part, gas));
  CsvWriter w({"t_s", "angle_rad", "rate_hz"});
  for (const auto& s : traj) w.row({s.t, s.angle, hz(s.omega)});
  ctx.write_csv("_trajectory.csv", w);
}

// ------------------------------------------------------------- cooling-sim

std::vector<KeySpec> cooling_schema() {
  return {
      {"radius", Dim::length, "264 nm"},
      {"density", Dim::density, "3500 kg/m^3"},
      {"pressure", Dim::pressure, "0.1 Torr"},
      {"bath_T", Dim::temperature, "298 K"},
      {"eta_prime", Dim::dimensionless, "1"},
      {"f_x", Dim::angular_frequency, "0.82 kHz"},
      {"f_y", Dim::angular_frequency, "0.95 kHz"},
      {"f_z", Dim::angular_frequency, "1.64 kHz"},
      {"gain_x", Dim::rate, "0 1/s"},
      {"gain_y", Dim::rate, "0 1/s"},
      {"gain_z", Dim::rate, "0 1/s"},
      {"feedback_mode", Dim::choice, "ideal", {"ideal", "delayed"}},
      {"measurement_noise", Dim::displacement_psd, "0 m^2/Hz"},
      {"duration", Dim::time, "0 s", {}, "per record (0 = 200 damping times)"},
      {"dt", Dim::time, "0 s", {}, "0 = 1/50 of the shortest period"},
      {"records", Dim::integer, "4", {}, "independent records averaged per axis"},
      {"write_timeseries", Dim::integer, "0", {}, "1 = write the first record of each axis"},
  };
}

void run_cooling(const RunConfig& c, RunContext& ctx) {
  if (!ctx.seed) throw nvlev::Error(nvlev::Errc::BadValue, "cooling-sim requires --seed", "seed");
  const double R = c.get("radius"), rho = c.get("density");
  const double mass = 4.0 / 3.0 * nvlev::kPi * R * R * R * rho;
  nvlev::GasEnvironment gas;
  gas.pressure = c.get("pressure");
  gas.T0 = c.get("bath_T");
  gas.eta_prime = c.get("eta_prime");
  const double gamma = nvlev::translational_damping_rate(R, rho, gas);
  const std::array<double, 3> w0{c.get("f_x"), c.get("f_y"), c.get("f_z")};
  nvlev::FeedbackConfig fb;
  fb.gain = {c.get("gain_x"), c.get("gain_y"), c.get("gain_z")};
  fb.mode = c.get_text("feedback_mode") == "ideal" ? nvlev::FeedbackMode::ideal_velocity
                                                    : nvlev::FeedbackMode::delayed_position;
  fb.measurement_noise = c.get("measurement_noise");
  const bool any_gain = std::any_of(fb.gain.begin(), fb.gain.end(), [](double g) { return g > 0.0; });

  double duration = c.get("duration");
  if (duration <= 0.0) {
    if (!(gamma > 0.0)) throw nvlev::Error(nvlev::Errc::BadValue, "set a duration when the gas damping is zero", "duration");
    duration = 200.0 / gamma;
  }
  double dt = c.get("dt");
  if (dt <= 0.0) dt = nvlev::kTwoPi / *std::max_element(w0.begin(), w0.end()) / 50.0;
  const auto records = c.get_int("records");
  if (records < 1) throw nvlev::Error(nvlev::Errc::BadValue, "must be >= 1", "records");
  const auto nsteps = duration / dt;
  if (nsteps * double(records) > 2e8)
    throw nvlev::Error(nvlev::Errc::BadValue, "run too long; lower duration or raise dt", "duration");

  auto& r = ctx.results;
  r["mass_kg"] = mass;
  r["gamma_gas_per_s"] = gamma;
  r["duration_s"] = duration;
  r["dt_s"] = dt;
  const char* names[3] = {"x", "y", "z"};
  std::vector<nvlev::PSDEstimate> psds;
  std::vector<std::vector<double>> first(3);
  json axes = json::object();
  for (int a = 0; a < 3; ++a) {
    nvlev::HarmonicMode mode{nvlev::ModeAxis(a), w0[std::size_t(a)], mass, gamma, gas.T0};
    const auto recs = nvlev::simulate_repeats(mode, any_gain ? &fb : nullptr, duration, dt, *ctx.seed,
                                              std::size_t(records));
    std::vector<nvlev::PSDEstimate> parts;
    double var = 0.0;
    for (const auto& ts : recs) {
      parts.push_back(nvlev::psd(ts, ts.samples.size() / 4));
      var += nvlev::variance(ts.samples) / double(recs.size());
    }
    if (c.get_int("write_timeseries") != 0) first[std::size_t(a)] = recs.front().samples;
    psds.push_back(nvlev::average_psd(parts));
    const double g = fb.gain[std::size_t(a)];
    json ax;
    ax["omega0_rad_s"] = mode.omega0;
    ax["gain_per_s"] = g;
    ax["T_area_k"] = nvlev::temperature_from_variance(var, mass, mode.omega0);
    if (fb.mode == nvlev::FeedbackMode::ideal_velocity && gamma + g > 0.0)
      ax["T_ideal_k"] = gas.T0 * gamma / (gamma + (any_gain ? g : 0.0));
    try {
      const auto fit = nvlev::fit_lorentzian_psd(psds.back(), mass);
      ax["fit"] = {{"omega0_rad_s", fit.omega0},         {"gamma_per_s", fit.gamma},
                   {"T_eff_k", fit.T_eff},               {"noise_floor_m2_per_hz", fit.noise_floor},
                   {"sigma_omega0_rad_s", fit.sigma_omega0}, {"sigma_gamma_per_s", fit.sigma_gamma},
                   {"sigma_T_k", fit.sigma_T},           {"sigma_floor_m2_per_hz", fit.sigma_floor}};
      if (g == 0.0 || !any_gain) ax["inferred_radius_m"] = nvlev::infer_radius(fit, gas, rho);
    } catch (const nvlev::Error& e) {
      ax["fit_error"] = std::string(nvlev::to_string(e.code()));
      ctx.warn(std::string("axis ") + names[a] + ": " + e.what());
    }
    axes[names[a]] = ax;
  }
  r["axes"] = axes;

  CsvWriter w({"freq_hz", "psd_x_m2_per_hz", "psd_y_m2_per_hz", "psd_z_m2_per_hz"});
  for (std::size_t i = 0; i < psds[0].freq.size(); ++i)
    w.row({psds[0].freq[i], psds[0].value[i], psds[1].value[i], psds[2].value[i]});
  ctx.write_csv("_psd.csv", w);
  if (c.get_int("write_timeseries") != 0) {
    CsvWriter ts({"t_s", "x_m", "y_m", "z_m"});
    for (std::size_t i = 0; i < first[0].size(); ++i)
      ts.row({dt * double(i), first[0][i], first[1][i], first[2][i]});
    ctx.write_csv("_timeseries.csv", ts);
  }
}

// ---------------------------------------------------------------- fit-odmr

std::vector<KeySpec> fit_odmr_schema() {
  return {
      {"input", Dim::path, "", {}, "CSV with columns freq_hz, contrast"},
      {"n_dips", Dim::integer, "8"},
  };
}

void run_fit_odmr(const RunConfig& c, RunContext& ctx) {
  const auto [f, y] = read_columns(c.get_text("input"), "input");
  nvlev::Spectrum s;
  for (double x : f) s.freq.push_back(x * nvlev::kTwoPi);
  s.contrast = y;
  const auto n = c.get_int("n_dips");
  if (n < 1) throw nvlev::Error(nvlev::Errc::BadValue, "must be >= 1", "n_dips");
  const auto fit = nvlev::fit_dips(s, std::size_t(n));
  json dips = json::array();
  for (std::size_t i = 0; i < fit.dips.size(); ++i) {
    const auto& d = fit.dips[i];
    json j{{"center_hz", hz(d.center)}, {"fwhm_hz", hz(d.fwhm)}, {"amplitude", d.amplitude}};
    if (fit.covariance.rows() == Eigen::Index(3 * fit.dips.size())) {
      const auto k = Eigen::Index(3 * i);
      j["sigma_center_hz"] = hz(std::sqrt(std::max(0.0, fit.covariance(k, k))));
      j["sigma_fwhm_hz"] = hz(std::sqrt(std::max(0.0, fit.covariance(k + 1, k + 1))));
      j["sigma_amplitude"] = std::sqrt(std::max(0.0, fit.covariance(k + 2, k + 2)));
    }
    dips.push_back(j);
  }
  ctx.results["dips"] = dips;
  ctx.results["residual_rms"] = fit.residual_rms;
  ctx.results["iterations"] = fit.cost_history.size();
  CsvWriter w({"freq_hz", "contrast", "model"});
  for (std::size_t i = 0; i < f.size(); ++i) {
    double m = 0.0;
    for (const auto& d : fit.dips) m += nvlev::lorentzian(s.freq[i], d);
    w.row({f[i], y[i], m});
  }
  ctx.write_csv("_model.csv", w);
}

// ----------------------------------------------------------------- fit-psd

std::vector<KeySpec> fit_psd_schema() {
  return {
      {"input", Dim::path, "", {}, "CSV: freq_hz first, PSD values in m^2/Hz"},
      {"column", Dim::integer, "1", {}, "PSD column (1 = second column)"},
      {"radius", Dim::length, "264 nm", {}, "sets the mass"},
      {"density", Dim::density, "3500 kg/m^3"},
      {"pressure", Dim::pressure, "0.1 Torr", {}, "for radius inference"},
      {"T0", Dim::temperature, "298 K"},
      {"eta_prime", Dim::dimensionless, "1"},
      {"band_low", Dim::dimensionless, "0.2", {}, "fit band, units of the peak frequency"},
      {"band_high", Dim::dimensionless, "3"},
  };
}

void run_fit_psd(const RunConfig& c, RunContext& ctx) {
  const auto col = c.get_int("column");
  if (col < 1) throw nvlev::Error(nvlev::Errc::BadValue, "must be >= 1", "column");
  const auto [f, v] = read_columns(c.get_text("input"), "input", std::size_t(col));
  nvlev::PSDEstimate p;
  p.freq = f;
  p.value = v;
  const double R = c.get("radius"), rho = c.get("density");
  const double mass = 4.0 / 3.0 * nvlev::kPi * R * R * R * rho;
  nvlev::PSDFitOptions opt;
  opt.band_low = c.get("band_low");
  opt.band_high = c.get("band_high");
  const auto fit = nvlev::fit_lorentzian_psd(p, mass, opt);
  nvlev::GasEnvironment gas;
  gas.pressure = c.get("pressure");
  gas.T0 = c.get("T0");
  gas.eta_prime = c.get("eta_prime");
  auto& r = ctx.results;
  r["omega0_rad_s"] = fit.omega0;
  r["f0_hz"] = hz(fit.omega0);
  r["gamma_per_s"] = fit.gamma;
  r["T_eff_k"] = fit.T_eff;
  r["noise_floor_m2_per_hz"] = fit.noise_floor;
  r["sigma_omega0_rad_s"] = fit.sigma_omega0;
  r["sigma_gamma_per_s"] = fit.sigma_gamma;
  r["sigma_T_k"] = fit.sigma_T;
  r["sigma_floor_m2_per_hz"] = fit.sigma_floor;
  r["inferred_radius_m"] = nvlev::infer_radius(fit, gas, rho);
  CsvWriter w({"freq_hz", "psd_m2_per_hz", "model_m2_per_hz"});
  for (std::size_t i = 0; i < f.size(); ++i)
    w.row({f[i], v[i], nvlev::thermal_oscillator_psd(f[i], fit.omega0, fit.gamma, fit.T_eff, mass, fit.noise_floor)});
  ctx.write_csv("_model.csv", w);
}

// ------------------------------------------------------------------ driver

struct Command {
  std::string name;
  std::string help;
  std::function<std::vector<KeySpec>()> schema;
  std::function<void(const RunConfig&, RunContext&)> run;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> cmds{
      {"trap-design", "ring trap height, secular frequency, q and well depth", trap_schema, run_trap},
      {"odmr-sim", "ensemble ODMR spectrum of a rotating diamond", odmr_schema, run_odmr},
      {"berry-shift", "resonance shift versus rotation rate", berry_schema, run_berry},
      {"spin-dynamics", "resonance located by time-dependent propagation", dynamics_schema, run_dynamics},
      {"rabi-sweep", "Rabi frequency versus rotation phase", rabi_schema, run_rabi},
      {"thermal", "internal temperature versus pressure", thermal_schema, run_thermal},
      {"rotor", "driven rotation of an electric dipole", rotor_schema, run_rotor},
      {"cooling-sim", "seeded centre-of-mass Langevin run with PSD fits", cooling_schema, run_cooling},
      {"fit-odmr", "multi-Lorentzian fit of an ODMR spectrum CSV", fit_odmr_schema, run_fit_odmr},
      {"fit-psd", "thermal-oscillator fit of a PSD CSV", fit_psd_schema, run_fit_psd},
  };
  return cmds;
}

std::string schema_help(const std::vector<KeySpec>& schema) {
  std::ostringstream s;
  s << "Config keys (default):\n";
  for (const auto& k : schema) {
    s << "  " << k.name << " = " << (k.default_value.empty() ? "<required>" : k.default_value);
    if (!k.help.empty()) s << "   " << k.help;
    if (!k.choices.empty()) {
      s << "   {";
      for (std::size_t i = 0; i < k.choices.size(); ++i) s << (i ? "|" : "") << k.choices[i];
      s << "}";
    }
    s << '\n';
  }
  return s.str();
}

void print_error(std::string_view code, std::string_view key, std::string_view message) {
  json e;
  e["error"] = code;
  if (!key.empty()) e["key"] = key;
  e["message"] = message;
  std::cerr << e.dump() << '\n';
}

bool is_usage_error(nvlev::Errc c) {
  return c == nvlev::Errc::UnknownKey || c == nvlev::Errc::MissingUnit || c == nvlev::Errc::BadValue;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nvlev: rotating NV-diamond levitation toolkit", "nvlev"};
  app.set_version_flag("--version", std::string(NVLEV_VERSION));
  app.require_subcommand(1);

  struct Opts {
    std::optional<std::string> config;
    std::vector<std::string> sets;
    std::string out_dir = ".";
    std::string prefix;
    std::optional<std::uint64_t> seed;
  };
  std::map<std::string, Opts> opts;
  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& o = opts[cmd.name];
    sub->add_option("-c,--config", o.config, "config file (key = value text, or JSON / run record)");
    sub->add_option("-s,--set", o.sets, "override, key=value (repeatable)");
    sub->add_option("-o,--out-dir", o.out_dir, "output directory")->capture_default_str();
    sub->add_option("-p,--prefix", o.prefix, "output file prefix (default: subcommand name)");
    sub->add_option("--seed", o.seed, cmd.name == "cooling-sim" ? "RNG seed (required)" : "RNG seed (recorded)");
    sub->footer(schema_help(cmd.schema()));
  }

  if (argc > 1 && argv[1][0] != '-' &&
      std::none_of(commands().begin(), commands().end(), [&](const Command& c) { return c.name == argv[1]; })) {
    print_error("UsageError", "", std::string("unknown subcommand '") + argv[1] + "'");
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", "", e.what());
    std::cerr << app.help();
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const auto it = std::find_if(commands().begin(), commands().end(),
                               [&](const Command& c) { return c.name == sub->get_name(); });
  const auto& o = opts[it->name];
  RunContext ctx;
  ctx.out_dir = o.out_dir;
  ctx.prefix = o.prefix.empty() ? it->name : o.prefix;
  ctx.seed = o.seed;
  try {
    if (it->name == "cooling-sim" && !o.seed) throw nvlev::Error(nvlev::Errc::BadValue, "--seed is required", "seed");
    const auto cfg = nvlev::config::parse_config(it->name, it->schema(), o.config, o.sets);
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw nvlev::Error(nvlev::Errc::InvalidArgument, "cannot create output directory: " + ec.message(), "out-dir");
    it->run(cfg, ctx);

    json rec;
    rec["tool"] = "nvlev";
    rec["version"] = NVLEV_VERSION;
    rec["subcommand"] = it->name;
    rec["seed"] = ctx.seed ? json(*ctx.seed) : json(nullptr);
    rec["config"] = cfg.to_json();
    rec["results"] = ctx.results;
    rec["warnings"] = ctx.warnings;
    ctx.outputs.push_back(ctx.prefix + ".json");
    rec["outputs"] = ctx.outputs;
    std::ofstream f(ctx.out_dir / (ctx.prefix + ".json"), std::ios::binary);
    f << rec.dump(2) << '\n';
    if (!f) throw nvlev::Error(nvlev::Errc::InvalidArgument, "cannot write the run record", "out-dir");
    for (const auto& name : ctx.outputs) std::cout << (ctx.out_dir / name.get<std::string>()).string() << '\n';
    return 0;
  } catch (const nvlev::Error& e) {
    print_error(nvlev::to_string(e.code()), e.key(), e.what());
    if (is_usage_error(e.code())) {
      std::cerr << sub->help();
      return 2;
    }
    return 1;
  } catch (const std::exception& e) {
    print_error("RuntimeError", "", e.what());
    return 1;
  }
}
