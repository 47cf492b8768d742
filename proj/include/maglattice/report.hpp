#pragma once

// Report document and serializers. Every numeric payload key carries its
// unit as a suffix (depth_mT, freqs_kHz, ...).

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "maglattice/config.hpp"
#include "maglattice/ensemble.hpp"
#include "maglattice/hubbard.hpp"
#include "maglattice/surface.hpp"
#include "maglattice/trap_analysis.hpp"

namespace maglattice {

constexpr const char* kToolVersion = "maglattice 0.1.0";

struct ReportDocument {
  std::string command;
  std::optional<json> config;
  std::optional<std::string> timestamp;  // omitted with --no-timestamp
  json payload = json::object();
  std::vector<std::string> warnings;

  json to_json() const {
    json j;
    j["version"] = kToolVersion;
    j["command"] = command;
    j["config"] = config ? *config : json(nullptr);
    j["timestamp"] = timestamp ? json(*timestamp) : json(nullptr);
    j["payload"] = payload;
    j["warnings"] = warnings;
    return j;
  }

  static ReportDocument from_json(const json& j) {
    ReportDocument d;
    d.command = j.at("command").get<std::string>();
    if (!j.at("config").is_null()) d.config = j.at("config");
    if (!j.at("timestamp").is_null()) d.timestamp = j.at("timestamp").get<std::string>();
    d.payload = j.at("payload");
    d.warnings = j.at("warnings").get<std::vector<std::string>>();
    return d;
  }
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// 9 significant digits; printf formatting ignores the C++ global locale.
inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string csv_row(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += csv_number(values[i]);
  }
  return s;
}

inline json vec_json(const Vec3& v, double unit) { return {v.x() / unit, v.y() / unit, v.z() / unit}; }

inline json trap_report_json(const TrapReport& r) {
  json j;
  j["position_nm"] = vec_json(r.r0, units::nm);
  j["B_IP_mT"] = r.B_IP / units::mT;
  j["freqs_kHz"] = vec_json(r.freqs, units::kHz);
  json axes = json::array();
  for (int i = 0; i < 3; ++i) axes.push_back(vec_json(r.axes.col(i), 1.0));
  j["axes"] = axes;
  j["depth_mT"] = r.depth / units::mT;
  json bars = json::object();
  for (const auto& b : r.barriers) bars[b.label] = b.height / units::mT;
  j["barriers_mT"] = bars;
  json coarse = json::array();
  for (const auto& b : r.barriers)
    if (b.coarse) coarse.push_back(b.label);
  if (!coarse.empty()) j["barriers_coarse"] = coarse;
  j["omega_over_larmor"] = r.omega_over_larmor;
  j["larmor_healthy"] = r.larmor_healthy;
  if (r.vdw_valid) j["vdw_valid"] = *r.vdw_valid;
  return j;
}

inline json hubbard_json(const HubbardParams& p, const AtomState&) {
  auto nK = [](double E) { return energy_to_temperature(E) / units::nK; };
  return {{"d_nm", p.d / units::nm},
          {"V0_over_ER", p.s},
          {"E_R_nK", nK(p.E_R)},
          {"U_nK", nK(p.U)},
          {"J_nK", nK(p.J_tun)},
          {"J2_over_U_nK", nK(p.superexchange)},
          {"U_over_J", p.U_over_J}};
}

inline json surface_budget_json(const SurfaceBudget& b) {
  json j;
  j["C3_J_m3"] = b.C3;
  j["epsilon_factor"] = b.epsilon_factor;
  j["z0_nm"] = b.z0 / units::nm;
  j["omega_z_kHz"] = b.omega / kTwoPi / units::kHz;
  j["delta_zt_nm"] = b.delta_zt / units::nm;
  j["linearization_valid"] = b.linearization_valid;
  j["retardation_regime"] = b.retardation_regime;
  j["omega_crit_kHz"] = {{"strict", b.omega_crit.strict / kTwoPi / units::kHz},
                         {"weak", b.omega_crit.weak / kTwoPi / units::kHz},
                         {"curvature", b.omega_crit.curvature / kTwoPi / units::kHz},
                         {"exact", b.omega_crit.exact / kTwoPi / units::kHz}};
  j["vdw_ok"] = b.vdw_ok;
  j["log10_T"] = b.log10_T;
  j["no_barrier"] = b.no_barrier;
  j["tunnel_rate_per_s"] = b.tunnel_rate;
  j["ell_tunnel_nm"] = b.ell_tunnel / units::nm;
  j["larmor_omega_per_s"] = b.larmor_omega;
  j["skin_depth_um"] = b.skin_depth / units::um;
  j["gamma_spinflip_per_s"] = b.gamma_spinflip;
  j["johnson_lifetime_s"] = b.johnson_lifetime;
  j["tau_srh_s"] = b.tau_srh.tau;
  j["tau_srh_length_unit"] = to_string(b.tau_srh.convention);
  j["dominant_loss"] = b.dominant_loss;
  j["flags"] = b.flags;
  return j;
}

inline json fano_curve_json(const FanoCurve& c) {
  json pts = json::array();
  for (const auto& p : c.points) {
    json q = {{"eta_target", p.eta_target}, {"exhausted", p.exhausted}};
    if (!p.exhausted) {
      q["eta"] = p.eta;
      q["mean_N"] = p.mean_N;
      q["F"] = p.F;
      q["stderr_F"] = p.stderr_F;
      q["time_s"] = p.time;
    }
    pts.push_back(q);
  }
  return {{"initial_mean_N", c.initial_mean}, {"initial_F", c.initial_F}, {"points", pts}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace maglattice
