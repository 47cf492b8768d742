#pragma once

// Run configuration: one JSON document plus a PBM unit-cell pattern.
// Parsing is strict; unknown keys are errors, so a misspelt physics
// parameter never silently falls back to its default.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "json.hpp"

#include "maglattice/error.hpp"
#include "maglattice/lattice_field.hpp"
#include "maglattice/pbm.hpp"
#include "maglattice/physics.hpp"
#include "maglattice/surface.hpp"

namespace maglattice {

using json = nlohmann::json;

struct AtomConfig {
  std::string species = "rb87";
  double mass = 1.44316e-25;       // kg
  double gF = 0.5;
  int mF = 2;
  double a_s = 5.3e-9;             // m
  double lambda_bar = 124e-9;      // m
  double linewidth = 6e6;          // Hz, Gamma / 2 pi

  AtomState state() const { return AtomState(mass, gF, mF, a_s, lambda_bar, kTwoPi * linewidth); }
};

struct RunConfig {
  std::filesystem::path pattern_path;  // resolved
  Vec2 a1 = Vec2(100e-9, 0);           // m
  Vec2 a2 = Vec2(0, 100e-9);
  double M0 = 670e3;                   // A/m
  double film_h = 25e-9;               // m
  Vec3 bias = Vec3::Zero();            // T
  AtomConfig atom;
  MaterialParams material;
  FourierOptions truncation;
  std::pair<double, double> z_range{0, 0};  // m; {0,0} means 0.2..3 periods
  int seed_grid = 6;
  std::uint64_t seed = 1;

  LatticeGeometry geometry() const { return LatticeGeometry(a1, a2); }

  std::pair<double, double> search_range() const {
    if (z_range.second > 0) return z_range;
    const double L = geometry().period();
    return {0.2 * L, 3.0 * L};
  }

  MagnetizationPattern load_pattern() const {
    const Bitmap bm = read_pbm_file(pattern_path.string());
    return MagnetizationPattern(geometry(), bm.width, bm.height, bm.bits, M0, film_h);
  }
};

namespace detail {

// Walks one JSON object, remembering which keys were consumed.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config: '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& get(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw InputError("config: missing required key '" + full(key) + "'");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) throw InputError("config: '" + full(key) + "' must be a number");
    return v.get<double>();
  }

  double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

  double positive(const std::string& key) {
    const double v = number(key);
    if (!(v > 0)) throw InputError("config: '" + full(key) + "' must be > 0");
    return v;
  }

  double positive_or(const std::string& key, double fallback) { return has(key) ? positive(key) : fallback; }

  std::string string(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) throw InputError("config: '" + full(key) + "' must be a string");
    return v.get<std::string>();
  }

  Eigen::VectorXd vec(const std::string& key, int n) {
    const json& v = get(key);
    if (!v.is_array() || static_cast<int>(v.size()) != n)
      throw InputError("config: '" + full(key) + "' must be an array of " + std::to_string(n) + " numbers");
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
      if (!v[i].is_number()) throw InputError("config: '" + full(key) + "' must contain numbers only");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InputError("config: unknown key '" + full(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline LengthConvention parse_length_convention(const std::string& s) {
  if (s == "m") return LengthConvention::Meters;
  if (s == "um") return LengthConvention::Micrometers;
  if (s == "cm") return LengthConvention::Centimeters;
  throw InputError("config: material.srh_length_unit must be one of m, um, cm");
}

}  // namespace detail

/// Parses a config document. Relative pattern paths resolve against base_dir.
inline RunConfig parse_config_json(const json& doc, const std::filesystem::path& base_dir) {
  using detail::StrictObject;
  RunConfig c;
  StrictObject root(doc, "");

  std::filesystem::path p = root.string("pattern");
  c.pattern_path = p.is_absolute() ? p : (base_dir / p).lexically_normal();

  {
    StrictObject g(root.get("geometry"), "geometry");
    const Eigen::VectorXd a1 = g.vec("a1_nm", 2), a2 = g.vec("a2_nm", 2);
    c.a1 = a1 * units::nm;
    c.a2 = a2 * units::nm;
    g.finish();
    c.geometry();  // validates independence
  }
  c.M0 = root.positive("M0_kA_per_m") * 1e3;
  c.film_h = root.positive("film_h_nm") * units::nm;
  c.bias = Vec3(root.vec("bias_mT", 3)) * units::mT;
  if (!(c.bias.norm() < 0.1)) throw InputError("config: 'bias_mT' magnitude must be < 100 mT");

  if (root.has("atom")) {
    StrictObject a(root.get("atom"), "atom");
    if (a.has("species")) {
      c.atom.species = a.string("species");
      if (c.atom.species != "rb87") throw InputError("config: atom.species must be 'rb87' (override fields for others)");
    }
    c.atom.mass = a.positive_or("mass_kg", c.atom.mass);
    c.atom.gF = a.number_or("gF", c.atom.gF);
    if (a.has("mF")) {
      const json& v = a.get("mF");
      if (!v.is_number_integer()) throw InputError("config: 'atom.mF' must be an integer");
      c.atom.mF = v.get<int>();
    }
    c.atom.a_s = a.positive_or("a_s_nm", c.atom.a_s / units::nm) * units::nm;
    c.atom.lambda_bar = a.positive_or("lambda_bar_nm", c.atom.lambda_bar / units::nm) * units::nm;
    c.atom.linewidth = a.positive_or("linewidth_MHz", c.atom.linewidth / units::MHz) * units::MHz;
    a.finish();
  }
  c.atom.state();  // validates

  if (root.has("material")) {
    StrictObject m(root.get("material"), "material");
    c.material.epsilon_factor = m.positive_or("epsilon_factor", c.material.epsilon_factor);
    if (c.material.epsilon_factor > 1) throw InputError("config: 'material.epsilon_factor' must lie in (0, 1]");
    c.material.sigma = m.positive_or("sigma_S_per_m", c.material.sigma);
    c.material.coating_thickness = m.positive_or("coating_thickness_nm", c.material.coating_thickness / units::nm) * units::nm;
    c.material.C0 = m.positive_or("C0_um_per_s", c.material.C0 / units::um) * units::um;
    if (m.has("C3_J_m3")) c.material.C3_override = m.positive("C3_J_m3");
    if (m.has("srh_length_unit")) c.material.srh_convention = detail::parse_length_convention(m.string("srh_length_unit"));
    m.finish();
  }
  c.material.film_thickness = c.film_h;

  if (root.has("truncation")) {
    StrictObject t(root.get("truncation"), "truncation");
    if (t.has("max_order")) {
      const json& v = t.get("max_order");
      if (!v.is_number_integer() || v.get<int>() < 1) throw InputError("config: 'truncation.max_order' must be an integer >= 1");
      c.truncation.max_order = v.get<int>();
    }
    c.truncation.threshold = t.number_or("threshold", c.truncation.threshold);
    if (c.truncation.threshold < 0) throw InputError("config: 'truncation.threshold' must be >= 0");
    if (t.has("finite_thickness")) {
      const json& v = t.get("finite_thickness");
      if (!v.is_boolean()) throw InputError("config: 'truncation.finite_thickness' must be a boolean");
      c.truncation.finite_thickness = v.get<bool>();
    }
    t.finish();
  }

  if (root.has("search")) {
    StrictObject s(root.get("search"), "search");
    if (s.has("z_range_nm")) {
      const Eigen::VectorXd z = s.vec("z_range_nm", 2);
      if (!(z[0] > 0 && z[1] > z[0])) throw InputError("config: 'search.z_range_nm' must satisfy 0 < lo < hi");
      c.z_range = {z[0] * units::nm, z[1] * units::nm};
    }
    if (s.has("seed_grid")) {
      const json& v = s.get("seed_grid");
      if (!v.is_number_integer() || v.get<int>() < 4) throw InputError("config: 'search.seed_grid' must be an integer >= 4");
      c.seed_grid = v.get<int>();
    }
    s.finish();
  }

  if (root.has("seed")) {
    const json& v = root.get("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw InputError("config: 'seed' must be a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  }
  root.finish();
  return c;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config: malformed JSON in '" + path.string() + "': " + e.what());
  }
  RunConfig c = parse_config_json(doc, path.parent_path());
  if (!std::filesystem::exists(c.pattern_path))
    throw InputError("config: pattern file '" + c.pattern_path.string() + "' does not exist");
  return c;
}

namespace detail {
// Drops the last-bit noise of unit conversions (124e-9 / 1e-9 -> 124).
inline double tidy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}
}  // namespace detail

/// Fully resolved config, every default spelled out.
inline json config_to_json(const RunConfig& c) {
  using detail::tidy;
  json j;
  j["pattern"] = c.pattern_path.generic_string();
  j["geometry"] = {{"a1_nm", {tidy(c.a1.x() / units::nm), tidy(c.a1.y() / units::nm)}},
                   {"a2_nm", {tidy(c.a2.x() / units::nm), tidy(c.a2.y() / units::nm)}}};
  j["M0_kA_per_m"] = tidy(c.M0 / 1e3);
  j["film_h_nm"] = tidy(c.film_h / units::nm);
  j["bias_mT"] = {tidy(c.bias.x() / units::mT), tidy(c.bias.y() / units::mT), tidy(c.bias.z() / units::mT)};
  j["atom"] = {{"species", c.atom.species},
               {"mass_kg", c.atom.mass},
               {"gF", c.atom.gF},
               {"mF", c.atom.mF},
               {"a_s_nm", tidy(c.atom.a_s / units::nm)},
               {"lambda_bar_nm", tidy(c.atom.lambda_bar / units::nm)},
               {"linewidth_MHz", tidy(c.atom.linewidth / units::MHz)}};
  json mat = {{"epsilon_factor", c.material.epsilon_factor},
              {"sigma_S_per_m", c.material.sigma},
              {"coating_thickness_nm", tidy(c.material.coating_thickness / units::nm)},
              {"C0_um_per_s", tidy(c.material.C0 / units::um)},
              {"srh_length_unit", to_string(c.material.srh_convention)}};
  if (c.material.C3_override) mat["C3_J_m3"] = *c.material.C3_override;
  j["material"] = mat;
  j["truncation"] = {{"max_order", c.truncation.max_order},
                     {"threshold", c.truncation.threshold},
                     {"finite_thickness", c.truncation.finite_thickness}};
  const auto zr = c.search_range();
  j["search"] = {{"z_range_nm", {tidy(zr.first / units::nm), tidy(zr.second / units::nm)}}, {"seed_grid", c.seed_grid}};
  j["seed"] = c.seed;
  return j;
}

}  // namespace maglattice
