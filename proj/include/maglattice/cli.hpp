#pragma once

// Command-line front end. run_cli() is the whole program; main() only
// forwards to it so tests can drive subcommands in-process.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "maglattice/config.hpp"
#include "maglattice/ensemble.hpp"
#include "maglattice/hubbard.hpp"
#include "maglattice/lattice_field.hpp"
#include "maglattice/report.hpp"
#include "maglattice/surface.hpp"
#include "maglattice/trap_analysis.hpp"

namespace maglattice {

namespace cli {

enum ExitCode { kOk = 0, kInputError = 1, kPhysicsError = 2 };

struct GlobalOptions {
  std::string config_path;
  std::string out_dir = ".";
  bool print_json = false;
  bool no_timestamp = false;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
};

// A physics failure that still produced a report worth writing.
struct PartialFailure {
  std::string message;
};

class Context {
 public:
  explicit Context(const GlobalOptions& g) : g_(g) {}

  const GlobalOptions& globals() const { return g_; }

  bool has_config() const { return !g_.config_path.empty(); }

  const RunConfig& config() {
    if (!cfg_) {
      if (!has_config()) throw InputError("this subcommand needs --config");
      cfg_ = parse_config(g_.config_path);
    }
    return *cfg_;
  }

  AtomState atom() { return has_config() ? config().atom.state() : default_rb87(); }

  std::uint64_t seed() {
    if (g_.seed) return *g_.seed;
    return has_config() ? config().seed : 1;
  }

  const FourierExpansion& expansion() {
    if (!fx_) fx_ = fourier_from_pattern(config().load_pattern(), config().truncation);
    return *fx_;
  }

  std::optional<json> config_echo() const {
    if (!cfg_) return std::nullopt;
    return config_to_json(*cfg_);
  }

 private:
  GlobalOptions g_;
  std::optional<RunConfig> cfg_;
  std::optional<FourierExpansion> fx_;
};

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InputError("--" + what + ": malformed number '" + item + "'");
    }
  }
  if (out.empty()) throw InputError("--" + what + ": empty list");
  return out;
}

// Characterizes every non-zero minimum; field zeros and saddles become warnings.
inline std::vector<TrapReport> characterize_all(const FourierExpansion& f, const BiasField& bias,
                                                const MinimaSearch& search, const AtomState& atom,
                                                const CharacterizeOptions& copt, std::vector<std::string>& warnings,
                                                json& zeros) {
  std::vector<TrapReport> traps;
  for (const auto& m : search.minima) {
    if (eval_B(f, bias.B_ext(), m).norm() <= 1e-10) {
      zeros.push_back(vec_json(m, units::nm));
      continue;
    }
    try {
      traps.push_back(characterize_trap(f, bias, m, atom, copt));
    } catch (const Error& e) {
      std::ostringstream os;
      os << "minimum at (" << m.x() / units::nm << ", " << m.y() / units::nm << ", " << m.z() / units::nm
         << ") nm skipped: " << e.what();
      warnings.push_back(os.str());
    }
  }
  if (!zeros.empty())
    warnings.push_back(std::to_string(zeros.size()) + " field zero(s) found: Majorana loss, not traps");
  return traps;
}

inline const FourierExpansion& expansion_or_no_minima(Context& ctx) {
  try {
    return ctx.expansion();
  } catch (const PhysicsError& e) {
    throw PhysicsError(std::string("no minima: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

inline void cmd_field_map(Context& ctx, ReportDocument& rep, const std::vector<double>& z_nm, int n) {
  require(n >= 2, "--n must be >= 2");
  const auto& f = ctx.expansion();
  const Vec3 bias = ctx.config().bias;
  const auto& g = f.geometry();
  std::string csv = "x_nm,y_nm,z_nm,Bx_mT,By_mT,Bz_mT,Bmag_mT\n";
  json layers = json::array();
  for (double z : z_nm) {
    require(z > 0, "--z-nm values must be > 0");
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec2 rho = g.cartesian(Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n));
        const Vec3 r(rho.x(), rho.y(), z * units::nm);
        const Vec3 B = eval_B(f, bias, r);
        lo = std::min(lo, B.norm());
        hi = std::max(hi, B.norm());
        csv += csv_row({r.x() / units::nm, r.y() / units::nm, z, B.x() / units::mT, B.y() / units::mT,
                        B.z() / units::mT, B.norm() / units::mT}) +
               "\n";
      }
    layers.push_back({{"z_nm", z}, {"Bmag_min_mT", lo / units::mT}, {"Bmag_max_mT", hi / units::mT}});
  }
  write_text_file(std::filesystem::path(ctx.globals().out_dir) / "field_map.csv", csv);
  rep.payload = {{"modes", f.modes().size()}, {"grid", n}, {"layers", layers}, {"csv", "field_map.csv"}};
}

inline void cmd_traps(Context& ctx, ReportDocument& rep, bool barriers, int nodes) {
  const auto& f = expansion_or_no_minima(ctx);
  const RunConfig& c = ctx.config();
  const BiasField bias(c.bias);
  const AtomState atom = ctx.atom();
  const MinimaSearch s = find_trap_minima(f, bias, c.search_range(), c.seed_grid, ctx.globals().threads);
  CharacterizeOptions copt;
  copt.compute_barriers = barriers;
  copt.barrier.nodes = nodes;
  json zeros = json::array();
  const auto traps = characterize_all(f, bias, s, atom, copt, rep.warnings, zeros);
  json arr = json::array();
  for (const auto& t : traps) arr.push_back(trap_report_json(t));
  rep.payload = {{"traps", arr},
                 {"field_zeros_nm", zeros},
                 {"failed_seeds", s.failed_seeds},
                 {"out_of_range_seeds", s.out_of_range_seeds}};
  if (traps.empty()) throw PartialFailure{"no minima with non-zero field in the search range"};
}

struct TuneArgs {
  double target_z_nm = 0;
  std::string mode = "symmetric";
  std::string axis = "a2";
  double weight = 1.0;
  int restarts = 5;
  int evals = 150;
  int nodes = 64;
};

inline void cmd_tune_bias(Context& ctx, ReportDocument& rep, const TuneArgs& a) {
  const auto& f = expansion_or_no_minima(ctx);
  require(a.mode == "symmetric" || a.mode == "channels", "--mode must be 'symmetric' or 'channels'");
  require(a.axis == "a1" || a.axis == "a2", "--axis must be 'a1' or 'a2'");
  const TuneObjective obj(a.target_z_nm * units::nm,
                          a.mode == "symmetric" ? TuneMode::SymmetricBarriers : TuneMode::Channels,
                          a.axis == "a1" ? 0 : 1, a.weight);
  TuneOptions o;
  o.restarts = a.restarts;
  o.evaluations_per_restart = a.evals;
  o.barrier_nodes = a.nodes;
  o.seed = ctx.seed();
  o.threads = ctx.globals().threads;
  o.seed_grid = ctx.config().seed_grid;
  json common = {{"target_z_nm", a.target_z_nm}, {"mode", a.mode}, {"axis", a.axis}, {"weight", a.weight}};
  try {
    const TuneResult r = tune_bias(f, obj, ctx.atom(), BiasField(ctx.config().bias), o);
    common["bias_mT"] = vec_json(r.bias.B_ext(), units::mT);
    common["cost"] = r.cost;
    common["evaluations"] = r.evaluations;
    common["trap"] = trap_report_json(r.report);
    if (!r.report.larmor_healthy) rep.warnings.push_back("tuned trap violates the adiabatic (Larmor) condition");
    rep.payload = common;
  } catch (const ObjectiveUnreachable& e) {
    common["bias_mT"] = vec_json(e.best_bias().B_ext(), units::mT);
    common["cost"] = e.best_cost();
    if (e.best_report()) common["trap"] = trap_report_json(*e.best_report());
    rep.payload = common;
    throw PartialFailure{e.what()};
  }
}

struct HubbardArgs {
  std::string d_list = "425,100";
  std::string s_list;
  double j_over_u = 0.06;
  bool band = false;
  bool magnetic = false;
  int nodes = 64;
};

inline void cmd_hubbard(Context& ctx, ReportDocument& rep, const HubbardArgs& a) {
  const AtomState atom = ctx.atom();
  const auto ds = parse_list(a.d_list, "d");
  std::vector<double> ss;
  if (!a.s_list.empty()) {
    ss = parse_list(a.s_list, "s");
    require(ss.size() == ds.size(), "--s must list one depth per --d entry");
  }
  std::string csv = "d_nm,V0_over_ER,E_R_nK,U_nK,J_nK,J2_over_U_nK\n";
  json rows = json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double d = ds[i] * units::nm;
    require(d > 0, "--d values must be > 0");
    const double s = ss.empty() ? mott_depth(d, atom, a.j_over_u) : ss[i];
    const HubbardParams p = hubbard_sinusoidal(d, s, atom);
    json row = hubbard_json(p, atom);
    if (a.band) {
      const BandResult b = band_J_1d(s);
      row["J_band_nK"] = energy_to_temperature(b.J_band * p.E_R) / units::nK;
      if (b.weak_lattice) rep.warnings.push_back("weak-lattice regime (s < 2): band J is not a tight-binding J");
    }
    rows.push_back(row);
    auto nK = [](double E) { return energy_to_temperature(E) / units::nK; };
    csv += csv_row({ds[i], p.s, nK(p.E_R), nK(p.U), nK(p.J_tun), nK(p.superexchange)}) + "\n";
  }
  rep.payload = {{"j_over_u", a.j_over_u}, {"rows", rows}, {"csv", "hubbard.csv"}};
  write_text_file(std::filesystem::path(ctx.globals().out_dir) / "hubbard.csv", csv);

  if (a.magnetic) {
    const auto& f = expansion_or_no_minima(ctx);
    const BiasField bias(ctx.config().bias);
    const MinimaSearch s = find_trap_minima(f, bias, ctx.config().search_range(), ctx.config().seed_grid,
                                            ctx.globals().threads);
    CharacterizeOptions copt;
    copt.compute_barriers = false;
    json zeros = json::array();
    const auto traps = characterize_all(f, bias, s, atom, copt, rep.warnings, zeros);
    if (traps.empty()) throw PartialFailure{"no minima: magnetic Hubbard estimate needs a trap"};
    BarrierOptions bopt;
    bopt.nodes = a.nodes;
    const MagneticHubbard m = magnetic_hubbard_estimate(f, bias, traps.front(), atom, bopt);
    auto hz = [](double E) { return energy_to_frequency(E); };
    rep.payload["magnetic"] = {{"trap", trap_report_json(traps.front())},
                               {"U_Hz", hz(m.U)},
                               {"J_Hz", {{"a1", hz(m.J[0])}, {"a2", hz(m.J[1])}}},
                               {"log10_T", {{"a1", m.log10_T[0]}, {"a2", m.log10_T[1]}}},
                               {"U_over_J", {{"a1", m.U_over_J[0]}, {"a2", m.U_over_J[1]}}}};
    rep.warnings.push_back(m.caveat);
  }
}

inline void cmd_surface(Context& ctx, ReportDocument& rep, int nodes) {
  const auto& f = expansion_or_no_minima(ctx);
  const RunConfig& c = ctx.config();
  const BiasField bias(c.bias);
  const AtomState atom = ctx.atom();
  const MinimaSearch s = find_trap_minima(f, bias, c.search_range(), c.seed_grid, ctx.globals().threads);
  CharacterizeOptions copt;
  copt.barrier.nodes = nodes;
  copt.compute_barriers = false;
  json zeros = json::array();
  auto traps = characterize_all(f, bias, s, atom, copt, rep.warnings, zeros);
  json arr = json::array();
  for (auto& t : traps) {
    const SurfaceBudget b = surface_budget(f, bias, t, atom, c.material);
    t.vdw_valid = b.vdw_ok;
    arr.push_back({{"trap", trap_report_json(t)}, {"budget", surface_budget_json(b)}});
  }
  rep.payload = {{"budgets", arr}};
  if (traps.empty()) throw PartialFailure{"no minima with non-zero field in the search range"};
}

struct FanoArgs {
  double n0 = 1000;
  std::string dist = "poisson";
  int ntraj = 10000;
  std::string eta = "0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1";
  double rate = 1.0;
  int bootstrap = 200;
};

inline void cmd_fano(Context& ctx, ReportDocument& rep, const FanoArgs& a) {
  require(a.dist == "poisson" || a.dist == "fixed", "--dist must be 'poisson' or 'fixed'");
  TrajectoryEnsemble e;
  e.n_traj = a.ntraj;
  e.N0 = a.n0;
  e.dist = a.dist == "poisson" ? InitialDistribution::Poisson : InitialDistribution::Fixed;
  e.seed = ctx.seed();
  e.threads = ctx.globals().threads;
  e.bootstrap = a.bootstrap;
  const FanoCurve c = simulate_three_body(LossModel(a.rate), e, parse_list(a.eta, "eta"));
  std::string csv = "eta,meanN,F,stderr\n";
  for (const auto& p : c.points) {
    if (p.exhausted) {
      rep.warnings.push_back("checkpoint eta=" + csv_number(p.eta_target) + " exhausted");
      continue;
    }
    csv += csv_row({p.eta, p.mean_N, p.F, p.stderr_F}) + "\n";
  }
  write_text_file(std::filesystem::path(ctx.globals().out_dir) / "fano.csv", csv);
  rep.payload = fano_curve_json(c);
  rep.payload["n0"] = a.n0;
  rep.payload["dist"] = a.dist;
  rep.payload["ntraj"] = a.ntraj;
  rep.payload["seed"] = e.seed;
  rep.payload["csv"] = "fano.csv";
}

inline void cmd_transport(Context& ctx, ReportDocument& rep, const std::string& to_mT, int steps) {
  require(steps >= 1, "--steps must be >= 1");
  const auto& f = expansion_or_no_minima(ctx);
  const RunConfig& c = ctx.config();
  const auto to = parse_list(to_mT, "to-mT");
  require(to.size() == 3, "--to-mT needs three components");
  const Vec3 B1 = Vec3(to[0], to[1], to[2]) * units::mT;
  std::vector<BiasField> schedule;
  for (int k = 0; k <= steps; ++k) schedule.emplace_back(c.bias + (B1 - c.bias) * (static_cast<double>(k) / steps));
  const TransportResult r =
      transport_trajectory(f, schedule, c.search_range(), c.seed_grid, ctx.atom(), ctx.globals().threads);
  std::string csv = "step,trap,Bx_mT,By_mT,Bz_mT,x_nm,y_nm,z_nm,B_IP_mT\n";
  json arr = json::array();
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& st = r.steps[k];
    json mins = json::array();
    for (std::size_t i = 0; i < st.minima.size(); ++i) {
      const auto& m = st.minima[i];
      mins.push_back({{"position_nm", vec_json(m.r, units::nm)},
                      {"B_IP_mT", m.B_IP / units::mT},
                      {"freqs_kHz", vec_json(m.freqs, units::kHz)}});
      csv += std::to_string(k) + "," + std::to_string(i) + "," +
             csv_row({st.bias.x() / units::mT, st.bias.y() / units::mT, st.bias.z() / units::mT, m.r.x() / units::nm,
                      m.r.y() / units::nm, m.r.z() / units::nm, m.B_IP / units::mT}) +
             "\n";
    }
    arr.push_back({{"bias_mT", vec_json(st.bias, units::mT)}, {"minima", mins}});
  }
  write_text_file(std::filesystem::path(ctx.globals().out_dir) / "transport.csv", csv);
  rep.payload = {{"steps", arr}, {"csv", "transport.csv"}};
  if (r.lost_at) {
    rep.payload["lost_at"] = *r.lost_at;
    throw PartialFailure{r.message};
  }
  if (r.steps.front().minima.empty()) throw PartialFailure{"no minima at the first schedule entry"};
}

}  // namespace cli

/// Parses argv, runs one subcommand and writes report.json (plus CSV files)
/// into --out. Returns 0 on success, 1 on input errors, 2 on physics failures.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Magnetic microtrap lattice calculator", "maglattice"};
  app.set_version_flag("--version", kToolVersion);
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_flag("--json", g.print_json, "Print report.json to stdout");
  app.add_flag("--no-timestamp", g.no_timestamp, "Omit the timestamp (byte-reproducible reports)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (overrides the config)");
  app.require_subcommand(1, 1);

  auto* fm = app.add_subcommand("field-map", "Sample B over one unit cell at fixed heights");
  std::string z_nm = "100";
  int fm_n = 21;
  fm->add_option("--z-nm", z_nm, "Comma-separated heights in nm");
  fm->add_option("--n", fm_n, "Grid points per lattice direction");

  auto* tr = app.add_subcommand("traps", "Find and characterize the trap minima");
  bool no_barriers = false;
  int nodes = 64;
  tr->add_flag("--no-barriers", no_barriers, "Skip barrier heights");
  tr->add_option("--nodes", nodes, "String nodes for barriers");

  auto* tb = app.add_subcommand("tune-bias", "Tune the bias for symmetric barriers or channels");
  TuneArgs ta;
  tb->add_option("--target-z-nm", ta.target_z_nm, "Target trap height")->required();
  tb->add_option("--mode", ta.mode, "symmetric | channels");
  tb->add_option("--axis", ta.axis, "Channel axis: a1 | a2");
  tb->add_option("--weight", ta.weight, "Weight of the barrier term");
  tb->add_option("--restarts", ta.restarts, "Simplex restarts");
  tb->add_option("--evals", ta.evals, "Evaluations per restart");
  tb->add_option("--nodes", ta.nodes, "String nodes for barriers");

  auto* hb = app.add_subcommand("hubbard", "Hubbard parameters versus lattice period");
  HubbardArgs ha;
  hb->add_option("--d", ha.d_list, "Comma-separated lattice periods in nm");
  hb->add_option("--s", ha.s_list, "Explicit depths V0/E_R (default: Mott depth)");
  hb->add_option("--j-over-u", ha.j_over_u, "J/U defining the Mott depth");
  hb->add_flag("--band", ha.band, "Add the plane-wave band J");
  hb->add_flag("--magnetic", ha.magnetic, "Estimate U and J for the first magnetic trap (needs --config)");
  hb->add_option("--nodes", ha.nodes, "String nodes for the tunneling path");

  auto* sf = app.add_subcommand("surface", "Surface-effect budget for every trap");
  int sf_nodes = 64;
  sf->add_option("--nodes", sf_nodes, "String nodes for barriers");

  auto* fa = app.add_subcommand("fano", "Three-body loss Fano factor curve");
  FanoArgs fa_args;
  fa->add_option("--n0", fa_args.n0, "Initial (mean) atom number");
  fa->add_option("--dist", fa_args.dist, "poisson | fixed");
  fa->add_option("--ntraj", fa_args.ntraj, "Number of trajectories");
  fa->add_option("--eta", fa_args.eta, "Comma-separated surviving fractions, descending");
  fa->add_option("--rate", fa_args.rate, "Three-body rate constant (1/s)");
  fa->add_option("--bootstrap", fa_args.bootstrap, "Bootstrap resamples");

  auto* tp = app.add_subcommand("transport", "Track minima along a linear bias ramp");
  std::string to_mT;
  int steps = 20;
  tp->add_option("--to-mT", to_mT, "Final bias bx,by,bz in mT")->required();
  tp->add_option("--steps", steps, "Ramp steps");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kInputError;
  }
  if (seed_opt->count()) g.seed = seed_value;

  ReportDocument rep;
  Context ctx(g);
  int code = kOk;
  try {
    std::filesystem::create_directories(g.out_dir);
    if (fm->parsed()) {
      rep.command = "field-map";
      cmd_field_map(ctx, rep, parse_list(z_nm, "z-nm"), fm_n);
    } else if (tr->parsed()) {
      rep.command = "traps";
      cmd_traps(ctx, rep, !no_barriers, nodes);
    } else if (tb->parsed()) {
      rep.command = "tune-bias";
      cmd_tune_bias(ctx, rep, ta);
    } else if (hb->parsed()) {
      rep.command = "hubbard";
      cmd_hubbard(ctx, rep, ha);
    } else if (sf->parsed()) {
      rep.command = "surface";
      cmd_surface(ctx, rep, sf_nodes);
    } else if (fa->parsed()) {
      rep.command = "fano";
      cmd_fano(ctx, rep, fa_args);
    } else if (tp->parsed()) {
      rep.command = "transport";
      cmd_transport(ctx, rep, to_mT, steps);
    }
  } catch (const PartialFailure& pf) {
    err << "maglattice: " << pf.message << "\n";
    rep.warnings.push_back(pf.message);
    code = kPhysicsError;
  } catch (const InputError& e) {
    err << "maglattice: input error: " << e.what() << "\n";
    rep.payload = {{"error", std::string("input error: ") + e.what()}};
    code = kInputError;
  } catch (const PhysicsError& e) {
    err << "maglattice: " << e.what() << "\n";
    rep.payload = {{"error", e.what()}};
    code = kPhysicsError;
  } catch (const std::filesystem::filesystem_error& e) {
    // The output directory itself is unusable, so there is nowhere to write a report.
    err << "maglattice: " << e.what() << "\n";
    return kInputError;
  }

  rep.config = ctx.config_echo();
  if (!g.no_timestamp) rep.timestamp = utc_timestamp();
  const std::string text = rep.to_json().dump(2) + "\n";
  try {
    write_text_file(std::filesystem::path(g.out_dir) / "report.json", text);
  } catch (const InputError& e) {
    err << "maglattice: " << e.what() << "\n";
    return kInputError;
  }
  if (g.print_json) out << text;
  else if (code == kOk) out << rep.command << ": ok, report written to " << (std::filesystem::path(g.out_dir) / "report.json").string() << "\n";
  return code;
}

}  // namespace maglattice
