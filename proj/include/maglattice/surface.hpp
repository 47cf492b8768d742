#pragma once

// Atom-surface effects for traps close to the chip: Van der Waals attraction,
// tunneling through the magnetic barrier to the surface, Johnson-noise spin
// flips, plus a few characteristic length scales.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "maglattice/error.hpp"
#include "maglattice/lattice_field.hpp"
#include "maglattice/numerics.hpp"
#include "maglattice/physics.hpp"
#include "maglattice/trap_analysis.hpp"

namespace maglattice {

// Non-retarded Van der Waals coefficient in J m^3.
inline double c3_coefficient(const AtomState& atom, double epsilon_factor) {
  require(epsilon_factor > 0 && epsilon_factor <= 1, "epsilon_factor must lie in (0, 1]");
  const double lb = atom.lambda_bar();
  return 3.0 / 16.0 * epsilon_factor * lb * lb * lb * PC::hbar * atom.gamma_nat();
}

// (eps_r - 1)/(eps_r + 1)
inline double epsilon_factor_from_permittivity(double eps_r) {
  require(eps_r > 1, "relative permittivity must be > 1");
  return (eps_r - 1) / (eps_r + 1);
}

struct VdwShift {
  double delta_z = 0;               // m, negative (towards the surface)
  bool linearization_valid = true;  // |delta_z|/z0 <= 0.2
  bool retardation_regime = false;  // z0 > 2 lambda_bar: non-retarded C3 overestimates
};

inline VdwShift vdw_trap_shift(double omega, double z0, double C3, const AtomState& atom) {
  require(omega > 0, "trap frequency must be > 0");
  require(z0 > 0, "trap distance must be > 0");
  require(C3 >= 0, "C3 must be >= 0");
  VdwShift s;
  const double z2 = z0 * z0;
  s.delta_z = -3.0 * C3 / (atom.mass() * omega * omega * z2 * z2);
  s.linearization_valid = std::abs(s.delta_z) / z0 <= 0.2;
  s.retardation_regime = z0 > 2.0 * atom.lambda_bar();
  return s;
}

/// Position of the local minimum of 1/2 m w^2 (z - z0)^2 - C3/z^3 found by
/// bisection on V'(z). Throws PhysicsError if the surface attraction has
/// removed the minimum.
inline double numeric_min_oracle(double omega, double z0, double C3, const AtomState& atom) {
  require(omega > 0 && z0 > 0 && C3 >= 0, "numeric_min_oracle: omega, z0 > 0 and C3 >= 0 required");
  if (C3 == 0) return z0;
  const double mw2 = atom.mass() * omega * omega;
  auto dV = [&](double z) { return mw2 * (z - z0) + 3.0 * C3 / (z * z * z * z); };
  // V' is convex in z; its minimum is where V'' = 0.
  const double zc = std::pow(12.0 * C3 / mw2, 0.2);
  if (zc >= z0 || dV(zc) >= 0) throw PhysicsError("trap destroyed by surface attraction");
  return bisect(dV, zc, z0, 1e-15 * z0);
}

struct OmegaCrit {
  double weak = 0;      // rad/s, sqrt(3 C3/(m z0^5)), from requiring a small shift
  double curvature = 0; // 2 * weak, from V''(z0) > 0
  double strict = 0;    // sqrt(2 (1 + sqrt 6)) * weak, V'' expanded to first order in the shift
  // Exact survival threshold of 1/2 m w^2 (z - z0)^2 - C3/z^3: V' has its
  // minimum at zc = (12 C3/m w^2)^(1/5) and a root below z0 iff zc < 0.8 z0,
  // i.e. w > 2 / 0.8^(5/2) * weak ~ 3.49 weak.
  double exact = 0;
};

inline OmegaCrit omega_crit(double z0, double C3, const AtomState& atom) {
  require(z0 > 0, "trap distance must be > 0");
  require(C3 >= 0, "C3 must be >= 0");
  OmegaCrit w;
  w.weak = std::sqrt(3.0 * C3 / (atom.mass() * std::pow(z0, 5)));
  w.curvature = 2.0 * w.weak;
  w.strict = std::sqrt(2.0 * (1.0 + std::sqrt(6.0))) * w.weak;
  w.exact = 2.0 / std::pow(0.8, 2.5) * w.weak;
  return w;
}

// ---------------------------------------------------------------------------
// WKB tunneling

struct PotentialProfile1D {
  std::vector<double> z;  // m, strictly increasing
  std::vector<double> V;  // J
  double E = 0;           // J
};

struct WkbResult {
  double log10_T = 0;
  bool no_barrier = false;
  int forbidden_regions = 0;
  int panels = 0;
  double richardson_change = 0;  // relative change of the exponent on doubling
};

namespace detail {

// Integral of kappa(z) = sqrt(2 m (V - E))/hbar between turning points a < b
// using z = c - h cos(theta), which removes the square-root endpoint behaviour.
template <typename Vf>
double kappa_integral(Vf&& V, double E, double a, double b, double mass, int panels) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  auto g = [&](double th) {
    const double z = c - h * std::cos(th);
    const double dv = V(z) - E;
    return dv > 0 ? std::sqrt(2.0 * mass * dv) / PC::hbar * h * std::sin(th) : 0.0;
  };
  const int n = panels + (panels % 2);
  const double dth = kPi / n;
  double s = g(0) + g(kPi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * g(i * dth);
  return s * dth / 3.0;
}

template <typename Vf>
WkbResult wkb_over_intervals(Vf&& V, double E, const std::vector<std::pair<double, double>>& intervals,
                             double mass, int min_panels) {
  WkbResult r;
  r.forbidden_regions = static_cast<int>(intervals.size());
  if (intervals.empty()) {
    r.no_barrier = true;
    return r;
  }
  int n = std::max(min_panels, 512);
  auto total = [&](int panels) {
    double s = 0;
    for (const auto& [a, b] : intervals) s += kappa_integral(V, E, a, b, mass, panels);
    return s;
  };
  double coarse = total(n);
  double fine = total(2 * n);
  // Refine until doubling changes the exponent by < 1e-4 relative.
  while (std::abs(fine - coarse) > 1e-4 * std::abs(fine) && n < (1 << 20)) {
    n *= 2;
    coarse = fine;
    fine = total(2 * n);
  }
  r.panels = 2 * n;
  r.richardson_change = fine != 0 ? std::abs(fine - coarse) / std::abs(fine) : 0.0;
  r.log10_T = -2.0 * fine * std::log10(std::exp(1.0));
  return r;
}

}  // namespace detail

/// log10 of the WKB transmission exp(-2 int kappa dz) through every
/// classically forbidden stretch of a sampled profile. Between samples the
/// potential is interpolated linearly.
inline WkbResult wkb_log_transmission(const PotentialProfile1D& p, const AtomState& atom, int min_panels = 512) {
  require(p.z.size() == p.V.size() && p.z.size() >= 2, "profile needs matching z and V samples (>= 2)");
  for (std::size_t i = 1; i < p.z.size(); ++i) require(p.z[i] > p.z[i - 1], "profile z must be strictly increasing");

  auto V = [&](double z) {
    if (z <= p.z.front()) return p.V.front();
    if (z >= p.z.back()) return p.V.back();
    const auto it = std::upper_bound(p.z.begin(), p.z.end(), z);
    const std::size_t i = static_cast<std::size_t>(it - p.z.begin());
    const double t = (z - p.z[i - 1]) / (p.z[i] - p.z[i - 1]);
    return p.V[i - 1] + t * (p.V[i] - p.V[i - 1]);
  };
  // Turning points from the linear interpolant.
  std::vector<std::pair<double, double>> intervals;
  std::optional<double> start;
  auto crossing = [&](std::size_t i) {
    const double d0 = p.V[i - 1] - p.E, d1 = p.V[i] - p.E;
    return p.z[i - 1] + (p.z[i] - p.z[i - 1]) * d0 / (d0 - d1);
  };
  if (p.V[0] > p.E) start = p.z[0];
  for (std::size_t i = 1; i < p.z.size(); ++i) {
    const bool in0 = p.V[i - 1] > p.E, in1 = p.V[i] > p.E;
    if (!in0 && in1) start = crossing(i);
    if (in0 && !in1) {
      intervals.emplace_back(*start, crossing(i));
      start.reset();
    }
  }
  if (start) intervals.emplace_back(*start, p.z.back());
  return detail::wkb_over_intervals(V, p.E, intervals, atom.mass(), min_panels);
}

/// Same for a potential given as a function on [z_lo, z_hi]. Turning points
/// are bracketed on a uniform scan of `scan` points and refined by bisection.
inline WkbResult wkb_log_transmission(const std::function<double(double)>& V, double E, double z_lo, double z_hi,
                                      const AtomState& atom, int scan = 4096, int min_panels = 512) {
  require(z_hi > z_lo, "wkb: empty interval");
  require(scan >= 128, "wkb: scan resolution must be >= 128");
  const double dz = (z_hi - z_lo) / (scan - 1);
  auto f = [&](double z) { return V(z) - E; };
  std::vector<std::pair<double, double>> intervals;
  std::optional<double> start;
  double z_prev = z_lo, f_prev = f(z_lo);
  if (f_prev > 0) start = z_lo;
  for (int i = 1; i < scan; ++i) {
    const double z = z_lo + i * dz;
    const double fz = f(z);
    if ((f_prev > 0) != (fz > 0)) {
      const double zt = bisect(f, z_prev, z, 1e-12 * (z_hi - z_lo));
      if (fz > 0) {
        start = zt;
      } else {
        intervals.emplace_back(*start, zt);
        start.reset();
      }
    }
    z_prev = z;
    f_prev = fz;
  }
  if (start) intervals.emplace_back(*start, z_hi);
  return detail::wkb_over_intervals(V, E, intervals, atom.mass(), min_panels);
}

// Length over which the wavefunction decays under a barrier mu_B * B
// (energy taken as muB*B, i.e. unit gF*mF).
inline double tunneling_length(double B, const AtomState& atom) {
  require(B > 0, "field must be > 0");
  return PC::hbar / std::sqrt(8.0 * atom.mass() * PC::muB * B);
}

// ---------------------------------------------------------------------------
// Johnson noise

inline double skin_depth(double omega, double sigma) {
  require(omega > 0 && sigma > 0, "skin_depth: omega and sigma must be > 0");
  return std::sqrt(2.0 / (PC::mu0 * omega * sigma));
}

// Empirical scaling constant for copper-class conductors, m/s.
constexpr double kJohnsonC0 = 88e-6;

struct JohnsonRate {
  double rate = 0;      // 1/s
  double lifetime = 0;  // s
};

/// Spin-flip rate from scaling measured loss rates to distance d above a
/// conducting layer of thickness t.
inline JohnsonRate johnson_rate_scaled(double d, double t, double C0 = kJohnsonC0) {
  require(d > 0 && t > 0, "johnson_rate_scaled: d and t must be > 0");
  require(C0 > 0, "johnson_rate_scaled: C0 must be > 0");
  JohnsonRate j;
  j.rate = C0 / ((4.0 + 8.0 / 3.0) * d * (1.0 + d / t));
  j.lifetime = 1.0 / j.rate;
  return j;
}

// Length/speed unit system used to evaluate the spin-flip lifetime formula,
// whose numerical constant carries no stated units.
enum class LengthConvention { Meters, Micrometers, Centimeters };

inline const char* to_string(LengthConvention c) {
  switch (c) {
    case LengthConvention::Meters: return "m";
    case LengthConvention::Micrometers: return "um";
    case LengthConvention::Centimeters: return "cm";
  }
  return "?";
}

struct SrhLifetime {
  double tau = 0;  // s
  LengthConvention convention = LengthConvention::Meters;
  bool convention_unclear = true;
  std::optional<double> factor_to_reference;  // reference / tau
};

inline SrhLifetime johnson_lifetime_srh(double omega, double skin, double d, double h,
                                        LengthConvention conv = LengthConvention::Meters,
                                        std::optional<double> reference = std::nullopt) {
  require(omega > 0 && skin > 0 && d > 0 && h > 0, "johnson_lifetime_srh: all inputs must be > 0");
  const double unit = conv == LengthConvention::Meters ? 1.0 : conv == LengthConvention::Micrometers ? 1e-6 : 1e-2;
  const double k = omega / (PC::c / unit);
  const double dl = skin / unit, dd = d / unit, hh = h / unit;
  SrhLifetime r;
  r.convention = conv;
  r.tau = (64.0 / 9.0) * (3e22 / 1.7e6) * k * k * k * dl * dl * dd * dd / (hh * hh);
  if (reference) r.factor_to_reference = *reference / r.tau;
  return r;
}

// ---------------------------------------------------------------------------
// Length scales

inline double oscillator_length(double omega, const AtomState& atom) {
  require(omega > 0, "omega must be > 0");
  return std::sqrt(PC::hbar / (2.0 * atom.mass() * omega));
}

inline double thermal_rms_size(double T, double omega, const AtomState& atom) {
  require(T >= 0, "temperature must be >= 0");
  require(omega > 0, "omega must be > 0");
  return std::sqrt(PC::kB * T / (atom.mass() * omega * omega));
}

inline double tip_field_enhancement(double h, double r) {
  require(r > 0 && h >= r, "tip_field_enhancement: need h >= r > 0");
  return h / r;
}

// ---------------------------------------------------------------------------
// Budget for one trap

struct MaterialParams {
  double epsilon_factor = 0.85;          // (eps_r - 1)/(eps_r + 1)
  double sigma = 45e6;                   // S/m, conducting coating
  double coating_thickness = 50e-9;      // m
  double film_thickness = 25e-9;         // m, magnetic film
  double C0 = kJohnsonC0;                // m/s
  std::optional<double> C3_override;     // J m^3
  LengthConvention srh_convention = LengthConvention::Meters;
};

struct SurfaceBudget {
  double C3 = 0;
  double epsilon_factor = 0;
  double z0 = 0;
  double omega = 0;        // rad/s, vertical trap frequency
  double delta_zt = 0;
  bool linearization_valid = true;
  bool retardation_regime = false;
  OmegaCrit omega_crit;
  bool vdw_ok = true;      // omega above the exact survival threshold
  double log10_T = 0;
  bool no_barrier = false;
  double tunnel_rate = 0;  // 1/s, attempt frequency times transmission
  double ell_tunnel = 0;   // m, at the trap field
  double larmor_omega = 0; // rad/s
  double skin_depth = 0;
  double gamma_spinflip = 0;
  double johnson_lifetime = 0;
  SrhLifetime tau_srh;
  std::string dominant_loss;
  std::vector<std::string> flags;
};

/// Collects the surface effects for a characterized trap. The tunneling
/// barrier is taken on the vertical line through the trap,
///   V(z) = gF mF muB |B(x0, y0, z)| - C3/z^3,
/// at energy V(z0) + hbar omega_z / 2.
inline SurfaceBudget surface_budget(const FourierExpansion& f, const BiasField& bias, const TrapReport& trap,
                                    const AtomState& atom, const MaterialParams& mat = {}) {
  require(trap.r0.z() > 0 && trap.B_IP > 0, "surface_budget: trap must sit above the film with B_IP > 0");
  SurfaceBudget b;
  try {
    b.epsilon_factor = mat.epsilon_factor;
    b.C3 = mat.C3_override ? *mat.C3_override : c3_coefficient(atom, mat.epsilon_factor);
    b.z0 = trap.r0.z();
    b.omega = trap.omega_vertical();

    const VdwShift sh = vdw_trap_shift(b.omega, b.z0, b.C3, atom);
    b.delta_zt = sh.delta_z;
    b.linearization_valid = sh.linearization_valid;
    b.retardation_regime = sh.retardation_regime;
    b.omega_crit = omega_crit(b.z0, b.C3, atom);
    b.vdw_ok = b.omega > b.omega_crit.exact;
    if (!b.vdw_ok) b.flags.push_back("VdW destroys trap");
    if (!b.vdw_ok && b.omega > b.omega_crit.strict)
      b.flags.push_back("above the first-order omega_crit but below the exact survival threshold");
    if (!b.linearization_valid) b.flags.push_back("linearization invalid");
    if (b.retardation_regime) b.flags.push_back("retardation regime: z0 > 2 lambda_bar");

    const Vec3 r0 = trap.r0;
    auto V = [&](double z) {
      return atom.moment() * eval_B(f, bias.B_ext(), Vec3(r0.x(), r0.y(), z)).norm() - b.C3 / (z * z * z);
    };
    const double E = V(b.z0) + 0.5 * PC::hbar * b.omega;
    const WkbResult w = wkb_log_transmission(V, E, 1e-3 * b.z0, b.z0, atom);
    b.log10_T = w.log10_T;
    b.no_barrier = w.no_barrier;
    if (w.no_barrier) b.flags.push_back("no barrier towards the surface");
    b.tunnel_rate = b.omega / kTwoPi * std::pow(10.0, b.log10_T);
    b.ell_tunnel = tunneling_length(trap.B_IP, atom);

    b.larmor_omega = std::abs(atom.gF()) * PC::muB * trap.B_IP / PC::hbar;
    b.skin_depth = skin_depth(b.larmor_omega, mat.sigma);
    const JohnsonRate jr = johnson_rate_scaled(b.z0, mat.coating_thickness, mat.C0);
    b.gamma_spinflip = jr.rate;
    b.johnson_lifetime = jr.lifetime;
    b.tau_srh = johnson_lifetime_srh(b.larmor_omega, b.skin_depth, b.z0, mat.film_thickness, mat.srh_convention);
    b.flags.push_back("spin-flip lifetime formula: unit convention unclear");

    b.dominant_loss = b.gamma_spinflip >= b.tunnel_rate ? "johnson_spin_flip" : "tunneling";
  } catch (const InputError& e) {
    throw InputError(std::string("surface_budget: ") + e.what());
  } catch (const PhysicsError& e) {
    throw PhysicsError(std::string("surface_budget: ") + e.what());
  }
  return b;
}

}  // namespace maglattice
