#pragma once

// Bose-Hubbard parameters for sinusoidal lattices, a plane-wave band solver
// used to cross-check the tunneling fit, and on-site/tunneling estimates for
// magnetic microtraps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maglattice/error.hpp"
#include "maglattice/numerics.hpp"
#include "maglattice/physics.hpp"
#include "maglattice/surface.hpp"
#include "maglattice/trap_analysis.hpp"

namespace maglattice {

// (pi hbar)^2 / (2 m d^2), d the lattice period.
inline double recoil_energy(double d, const AtomState& atom) {
  require(d > 0, "lattice period must be > 0");
  const double p = kPi * PC::hbar / d;
  return p * p / (2.0 * atom.mass());
}

struct HubbardParams {
  double d = 0;          // m
  double s = 0;          // V0 / E_R
  double E_R = 0;        // J
  double U = 0;          // J
  double J_tun = 0;      // J
  double superexchange = 0;  // J_tun^2 / U
  double U_over_J = 0;
};

namespace hubbard_fit {
// Tunneling and on-site fits for a sin^2 lattice, valid for 1 <= s <= 50.
constexpr double kJ = 1.43, kJExp = 0.98, kJDecay = 2.07;
constexpr double kU = 5.97, kUExp = 0.88;
constexpr double kSMin = 1.0, kSMax = 50.0;

inline double j_over_er(double s) { return kJ * std::pow(s, kJExp) * std::exp(-kJDecay * std::sqrt(s)); }
// lambda = 2 d is the optical wavelength that would produce period d.
inline double u_over_er(double s, double d, double a_s) { return kU * (a_s / (2.0 * d)) * std::pow(s, kUExp); }
}  // namespace hubbard_fit

inline HubbardParams hubbard_sinusoidal(double d, double s, const AtomState& atom) {
  require(d > 0, "lattice period must be > 0");
  if (!(s >= hubbard_fit::kSMin && s <= hubbard_fit::kSMax))
    throw InputError("fit out of range: lattice depth s must lie in [1, 50]");
  HubbardParams p;
  p.d = d;
  p.s = s;
  p.E_R = recoil_energy(d, atom);
  p.J_tun = hubbard_fit::j_over_er(s) * p.E_R;
  p.U = hubbard_fit::u_over_er(s, d, atom.a_s()) * p.E_R;
  p.superexchange = p.J_tun * p.J_tun / p.U;
  p.U_over_J = p.U / p.J_tun;
  return p;
}

/// Lattice depth s at which J/U equals `j_over_u` (0.06 marks the Mott
/// transition in 3D).
inline double mott_depth(double d, const AtomState& atom, double j_over_u = 0.06) {
  require(j_over_u > 0.001 && j_over_u < 1, "j_over_u must lie in (0.001, 1)");
  auto g = [&](double s) {
    const HubbardParams p = hubbard_sinusoidal(d, s, atom);
    return p.J_tun / p.U - j_over_u;
  };
  try {
    return bisect(g, hubbard_fit::kSMin, hubbard_fit::kSMax, 1e-4);
  } catch (const PhysicsError&) {
    throw PhysicsError("target ratio unreachable for s in [1, 50]");
  }
}

// ---------------------------------------------------------------------------
// 1D band structure of V(x) = s E_R sin^2(pi x / d)

struct BandResult {
  double s = 0;
  int n_plane_waves = 0;
  std::vector<double> q;        // quasi-momentum in units of pi/d, [-1, 1]
  std::vector<double> lowest;   // lowest band energy in units of E_R
  double J_band = 0;            // in units of E_R, bandwidth / 4
  double J_band_doubled = 0;    // same with the doubled basis
  bool weak_lattice = false;    // s < 2: tight-binding reading is poor
};

namespace detail {

// Lowest eigenvalue of the plane-wave Hamiltonian at quasi-momentum q, in E_R.
// Basis states exp(i (q + 2j) pi x/d), j = -n..n.
inline double lowest_band_energy(double s, double q, int half) {
  const int n = 2 * half + 1;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double k = q + 2.0 * (i - half);
    H(i, i) = k * k + 0.5 * s;
    if (i + 1 < n) H(i, i + 1) = H(i + 1, i) = -0.25 * s;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

inline double band_width(double s, int half, int nq, std::vector<double>* q_out = nullptr,
                         std::vector<double>* e_out = nullptr) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < nq; ++i) {
    const double q = -1.0 + 2.0 * i / (nq - 1);
    const double e = lowest_band_energy(s, q, half);
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    if (q_out) q_out->push_back(q);
    if (e_out) e_out->push_back(e);
  }
  return hi - lo;
}

}  // namespace detail

inline BandResult band_J_1d(double s, int n_plane_waves = 41, int n_quasi = 65) {
  require(s >= 0, "lattice depth must be >= 0");
  require(n_plane_waves >= 11 && n_plane_waves % 2 == 1, "n_plane_waves must be odd and >= 11");
  require(n_quasi >= 64, "need at least 64 quasi-momenta");
  BandResult r;
  r.s = s;
  r.n_plane_waves = n_plane_waves;
  r.weak_lattice = s < 2.0;
  const int half = n_plane_waves / 2;
  r.J_band = detail::band_width(s, half, n_quasi, &r.q, &r.lowest) / 4.0;
  r.J_band_doubled = detail::band_width(s, 2 * half, n_quasi) / 4.0;
  if (std::abs(r.J_band_doubled - r.J_band) > 1e-3 * std::abs(r.J_band_doubled))
    throw PhysicsError("unconverged: doubling the plane-wave basis changes J by more than 0.1%");
  return r;
}

// ---------------------------------------------------------------------------
// Magnetic microtraps

/// On-site interaction of a harmonic ground state with the given trap
/// frequencies (Hz).
inline double onsite_U_gaussian(const Vec3& freqs, const AtomState& atom) {
  require(freqs.minCoeff() > 0, "trap frequencies must be > 0");
  double prod = 1;
  for (int i = 0; i < 3; ++i) prod *= std::sqrt(PC::hbar / (atom.mass() * kTwoPi * freqs[i]));
  const double g = 4.0 * kPi * PC::hbar * PC::hbar * atom.a_s() / atom.mass();
  return g * std::pow(kTwoPi, -1.5) / prod;
}

struct MagneticHubbard {
  double U = 0;           // J
  double J[2] = {0, 0};   // J, towards the a1 and a2 neighbours
  double log10_T[2] = {0, 0};
  double U_over_J[2] = {0, 0};
  std::string caveat;
};

/// Order-of-magnitude Hubbard parameters for one magnetic trap: U from the
/// harmonic ground state, J from WKB transmission along the minimum-|B| path
/// to each neighbour, J = (hbar w / 2 pi) exp(-int kappa ds), with w the
/// geometric mean trap frequency and the particle at the zero-point energy.
inline MagneticHubbard magnetic_hubbard_estimate(const FourierExpansion& f, const BiasField& bias,
                                                 const TrapReport& trap, const AtomState& atom,
                                                 const BarrierOptions& bopt = {}) {
  MagneticHubbard h;
  h.U = onsite_U_gaussian(trap.freqs, atom);
  const double w = kTwoPi * std::cbrt(trap.freqs[0] * trap.freqs[1] * trap.freqs[2]);
  const auto& g = f.geometry();
  const Vec2 nb[2] = {g.a1(), g.a2()};
  for (int a = 0; a < 2; ++a) {
    const BarrierResult br = barrier_heights(f, bias, trap.r0, trap.r0 + Vec3(nb[a].x(), nb[a].y(), 0), bopt);
    const auto& path = br.path;
    PotentialProfile1D prof;
    double s = 0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i) s += (path[i] - path[i - 1]).norm();
      if (i && (path[i] - path[i - 1]).norm() <= 0) continue;
      prof.z.push_back(s);
      prof.V.push_back(atom.moment() * eval_B(f, bias.B_ext(), path[i]).norm());
    }
    prof.E = atom.moment() * trap.B_IP + 0.5 * PC::hbar * w;
    const WkbResult wk = wkb_log_transmission(prof, atom);
    h.log10_T[a] = wk.log10_T;
    // exp(-int kappa) = sqrt(T)
    h.J[a] = PC::hbar * w / kTwoPi * std::pow(10.0, 0.5 * wk.log10_T);
    h.U_over_J[a] = h.U / h.J[a];
  }
  h.caveat = "estimate: Gaussian on-site U and WKB tunneling along the barrier path; method differs from a Wannier-function calculation";
  return h;
}

}  // namespace maglattice
