#pragma once

// Physical constants, atomic species data and the handful of unit
// conversions the rest of the library needs. Everything is SI.

#include <cmath>
#include <numbers>

#include "maglattice/error.hpp"

namespace maglattice {

// CODATA 2018 exact / recommended values.
struct PhysicalConstants {
  static constexpr double hbar = 1.054571817e-34;   // J s
  static constexpr double h = 6.62607015e-34;       // J s
  static constexpr double kB = 1.380649e-23;        // J/K
  static constexpr double muB = 9.2740100783e-24;   // J/T
  static constexpr double mu0 = 1.25663706212e-6;   // T m/A
  static constexpr double c = 299792458.0;          // m/s
};

using PC = PhysicalConstants;

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// I/O unit multipliers.
namespace units {
constexpr double nm = 1e-9;
constexpr double um = 1e-6;
constexpr double mT = 1e-3;
constexpr double G = 1e-4;
constexpr double nK = 1e-9;
constexpr double uK = 1e-6;
constexpr double kHz = 1e3;
constexpr double MHz = 1e6;
}  // namespace units

/// Atomic species in a magnetically trappable state.
///
/// The constructor enforces positivity of the species constants and a
/// positive magnetic prefactor gF*mF (low-field seeker).
class AtomState {
 public:
  AtomState(double mass, double gF, int mF, double a_s, double lambda_bar, double gamma_nat)
      : mass_(mass), gF_(gF), mF_(mF), a_s_(a_s), lambda_bar_(lambda_bar), gamma_nat_(gamma_nat) {
    require(mass > 0, "atom: mass must be > 0");
    require(a_s > 0, "atom: s-wave scattering length must be > 0");
    require(lambda_bar > 0, "atom: reduced wavelength must be > 0");
    require(gamma_nat > 0, "atom: natural linewidth must be > 0");
    require(gF * mF > 0, "atom: gF*mF must be > 0 for a low-field-seeking (trappable) state");
  }

  double mass() const { return mass_; }
  double gF() const { return gF_; }
  int mF() const { return mF_; }
  double a_s() const { return a_s_; }
  double lambda_bar() const { return lambda_bar_; }
  double gamma_nat() const { return gamma_nat_; }

  // gF*mF; multiplies muB*|B| in the Zeeman potential.
  double magnetic_prefactor() const { return gF_ * mF_; }
  // Magnetic moment gF*mF*muB in J/T.
  double moment() const { return magnetic_prefactor() * PC::muB; }

 private:
  double mass_;
  double gF_;
  int mF_;
  double a_s_;
  double lambda_bar_;
  double gamma_nat_;
};

// 87Rb in |F = mF = 2>. a_s = 5.3 nm is inferred (the oscillator length
// 10.7 nm at 500 kHz is quoted as twice the scattering length).
inline AtomState default_rb87() {
  return AtomState(1.44316e-25, 0.5, 2, 5.3e-9, 124e-9, kTwoPi * 6e6);
}

inline double field_to_energy(double B, const AtomState& atom) {
  require(B >= 0, "field must be >= 0");
  return atom.moment() * B;
}

inline double energy_to_field(double E, const AtomState& atom) { return E / atom.moment(); }

inline double field_to_temperature(double B, const AtomState& atom) {
  return field_to_energy(B, atom) / PC::kB;
}

inline double temperature_to_field(double T, const AtomState& atom) {
  return T * PC::kB / atom.moment();
}

inline double energy_to_temperature(double E) { return E / PC::kB; }
inline double temperature_to_energy(double T) { return T * PC::kB; }

inline double energy_to_angular_frequency(double E) { return E / PC::hbar; }
inline double angular_frequency_to_energy(double omega) { return PC::hbar * omega; }

inline double energy_to_frequency(double E) { return E / PC::h; }
inline double frequency_to_energy(double f) { return PC::h * f; }

}  // namespace maglattice
