#include "catch_amalgamated.hpp"

#include "oracles.hpp"

using namespace maglattice;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const AtomState kRb = default_rb87();
const double kC3 = 1.3e-48;

bool has_flag(const SurfaceBudget& b, const std::string& what) {
  for (const auto& f : b.flags)
    if (f.find(what) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("C3 coefficient") {
  const double a = c3_coefficient(kRb, 0.5);
  CHECK_THAT(c3_coefficient(kRb, 1.0), WithinRel(2 * a, 1e-12));
  const double lb = kRb.lambda_bar();
  CHECK_THAT(a, WithinRel(3.0 / 32.0 * lb * lb * lb * PC::hbar * kRb.gamma_nat(), 1e-12));
  CHECK_THROWS_AS(c3_coefficient(kRb, 0), InputError);
  CHECK_THROWS_AS(c3_coefficient(kRb, 1.5), InputError);

  CHECK_THAT(epsilon_factor_from_permittivity(3), WithinRel(0.5, 1e-12));
  CHECK_THROWS_AS(epsilon_factor_from_permittivity(1), InputError);
}

TEST_CASE("linear trap shift") {
  const double w = kTwoPi * 1e6, z0 = 100e-9;
  const VdwShift s = vdw_trap_shift(w, z0, kC3, kRb);
  CHECK(s.delta_z < 0);
  CHECK_THAT(vdw_trap_shift(w, z0, 2 * kC3, kRb).delta_z, WithinRel(2 * s.delta_z, 1e-12));
  CHECK_THAT(vdw_trap_shift(2 * w, z0, kC3, kRb).delta_z, WithinRel(s.delta_z / 4, 1e-12));
  CHECK_THAT(vdw_trap_shift(w, 2 * z0, kC3, kRb).delta_z, WithinRel(s.delta_z / 16, 1e-12));
  CHECK(s.linearization_valid);
  // Nearly at the critical frequency the shift is a large fraction of z0.
  CHECK_FALSE(vdw_trap_shift(kTwoPi * 0.3e6, z0, kC3, kRb).linearization_valid);
  CHECK(vdw_trap_shift(w, 3 * kRb.lambda_bar(), kC3, kRb).retardation_regime);
  CHECK_FALSE(vdw_trap_shift(w, kRb.lambda_bar(), kC3, kRb).retardation_regime);
}

TEST_CASE("linear shift against the exact minimum") {
  // With x = (z - z0)/z0 at the true minimum and r the linear estimate,
  // x (1 + x)^4 = -r exactly, so the linear estimate is off by 1 - (1 + x)^4.
  for (double f : {0.5e6, 1e6, 4e6})
    for (double z0 : {80e-9, 150e-9}) {
      const double w = kTwoPi * f;
      const double lin = vdw_trap_shift(w, z0, kC3, kRb).delta_z;
      double zmin;
      try {
        zmin = numeric_min_oracle(w, z0, kC3, kRb);
      } catch (const PhysicsError&) {
        continue;
      }
      const double x = (zmin - z0) / z0;
      CHECK_THAT(x * std::pow(1 + x, 4), WithinRel(lin / z0, 1e-6));
      CHECK_THAT(oracle::rel_err(lin, zmin - z0), WithinRel(1 - std::pow(1 + x, 4), 1e-5));
    }
}

TEST_CASE("critical trap frequency") {
  const double z0 = 100e-9;
  const OmegaCrit c = omega_crit(z0, kC3, kRb);
  CHECK_THAT(c.curvature, WithinRel(2 * c.weak, 1e-12));
  CHECK(c.curvature < c.strict);
  CHECK(c.strict < c.exact);
  // Shrinking z0 by 2 stiffens the requirement by 2^(5/2).
  CHECK_THAT(omega_crit(z0 / 2, kC3, kRb).strict, WithinRel(std::pow(2.0, 2.5) * c.strict, 1e-12));
  // The exact potential keeps a minimum just above the exact threshold and
  // loses it just below; the first-order estimate is not enough.
  CHECK_NOTHROW(numeric_min_oracle(1.001 * c.exact, z0, kC3, kRb));
  CHECK_THROWS_WITH(numeric_min_oracle(0.999 * c.exact, z0, kC3, kRb), ContainsSubstring("trap destroyed"));
  CHECK_THROWS_AS(numeric_min_oracle(1.01 * c.strict, z0, kC3, kRb), PhysicsError);
}

TEST_CASE("WKB against closed forms") {
  const double V0 = PC::kB * 1e-6, w = 50e-9;

  SECTION("rectangular profile") {
    auto make = [&](int n) {
      PotentialProfile1D p;
      for (int i = 0; i < n; ++i) {
        const double z = -50e-9 + 150e-9 * i / (n - 1);
        p.z.push_back(z);
        p.V.push_back(z >= 0 && z <= w ? V0 : 0.0);
      }
      return p;
    };
    const WkbResult a = wkb_log_transmission(make(20001), kRb);
    CHECK(a.forbidden_regions == 1);
    CHECK(a.richardson_change < 1e-4);
    CHECK_THAT(a.log10_T, WithinRel(oracle::rectangular_log10_T(V0, w, kRb.mass()), 5e-3));
    // Denser sampling only sharpens the edges.
    const WkbResult b = wkb_log_transmission(make(40001), kRb);
    CHECK_THAT(b.log10_T, WithinRel(a.log10_T, 1e-3));
  }
  SECTION("triangular callable") {
    auto V = [&](double z) { return z >= 0 && z <= w ? V0 * (1 - z / w) : 0.0; };
    const WkbResult r = wkb_log_transmission(V, 0.0, -10e-9, 60e-9, kRb);
    CHECK_THAT(r.log10_T, WithinRel(oracle::triangular_log10_T(V0, w, kRb.mass()), 1e-3));
  }
  SECTION("two barriers add") {
    auto one = [&](double z) { return z >= 0 && z <= w ? V0 : 0.0; };
    auto two = [&](double z) { return one(z) + one(z - 100e-9); };
    const WkbResult a = wkb_log_transmission(one, 0.0, -20e-9, 180e-9, kRb);
    const WkbResult b = wkb_log_transmission(two, 0.0, -20e-9, 180e-9, kRb);
    CHECK(b.forbidden_regions == 2);
    CHECK_THAT(b.log10_T, WithinRel(2 * a.log10_T, 1e-4));
  }
  SECTION("no barrier") {
    auto V = [&](double z) { return V0 * std::sin(z / w); };
    const WkbResult r = wkb_log_transmission(V, 2 * V0, 0.0, 200e-9, kRb);
    CHECK(r.no_barrier);
    CHECK(r.log10_T == 0);
  }
  SECTION("validation") {
    PotentialProfile1D p;
    p.z = {0, 1e-9, 1e-9};
    p.V = {0, 1, 0};
    CHECK_THROWS_AS(wkb_log_transmission(p, kRb), InputError);
    p.z = {0};
    p.V = {0, 1};
    CHECK_THROWS_AS(wkb_log_transmission(p, kRb), InputError);
    CHECK_THROWS_AS(wkb_log_transmission([](double) { return 0.0; }, 0, 1, 0, kRb), InputError);
  }
}

TEST_CASE("tunneling length") {
  const double l = tunneling_length(1e-3, kRb);
  CHECK_THAT(l, WithinRel(PC::hbar / std::sqrt(8 * kRb.mass() * PC::muB * 1e-3), 1e-12));
  CHECK_THAT(tunneling_length(4e-3, kRb), WithinRel(l / 2, 1e-12));
  CHECK_THROWS_AS(tunneling_length(0, kRb), InputError);
}

TEST_CASE("Johnson noise") {
  SECTION("skin depth") {
    const double d = skin_depth(kTwoPi * 1e6, 45e6);
    CHECK_THAT(d, WithinRel(std::sqrt(2 / (PC::mu0 * kTwoPi * 1e6 * 45e6)), 1e-12));
    CHECK_THAT(skin_depth(kTwoPi * 4e6, 45e6), WithinRel(d / 2, 1e-12));
    CHECK_THROWS_AS(skin_depth(0, 1), InputError);
  }
  SECTION("scaled rate") {
    const JohnsonRate thin = johnson_rate_scaled(100e-9, 50e-9);
    CHECK_THAT(thin.lifetime * thin.rate, WithinRel(1, 1e-12));
    // Thick coating: rate -> C0 / (20/3 d).
    CHECK_THAT(johnson_rate_scaled(100e-9, 1.0).rate, WithinRel(kJohnsonC0 / (20.0 / 3.0 * 100e-9), 1e-6));
    // Far from a thin layer: rate ~ C0 t / (20/3 d^2).
    const double d = 1e-3, t = 50e-9;
    CHECK_THAT(johnson_rate_scaled(d, t).rate, WithinRel(kJohnsonC0 * t / (20.0 / 3.0 * d * d), 1e-4));
    CHECK_THAT(johnson_rate_scaled(100e-9, 50e-9, 2 * kJohnsonC0).rate, WithinRel(2 * thin.rate, 1e-12));
  }
  SECTION("SRH lifetime scalings") {
    const double w = kTwoPi * 1e6, skin = 80e-6, d = 100e-9, h = 25e-9;
    const SrhLifetime base = johnson_lifetime_srh(w, skin, d, h, LengthConvention::Meters);
    CHECK(base.tau > 0);
    CHECK(base.convention_unclear);
    CHECK_FALSE(base.factor_to_reference);
    CHECK_THAT(johnson_lifetime_srh(2 * w, skin, d, h, LengthConvention::Meters).tau, WithinRel(8 * base.tau, 1e-12));
    CHECK_THAT(johnson_lifetime_srh(w, 2 * skin, d, h, LengthConvention::Meters).tau, WithinRel(4 * base.tau, 1e-12));
    CHECK_THAT(johnson_lifetime_srh(w, skin, 2 * d, h, LengthConvention::Meters).tau, WithinRel(4 * base.tau, 1e-12));
    CHECK_THAT(johnson_lifetime_srh(w, skin, d, 2 * h, LengthConvention::Meters).tau, WithinRel(base.tau / 4, 1e-12));
    // The formula is dimensionally inconsistent: changing the length unit rescales tau by that unit.
    CHECK_THAT(johnson_lifetime_srh(w, skin, d, h, LengthConvention::Micrometers).tau, WithinRel(1e-6 * base.tau, 1e-9));
    CHECK_THAT(johnson_lifetime_srh(w, skin, d, h, LengthConvention::Centimeters).tau, WithinRel(1e-2 * base.tau, 1e-9));
    const SrhLifetime ref = johnson_lifetime_srh(w, skin, d, h, LengthConvention::Meters, 3 * base.tau);
    REQUIRE(ref.factor_to_reference);
    CHECK_THAT(*ref.factor_to_reference, WithinRel(3, 1e-12));
    CHECK(std::string(to_string(LengthConvention::Micrometers)) != to_string(LengthConvention::Meters));
  }
}

TEST_CASE("length scales") {
  const double w = kTwoPi * 200e3;
  CHECK_THAT(oscillator_length(w, kRb), WithinRel(std::sqrt(PC::hbar / (2 * kRb.mass() * w)), 1e-12));
  CHECK_THAT(oscillator_length(4 * w, kRb), WithinRel(oscillator_length(w, kRb) / 2, 1e-12));
  CHECK_THAT(thermal_rms_size(4e-6, w, kRb), WithinRel(2 * thermal_rms_size(1e-6, w, kRb), 1e-12));
  CHECK(thermal_rms_size(0, w, kRb) == 0);
  CHECK_THROWS_AS(oscillator_length(-1, kRb), InputError);
  CHECK_THROWS_AS(thermal_rms_size(-1, w, kRb), InputError);
  CHECK(tip_field_enhancement(50e-9, 5e-9) == Catch::Approx(10));
  CHECK_THROWS_AS(tip_field_enhancement(1e-9, 5e-9), InputError);
}

TEST_CASE("surface budget for a stripe trap") {
  const double L = 100e-9;
  const auto g = LatticeGeometry::square(L);
  const double P = 0.5 * PC::mu0 * 25e-9 * 670e3, A = 2.0 / kPi, k = kTwoPi / L;
  const auto f = FourierExpansion::single_mode(g, 1, 0, A, 0, P);
  const BiasField bias(Vec3(-P * A * k * std::exp(-k * 80e-9), 0.3e-3, 0));
  std::optional<Vec3> m;
  for (const auto& c : find_trap_minima(f, bias, {20e-9, 300e-9}, 5).minima)
    if (eval_B(f, bias.B_ext(), c).norm() > 1e-10) m = c;
  REQUIRE(m);
  CharacterizeOptions copt;
  copt.compute_barriers = false;
  const TrapReport trap = characterize_trap(f, bias, *m, kRb, copt);

  MaterialParams mat;
  mat.C3_override = kC3;
  const SurfaceBudget b = surface_budget(f, bias, trap, kRb, mat);
  CHECK(b.C3 == kC3);
  CHECK_THAT(b.z0, WithinRel(80e-9, 1e-6));
  CHECK(b.omega == trap.omega_vertical());
  CHECK(b.delta_zt == vdw_trap_shift(b.omega, b.z0, kC3, kRb).delta_z);
  CHECK(b.vdw_ok == (b.omega > b.omega_crit.exact));
  CHECK(b.log10_T < -100);
  CHECK_FALSE(b.no_barrier);
  CHECK_THAT(b.larmor_omega, WithinRel(0.5 * PC::muB * trap.B_IP / PC::hbar, 1e-12));
  CHECK_THAT(b.skin_depth, WithinRel(skin_depth(b.larmor_omega, mat.sigma), 1e-12));
  CHECK_THAT(b.gamma_spinflip, WithinRel(johnson_rate_scaled(b.z0, mat.coating_thickness).rate, 1e-12));
  CHECK(b.dominant_loss == "johnson_spin_flip");
  CHECK(has_flag(b, "unit convention unclear"));

  // Without an override C3 comes from the atom and the permittivity factor.
  const SurfaceBudget d = surface_budget(f, bias, trap, kRb);
  CHECK_THAT(d.C3, WithinRel(c3_coefficient(kRb, 0.85), 1e-12));

  // An absurd C3 swallows the trap; the budget says so instead of failing.
  mat.C3_override = 1e-40;
  const SurfaceBudget bad = surface_budget(f, bias, trap, kRb, mat);
  CHECK_FALSE(bad.vdw_ok);
  CHECK(has_flag(bad, "VdW destroys trap"));
  CHECK_FALSE(bad.linearization_valid);
}
