#include "catch_amalgamated.hpp"

#include "oracles.hpp"

using namespace maglattice;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const AtomState kRb = default_rb87();
}

TEST_CASE("recoil energy") {
  const double d = 425e-9;
  CHECK_THAT(recoil_energy(d, kRb), WithinRel(PC::h * PC::h / (8 * kRb.mass() * d * d), 1e-8));
  CHECK_THAT(recoil_energy(d / 2, kRb), WithinRel(4 * recoil_energy(d, kRb), 1e-12));
  const AtomState heavy(2 * kRb.mass(), 0.5, 2, kRb.a_s(), kRb.lambda_bar(), kRb.gamma_nat());
  CHECK_THAT(recoil_energy(d, heavy), WithinRel(0.5 * recoil_energy(d, kRb), 1e-12));
}

TEST_CASE("sinusoidal lattice parameters") {
  const HubbardParams p = hubbard_sinusoidal(425e-9, 10, kRb);
  CHECK_THAT(p.superexchange, WithinRel(p.J_tun * p.J_tun / p.U, 1e-12));
  CHECK_THAT(p.U_over_J, WithinRel(p.U / p.J_tun, 1e-12));
  CHECK_THAT(p.J_tun, WithinRel(hubbard_fit::j_over_er(10) * p.E_R, 1e-12));

  // U/J grows monotonically with depth.
  double last = 0;
  for (double s = 1; s <= 50; s += 0.5) {
    const double r = hubbard_sinusoidal(100e-9, s, kRb).U_over_J;
    CHECK(r > last);
    last = r;
  }

  CHECK_THROWS_AS(hubbard_sinusoidal(425e-9, 0.5, kRb), InputError);
  CHECK_THROWS_WITH(hubbard_sinusoidal(425e-9, 60, kRb), Catch::Matchers::ContainsSubstring("fit out of range"));
  CHECK_THROWS_AS(hubbard_sinusoidal(-1e-9, 10, kRb), InputError);
}

TEST_CASE("Mott depth") {
  for (double d : {425e-9, 100e-9}) {
    const double s = mott_depth(d, kRb);
    const HubbardParams p = hubbard_sinusoidal(d, s, kRb);
    CHECK_THAT(p.U / (4 * p.J_tun), WithinRel(1 / (4 * 0.06), 1e-3));
  }
  // A smaller period raises U relative to J, so the transition comes earlier.
  CHECK(mott_depth(100e-9, kRb) < mott_depth(425e-9, kRb));
  // At 20 nm J/U never exceeds ~0.23, even at s = 1.
  CHECK_THROWS_AS(mott_depth(20e-9, kRb, 0.5), PhysicsError);
  CHECK_THROWS_AS(mott_depth(425e-9, kRb, 2.0), InputError);
}

TEST_CASE("band structure") {
  SECTION("free particle") {
    // Lowest band of q^2 on [-1, 1]: width exactly 1 E_R.
    const BandResult b = band_J_1d(0);
    CHECK_THAT(b.J_band, WithinRel(0.25, 1e-12));
    CHECK(b.weak_lattice);
  }
  SECTION("shape") {
    const BandResult b = band_J_1d(8);
    CHECK_FALSE(b.weak_lattice);
    REQUIRE(b.q.size() == b.lowest.size());
    const std::size_t n = b.q.size();
    for (std::size_t i = 0; i < n; ++i) CHECK_THAT(b.lowest[i], WithinAbs(b.lowest[n - 1 - i], 1e-10));
    const auto lo = std::min_element(b.lowest.begin(), b.lowest.end()) - b.lowest.begin();
    CHECK_THAT(b.q[lo], WithinAbs(0, 1e-12));
    CHECK_THAT(b.J_band, WithinRel(0.0315, 0.15));
  }
  SECTION("deep lattice asymptote") {
    // Mathieu asymptote J = (4/sqrt(pi)) s^{3/4} exp(-2 sqrt(s)) E_R; the
    // leading correction is O(1/sqrt(s)), so the gap must shrink with depth.
    double last = 1;
    for (double s : {20.0, 40.0, 80.0}) {
      const double asym = 4 / std::sqrt(kPi) * std::pow(s, 0.75) * std::exp(-2 * std::sqrt(s));
      const double gap = std::abs(band_J_1d(s).J_band / asym - 1);
      CHECK(gap < last);
      last = gap;
    }
    CHECK(last < 0.06);
  }
  SECTION("J falls with depth") {
    double last = 1;
    for (double s = 1; s <= 20; s += 1) {
      const double J = band_J_1d(s).J_band;
      CHECK(J < last);
      last = J;
    }
  }
  SECTION("validation") {
    CHECK_THROWS_AS(band_J_1d(-1), InputError);
    CHECK_THROWS_AS(band_J_1d(8, 12), InputError);
    CHECK_THROWS_AS(band_J_1d(8, 41, 10), InputError);
    CHECK_THROWS_WITH(band_J_1d(3000, 11), Catch::Matchers::ContainsSubstring("unconverged"));
  }
}

TEST_CASE("Gaussian on-site interaction") {
  const Vec3 freqs(20e3, 35e3, 50e3);
  const double U = onsite_U_gaussian(freqs, kRb);
  CHECK_THAT(U, WithinRel(oracle::gaussian_overlap_U(freqs, kRb.mass(), kRb.a_s()), 1e-6));
  // U scales with the square root of the frequency product.
  CHECK_THAT(onsite_U_gaussian(4 * freqs, kRb), WithinRel(8 * U, 1e-12));
  CHECK_THROWS_AS(onsite_U_gaussian(Vec3(1e3, 0, 1e3), kRb), InputError);
}

TEST_CASE("magnetic trap Hubbard estimate") {
  const double L = 100e-9;
  const auto g = LatticeGeometry::square(L);
  const auto p = MagnetizationPattern::from_function(g, 20, 20, 670e3, 25e-9, [](double u, double v) {
    return std::abs(u - 0.5) < 0.2 && std::abs(v - 0.5) < 0.2;
  });
  const auto f = fourier_from_pattern(p, {6, 1e-4, false});
  const BiasField bias(Vec3(0.5e-3, 0.15e-3, 0.05e-3));
  std::optional<Vec3> m;
  for (const auto& c : find_trap_minima(f, bias, {0.3 * L, 2 * L}, 5).minima)
    if (eval_B(f, bias.B_ext(), c).norm() > 1e-10) m = c;
  REQUIRE(m);
  const TrapReport trap = characterize_trap(f, bias, *m, kRb);
  const MagneticHubbard h = magnetic_hubbard_estimate(f, bias, trap, kRb);
  CHECK_THAT(h.U, WithinRel(onsite_U_gaussian(trap.freqs, kRb), 1e-12));
  const double w = kTwoPi * std::cbrt(trap.freqs.prod());
  for (int a = 0; a < 2; ++a) {
    CHECK(h.log10_T[a] < 0);
    CHECK(h.J[a] > 0);
    CHECK_THAT(h.J[a], WithinRel(PC::hbar * w / kTwoPi * std::pow(10.0, 0.5 * h.log10_T[a]), 1e-12));
    CHECK_THAT(h.U_over_J[a], WithinRel(h.U / h.J[a], 1e-12));
  }
  CHECK_FALSE(h.caveat.empty());
}
