#include "catch_amalgamated.hpp"

#include <random>

#include "maglattice/ensemble.hpp"

using namespace maglattice;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Fano factor theory curve") {
  CHECK(fano_theory(1.0, 1.0) == 1.0);
  CHECK(fano_theory(0.0, 1.0) == kFanoAsymptote);
  CHECK_THAT(fano_theory(0.5, 1.0), WithinRel(0.6125, 1e-12));
  CHECK_THAT(fano_theory(0.5, 0.0), WithinRel(0.6 * (1 - std::pow(0.5, 5)), 1e-12));
  CHECK_THROWS_AS(fano_theory(1.5, 1.0), InputError);
  CHECK_THROWS_AS(fano_theory(0.5, -1.0), InputError);
}

TEST_CASE("loss model") {
  const LossModel m(2.0);
  CHECK(m.event_rate(2) == 0);
  CHECK(m.event_rate(5) == 2.0 * 5 * 4 * 3);
  CHECK_THROWS_AS(LossModel(0.0), InputError);
}

TEST_CASE("Fano estimator") {
  SECTION("hand-computed sample") {
    // 0,1,2,3 repeated: mean 1.5, unbiased variance 1.25 * n/(n-1).
    std::vector<std::int64_t> s;
    for (int i = 0; i < 400; ++i) s.push_back(i % 4);
    const FanoEstimate e = fano_from_samples(s);
    CHECK_THAT(e.mean, WithinRel(1.5, 1e-15));
    CHECK_THAT(e.F, WithinRel(1.25 * 400.0 / 399.0 / 1.5, 1e-12));
    CHECK(e.stderr_F > 0);
  }
  SECTION("Poisson samples") {
    std::mt19937_64 rng(42);
    std::poisson_distribution<std::int64_t> pois(50.0);
    std::vector<std::int64_t> s(20000);
    for (auto& x : s) x = pois(rng);
    const FanoEstimate e = fano_from_samples(s);
    CHECK_THAT(e.F, WithinAbs(1.0, 0.04));
    // Expected standard error of Var/Mean for a Poisson sample ~ sqrt(2/n).
    CHECK_THAT(e.stderr_F, WithinRel(std::sqrt(2.0 / s.size()), 0.3));
  }
  SECTION("constant samples") {
    const FanoEstimate e = fano_from_samples(std::vector<std::int64_t>(500, 7));
    CHECK(e.F == 0);
    CHECK(e.stderr_F == 0);
  }
  SECTION("validation") {
    CHECK_THROWS_AS(fano_from_samples(std::vector<std::int64_t>(50, 1)), InputError);
    CHECK_THROWS_AS(fano_from_samples(std::vector<std::int64_t>(500, 1), 10), InputError);
    CHECK_THROWS_AS(fano_from_samples(std::vector<std::int64_t>(500, 0)), InputError);
    std::vector<std::int64_t> neg(500, 1);
    neg[3] = -1;
    CHECK_THROWS_AS(fano_from_samples(neg), InputError);
  }
}

TEST_CASE("three-body simulation") {
  TrajectoryEnsemble e;
  e.n_traj = 3000;
  e.N0 = 300;
  e.seed = 11;
  const std::vector<double> etas = {0.9, 0.7, 0.5, 0.3};

  SECTION("fixed start relaxes towards 0.6") {
    e.dist = InitialDistribution::Fixed;
    const FanoCurve c = simulate_three_body(LossModel(1.0), e, etas);
    CHECK(c.initial_F == 0);
    CHECK(c.initial_mean == 300);
    REQUIRE(c.points.size() == etas.size());
    double last_t = 0;
    for (const auto& p : c.points) {
      REQUIRE_FALSE(p.exhausted);
      const double want = fano_theory(p.eta, 0.0);
      CHECK_THAT(p.F, WithinAbs(want, std::max(4 * p.stderr_F, 0.03)));
      CHECK(p.time > last_t);
      last_t = p.time;
    }
  }

  SECTION("checkpoints remove an exact number of atoms") {
    const FanoCurve c = simulate_three_body(LossModel(1.0), e, etas);
    const double total0 = c.initial_mean * e.n_traj;
    for (const auto& p : c.points) {
      const double events = std::ceil((1 - p.eta_target) * total0 / 3 - 1e-9);
      CHECK_THAT(p.mean_N * e.n_traj, WithinRel(total0 - 3 * events, 1e-12));
      CHECK_THAT(p.eta, WithinAbs(p.eta_target, 3.0 / total0));
    }
  }

  SECTION("rate constant only rescales time") {
    const FanoCurve a = simulate_three_body(LossModel(1.0), e, etas);
    const FanoCurve b = simulate_three_body(LossModel(8.0), e, etas);
    for (std::size_t i = 0; i < etas.size(); ++i) {
      CHECK(a.points[i].F == b.points[i].F);
      CHECK(a.points[i].stderr_F == b.points[i].stderr_F);
      CHECK_THAT(b.points[i].time, WithinRel(a.points[i].time / 8, 1e-12));
    }
  }

  SECTION("results do not depend on the thread count") {
    const FanoCurve a = simulate_three_body(LossModel(1.0), e, etas);
    TrajectoryEnsemble t = e;
    t.threads = 4;
    const FanoCurve b = simulate_three_body(LossModel(1.0), t, etas);
    CHECK(a.initial_F == b.initial_F);
    for (std::size_t i = 0; i < etas.size(); ++i) {
      CHECK(a.points[i].F == b.points[i].F);
      CHECK(a.points[i].mean_N == b.points[i].mean_N);
      CHECK(a.points[i].time == b.points[i].time);
    }
  }

  SECTION("checkpoints beyond the last event are exhausted") {
    // Ten atoms per trajectory: loss stops at one atom, i.e. eta = 0.1.
    e.dist = InitialDistribution::Fixed;
    e.N0 = 10;
    e.n_traj = 200;
    const FanoCurve c = simulate_three_body(LossModel(1.0), e, {0.5, 0.05});
    CHECK_FALSE(c.points[0].exhausted);
    CHECK(c.points[1].exhausted);
  }

  SECTION("validation") {
    CHECK_THROWS_AS(simulate_three_body(LossModel(1.0), e, {}), InputError);
    CHECK_THROWS_AS(simulate_three_body(LossModel(1.0), e, {0.5, 0.7}), InputError);
    CHECK_THROWS_AS(simulate_three_body(LossModel(1.0), e, {1.2}), InputError);
    e.n_traj = 10;
    CHECK_THROWS_AS(simulate_three_body(LossModel(1.0), e, {0.5}), InputError);
  }
}

TEST_CASE("exponent fit") {
  FanoCurve c;
  for (double eta = 0.9; eta > 0.45; eta -= 0.1) {
    FanoPoint p;
    p.eta_target = p.eta = eta;
    p.F = 0.6 + 0.4 * std::pow(eta, 5);
    p.stderr_F = 0.01;
    c.points.push_back(p);
  }
  const ExponentFit f = fit_fano_exponent(c, 0.4, 1.0);
  CHECK_THAT(f.slope, WithinRel(5.0, 1e-9));
  CHECK_THAT(std::exp(f.intercept), WithinRel(0.4, 1e-9));
  CHECK(f.points_used == 5);
  CHECK_THROWS_AS(fit_fano_exponent(c, 0.85, 1.0), PhysicsError);
}
