#pragma once

// Stochastic three-body loss in small trapped ensembles and the Fano factor
// of the surviving atom number.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "maglattice/error.hpp"
#include "maglattice/numerics.hpp"

namespace maglattice {

// Asymptotic Fano factor of pure three-body loss.
constexpr double kFanoAsymptote = 0.6;

/// Fano factor after a fraction `eta` of the atoms survives, starting from F0.
inline double fano_theory(double eta, double F0) {
  require(eta >= 0 && eta <= 1, "eta must lie in [0, 1]");
  require(F0 >= 0, "F0 must be >= 0");
  return kFanoAsymptote + std::pow(eta, 5) * (F0 - kFanoAsymptote);
}

struct LossModel {
  double rate_constant = 1.0;  // 1/s per ordered triple
  int event_loss = 3;

  explicit LossModel(double gamma3 = 1.0) : rate_constant(gamma3) {
    require(gamma3 > 0, "three-body rate constant must be > 0");
  }
  double event_rate(std::int64_t N) const {
    return N < 3 ? 0.0 : rate_constant * static_cast<double>(N) * (N - 1) * (N - 2);
  }
};

enum class InitialDistribution { Fixed, Poisson };

struct TrajectoryEnsemble {
  int n_traj = 10000;
  double N0 = 1000;
  InitialDistribution dist = InitialDistribution::Poisson;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int bootstrap = 200;
};

struct FanoEstimate {
  double F = 0;
  double stderr_F = 0;
  double mean = 0;
};

/// Var(N)/Mean(N) with the unbiased variance and a bootstrap standard error.
inline FanoEstimate fano_from_samples(const std::vector<std::int64_t>& samples, int resamples = 200,
                                      std::uint64_t seed = 0) {
  const std::size_t n = samples.size();
  require(n >= 100, "fano_from_samples: need at least 100 samples");
  require(resamples >= 200, "fano_from_samples: need at least 200 bootstrap resamples");
  auto fano = [n](long double s1, long double s2) -> double {
    const long double mean = s1 / n;
    const long double var = (s2 - s1 * s1 / n) / (n - 1);
    return static_cast<double>(var / mean);
  };
  long double s1 = 0, s2 = 0;
  for (auto x : samples) {
    require(x >= 0, "fano_from_samples: negative atom number");
    s1 += x;
    s2 += static_cast<long double>(x) * x;
  }
  if (!(s1 > 0)) throw InputError("fano_from_samples: zero mean");

  FanoEstimate est;
  est.mean = static_cast<double>(s1 / n);
  est.F = fano(s1, s2);

  std::mt19937_64 rng(mix_seed(seed, 0xB007));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  double acc = 0, acc2 = 0;
  int used = 0;
  for (int b = 0; b < resamples; ++b) {
    long double b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = samples[pick(rng)];
      b1 += x;
      b2 += static_cast<long double>(x) * x;
    }
    if (!(b1 > 0)) continue;
    const double f = fano(b1, b2);
    acc += f;
    acc2 += f * f;
    ++used;
  }
  const double m = acc / used;
  est.stderr_F = std::sqrt(std::max(0.0, (acc2 - used * m * m) / (used - 1)));
  return est;
}

struct FanoPoint {
  double eta_target = 0;
  double eta = 0;          // measured mean(N)/mean(N0)
  double mean_N = 0;
  double F = 0;
  double stderr_F = 0;
  double time = 0;         // s
  bool exhausted = false;
};

struct FanoCurve {
  double initial_mean = 0;
  double initial_F = 0;
  std::vector<FanoPoint> points;
};

namespace detail {

// One trajectory: draws N0, then calls on_event(tau) for every loss event in
// dimensionless time tau = gamma3 * t. Stops when fewer than three atoms remain.
template <typename OnEvent>
std::int64_t run_trajectory(const TrajectoryEnsemble& ens, std::size_t idx, int loss, OnEvent&& on_event) {
  std::mt19937_64 rng(mix_seed(ens.seed, idx));
  std::int64_t N = static_cast<std::int64_t>(std::llround(ens.N0));
  if (ens.dist == InitialDistribution::Poisson) N = std::poisson_distribution<std::int64_t>(ens.N0)(rng);
  const std::int64_t N_start = N;
  std::exponential_distribution<double> expo(1.0);
  double tau = 0;
  while (N >= 3) {
    tau += expo(rng) / (static_cast<double>(N) * (N - 1) * (N - 2));
    on_event(tau);
    N -= loss;
  }
  return N_start;
}

// Log-time histogram bins for the pooled event times.
constexpr double kLogTauMin = -40.0, kLogTauMax = 40.0;
constexpr int kTauBins = 8000;

inline int tau_bin(double tau) {
  const double l = std::log10(tau);
  const int b = static_cast<int>(std::floor((l - kLogTauMin) / (kLogTauMax - kLogTauMin) * kTauBins));
  return std::clamp(b, 0, kTauBins - 1);
}

}  // namespace detail

/// Exact-event simulation of three-body loss. Each checkpoint eta is the
/// moment the ensemble has lost a fraction (1 - eta) of its initial atoms,
/// i.e. the k-th pooled loss event with k = ceil((1 - eta) sum N0 / 3); all
/// trajectories are sampled at that common time.
///
/// Trajectories are regenerated from their per-index seeds in three passes
/// (histogram of log event times, exact selection inside the target bin,
/// sampling), so memory does not grow with the number of events.
inline FanoCurve simulate_three_body(const LossModel& model, const TrajectoryEnsemble& ens,
                                     const std::vector<double>& eta_checkpoints) {
  require(ens.n_traj >= 100, "need at least 100 trajectories");
  require(ens.N0 > 0, "initial atom number must be > 0");
  require(!eta_checkpoints.empty(), "need at least one checkpoint");
  for (std::size_t i = 0; i < eta_checkpoints.size(); ++i) {
    require(eta_checkpoints[i] > 0 && eta_checkpoints[i] <= 1, "checkpoints must lie in (0, 1]");
    if (i) require(eta_checkpoints[i] < eta_checkpoints[i - 1], "checkpoints must be sorted descending");
  }
  const std::size_t n = static_cast<std::size_t>(ens.n_traj);
  const std::size_t nc = eta_checkpoints.size();
  const int loss = model.event_loss;
  const unsigned blocks = std::max(1u, std::min<unsigned>(ens.threads == 0 ? 1u : ens.threads, 64u));
  auto block_range = [&](unsigned b) { return std::pair{n * b / blocks, n * (b + 1) / blocks}; };

  // Pass 1: initial numbers and the log-time histogram.
  std::vector<std::int64_t> N0(n);
  std::vector<std::vector<std::int64_t>> hist(blocks, std::vector<std::int64_t>(detail::kTauBins, 0));
  parallel_for(blocks, blocks, [&](std::size_t b) {
    const auto [lo, hi] = block_range(static_cast<unsigned>(b));
    auto& h = hist[b];
    for (std::size_t i = lo; i < hi; ++i)
      N0[i] = detail::run_trajectory(ens, i, loss, [&](double tau) { ++h[detail::tau_bin(tau)]; });
  });
  std::vector<std::int64_t> cum(detail::kTauBins + 1, 0);
  for (int k = 0; k < detail::kTauBins; ++k) {
    std::int64_t s = 0;
    for (const auto& h : hist) s += h[k];
    cum[k + 1] = cum[k] + s;
  }
  const std::int64_t total_events = cum.back();
  std::int64_t sumN0 = 0;
  for (auto v : N0) sumN0 += v;
  require(sumN0 > 0, "ensemble starts empty");

  FanoCurve curve;
  {
    const FanoEstimate f0 = fano_from_samples(N0, std::max(ens.bootstrap, 200), mix_seed(ens.seed, 0xF0));
    curve.initial_mean = f0.mean;
    curve.initial_F = f0.F;
  }

  // Event rank and histogram bin for each checkpoint.
  std::vector<std::int64_t> rank(nc);
  std::vector<int> bin(nc, -1);
  std::vector<bool> exhausted(nc, false);
  for (std::size_t c = 0; c < nc; ++c) {
    const double removed = (1.0 - eta_checkpoints[c]) * static_cast<double>(sumN0) / loss;
    rank[c] = static_cast<std::int64_t>(std::ceil(removed - 1e-9));
    if (rank[c] > total_events) {
      exhausted[c] = true;
      continue;
    }
    if (rank[c] == 0) continue;
    bin[c] = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), rank[c] - 1) - cum.begin()) - 1;
  }

  // Pass 2: collect the event times in each target bin and select exactly.
  std::vector<std::vector<std::vector<double>>> in_bin(blocks, std::vector<std::vector<double>>(nc));
  parallel_for(blocks, blocks, [&](std::size_t b) {
    const auto [lo, hi] = block_range(static_cast<unsigned>(b));
    for (std::size_t i = lo; i < hi; ++i)
      detail::run_trajectory(ens, i, loss, [&](double tau) {
        const int tb = detail::tau_bin(tau);
        for (std::size_t c = 0; c < nc; ++c)
          if (bin[c] == tb) in_bin[b][c].push_back(tau);
      });
  });
  std::vector<double> t_check(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    if (exhausted[c] || rank[c] == 0) continue;
    std::vector<double> pool;
    for (unsigned b = 0; b < blocks; ++b) pool.insert(pool.end(), in_bin[b][c].begin(), in_bin[b][c].end());
    const std::size_t r = static_cast<std::size_t>(rank[c] - 1 - cum[bin[c]]);
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(r), pool.end());
    t_check[c] = pool[r];
  }

  // Pass 3: occupation of every trajectory at each checkpoint time.
  std::vector<std::vector<std::int64_t>> occ(nc, std::vector<std::int64_t>(n, 0));
  parallel_for(blocks, blocks, [&](std::size_t b) {
    const auto [lo, hi] = block_range(static_cast<unsigned>(b));
    for (std::size_t i = lo; i < hi; ++i) {
      std::vector<std::int64_t> events_before(nc, 0);
      detail::run_trajectory(ens, i, loss, [&](double tau) {
        for (std::size_t c = 0; c < nc; ++c)
          if (tau <= t_check[c]) ++events_before[c];
      });
      for (std::size_t c = 0; c < nc; ++c) occ[c][i] = N0[i] - loss * events_before[c];
    }
  });

  for (std::size_t c = 0; c < nc; ++c) {
    FanoPoint p;
    p.eta_target = eta_checkpoints[c];
    if (exhausted[c]) {
      p.exhausted = true;
      curve.points.push_back(p);
      continue;
    }
    const FanoEstimate e = fano_from_samples(occ[c], std::max(ens.bootstrap, 200), mix_seed(ens.seed, 0xF1 + c));
    p.mean_N = e.mean;
    p.eta = e.mean / curve.initial_mean;
    p.F = e.F;
    p.stderr_F = e.stderr_F;
    p.time = t_check[c] / model.rate_constant;
    curve.points.push_back(p);
  }
  return curve;
}

struct ExponentFit {
  double slope = 0;
  double slope_stderr = 0;
  double intercept = 0;
  int points_used = 0;
};

/// Weighted least-squares fit of log(F - F_inf) against log(eta) over the
/// points with eta in [eta_lo, eta_hi] and F above the asymptote.
inline ExponentFit fit_fano_exponent(const FanoCurve& curve, double eta_lo, double eta_hi,
                                     double F_inf = kFanoAsymptote) {
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& p : curve.points) {
    if (p.exhausted || p.eta < eta_lo || p.eta > eta_hi || p.F <= F_inf) continue;
    const double x = std::log(p.eta), y = std::log(p.F - F_inf);
    const double sig = std::max(p.stderr_F, 1e-12) / (p.F - F_inf);
    const double w = 1.0 / (sig * sig);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
    ++used;
  }
  if (used < 2) throw PhysicsError("fit_fano_exponent: fewer than two usable points");
  const double det = sw * sxx - sx * sx;
  ExponentFit fit;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  fit.slope_stderr = std::sqrt(sw / det);
  fit.points_used = used;
  return fit;
}

}  // namespace maglattice
