#pragma once

// Trap finding and characterization on top of the lattice field model.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "maglattice/error.hpp"
#include "maglattice/lattice_field.hpp"
#include "maglattice/numerics.hpp"
#include "maglattice/physics.hpp"

namespace maglattice {

class BiasField {
 public:
  explicit BiasField(const Vec3& B_ext) : B_(B_ext) {
    require(B_ext.allFinite() && B_ext.norm() < 0.1, "bias field must be finite with |B_ext| < 0.1 T");
  }
  const Vec3& B_ext() const { return B_; }
  double magnitude() const { return B_.norm(); }

 private:
  Vec3 B_;
};

// ---------------------------------------------------------------------------
// Local minimization of |B|

struct MinimizeOptions {
  int max_iter = 300;
  double grad_tol = 1e-8;     // T/m
  double zero_field = 1e-10;  // T; below this the minimum is a field zero
};

struct LocalMinimum {
  Vec3 r = Vec3::Zero();
  double B_mag = 0;
  double grad_norm = 0;
  bool converged = false;
  bool zero_field = false;
  int iterations = 0;
};

/// BFGS on |B| with the analytic gradient (coordinates scaled by the lattice
/// period), followed by Newton polishing with the analytic Hessian.
inline LocalMinimum minimize_field(const FourierExpansion& f, const BiasField& bias, const Vec3& start,
                                   const MinimizeOptions& opt = {}) {
  const double L = f.geometry().period();
  const double z_floor = 1e-3 * L;
  const double z_cap = 100.0 * L;
  const Vec3& B0 = bias.B_ext();

  auto sample = [&](const Vec3& r) { return eval_field_gradient(f, B0, r); };

  LocalMinimum out;
  Vec3 x = start;
  if (!(x.z() > z_floor)) x.z() = z_floor * 2;
  FieldSample s = sample(x);
  Mat3 Hinv = Mat3::Identity() * (L * L / std::max(s.B_mag, 1e-12));  // inverse-Hessian guess in m^2/T
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (s.B_mag < opt.zero_field) {
      out.zero_field = true;
      out.converged = true;
      break;
    }
    if (s.grad_mag.norm() < opt.grad_tol) {
      out.converged = true;
      break;
    }
    Vec3 p = -Hinv * s.grad_mag;
    if (p.dot(s.grad_mag) >= 0) {
      Hinv = Mat3::Identity() * (L * L / std::max(s.B_mag, 1e-12));
      p = -Hinv * s.grad_mag;
    }
    // Cap the step at a quarter period.
    if (p.norm() > 0.25 * L) p *= 0.25 * L / p.norm();
    double alpha = 1.0;
    FieldSample s_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec3 xn = x + alpha * p;
      if (xn.z() > z_floor) {
        s_new = sample(xn);
        if (s_new.B_mag <= s.B_mag + 1e-4 * alpha * s.grad_mag.dot(p)) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const Vec3 dx = s_new.r - x;
    const Vec3 dg = s_new.grad_mag - s.grad_mag;
    const double sy = dx.dot(dg);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const Mat3 I = Mat3::Identity();
      Hinv = (I - rho * dx * dg.transpose()) * Hinv * (I - rho * dg * dx.transpose()) + rho * dx * dx.transpose();
    }
    x = s_new.r;
    s = s_new;
    if (x.z() > z_cap) break;
    if (dx.norm() < 1e-13 * L && s.grad_mag.norm() < 1e3 * opt.grad_tol) break;
  }

  // Newton polish.
  if (!out.zero_field && x.z() <= z_cap) {
    for (int k = 0; k < 20 && s.grad_mag.norm() >= opt.grad_tol; ++k) {
      const FieldSample full = eval_field(f, B0, x);
      if (!full.hessian_valid) break;
      Eigen::SelfAdjointEigenSolver<Mat3> es(full.hessian_mag);
      if (es.eigenvalues().minCoeff() <= 0) break;
      const Vec3 step = -es.eigenvectors() *
                        (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * s.grad_mag));
      if (!(step.norm() < 0.05 * L)) break;
      const Vec3 xn = x + step;
      if (xn.z() <= z_floor) break;
      const FieldSample sn = sample(xn);
      if (!(sn.grad_mag.norm() < s.grad_mag.norm())) break;
      x = xn;
      s = sn;
      ++it;
    }
    if (s.B_mag < opt.zero_field) out.zero_field = true;
    out.converged = out.zero_field || s.grad_mag.norm() < opt.grad_tol;
  }

  out.r = x;
  out.B_mag = s.B_mag;
  out.grad_norm = s.grad_mag.norm();
  out.iterations = it;
  if (x.z() > z_cap) out.converged = false;
  return out;
}

// ---------------------------------------------------------------------------
// Multi-start minima search

struct MinimaSearch {
  std::vector<Vec3> minima;
  int failed_seeds = 0;        // minimizer did not converge
  int out_of_range_seeds = 0;  // converged outside z_range
  int zero_field_seeds = 0;    // converged onto a field zero
};

// Maps r into the primitive cell (fractional coordinates in [0,1)).
inline Vec3 wrap_to_cell(const LatticeGeometry& g, const Vec3& r) {
  Vec2 uv = g.fractional(r.head<2>());
  uv.x() -= std::floor(uv.x());
  uv.y() -= std::floor(uv.y());
  // A minimum sitting on a cell edge may land at -1e-12; snap it to 0 rather
  // than reporting it on the far edge.
  if (uv.x() >= 1.0 - 1e-9) uv.x() = 0.0;
  if (uv.y() >= 1.0 - 1e-9) uv.y() = 0.0;
  const Vec2 rho = g.cartesian(uv);
  return Vec3(rho.x(), rho.y(), r.z());
}

// Distance between a and b modulo lattice translations.
inline double lattice_distance(const LatticeGeometry& g, const Vec3& a, const Vec3& b) {
  Vec2 duv = g.fractional((a - b).head<2>());
  duv.x() -= std::round(duv.x());
  duv.y() -= std::round(duv.y());
  double best = 1e300;
  for (int p = -1; p <= 1; ++p)
    for (int q = -1; q <= 1; ++q) {
      const Vec2 d = g.cartesian(duv + Vec2(p, q));
      best = std::min(best, std::hypot(d.norm(), a.z() - b.z()));
    }
  return best;
}

inline bool position_less(const Vec3& a, const Vec3& b) {
  if (a.z() != b.z()) return a.z() < b.z();
  if (a.x() != b.x()) return a.x() < b.x();
  return a.y() < b.y();
}

// Merges positions closer than merge_tol modulo the lattice, keeping the
// representative with the smallest (z, x, y).
inline std::vector<Vec3> deduplicate_minima(const LatticeGeometry& g, std::vector<Vec3> pts, double merge_tol) {
  for (auto& p : pts) p = wrap_to_cell(g, p);
  std::sort(pts.begin(), pts.end(), position_less);
  std::vector<Vec3> out;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : out)
      if (lattice_distance(g, p, q) < merge_tol) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(p);
  }
  return out;
}

/// Multi-start search for the distinct minima of |B| in one unit cell with
/// z in [z_min, z_max]. Field zeros are included; characterize_trap rejects them.
inline MinimaSearch find_trap_minima(const FourierExpansion& f, const BiasField& bias, std::pair<double, double> z_range,
                                     int grid_seed_n, unsigned threads = 1, const MinimizeOptions& mopt = {}) {
  const auto [z_min, z_max] = z_range;
  require(z_min > 0 && z_min < z_max, "z_range must satisfy 0 < z_min < z_max");
  require(grid_seed_n >= 4, "grid_seed_n must be >= 4");

  MinimaSearch out;
  if (f.modes().empty()) return out;

  const LatticeGeometry& g = f.geometry();
  const int n = grid_seed_n;
  const std::size_t total = static_cast<std::size_t>(n) * n * n;
  std::vector<LocalMinimum> results(total);
  parallel_for(total, threads, [&](std::size_t idx) {
    const int i = static_cast<int>(idx % n);
    const int j = static_cast<int>((idx / n) % n);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(n) * n));
    const Vec2 rho = g.cartesian(Vec2((i + 0.5) / n, (j + 0.5) / n));
    const double z = z_min + (k + 0.5) / n * (z_max - z_min);
    results[idx] = minimize_field(f, bias, Vec3(rho.x(), rho.y(), z), mopt);
  });

  std::vector<Vec3> found;
  const double slack = 1e-9 * (z_max - z_min);
  for (const auto& res : results) {
    if (!res.converged) {
      ++out.failed_seeds;
      continue;
    }
    if (res.r.z() < z_min - slack || res.r.z() > z_max + slack) {
      ++out.out_of_range_seeds;
      continue;
    }
    if (res.zero_field) ++out.zero_field_seeds;
    found.push_back(res.r);
  }
  out.minima = deduplicate_minima(g, std::move(found), 1e-3 * g.period());
  return out;
}

// ---------------------------------------------------------------------------
// Barriers: relaxed string between two minima

struct BarrierOptions {
  int nodes = 64;
  int max_iter = 200;
  double tol = 1e-7;  // node displacement per sweep, in units of the period
  // Nodes stay below max(z_i, z_j) + z_headroom * period. Escape over the
  // top (towards z -> inf, where |B| -> |B_ext|) is the trap depth, not a
  // lattice barrier.
  double z_headroom = 0.5;
  // Optional starting path (same endpoints up to translation); resampled.
  const std::vector<Vec3>* initial_path = nullptr;
};

struct BarrierResult {
  double height = 0;     // saddle |B| minus |B(r_i)|, T
  double saddle_B = 0;   // T
  Vec3 saddle_r = Vec3::Zero();
  bool coarse = false;   // relaxation diverged; value from the straight line
  bool converged = false;
  int iterations = 0;
  std::vector<Vec3> path;  // oriented from r_i to r_j
};

namespace detail {

inline std::vector<Vec3> resample_path(const std::vector<Vec3>& pts, int n) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t k = 1; k < pts.size(); ++k) s[k] = s[k - 1] + (pts[k] - pts[k - 1]).norm();
  std::vector<Vec3> out(n);
  out.front() = pts.front();
  out.back() = pts.back();
  const double total = s.back();
  std::size_t seg = 1;
  for (int k = 1; k < n - 1; ++k) {
    const double target = total * k / (n - 1);
    while (seg < pts.size() - 1 && s[seg] < target) ++seg;
    const double len = s[seg] - s[seg - 1];
    const double t = len > 0 ? (target - s[seg - 1]) / len : 0.0;
    out[k] = pts[seg - 1] + t * (pts[seg] - pts[seg - 1]);
  }
  return out;
}

// Maximum of |B| along the path, refined by a parabola through the highest
// node and its neighbours (arc-length parameter).
inline std::pair<double, Vec3> path_maximum(const FourierExpansion& f, const Vec3& bias, const std::vector<Vec3>& path) {
  std::vector<double> v(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) v[k] = eval_B(f, bias, path[k]).norm();
  const std::size_t k = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  if (k == 0 || k + 1 == path.size()) return {v[k], path[k]};
  const double h1 = (path[k] - path[k - 1]).norm();
  const double h2 = (path[k + 1] - path[k]).norm();
  // Parabola through (-h1, v0), (0, v1), (h2, v2).
  const double a = ((v[k + 1] - v[k]) / h2 + (v[k - 1] - v[k]) / h1) / (h1 + h2);
  const double b = (v[k + 1] - v[k]) / h2 - a * h2;
  if (a < 0) {
    const double t = std::clamp(-b / (2 * a), -h1, h2);
    const double peak = v[k] + b * t + a * t * t;
    const Vec3 pos = t < 0 ? Vec3(path[k] + (-t / h1) * (path[k - 1] - path[k]))
                           : Vec3(path[k] + (t / h2) * (path[k + 1] - path[k]));
    if (peak >= v[k]) return {peak, pos};
  }
  return {v[k], path[k]};
}

}  // namespace detail

/// Minimax |B| along a path from r_i to r_j, found with a relaxed string:
/// interior nodes take damped steps down grad|B| and are redistributed to
/// equal arc length after every sweep, so only the transverse part of each
/// step survives.
inline BarrierResult barrier_heights(const FourierExpansion& f, const BiasField& bias, const Vec3& r_i, const Vec3& r_j,
                                     const BarrierOptions& opt = {}) {
  require(opt.nodes >= 8, "barrier string needs at least 8 nodes");
  require((r_i - r_j).norm() > 0, "barrier endpoints must be distinct");
  const Vec3& B0 = bias.B_ext();
  const double L = f.geometry().period();
  const double z_floor = 1e-3 * L;
  const double z_top = std::max(r_i.z(), r_j.z()) + opt.z_headroom * L;

  // Orient canonically so barrier(i, j) and barrier(j, i) share one computation.
  const bool flipped = position_less(r_j, r_i);
  const Vec3 a = flipped ? r_j : r_i;
  const Vec3 b = flipped ? r_i : r_j;

  std::vector<Vec3> path;
  if (opt.initial_path && opt.initial_path->size() >= 2) {
    // Translate the supplied path so that it starts at a, then stretch to end at b.
    const auto& ip = *opt.initial_path;
    const Vec3 d_old = ip.back() - ip.front();
    const Vec3 d_new = b - a;
    path.reserve(ip.size());
    for (std::size_t k = 0; k < ip.size(); ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(ip.size() - 1);
      path.push_back(a + (ip[k] - ip.front()) + t * (d_new - d_old));
    }
    path = detail::resample_path(path, opt.nodes);
  } else {
    path.resize(opt.nodes);
    for (int k = 0; k < opt.nodes; ++k) path[k] = a + (b - a) * (static_cast<double>(k) / (opt.nodes - 1));
  }
  const std::vector<Vec3> straight = [&] {
    std::vector<Vec3> s(opt.nodes);
    for (int k = 0; k < opt.nodes; ++k) s[k] = a + (b - a) * (static_cast<double>(k) / (opt.nodes - 1));
    return s;
  }();

  BarrierResult res;
  bool diverged = false;
  const double straight_len = (b - a).norm();

  // Per-node gradient step from the local stiffest curvature, refreshed
  // periodically as the nodes move into softer or stiffer terrain.
  std::vector<double> dt(opt.nodes, 0.0);
  auto refresh_dt = [&] {
    for (int k = 1; k < opt.nodes - 1; ++k) {
      const FieldSample s = eval_field(f, B0, path[k]);
      const double lam =
          s.hessian_valid ? Eigen::SelfAdjointEigenSolver<Mat3>(s.hessian_mag).eigenvalues().cwiseAbs().maxCoeff() : 0.0;
      dt[k] = lam > 0 ? 0.5 / lam : 0.0;
    }
  };

  int it = 0;
  for (; it < opt.max_iter && !diverged; ++it) {
    if (it % 10 == 0) refresh_dt();
    const std::vector<Vec3> before = path;
    const double seg = straight_len / (opt.nodes - 1);
    for (int k = 1; k < opt.nodes - 1; ++k) {
      const FieldSample s = eval_field_gradient(f, B0, path[k]);
      if (!(s.B_mag > 0)) continue;
      Vec3 move = -dt[k] * s.grad_mag;
      const double cap = std::min(0.05 * L, 0.5 * seg);
      if (move.norm() > cap) move *= cap / move.norm();
      if (path[k].z() + move.z() > z_top) move.z() = z_top - path[k].z();
      if (path[k].z() + move.z() <= z_floor) move.z() = 0.5 * (z_floor - path[k].z());
      path[k] += move;
      if (!path[k].allFinite()) diverged = true;
    }
    path = detail::resample_path(path, opt.nodes);
    double len = 0, max_shift = 0;
    for (int k = 1; k < opt.nodes; ++k) {
      len += (path[k] - path[k - 1]).norm();
      max_shift = std::max(max_shift, (path[k] - before[k]).norm());
    }
    if (!(len < 20.0 * straight_len + 2.0 * L)) diverged = true;
    if (max_shift < opt.tol * L) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.iterations = it;
  if (diverged) {
    res.coarse = true;
    path = straight;
  }

  const auto [peak, where] = detail::path_maximum(f, B0, path);
  res.saddle_B = peak;
  res.saddle_r = where;
  res.height = peak - eval_B(f, B0, r_i).norm();
  if (flipped) std::reverse(path.begin(), path.end());
  res.path = std::move(path);
  return res;
}

// ---------------------------------------------------------------------------
// Trap characterization

struct BarrierEntry {
  std::string label;
  double height = 0;  // T above B_IP
  bool coarse = false;
};

struct TrapReport {
  Vec3 r0 = Vec3::Zero();
  double B_IP = 0;                  // T
  Vec3 freqs = Vec3::Zero();        // Hz, ascending, principal axes
  Mat3 axes = Mat3::Identity();     // columns are the principal axes
  double depth = 0;                 // T, |B_ext| - B_IP
  std::vector<BarrierEntry> barriers;
  double omega_over_larmor = 0;
  bool larmor_healthy = true;       // omega_over_larmor < 0.1
  std::optional<bool> vdw_valid;    // set by the surface budget

  // Angular frequency of the principal axis closest to the surface normal.
  double omega_vertical() const {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(axes(2, i)) > std::abs(axes(2, best))) best = i;
    return kTwoPi * freqs[best];
  }
};

// Escape over the top: far above the film |B| -> |B_ext|.
inline double trap_depth(const BiasField& bias, double B_IP) {
  require(B_IP >= 0, "B_IP must be >= 0");
  return bias.magnitude() - B_IP;
}

struct CharacterizeOptions {
  bool compute_barriers = true;
  BarrierOptions barrier;
  // Relative gradient tolerance |grad|B|| * period / |B| for a verified minimum.
  double verify_tol = 1e-4;
};

inline TrapReport characterize_trap(const FourierExpansion& f, const BiasField& bias, const Vec3& r0,
                                    const AtomState& atom, const CharacterizeOptions& opt = {}) {
  const FieldSample s = eval_field(f, bias.B_ext(), r0);
  if (s.B_mag <= 1e-10 || !s.hessian_valid) throw PhysicsError("Majorana point: |B| = 0 at trap position");
  const double L = f.geometry().period();
  if (s.grad_mag.norm() * L / s.B_mag > opt.verify_tol)
    throw InputError("characterize_trap: position is not a converged minimum of |B|");

  Eigen::SelfAdjointEigenSolver<Mat3> es(s.hessian_mag);
  const Vec3 lam = es.eigenvalues();
  const double scale = lam.cwiseAbs().maxCoeff();
  if (lam.minCoeff() < -1e-9 * scale) throw PhysicsError("saddle, not minimum: |B| Hessian has a negative eigenvalue");

  TrapReport rep;
  rep.r0 = r0;
  rep.B_IP = s.B_mag;
  rep.axes = es.eigenvectors();
  for (int i = 0; i < 3; ++i)
    rep.freqs[i] = std::sqrt(std::max(lam[i], 0.0) * atom.moment() / atom.mass()) / kTwoPi;
  rep.depth = trap_depth(bias, rep.B_IP);
  const double omega_L = atom.moment() * rep.B_IP / PC::hbar;
  rep.omega_over_larmor = kTwoPi * rep.freqs.maxCoeff() / omega_L;
  rep.larmor_healthy = rep.omega_over_larmor < 0.1;

  if (opt.compute_barriers) {
    const auto& g = f.geometry();
    const std::pair<const char*, Vec2> neighbours[] = {{"a1", g.a1()}, {"a2", g.a2()}};
    for (const auto& [label, a] : neighbours) {
      const Vec3 rj = r0 + Vec3(a.x(), a.y(), 0);
      const BarrierResult br = barrier_heights(f, bias, r0, rj, opt.barrier);
      rep.barriers.push_back({label, br.height, br.coarse});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bias tuning

enum class TuneMode { SymmetricBarriers, Channels };

struct TuneObjective {
  double target_z = 0;  // m
  TuneMode mode = TuneMode::SymmetricBarriers;
  int channel_axis = 1;  // 0 -> a1, 1 -> a2 (channels run along this axis)
  double weighting = 1.0;

  TuneObjective(double z, TuneMode m = TuneMode::SymmetricBarriers, int axis = 1, double w = 1.0)
      : target_z(z), mode(m), channel_axis(axis), weighting(w) {
    require(target_z > 0, "target_z must be > 0");
    require(axis == 0 || axis == 1, "channel axis must be 0 (a1) or 1 (a2)");
    require(w >= 0, "weighting must be >= 0");
  }
};

struct TuneOptions {
  int restarts = 5;
  int evaluations_per_restart = 150;
  double jitter = 0.05;          // relative, for restarts
  double initial_step = 0.05;    // relative simplex edge
  double cost_threshold = 1e-3;
  std::uint64_t seed = 1;
  int seed_grid = 5;
  int barrier_nodes = 64;
  unsigned threads = 1;
};

struct TuneResult {
  BiasField bias;
  TrapReport report;
  double cost = 0;
  int evaluations = 0;
};

class ObjectiveUnreachable : public PhysicsError {
 public:
  ObjectiveUnreachable(const std::string& what, BiasField best, std::optional<TrapReport> report, double cost)
      : PhysicsError(what), best_(std::move(best)), report_(std::move(report)), cost_(cost) {}
  const BiasField& best_bias() const { return best_; }
  const std::optional<TrapReport>& best_report() const { return report_; }
  double best_cost() const { return cost_; }

 private:
  BiasField best_;
  std::optional<TrapReport> report_;
  double cost_;
};

/// Derivative-free (Nelder-Mead) search over the three bias components for
///   ((z_trap - target_z)/target_z)^2 + w * term^2,
/// where term is the relative barrier asymmetry (b1 - b2)/(b1 + b2) or, in
/// channel mode, the ratio of the barrier along the channel axis to the
/// transverse barrier. The trap is followed by local minimization from the
/// best position found so far; losing it costs a large penalty.
inline TuneResult tune_bias(const FourierExpansion& f, const TuneObjective& obj, const AtomState& atom,
                            const BiasField& initial, const TuneOptions& opt = {}) {
  const double k1 = f.dominant_k();
  if (!(k1 > 0) || k1 * obj.target_z >= 20.0)
    throw ObjectiveUnreachable("objective unreachable: target_z beyond the decay length of the dominant mode",
                               initial, std::nullopt, std::numeric_limits<double>::infinity());

  const auto& g = f.geometry();
  const double L = g.period();
  const double target = obj.target_z;
  const auto search =
      find_trap_minima(f, initial, {0.3 * target, 3.0 * target}, opt.seed_grid, opt.threads);
  std::optional<Vec3> start;
  for (const auto& m : search.minima) {
    if (eval_B(f, initial.B_ext(), m).norm() <= 1e-10) continue;
    if (!start || std::abs(m.z() - target) < std::abs(start->z() - target)) start = m;
  }
  if (!start)
    throw ObjectiveUnreachable("objective unreachable: no trap near target_z at the initial bias", initial,
                               std::nullopt, std::numeric_limits<double>::infinity());

  const double scale = std::max(initial.magnitude(), 1e-6);
  constexpr double kPenalty = 1e3;

  Vec3 best_pos = *start;
  Eigen::VectorXd best_x = initial.B_ext() / scale;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Vec3> best_paths[2];
  int evaluations = 0;

  BarrierOptions bopt;
  bopt.nodes = opt.barrier_nodes;

  auto cost = [&](const Eigen::VectorXd& x) -> double {
    ++evaluations;
    const Vec3 B = Vec3(x[0], x[1], x[2]) * scale;
    if (!(B.norm() < 0.1)) return kPenalty * 10;
    const BiasField bias(B);
    const LocalMinimum lm = minimize_field(f, bias, best_pos);
    if (!lm.converged || lm.zero_field) return kPenalty;
    if ((lm.r.head<2>() - best_pos.head<2>()).norm() > 0.25 * L) return kPenalty;
    const FieldSample s = eval_field(f, B, lm.r);
    if (!s.hessian_valid || Eigen::SelfAdjointEigenSolver<Mat3>(s.hessian_mag).eigenvalues().minCoeff() <= 0)
      return kPenalty;

    double bar[2];
    std::vector<Vec3> paths[2];
    const Vec2 neighbours[2] = {g.a1(), g.a2()};
    for (int a = 0; a < 2; ++a) {
      BarrierOptions o = bopt;
      if (!best_paths[a].empty()) o.initial_path = &best_paths[a];
      const BarrierResult br = barrier_heights(f, bias, lm.r, lm.r + Vec3(neighbours[a].x(), neighbours[a].y(), 0), o);
      bar[a] = br.height;
      paths[a] = br.path;
    }
    const double dz = (lm.r.z() - target) / target;
    double term;
    if (obj.mode == TuneMode::SymmetricBarriers) {
      if (!(bar[0] + bar[1] > 0)) return kPenalty;
      term = (bar[0] - bar[1]) / (bar[0] + bar[1]);
    } else {
      const double along = bar[obj.channel_axis];
      const double across = bar[1 - obj.channel_axis];
      if (!(across > 0)) return kPenalty;
      term = std::max(along, 0.0) / across;
    }
    const double c = dz * dz + obj.weighting * term * term;
    if (c < best_cost) {
      best_cost = c;
      best_pos = lm.r;
      best_x = x;
      best_paths[0] = std::move(paths[0]);
      best_paths[1] = std::move(paths[1]);
    }
    return c;
  };

  std::mt19937_64 rng(mix_seed(opt.seed, 0));
  std::normal_distribution<double> jitter(0.0, opt.jitter);
  SimplexOptions sopt;
  sopt.max_evaluations = opt.evaluations_per_restart;
  sopt.x_tol = 1e-7;
  sopt.f_tol = 1e-14;
  const Eigen::VectorXd step = Eigen::VectorXd::Constant(3, opt.initial_step);
  for (int rs = 0; rs < opt.restarts; ++rs) {
    Eigen::VectorXd x0 = best_x;
    if (rs > 0)
      for (int i = 0; i < 3; ++i) x0[i] += jitter(rng) * std::max(std::abs(best_x[i]), 0.1);
    nelder_mead(cost, x0, step, sopt);
    if (best_cost < 1e-12) break;
  }

  const BiasField best_bias(Vec3(best_x[0], best_x[1], best_x[2]) * scale);
  std::optional<TrapReport> report;
  if (std::isfinite(best_cost) && best_cost < kPenalty) {
    CharacterizeOptions copt;
    copt.barrier.nodes = opt.barrier_nodes;
    report = characterize_trap(f, best_bias, best_pos, atom, copt);
  }
  if (!report || !(best_cost <= opt.cost_threshold))
    throw ObjectiveUnreachable("objective unreachable: cost " + std::to_string(best_cost) + " above threshold",
                               best_bias, report, best_cost);
  return TuneResult{best_bias, *report, best_cost, evaluations};
}

// ---------------------------------------------------------------------------
// Transport under a bias schedule

struct TrackedMinimum {
  Vec3 r = Vec3::Zero();
  double B_IP = 0;
  Vec3 freqs = Vec3::Zero();  // Hz, ascending
};

struct TransportStep {
  Vec3 bias = Vec3::Zero();
  std::vector<TrackedMinimum> minima;
};

struct TransportResult {
  std::vector<TransportStep> steps;
  std::optional<int> lost_at;  // schedule index where tracking failed
  std::string message;
};

inline TrackedMinimum describe_minimum(const FourierExpansion& f, const Vec3& bias, const Vec3& r, const AtomState& atom) {
  TrackedMinimum t;
  t.r = r;
  const FieldSample s = eval_field(f, bias, r);
  t.B_IP = s.B_mag;
  if (s.hessian_valid) {
    const Vec3 lam = Eigen::SelfAdjointEigenSolver<Mat3>(s.hessian_mag).eigenvalues();
    for (int i = 0; i < 3; ++i) t.freqs[i] = std::sqrt(std::max(lam[i], 0.0) * atom.moment() / atom.mass()) / kTwoPi;
  }
  return t;
}

/// Follows every minimum found at the first schedule entry through the
/// remaining entries by local re-minimization from its previous position.
/// A jump larger than a quarter period ends the trajectory.
inline TransportResult transport_trajectory(const FourierExpansion& f, const std::vector<BiasField>& schedule,
                                            std::pair<double, double> z_range, int grid_seed_n,
                                            const AtomState& atom, unsigned threads = 1) {
  require(schedule.size() >= 2, "transport schedule needs at least 2 entries");
  for (std::size_t k = 1; k < schedule.size(); ++k) {
    const double dB = (schedule[k].B_ext() - schedule[k - 1].B_ext()).norm();
    require(dB <= 0.1 * schedule[k - 1].magnitude(),
            "transport schedule step " + std::to_string(k) + " too large (|dB| must be < 0.1 |B|)");
  }
  const double L = f.geometry().period();
  TransportResult out;

  const auto search = find_trap_minima(f, schedule[0], z_range, grid_seed_n, threads);
  TransportStep first;
  first.bias = schedule[0].B_ext();
  for (const auto& m : search.minima)
    if (eval_B(f, first.bias, m).norm() > 1e-10) first.minima.push_back(describe_minimum(f, first.bias, m, atom));
  out.steps.push_back(first);

  for (std::size_t k = 1; k < schedule.size(); ++k) {
    TransportStep step;
    step.bias = schedule[k].B_ext();
    const auto& prev = out.steps.back().minima;
    std::vector<LocalMinimum> next(prev.size());
    parallel_for(prev.size(), threads, [&](std::size_t i) { next[i] = minimize_field(f, schedule[k], prev[i].r); });
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!next[i].converged || next[i].zero_field || (next[i].r - prev[i].r).norm() > 0.25 * L) {
        out.lost_at = static_cast<int>(k);
        out.message = "tracking lost at step " + std::to_string(k);
        return out;
      }
      step.minima.push_back(describe_minimum(f, step.bias, next[i].r, atom));
    }
    out.steps.push_back(std::move(step));
  }
  return out;
}

}  // namespace maglattice
