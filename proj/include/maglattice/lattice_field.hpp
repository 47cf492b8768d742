#pragma once

// Magnetic field above a patterned, out-of-plane magnetized thin film.
//
// The film occupancy o(rho) in one unit cell is expanded in a real Fourier
// series over the reciprocal lattice. Each term of the scalar potential
//
//   phi(r) = P * sum e^{-k z} [C cos(k.rho) + S sin(k.rho)],  P = mu0 h M0 / 2
//
// is harmonic, so the field B = B_ext - grad(phi) and all its derivatives are
// available in closed form.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maglattice/error.hpp"
#include "maglattice/physics.hpp"

namespace maglattice {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class LatticeGeometry {
 public:
  LatticeGeometry(const Vec2& a1, const Vec2& a2) : a1_(a1), a2_(a2) {
    const double cross = a1.x() * a2.y() - a1.y() * a2.x();
    const double scale = a1.norm() * a2.norm();
    require(scale > 0 && std::abs(cross) > 1e-9 * scale,
            "lattice vectors a1, a2 must be linearly independent");
    K1_ = kTwoPi * Vec2(a2.y(), -a2.x()) / cross;
    K2_ = kTwoPi * Vec2(-a1.y(), a1.x()) / cross;
  }

  static LatticeGeometry square(double period) {
    return LatticeGeometry(Vec2(period, 0), Vec2(0, period));
  }

  const Vec2& a1() const { return a1_; }
  const Vec2& a2() const { return a2_; }
  const Vec2& K1() const { return K1_; }
  const Vec2& K2() const { return K2_; }

  // Shortest primitive vector length; the natural length scale.
  double period() const { return std::min(a1_.norm(), a2_.norm()); }
  double cell_area() const { return std::abs(a1_.x() * a2_.y() - a1_.y() * a2_.x()); }

  Vec2 k_vector(int n, int m) const { return n * K1_ + m * K2_; }

  // Fractional coordinates (u, v) with rho = u a1 + v a2.
  Vec2 fractional(const Vec2& rho) const {
    return Vec2(K1_.dot(rho), K2_.dot(rho)) / kTwoPi;
  }
  Vec2 cartesian(const Vec2& uv) const { return uv.x() * a1_ + uv.y() * a2_; }

 private:
  Vec2 a1_, a2_, K1_, K2_;
};

// Binary occupancy of one unit cell, sampled on an nx x ny grid of cells
// whose centres sit at ((i + 1/2)/nx) a1 + ((j + 1/2)/ny) a2.
class MagnetizationPattern {
 public:
  MagnetizationPattern(LatticeGeometry geometry, int nx, int ny, std::vector<std::uint8_t> occupancy,
                       double M0, double film_h)
      : geometry_(std::move(geometry)), nx_(nx), ny_(ny), occ_(std::move(occupancy)), M0_(M0), film_h_(film_h) {
    require(nx >= 2 && ny >= 2, "pattern grid must be at least 2x2");
    require(occ_.size() == static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny),
            "pattern occupancy size does not match grid dimensions");
    for (auto v : occ_) require(v == 0 || v == 1, "pattern occupancy entries must be 0 or 1");
    require(M0 > 0, "magnetization M0 must be > 0");
    require(film_h > 0, "film thickness must be > 0");
  }

  // Builds a pattern from a predicate on fractional coordinates (u, v) in [0,1).
  template <typename Pred>
  static MagnetizationPattern from_function(LatticeGeometry geometry, int nx, int ny, double M0, double film_h,
                                            Pred&& occupied) {
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        occ[static_cast<std::size_t>(j) * nx + i] = occupied((i + 0.5) / nx, (j + 0.5) / ny) ? 1 : 0;
    return MagnetizationPattern(std::move(geometry), nx, ny, std::move(occ), M0, film_h);
  }

  const LatticeGeometry& geometry() const { return geometry_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double M0() const { return M0_; }
  double film_h() const { return film_h_; }
  const std::vector<std::uint8_t>& occupancy() const { return occ_; }
  bool at(int i, int j) const { return occ_[static_cast<std::size_t>(j) * nx_ + i] != 0; }

  double fill_fraction() const {
    std::size_t n = 0;
    for (auto v : occ_) n += v;
    return static_cast<double>(n) / static_cast<double>(occ_.size());
  }

  Vec2 cell_center(int i, int j) const {
    return geometry_.cartesian(Vec2((i + 0.5) / nx_, (j + 0.5) / ny_));
  }

  // Cyclic shift of the grid by (di, dj) cells; the film moves by
  // (di/nx) a1 + (dj/ny) a2.
  MagnetizationPattern shifted(int di, int dj) const {
    std::vector<std::uint8_t> occ(occ_.size());
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        const int si = ((i + di) % nx_ + nx_) % nx_;
        const int sj = ((j + dj) % ny_ + ny_) % ny_;
        occ[static_cast<std::size_t>(sj) * nx_ + si] = occ_[static_cast<std::size_t>(j) * nx_ + i];
      }
    return MagnetizationPattern(geometry_, nx_, ny_, std::move(occ), M0_, film_h_);
  }

 private:
  LatticeGeometry geometry_;
  int nx_;
  int ny_;
  std::vector<std::uint8_t> occ_;
  double M0_;
  double film_h_;
};

struct FourierMode {
  int n = 0;
  int m = 0;
  Vec2 k_vec = Vec2::Zero();
  double k_mag = 0;
  double C = 0;
  double S = 0;
  // (1 - e^{-kh})/(kh) when the finite-thickness correction is on, else 1.
  double thickness_factor = 1;
  bool kept_explicitly = false;

  double amplitude() const { return std::hypot(C, S); }
};

struct FourierOptions {
  int max_order = 16;
  double threshold = 1e-4;
  bool finite_thickness = false;
};

class FourierExpansion {
 public:
  FourierExpansion(LatticeGeometry geometry, std::vector<FourierMode> modes, double prefactor, double threshold)
      : geometry_(std::move(geometry)), modes_(std::move(modes)), prefactor_(prefactor), threshold_(threshold) {}

  // A single (+-) pair of modes; used for analytic tests and stripe models.
  static FourierExpansion single_mode(const LatticeGeometry& g, int n, int m, double C, double S,
                                      double prefactor) {
    FourierMode mode;
    mode.n = n;
    mode.m = m;
    mode.k_vec = g.k_vector(n, m);
    mode.k_mag = mode.k_vec.norm();
    mode.C = C;
    mode.S = S;
    mode.kept_explicitly = true;
    require(mode.k_mag > 0, "the (0,0) mode carries no field");
    return FourierExpansion(g, {mode}, prefactor, 0.0);
  }

  const LatticeGeometry& geometry() const { return geometry_; }
  const std::vector<FourierMode>& modes() const { return modes_; }
  double prefactor() const { return prefactor_; }
  double truncation_threshold() const { return threshold_; }

  // Smallest retained wavenumber: the mode that survives furthest from the film.
  double dominant_k() const {
    double k = 0;
    for (const auto& md : modes_)
      if (k == 0 || md.k_mag < k) k = md.k_mag;
    return k;
  }

  // Same expansion with every amplitude multiplied by s.
  FourierExpansion scaled(double s) const { return FourierExpansion(geometry_, modes_, prefactor_ * s, threshold_); }

 private:
  LatticeGeometry geometry_;
  std::vector<FourierMode> modes_;
  double prefactor_;
  double threshold_;
};

namespace detail {

inline double sinc(double x) { return x == 0 ? 1.0 : std::sin(x) / x; }

}  // namespace detail

/// Real Fourier coefficients of the (mean-removed) occupancy.
///
/// Each grid cell is treated as a uniformly magnetized pixel, so the discrete
/// sum over cell centres is multiplied by the pixel form factor
/// sinc(pi n/nx) sinc(pi m/ny). Only one representative of every (n,m),
/// (-n,-m) pair is stored (n > 0, or n == 0 and m > 0); with that convention
/// o(rho) = <o> + sum [C cos(k.rho) + S sin(k.rho)].
inline FourierExpansion fourier_from_pattern(const MagnetizationPattern& pattern, const FourierOptions& opt = {}) {
  require(opt.max_order >= 1, "max_order must be >= 1");
  require(opt.threshold >= 0, "truncation threshold must be >= 0");

  const double fill = pattern.fill_fraction();
  if (fill == 0.0 || fill == 1.0) throw PhysicsError("pattern has no spatial structure");

  const int nx = pattern.nx();
  const int ny = pattern.ny();
  const int order = opt.max_order;
  const LatticeGeometry& g = pattern.geometry();

  // Row sums over i for each n: R[n][j] = sum_i o_ij e^{-2 pi i n u_i}.
  using cplx = std::complex<double>;
  std::vector<std::vector<cplx>> rows(2 * order + 1, std::vector<cplx>(ny));
  for (int n = -order; n <= order; ++n) {
    for (int j = 0; j < ny; ++j) {
      cplx acc = 0;
      for (int i = 0; i < nx; ++i)
        if (pattern.at(i, j)) acc += std::polar(1.0, -kTwoPi * n * (i + 0.5) / nx);
      rows[n + order][j] = acc;
    }
  }

  const double norm = 1.0 / (static_cast<double>(nx) * ny);
  const double prefactor = 0.5 * PC::mu0 * pattern.film_h() * pattern.M0();

  std::vector<FourierMode> modes;
  for (int n = 0; n <= order; ++n) {
    for (int m = -order; m <= order; ++m) {
      if (n == 0 && m <= 0) continue;
      cplx c = 0;
      for (int j = 0; j < ny; ++j) c += rows[n + order][j] * std::polar(1.0, -kTwoPi * m * (j + 0.5) / ny);
      c *= norm * detail::sinc(kPi * n / nx) * detail::sinc(kPi * m / ny);

      FourierMode md;
      md.n = n;
      md.m = m;
      md.k_vec = g.k_vector(n, m);
      md.k_mag = md.k_vec.norm();
      md.C = 2.0 * c.real();
      md.S = -2.0 * c.imag();
      if (opt.finite_thickness) {
        const double kh = md.k_mag * pattern.film_h();
        md.thickness_factor = (1.0 - std::exp(-kh)) / kh;
      }
      if (md.amplitude() >= opt.threshold && md.amplitude() > 1e-14) modes.push_back(md);
    }
  }
  if (modes.empty()) throw PhysicsError("pattern has no spatial structure");
  return FourierExpansion(g, std::move(modes), prefactor, opt.threshold);
}

// Field sample: B, its Jacobian dB_i/dx_j, |B| and the gradient and Hessian
// of |B|. The Hessian of |B| does not exist where B = 0 (Majorana point);
// hessian_valid is false there and the matrix is zero.
struct FieldSample {
  Vec3 r = Vec3::Zero();
  Vec3 B = Vec3::Zero();
  Mat3 grad = Mat3::Zero();
  double B_mag = 0;
  Vec3 grad_mag = Vec3::Zero();
  Mat3 hessian_mag = Mat3::Zero();
  bool hessian_valid = false;
};

namespace detail {

inline void require_above_film(const Vec3& r) {
  if (!(r.z() > 0)) throw InputError("evaluation point below film plane (z must be > 0)");
}

// Complex amplitude w such that every derivative of the mode's potential is
// Re(w * prod d_i) with d = (i kx, i ky, -k).
inline std::complex<double> mode_weight(const FourierExpansion& f, const FourierMode& md, const Vec3& r) {
  const double phase = md.k_vec.x() * r.x() + md.k_vec.y() * r.y();
  const double amp = f.prefactor() * md.thickness_factor * std::exp(-md.k_mag * r.z());
  return std::complex<double>(md.C, -md.S) * std::polar(amp, phase);
}

}  // namespace detail

inline double eval_potential(const FourierExpansion& f, const Vec3& r) {
  detail::require_above_film(r);
  double phi = 0;
  for (const auto& md : f.modes()) phi += detail::mode_weight(f, md, r).real();
  return phi;
}

// Gradient of phi (not of B); B = bias - grad_potential.
inline Vec3 eval_potential_gradient(const FourierExpansion& f, const Vec3& r) {
  detail::require_above_film(r);
  Vec3 g = Vec3::Zero();
  for (const auto& md : f.modes()) {
    const auto w = detail::mode_weight(f, md, r);
    const std::complex<double> d[3] = {{0, md.k_vec.x()}, {0, md.k_vec.y()}, {-md.k_mag, 0}};
    for (int i = 0; i < 3; ++i) g[i] += (w * d[i]).real();
  }
  return g;
}

inline Mat3 eval_potential_hessian(const FourierExpansion& f, const Vec3& r) {
  detail::require_above_film(r);
  Mat3 h = Mat3::Zero();
  for (const auto& md : f.modes()) {
    const auto w = detail::mode_weight(f, md, r);
    const std::complex<double> d[3] = {{0, md.k_vec.x()}, {0, md.k_vec.y()}, {-md.k_mag, 0}};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) h(i, j) += (w * d[i] * d[j]).real();
  }
  h.triangularView<Eigen::StrictlyLower>() = h.transpose().triangularView<Eigen::StrictlyLower>();
  return h;
}

// B only, no derivatives.
inline Vec3 eval_B(const FourierExpansion& f, const Vec3& bias, const Vec3& r) {
  return bias - eval_potential_gradient(f, r);
}

// Field, |B| and gradient of |B| (no Hessian).
inline FieldSample eval_field_gradient(const FourierExpansion& f, const Vec3& bias, const Vec3& r) {
  detail::require_above_film(r);
  FieldSample s;
  s.r = r;
  s.B = bias;
  for (const auto& md : f.modes()) {
    const auto w = detail::mode_weight(f, md, r);
    const std::complex<double> d[3] = {{0, md.k_vec.x()}, {0, md.k_vec.y()}, {-md.k_mag, 0}};
    std::complex<double> wd[3];
    for (int i = 0; i < 3; ++i) {
      wd[i] = w * d[i];
      s.B[i] -= wd[i].real();
    }
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) s.grad(i, j) -= (wd[i] * d[j]).real();
  }
  s.grad.triangularView<Eigen::StrictlyLower>() = s.grad.transpose().triangularView<Eigen::StrictlyLower>();
  s.B_mag = s.B.norm();
  if (s.B_mag > 0) s.grad_mag = s.grad.transpose() * s.B / s.B_mag;
  return s;
}

/// Full sample including the Hessian of |B|, assembled by the chain rule
///   d2|B|/dx_j dx_l = (sum_i J_ij J_il + B_i T_ijl)/|B| - g_j g_l/|B|
/// from the field Jacobian J and third derivatives T of the potential.
inline FieldSample eval_field(const FourierExpansion& f, const Vec3& bias, const Vec3& r) {
  detail::require_above_film(r);
  FieldSample s;
  s.r = r;
  s.B = bias;
  // T[i][j][l] = d3 B_i / dx_j dx_l, symmetric in all indices.
  double T[3][3][3] = {};
  for (const auto& md : f.modes()) {
    const auto w = detail::mode_weight(f, md, r);
    const std::complex<double> d[3] = {{0, md.k_vec.x()}, {0, md.k_vec.y()}, {-md.k_mag, 0}};
    for (int i = 0; i < 3; ++i) {
      const auto wi = w * d[i];
      s.B[i] -= wi.real();
      for (int j = i; j < 3; ++j) {
        const auto wij = wi * d[j];
        s.grad(i, j) -= wij.real();
        for (int l = j; l < 3; ++l) T[i][j][l] -= (wij * d[l]).real();
      }
    }
  }
  s.grad.triangularView<Eigen::StrictlyLower>() = s.grad.transpose().triangularView<Eigen::StrictlyLower>();
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      for (int l = j; l < 3; ++l) {
        const double v = T[i][j][l];
        T[i][l][j] = T[j][i][l] = T[j][l][i] = T[l][i][j] = T[l][j][i] = v;
      }

  s.B_mag = s.B.norm();
  // Below ~1e-15 T the direction of B is numerically meaningless.
  if (s.B_mag <= 1e-15) {
    s.hessian_valid = false;
    return s;
  }
  s.grad_mag = s.grad.transpose() * s.B / s.B_mag;
  for (int j = 0; j < 3; ++j)
    for (int l = j; l < 3; ++l) {
      double acc = 0;
      for (int i = 0; i < 3; ++i) acc += s.grad(i, j) * s.grad(i, l) + s.B[i] * T[i][j][l];
      s.hessian_mag(j, l) = s.hessian_mag(l, j) = acc / s.B_mag - s.grad_mag[j] * s.grad_mag[l] / s.B_mag;
    }
  s.hessian_valid = true;
  return s;
}

/// Brute-force field of a thin sheet of point dipoles, one per grid cell of
/// every unit cell within +-n_cells of the cell containing r.
///
/// Each occupied cell carries moment M0 h dA along z. With compensate_mean the
/// uniform sheet <o> M0 h is subtracted cell by cell (dipoles of strength
/// (o - <o>) M0 h dA), which removes the slowly converging 1/R tail of the
/// truncated lattice sum; an infinite uniform sheet produces no field.
inline Vec3 dipole_sum_oracle(const MagnetizationPattern& pattern, const Vec3& bias, const Vec3& r, int n_cells,
                              bool compensate_mean = true) {
  require(n_cells >= 5, "dipole_sum_oracle requires n_cells >= 5");
  detail::require_above_film(r);
  const LatticeGeometry& g = pattern.geometry();
  const double dA = g.cell_area() / (static_cast<double>(pattern.nx()) * pattern.ny());
  const double unit_moment = pattern.M0() * pattern.film_h() * dA;
  const double mean = compensate_mean ? pattern.fill_fraction() : 0.0;
  const Vec2 uv = g.fractional(r.head<2>());
  const int cu = static_cast<int>(std::floor(uv.x()));
  const int cv = static_cast<int>(std::floor(uv.y()));

  // Per-cell dipole weights and in-cell offsets.
  std::vector<std::pair<Vec2, double>> cell;
  for (int j = 0; j < pattern.ny(); ++j)
    for (int i = 0; i < pattern.nx(); ++i) {
      const double w = (pattern.at(i, j) ? 1.0 : 0.0) - mean;
      if (w != 0) cell.emplace_back(pattern.cell_center(i, j), w * unit_moment);
    }

  const double pref = PC::mu0 / (4.0 * kPi);
  Vec3 B = bias;
  for (int a = cu - n_cells; a <= cu + n_cells; ++a)
    for (int b = cv - n_cells; b <= cv + n_cells; ++b) {
      const Vec2 origin = a * g.a1() + b * g.a2();
      for (const auto& [pos, mz] : cell) {
        const Vec3 d(r.x() - origin.x() - pos.x(), r.y() - origin.y() - pos.y(), r.z());
        const double d2 = d.squaredNorm();
        const double dn = std::sqrt(d2);
        const double inv3 = 1.0 / (d2 * dn);
        // B = mu0/4pi (3 (m.d) d / |d|^5 - m / |d|^3), m = mz z-hat
        B += pref * mz * inv3 * (3.0 * d.z() / d2 * d - Vec3::UnitZ());
      }
    }
  return B;
}

}  // namespace maglattice
