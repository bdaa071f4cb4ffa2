/**
 * @file kernelalg.hpp
 * @brief Three-variable kernels T(x0, x1, y) stored per dual frequency eta,
 *        their composition, contraction by functions and Z/Y-type norms.
 */

#ifndef WAVEOP_KERNELALG_HPP_INCLUDED_
#define WAVEOP_KERNELALG_HPP_INCLUDED_

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

#include "waveop/fields.hpp"
#include "waveop/resolvent.hpp"

namespace waveop {

/**
 * Cubic lattice of eta = k * 2pi / y_box with k in [-m, m]^3, and its dual y
 * lattice j * y_box / (2m+1), j in [-m, m]^3. The sizes are odd, so this is
 * not a Grid3. Index order is x fastest.
 */
struct EtaLattice {
  int m = 4;
  double y_box = 9.0;

  EtaLattice() = default;
  EtaLattice(int half_width, double box);

  int per_axis() const { return 2 * m + 1; }
  std::size_t size() const { std::size_t p = std::size_t(per_axis()); return p * p * p; }
  double eta_spacing() const { return 2.0 * kPi / y_box; }
  double y_spacing() const { return y_box / per_axis(); }
  double y_cell() const { double s = y_spacing(); return s * s * s; }
  std::array<int, 3> offsets(std::size_t idx) const;
  Vec3 eta(std::size_t idx) const;
  Vec3 y(std::size_t idx) const;
  bool operator==(const EtaLattice& o) const { return m == o.m && y_box == o.y_box; }
  bool operator!=(const EtaLattice& o) const { return !(*this == o); }
};

/**
 * F_y T(x0, x1, eta) as one operator per eta: slice(k) maps values at x0 to
 * values at x1 and already carries the x0 cell weight. The adjoined identity
 * delta_0(y) delta(x1 - x0) is tracked separately as a coefficient; slice(k)
 * is only the remainder.
 *
 * Slices are produced on demand so that large lattices never sit in memory.
 */
class EtaKernel {
 public:
  using SliceFn = std::function<Eigen::MatrixXcd(std::size_t)>;

  EtaKernel() = default;
  EtaKernel(const Grid3& grid, const EtaLattice& lattice, cplx identity, SliceFn fn);

  static EtaKernel zero(const Grid3& grid, const EtaLattice& lattice);
  static EtaKernel identity(const Grid3& grid, const EtaLattice& lattice);

  const Grid3& grid() const { return grid_; }
  const EtaLattice& lattice() const { return lattice_; }
  cplx identity_coefficient() const { return identity_; }
  bool is_zero_remainder() const { return !fn_; }

  /// Remainder slice (without the identity part).
  Eigen::MatrixXcd slice(std::size_t k) const;
  /// identity * I + slice(k).
  Eigen::MatrixXcd full_slice(std::size_t k) const;

  /// Evaluates every slice once and keeps them (small lattices only).
  EtaKernel materialize() const;

  /// Calls fn(k, full_slice(k)) for every k, in parallel across k.
  void for_each_slice(const std::function<void(std::size_t, const Eigen::MatrixXcd&)>& fn) const;

 private:
  Grid3 grid_;
  EtaLattice lattice_;
  cplx identity_ = 0.0;
  SliceFn fn_;
};

/// Two-variable kernel K(x, y) on grid x lattice.y, stored at x + N*y.
struct ContractionKernel {
  Grid3 grid;
  EtaLattice lattice;
  std::vector<cplx> values;

  ContractionKernel() = default;
  ContractionKernel(const Grid3& g, const EtaLattice& l)
      : grid(g), lattice(l), values(g.size() * l.size(), cplx(0.0)) {}
  cplx& at(std::size_t x, std::size_t y) { return values[x + grid.size() * y]; }
  const cplx& at(std::size_t x, std::size_t y) const { return values[x + grid.size() * y]; }
};

/**
 * e^{-i x1.eta} R0(|eta|^2 - i eps)(x0, x1) V(x0) e^{i x0.eta}, the phase-conjugated
 * Birman-Schwinger kernel. side = Plus gives the |eta|^2 + i eps companion.
 */
EtaKernel t1_plus(const Potential& pot, const Grid3& grid, const EtaLattice& lattice, double eps,
                  Side side = Side::Minus);
EtaKernel t1_plus(const ScalarField& v, const EtaLattice& lattice, double eps, Side side = Side::Minus);

/// Slice of t1_plus at an arbitrary eta (not restricted to a lattice).
Eigen::MatrixXcd t1_slice_at(const ScalarField& v, const Vec3& eta, double eps, Side side = Side::Minus);

/// Phase-conjugated R_V V = I - (I + R0 V)^{-1}; NearSingular per eta.
EtaKernel t_plus(const Potential& pot, const Grid3& grid, const EtaLattice& lattice, double eps,
                 Side side = Side::Minus);
EtaKernel t_plus(const ScalarField& v, const EtaLattice& lattice, double eps, Side side = Side::Minus);

/// A acts first: (b I + S_B)(a I + S_A). Throws GridMismatch.
EtaKernel compose(const EtaKernel& a, const EtaKernel& b);

/// n-fold composition power of t1_plus; n <= max_order.
EtaKernel t_n_plus(const Potential& pot, int n, const Grid3& grid, const EtaLattice& lattice,
                   double eps, int max_order = 4);
EtaKernel power(const EtaKernel& t, int n);

/// (fT)(x1, y) = F^{-1}_eta [ sum_x0 f(x0) F_y T(x0, x1, eta) h^3 ](y).
ContractionKernel contract(const ScalarField& f, const EtaKernel& t);
std::vector<ContractionKernel> contract_many(const std::vector<ScalarField>& fs, const EtaKernel& t);

/// Builds K(x, y) from values hat[x + N*k] at the lattice frequencies (inverse transform in eta).
ContractionKernel kernel_from_eta(const Grid3& grid, const EtaLattice& lattice, std::vector<cplx> hat);

/// max_eta max_x1 sum_x0 |slice|
double z_norm(const EtaKernel& t);

struct YNormReport {
  double value = 0.0;
  double z_part = 0.0;
  double b_part = 0.0;  ///< max over probes, a lower estimate of the operator seminorm
};

/// z_norm plus sup over a fixed probe family of sum_y |y cell| ||v (fT)(., y)||_{B^sigma} / ||v f||_{B^sigma}, v = |V|.
YNormReport y_norm(const EtaKernel& t, const Potential& pot, double sigma);
YNormReport y_norm(const EtaKernel& t, const ScalarField& weight, double sigma);

/// Twelve fixed probe mixtures used by y_norm, sampled on grid.
std::vector<ScalarField> y_norm_probes(const Grid3& grid);

/// sum_y |y cell| sup_x |K(x, y)|
double xinf_l1_norm(const ContractionKernel& k);

/// Per-eta induced-norm residuals of (I + T1)(I - T) - I and (I - T)(I + T1) - I.
struct ResolventResidual {
  double left = 0.0;
  double right = 0.0;
};
ResolventResidual resolvent_identity_residual(const EtaKernel& t1, const EtaKernel& t);

}  // namespace waveop

#endif  // WAVEOP_KERNELALG_HPP_INCLUDED_
