/**
 * @file resolvent.hpp
 * @brief Free resolvent kernels, the Birman-Schwinger operator R0(z)V on a
 *        grid, its dense inversion and the zero/high-energy diagnostics.
 */

#ifndef WAVEOP_RESOLVENT_HPP_INCLUDED_
#define WAVEOP_RESOLVENT_HPP_INCLUDED_

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

#include "waveop/fields.hpp"

namespace waveop {

enum class Side { Plus, Minus };

/**
 * Spectral parameter z = lambda^2 - below^2 + i*eps (Plus) or - i*eps (Minus).
 *
 * branch_root() is sqrt(z) with Im >= 0 on the Plus side and Im <= 0 on the
 * Minus side. The kernel is written exp(i*kappa*r)/(4 pi r) with Im kappa >= 0,
 * so kappa = branch_root() on the Plus side and -branch_root() on the Minus side.
 * Setting below = E > 0 with lambda = eps = 0 gives z = -E^2, kappa = iE.
 */
struct SpectralPoint {
  double lambda = 0.0;
  double epsilon = 0.0;
  Side side = Side::Plus;
  double below = 0.0;

  static SpectralPoint plus(double lambda, double eps = 0.0) { return {lambda, eps, Side::Plus, 0.0}; }
  static SpectralPoint minus(double lambda, double eps = 0.0) { return {lambda, eps, Side::Minus, 0.0}; }
  static SpectralPoint negative_energy(double e) { return {0.0, 0.0, Side::Plus, e}; }

  cplx z() const;
  cplx branch_root() const;
  cplx kappa() const;
  SpectralPoint conjugate() const;
};

/// exp(i kappa |x-y|) / (4 pi |x-y|); throws SingularPoint when x == y.
cplx free_resolvent_kernel(const SpectralPoint& z, const Vec3& x, const Vec3& y);

/// Integral of 1/|x| over the unit cube [-1/2, 1/2]^3, 3 ln(2+sqrt 3) - pi/2.
constexpr double kCubeInverseDistance = 2.3800773639795535;

/**
 * Discretized integral operator. `op` acts directly on value vectors and
 * already contains the source-cell weight; entries() undoes that weight.
 */
struct OperatorMatrix {
  Grid3 grid;
  Eigen::MatrixXcd op;
  double weight = 0.0;

  Eigen::MatrixXcd entries() const { return op / weight; }
  ScalarField apply(const ScalarField& f) const;
  /// max_i sum_j |op_ij|
  double inf_norm() const;
};

/// Identity operator on the grid.
OperatorMatrix identity_operator(const Grid3& grid);

/// Table of the free kernel over integer offsets in [-(n-1), n-1]^3; the
/// zero offset holds the cell average h^2 * kCubeInverseDistance / (4 pi) / h^3.
std::vector<cplx> free_kernel_offsets(const SpectralPoint& z, const Grid3& grid);

/// K(x,y) = R0(z)(x,y) V(y) spacing^3.
OperatorMatrix birman_schwinger(const SpectralPoint& z, const Potential& pot, const Grid3& grid);
OperatorMatrix birman_schwinger(const SpectralPoint& z, const ScalarField& v);

/// Condition threshold above which a solve is reported as NearSingular.
constexpr double kNearSingularCondition = 1e12;

struct ResolventInverse {
  OperatorMatrix inverse;  ///< (I + R0 V)^{-1}
  double condition = 0.0;  ///< 1-norm condition estimate of I + R0 V

  /// R_V V = I - (I + R0 V)^{-1}
  OperatorMatrix rv_v() const;
};

ResolventInverse resolvent_inverse(const SpectralPoint& z, const Potential& pot, const Grid3& grid);
ResolventInverse resolvent_inverse(const SpectralPoint& z, const ScalarField& v);

/// Applies u -> sum_j G(x_i - x_j) u_j spacing^3 by zero-padded FFT; same
/// discrete kernel as birman_schwinger.
class FreeResolventFFT {
 public:
  FreeResolventFFT(const SpectralPoint& z, const Grid3& grid);
  std::vector<cplx> apply(const std::vector<cplx>& u) const;
  const Grid3& grid() const { return grid_; }

 private:
  Grid3 grid_;
  int m_ = 0;  // padded size 2n
  std::vector<cplx> kernel_hat_;
};

struct M0Entry {
  double lambda = 0.0;
  double epsilon = 0.0;
  Side side = Side::Plus;
  double norm = 0.0;  ///< inf for a near-singular point
};

struct M0Report {
  double M0 = 1.0;
  std::vector<M0Entry> table;
  bool boundary_max = false;  ///< maximum sits on the edge of the scan
  bool singular = false;
  double singular_lambda = 0.0;

  std::string csv() const;
};

/// Max of ||(I + R0(lambda^2 +- i eps)V)^{-1}|| over the scan, both sides.
M0Report m0_scan(const Potential& pot, const std::vector<double>& lambdas,
                 const std::vector<double>& epsilons, const Grid3& grid);

struct ZeroEnergyReport {
  bool regular = true;
  double inverse_norm = 1.0;
  double condition = 1.0;
};

ZeroEnergyReport zero_energy_check(const Potential& pot, const Grid3& grid);

/// Coupling s at which pot.scaled(s) first has a zero-energy resonance, found
/// as the reciprocal of the largest eigenvalue of -R0(0)V.
double critical_coupling(const Potential& pot, const Grid3& grid);

struct DecayReport {
  std::vector<double> lambdas;
  std::vector<double> squared_norm;  ///< ||(R0 V)^2||_{inf->inf}
  std::vector<double> first_norm;    ///< ||R0 V||_{inf->inf}
  std::size_t rows_sampled = 0;      ///< 0 means every row
};

/**
 * Per-lambda induced norms of (R0(lambda^2+i0)V)^2. Grids above 8^3 points per
 * axis evaluate rows by FFT at max_rows sampled target points (largest row sums
 * for a radial V sit near the potential), giving a lower estimate of the sup.
 */
DecayReport high_energy_decay(const Potential& pot, const std::vector<double>& lambdas,
                              const Grid3& grid, std::size_t max_rows = 64);

struct PointSpectrum {
  std::vector<double> eigenvalues;
  std::vector<ScalarField> eigenfunctions;  ///< L2-orthonormal
};

/// Negative eigenvalues of the spectral-Laplacian discretization of -Delta + V.
PointSpectrum point_spectrum(const Potential& pot, const Grid3& grid, double tolerance = 1e-8);
PointSpectrum point_spectrum(const ScalarField& v, double tolerance = 1e-8);

struct BoundStateRoot {
  double energy = 0.0;  ///< E^2 < 0
  double kappa = 0.0;   ///< sqrt(-energy)
  int iterations = 0;
};

/**
 * Deepest bound state seen by the Birman-Schwinger operator: solves
 * mu(E) = 1 with mu the largest eigenvalue of -R0(-E^2)V (power iteration).
 */
BoundStateRoot bound_state_search(const Potential& pot, const Grid3& grid);

}  // namespace waveop

#endif  // WAVEOP_RESOLVENT_HPP_INCLUDED_
