/**
 * @file wiener.hpp
 * @brief Constructive Wiener inversion in the convolution algebra (scalar and
 *        eta-patched operator versions) and the quantitative parameter formulas.
 */

#ifndef WAVEOP_WIENER_HPP_INCLUDED_
#define WAVEOP_WIENER_HPP_INCLUDED_

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "waveop/kernelalg.hpp"

namespace waveop {

/// delta_0 (if has_delta) + f on a periodic grid of dimension 1 or 3.
struct ConvElement {
  int dimension = 1;
  int n = 0;          ///< points per axis
  double box = 0.0;
  std::vector<cplx> density;
  bool has_delta = false;

  ConvElement() = default;
  ConvElement(int dim, int points, double box_length);

  double spacing() const { return box / n; }
  double cell() const;
  std::size_t size() const;
  std::vector<int> dims() const;
  double coord(int i) const { return -0.5 * box + i * spacing(); }
  /// Signed frequency along one axis of index i.
  double frequency(int i) const;
  double l1_norm() const;
  bool same_layout(const ConvElement& o) const { return dimension == o.dimension && n == o.n && box == o.box; }
};

/// hat f(xi_k) = cell * sum_j f(x_j) e^{-i xi_k . x_j} on the dual grid (delta not included).
std::vector<cplx> transform(const ConvElement& f);
/// Inverse of transform: densities from values on the dual grid.
ConvElement from_transform(const std::vector<cplx>& hat, int dim, int n, double box);
/// Density part of f * g (delta parts included in the algebra).
ConvElement convolve(const ConvElement& f, const ConvElement& g);
/// Direct O(N^2) periodic convolution of the densities, used as a cross-check.
ConvElement convolve_direct(const ConvElement& f, const ConvElement& g);

/// Polynomial C^3 step: 1 for t <= 0, 0 for t >= 1.
double smooth_step(double t);
/// chi hat(xi) = smooth_step(|xi| - 1): 1 on |xi| <= 1, 0 on |xi| >= 2.
double mollifier_hat(double r);

struct WienerParams {
  double R = 0.0;            ///< high-frequency cutoff reached by doubling
  double eps_loc = 0.0;      ///< local patch radius
  int neumann_cap = 64;
  double neumann_tol = 1e-12;
  double center_offset = 0.0;  ///< shift of the patch lattice, in units of its spacing
  std::vector<double> partition_centers;  ///< per-axis center coordinates
  double far_norm = 0.0;     ///< ||(delta - chi_R) * f||_1 at the chosen R
  int far_terms = 0;
  int max_local_terms = 0;
};

struct ScalarInverse {
  ConvElement g;
  WienerParams params;
  double residual = 0.0;
};

/// g with (delta + f) * (delta + g) = delta; NotInvertible if min |1 + hat f| <= 1e-6,
/// NoConvergence when a Neumann cap is exceeded or the patches cannot be made small.
ScalarInverse scalar_invert(const ConvElement& f, double center_offset = 0.0);
/// max over the dual grid of |(1 + hat f)(1 + hat g) - 1|.
double check_inverse(const ConvElement& f, const ConvElement& g);

/// eta -> slice of S at arbitrary eta.
using SliceAt = std::function<Eigen::MatrixXcd(const Vec3&)>;

struct OperatorWienerParams {
  double R_start = 1.0;
  double eps_start = 1.0;
  double eps_min = 1.0 / 16.0;
  int neumann_cap = 64;
  double neumann_tol = 1e-12;
};

struct OperatorWienerReport {
  std::vector<Eigen::MatrixXcd> inverse;  ///< L(eta) per lattice point: (I + L)(I + S) = I
  double R = 0.0;
  double eps = 0.0;
  std::size_t centers = 0;
  double max_left_residual = 0.0;
  double max_right_residual = 0.0;
};

/// Patched inversion of I + S over a lattice: Neumann series where ||S|| < 1/2 at high
/// frequency, local patches around centers eta0 with U(eta0) from a direct inverse.
/// PatchFailure when the local contraction fails at eps_min, NotInvertible for a singular I + S(eta0).
OperatorWienerReport operator_invert(const SliceAt& s, const EtaLattice& lattice,
                                     const OperatorWienerParams& p = {});
/// operator_invert for S = t1_plus of v.
OperatorWienerReport operator_invert(const ScalarField& v, const EtaLattice& lattice, double eps,
                                     const OperatorWienerParams& p = {});

/// Quantities of the conditioned inversion; log fields are natural logs.
struct QuantParams {
  double normV = 0.0, M0 = 0.0, gamma = 0.5, c = 0.01;
  double K = 0.0, M1 = 0.0, L0 = 0.0, eps0 = 0.0, eps1 = 0.0, M2 = 0.0;
  double log_K = 0.0, log_M1 = 0.0, log_L0 = 0.0, log_eps0 = 0.0, log_eps1 = 0.0, log_M2 = 0.0;
  double log2_M2() const;
};

/// K = 1 + normV, M1 = 1 + K M0, L0 = (K M1)^{1/gamma} / c, eps0 = c K^{-10-33/gamma},
/// eps1 = c K^{-2} M1^{-2}, M2 = K^{37+105/gamma} (1 + M0)^{4+3/gamma}. DomainError outside 0 < gamma <= 1/2.
QuantParams quant_params(double normV, double M0, double gamma, double c = 0.01);

/// eps0^{-3} (eps1^{-3} + L0^3 M1^3 ||S||^3) M1 and its natural log.
double inverse_budget(double eps0, double eps1, double L0, double M1, double normS);
double log_inverse_budget(double log_eps0, double log_eps1, double log_L0, double log_M1, double normS);

}  // namespace waveop

#endif  // WAVEOP_WIENER_HPP_INCLUDED_
