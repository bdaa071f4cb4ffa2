/**
 * @file fields.hpp
 * @brief Periodic grids, complex fields, potentials, Fourier transforms,
 *        dyadic B-norms, Lorentz norms and sphere quadratures.
 */

#ifndef WAVEOP_FIELDS_HPP_INCLUDED_
#define WAVEOP_FIELDS_HPP_INCLUDED_

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "waveop/common.hpp"

namespace waveop {

/**
 * Uniform periodic box [-L/2, L/2)^3 with n points per axis.
 *
 * Point (ix, iy, iz) sits at -L/2 + i*h and is stored at ix + n*(iy + n*iz).
 * Dual frequencies are 2*pi*k/L with k in [-n/2, n/2), stored in FFT order.
 */
struct Grid3 {
  int n = 0;
  double box = 0.0;

  Grid3() = default;
  Grid3(int n_per_axis, double box_length);

  double spacing() const { return box / n; }
  double cell_volume() const { double h = spacing(); return h * h * h; }
  double dual_spacing() const { return 2.0 * kPi / box; }
  std::size_t size() const { return std::size_t(n) * n * n; }
  std::size_t index(int ix, int iy, int iz) const {
    return std::size_t(ix) + std::size_t(n) * (std::size_t(iy) + std::size_t(n) * iz);
  }
  double coord(int i) const { return -0.5 * box + i * spacing(); }
  Vec3 point(std::size_t idx) const;
  /// Signed integer frequency index for FFT slot m.
  int freq_index(int m) const { return m < n / 2 ? m : m - n; }
  Vec3 frequency(std::size_t idx) const;
  /// Largest per-axis frequency magnitude pi/h.
  double nyquist() const { return kPi / spacing(); }
  bool operator==(const Grid3& o) const { return n == o.n && box == o.box; }
  bool operator!=(const Grid3& o) const { return !(*this == o); }
};

struct ScalarField {
  Grid3 grid;
  std::vector<cplx> values;

  ScalarField() = default;
  explicit ScalarField(const Grid3& g) : grid(g), values(g.size(), cplx(0.0)) {}
  cplx& operator[](std::size_t i) { return values[i]; }
  const cplx& operator[](std::size_t i) const { return values[i]; }
};

/// Evaluates fn at every grid point.
ScalarField make_field(const Grid3& grid, const std::function<cplx(const Vec3&)>& fn);

double l2_norm(const ScalarField& f);
double lp_norm(const ScalarField& f, double p);
double max_norm(const ScalarField& f);
cplx inner(const ScalarField& a, const ScalarField& b);
/// ||a - b||_2 / ||b||_2 (0 when both vanish).
double relative_l2(const ScalarField& a, const ScalarField& b);

struct Gaussian {
  double amplitude = 0.0;
  Vec3 center{0.0, 0.0, 0.0};
  double width = 1.0;
};

/**
 * Real potential: a Gaussian mixture with exact transform, or a tabulated
 * field used as-is.
 */
struct Potential {
  std::vector<Gaussian> terms;
  std::optional<ScalarField> table;

  static Potential zero() { return Potential{}; }
  static Potential gaussian(double amplitude, double width, Vec3 center = {0.0, 0.0, 0.0});
  static Potential tabulated(const ScalarField& field);

  bool is_tabulated() const { return table.has_value(); }
  bool is_zero() const;
  double min_width() const;
  /// Pointwise value; only for mixtures.
  double value(const Vec3& x) const;
  /// Sum_j a_j (2pi)^{3/2} w_j^3 exp(-w_j^2|xi|^2/2) exp(-i xi.c_j); only for mixtures.
  cplx hat(const Vec3& xi) const;
  Potential scaled(double s) const;
  Potential plus(const Potential& other) const;
};

/// Samples the potential; throws UnresolvedPotential if spacing > width/2.
ScalarField sample_potential(const Potential& pot, const Grid3& grid);

enum class Direction { Forward, Inverse };

/// Forward: spacing^3 * sum f e^{-i x.xi}; inverse carries (2pi)^{-3} dual^3.
ScalarField fourier_transform(const ScalarField& f, Direction dir);

/// In-place unnormalized FFTW transform of a row-major array (x fastest).
/// sign = -1 forward, +1 backward. dims are listed slowest first.
void fft_inplace(std::vector<cplx>& data, const std::vector<int>& dims, int sign);

struct BNormReport {
  double value = 0.0;
  double tail_fraction = 0.0;  ///< L2 mass outside radius box/2, relative to ||f||_2
};

/// Dyadic shell norm; throws TailTooLarge if the tail fraction exceeds tail_limit.
BNormReport b_norm_report(const ScalarField& f, double alpha, bool dotted,
                          double tail_limit = 0.01);
double b_norm(const ScalarField& f, double alpha, bool dotted);

/// Lorentz L^{p,q} norm from the exact discrete rearrangement; q may be infinity.
double lorentz_norm(const ScalarField& f, double p, double q);

struct SphereQuadrature {
  std::vector<Vec3> nodes;
  std::vector<double> weights;  ///< sum to 4 pi
  int degree = 0;               ///< exact for polynomials up to this degree

  std::size_t size() const { return nodes.size(); }
};

/// Lebedev rules with 6, 14, 26, 38 or 50 nodes.
SphereQuadrature sphere_rule(int order);
/// Gauss-Legendre in cos(theta) times 2*n_theta uniform azimuths.
SphereQuadrature product_sphere_rule(int n_theta);

/// Gauss-Legendre nodes and weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights);

void write_field(const std::string& path, const ScalarField& f);
ScalarField read_field(const std::string& path);
/// Stream forms; several records may be concatenated in one file.
void write_field(std::ostream& os, const ScalarField& f);
ScalarField read_field(std::istream& is);

}  // namespace waveop

#endif  // WAVEOP_FIELDS_HPP_INCLUDED_
