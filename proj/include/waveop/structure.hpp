/**
 * @file structure.hpp
 * @brief The function L(r, omega), the Born kernel K1, the structure measures
 *        g1, g_n and the full g = g1 + h, and the reflection formula applying them.
 */

#ifndef WAVEOP_STRUCTURE_HPP_INCLUDED_
#define WAVEOP_STRUCTURE_HPP_INCLUDED_

#include <optional>
#include <string>
#include <vector>

#include "waveop/fields.hpp"
#include "waveop/kernelalg.hpp"

namespace waveop {

/// i / (16 pi^3): density of g1 per unit length relative to L.
const cplx kBornConstant{0.0, 1.0 / (16.0 * kPi * kPi * kPi)};

/// Uniform 1-D grid x_k = start + k * step, k in [0, count).
struct AxisGrid {
  double start = 0.0;
  double step = 1.0;
  int count = 0;

  /// Cell-centred nodes on [-half_range, half_range].
  static AxisGrid centered(double half_range, int count);
  /// Nodes -extent, -extent + step, ..., extent.
  static AxisGrid symmetric(double extent, double step);
  double at(int k) const { return start + k * step; }
  double lo() const { return start; }
  double hi() const { return start + (count - 1) * step; }
  bool operator==(const AxisGrid& o) const { return start == o.start && step == o.step && count == o.count; }
  bool operator!=(const AxisGrid& o) const { return !(*this == o); }
};

/// Composite Gauss-Legendre rule in s on [0, s_max].
struct SRule {
  std::vector<double> s;
  std::vector<double> w;
};
/// Geometric refinements of the first panel towards s = 0.
constexpr int kGradedLevels = 30;

SRule make_s_rule(double s_max, double panel_max, int per_panel = 6);

/// Evaluates a potential transform hat U(xi) at arbitrary frequencies.
class Spectrum {
 public:
  static Spectrum of(const Potential& pot);
  /// Direct discrete transform h^3 sum U(x) e^{-i xi.x} of a sampled (possibly complex) field.
  static Spectrum of_field(const ScalarField& u);

  cplx operator()(const Vec3& xi) const;
  /// s beyond which the tail of int s |hat U| ds is below tol relative to the whole integral (Nyquist for fields).
  double cutoff(double tol = 1e-12) const;
  bool is_zero() const;

 private:
  std::optional<Potential> pot_;
  std::optional<ScalarField> field_;
};

struct LTable {
  AxisGrid r;
  SphereQuadrature sphere;
  double epsilon = 0.0;
  std::vector<cplx> values;  ///< index k + r.count * omega

  cplx at(int k, std::size_t omega) const { return values[std::size_t(k) + std::size_t(r.count) * omega]; }
};

struct LTableOptions {
  double s_max = 0.0;      ///< 0 picks the decay cutoff of V hat
  double panel = 0.0;      ///< 0 picks min(pi / r_max, s_max / 16)
  int per_panel = 6;
};

/// L(r, omega) = int_0^s_max V^(-s omega) e^{irs/2} e^{-eps/(2s)} s ds by composite Gauss-Legendre.
LTable l_table(const Potential& pot, const AxisGrid& r, const SphereQuadrature& sphere, double eps,
               const LTableOptions& opt = {});

/// Pointwise L with the damping e^{-eps t/(2s)}; t = 0 reproduces the undamped value.
cplx l_value(const Spectrum& spec, double r, const Vec3& omega, double eps, double t, const SRule& rule);

/// const |z|^{-2} int s V^(-s zhat) e^{is(|z| - 2 x.zhat)/2} e^{-eps|z|/(2s)} ds; SingularPoint at z = 0.
cplx k1_kernel(const Potential& pot, const Vec3& x, const Vec3& z, double eps, cplx constant = kBornConstant);

struct Reflection {
  Vec3 omega;
  Vec3 apply(const Vec3& x) const { return x - (2.0 * dot(x, omega)) * omega; }
};

/// Line part of g: per omega a density along y = r omega, active where r + 2 x.omega > 0.
struct LinePart {
  AxisGrid r;
  AxisGrid xw;  ///< x_omega nodes; count 1 when the density does not depend on x_omega
  std::vector<cplx> density;  ///< k + r.count * (j + xw.count * omega)

  cplx at(int k, int j, std::size_t omega) const {
    return density[std::size_t(k) + std::size_t(r.count) * (std::size_t(j) + std::size_t(xw.count) * omega)];
  }
};

/// Gridded part of g: per omega and x_omega node a complex density on a y grid.
struct GridPart {
  Grid3 y_grid;
  AxisGrid xw;
  std::vector<cplx> values;  ///< y + N_y * (j + xw.count * omega)
  double dropped = 0.0;      ///< line mass deposited outside the y box, relative to the kept mass

  const cplx* block(int j, std::size_t omega) const {
    return values.data() + y_grid.size() * (std::size_t(j) + std::size_t(xw.count) * omega);
  }
};

struct StructureFunction {
  SphereQuadrature sphere;
  double epsilon = 0.0;
  cplx constant = kBornConstant;
  std::optional<LinePart> line;
  std::optional<GridPart> grid;

  bool empty() const { return !line && !grid; }
};

/// Sizes of the structure pipeline.
struct StructureGrids {
  AxisGrid line_r = AxisGrid::centered(24.0, 256);
  int sphere_order = 26;
  double x_extent = 0.0;  ///< max |x.omega| needed; 0 derives it from the application box
  double application_box = 16.0;
  Grid3 kernel_grid{8, 4.0};
  EtaLattice lattice{4, 9.0};
  AxisGrid h_r = AxisGrid::centered(12.0, 48);
  double h_xw_step = 0.5;
  Grid3 y_grid{16, 16.0};
  int per_panel = 6;

  double extent() const;
};

/// g1 for V; the density is c * L, with the damping e^{-eps (r + 2 x_omega)/(2s)} for eps > 0.
StructureFunction g1(const Potential& pot, const SphereQuadrature& sphere, const AxisGrid& r,
                     double eps, double x_extent, cplx constant = kBornConstant);
StructureFunction g1(const Potential& pot, const StructureGrids& grids, double eps,
                     cplx constant = kBornConstant);

/// Line weights dr * 1[r + 2 x_omega > 0] * density(r, x_omega) along omega; a function of x_omega only.
void line_weights(const StructureFunction& g, std::size_t omega, double x_omega, std::vector<cplx>& out);
/// Grid-part weights at x_omega (linear interpolation between x_omega nodes), times the y cell volume.
void grid_weights(const StructureFunction& g, std::size_t omega, double x_omega, std::vector<cplx>& out);

/// Trilinear interpolation of a spectrally refined copy of f; zero outside the box.
class FieldInterpolator {
 public:
  explicit FieldInterpolator(const ScalarField& f, int refine = 4);
  cplx operator()(const Vec3& x) const;

 private:
  Grid3 fine_;
  std::vector<cplx> data_;
};

/// int_{S^2} int g(x, dy, omega) f(S_omega x - y); identity not included.
ScalarField apply_g(const StructureFunction& g, const ScalarField& f);

/// Kernels W_n(x', y0), n = 1..n_max, of the Born terms on the kernel grid: (-1)^n contract(1, T1^n).
std::vector<ContractionKernel> born_wave_kernels(const ScalarField& v, const EtaLattice& lattice,
                                                 double eps, int n_max);
/// Kernel of W+ - I: -contract(1, t_plus), by one linear solve per eta. NearSingular per eta.
ContractionKernel full_wave_kernel(const ScalarField& v, const EtaLattice& lattice, double eps);

/// Gridded measure sum_{y0} |cell| g1[V W(., y0)](x, d(y - y0), omega), W a kernel-grid kernel.
StructureFunction grid_measure(const ScalarField& v, const ContractionKernel& w, const StructureGrids& grids,
                               double eps, cplx constant = kBornConstant);

/// The n-th Born structure term (n >= 1); n = 1 is g1.
StructureFunction born_g_n(const Potential& pot, int n, const StructureGrids& grids, double eps,
                           cplx constant = kBornConstant);

enum class FullGMethod { BornSum, Resolvent };

struct FullGReport {
  StructureFunction g;
  std::vector<double> term_norms;  ///< born_sum: structure_norm of each g_n
  double ratio = 0.0;              ///< born_sum: fitted geometric ratio
  double tail_bound = 0.0;         ///< born_sum: geometric tail estimate beyond the last term
};

FullGReport full_g(const Potential& pot, const StructureGrids& grids, double eps, FullGMethod method,
                   int born_order = 4, cplx constant = kBornConstant);

/// int dw [ sum_r dr sup_x |line density| + sum_y vol sup_{x_omega} |h| ].
double structure_norm(const StructureFunction& g);
/// Total variation in x_omega, summed over y and integrated in omega.
double x_omega_regularity(const StructureFunction& g);

/// Term-wise sum and difference; layouts must agree (GridMismatch otherwise).
StructureFunction add(const StructureFunction& a, const StructureFunction& b, double scale_b = 1.0);
StructureFunction subtract(const StructureFunction& a, const StructureFunction& b);
StructureFunction scaled(const StructureFunction& a, cplx s);

/// JSON manifest plus binary data files next to it (prefix.json, prefix.line.bin, prefix.grid.bin).
void save_structure(const std::string& prefix, const StructureFunction& g);
StructureFunction load_structure(const std::string& prefix);

/// Per-omega norms as CSV: omega index, nodes, weight, line norm, grid norm.
std::string structure_norm_csv(const StructureFunction& g);

}  // namespace waveop

#endif  // WAVEOP_STRUCTURE_HPP_INCLUDED_
