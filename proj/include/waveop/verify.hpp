/**
 * @file verify.hpp
 * @brief Verification pipelines: structure formula against Cook's method,
 *        L^p and half-space bounds, stability, W- and the adjoints, the Born
 *        law and the fitted-constant inequality suite.
 */

#ifndef WAVEOP_VERIFY_HPP_INCLUDED_
#define WAVEOP_VERIFY_HPP_INCLUDED_

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "waveop/propagator.hpp"
#include "waveop/structure.hpp"

namespace waveop {

using PointFunction = std::function<cplx(const Vec3&)>;

/// Ten-member (by default) corpus of seeded Gaussian mixtures.
std::vector<Potential> make_corpus(unsigned seed, int count = 10, double max_amplitude = 0.2);

// ---------------------------------------------------------------- oracle

struct OracleConfig {
  Grid3 x_grid{16, 16.0};
  StructureGrids grids;
  double eps = 0.05;
  FullGMethod method = FullGMethod::Resolvent;
  int born_order = 4;
  Grid3 cook_grid{64, 32.0};
  double dt = 0.0;      ///< 0 picks max_time_step(cook_grid)
  double t_max = 0.0;   ///< 0 picks cook_time_horizon
  double t_cap = 400.0;
  double tail_tol = 1e-6;
};

struct OracleReport {
  double rel_l2_error = 0.0;     ///< on the x grid, relative to the Cook result
  double structure_norm = 0.0;
  double g_part_norm = 0.0;      ///< ||apply_g(g, f)|| / ||f||
  double cook_isometry = 1.0;    ///< ||W f|| / ||f|| on the Cook grid
  double cook_tail = 0.0;
  double t_max = 0.0;
  int steps = 0;
  double structure_seconds = 0.0;
  double cook_seconds = 0.0;
};

/// Samples f on both grids, compares f + apply_g(full_g, f) with Cook's W+ f on
/// the points of x_grid. GridMismatch unless x_grid points are Cook grid points.
OracleReport oracle_equivalence(const Potential& pot, const PointFunction& f, const OracleConfig& cfg);
/// Same with the structure function already computed (cfg.method and born_order unused).
OracleReport oracle_equivalence(const StructureFunction& g, const Potential& pot, const PointFunction& f,
                                const OracleConfig& cfg);

/// Index of each x_grid point in the Cook grid.
std::vector<std::size_t> embed_grid(const Grid3& coarse, const Grid3& fine);

// ---------------------------------------------------------------- L^p and half spaces

struct LpScan {
  std::vector<double> p;          ///< infinity stands for the grid max-norm
  std::vector<double> max_ratio;  ///< max over probes of ||(I + g) f||_p / ||f||_p
  double bound = 1.0;             ///< 1 + structure_norm(g)
};

LpScan lp_bound_scan(const StructureFunction& g, const std::vector<double>& p_list,
                     const std::vector<ScalarField>& probes);

/// Five fixed Gaussian probes on grid.
std::vector<ScalarField> lp_probes(const Grid3& grid);

using FieldNorm = std::function<double(const ScalarField&)>;

/// (sum h^3 w |f|^2)^{1/2}; positive weights make every half-space cut a contraction.
FieldNorm weighted_l2(const PointFunction& weight);

struct Halfspace {
  Vec3 normal{0.0, 0.0, 1.0};
  double offset = 0.0;  ///< {x : x.normal > offset}
};

struct HalfspaceReport {
  double ratio = 0.0;        ///< ||(I + g) f||_X / ||f||_X
  double majorant = 0.0;     ///< C(V): sum_w w [sum_r c_r ||f(S.-r w)|| + sum_y vol sup|h| ||f(S.-y)||] / ||f||
  double cut_constant = 0.0; ///< A measured as max over the list of ||1_H f||_X / ||f||_X
  double structure_norm = 0.0;
  bool holds = false;        ///< ratio <= 1 + A_used * majorant + 1e-10
};

/// Evaluates the majorant with A = max(1, cut_constant).
HalfspaceReport halfspace_bound(const StructureFunction& g, const ScalarField& f,
                                const std::vector<Halfspace>& halfspaces, const FieldNorm& norm);

// ---------------------------------------------------------------- stability

struct StabilityConfig {
  StructureGrids grids;
  double eps = 0.05;
  FullGMethod method = FullGMethod::Resolvent;
  int born_order = 4;
  double gamma = 0.25;         ///< bracket uses B^{1 + 2 gamma}
  Grid3 norm_grid{32, 16.0};
  double support_tol = 1e-8;   ///< joint support: |V| + |V~| above this fraction of its max
};

struct StabilityBracket {
  double b_term = 0.0;
  double sup_term = 0.0;
  double value() const { return b_term + sup_term; }
};

struct StabilityReport {
  double delta_g_norm = 0.0;
  StabilityBracket bracket;
  double ratio = 0.0;  ///< delta_g_norm / bracket (0 when both vanish)
};

StabilityBracket stability_bracket(const Potential& a, const Potential& b, const StabilityConfig& cfg);
StabilityReport stability_check(const Potential& a, const Potential& b, const StabilityConfig& cfg);
/// Same with the structure function of a already computed.
StabilityReport stability_check(const StructureFunction& ga, const Potential& a, const Potential& b,
                                const StabilityConfig& cfg);

// ---------------------------------------------------------------- W-, adjoints, intertwining

struct WMinusReport {
  ScalarField w_plus;
  ScalarField w_minus;            ///< conj W+ conj
  ScalarField w_plus_adjoint;     ///< discrete adjoint of the Cook map applied to f
  ScalarField w_minus_star_time;  ///< time formula for W-*
  ScalarField w_minus_star_conj;  ///< conj W+* conj
  double isometry_defect = 0.0;   ///< ||W+* W+ f - f|| / ||f||
  double w_minus_star_defect = 0.0;
  double matrix_adjoint_error = -1.0;  ///< vs the assembled matrix; -1 when not assembled
};

/// assemble_limit: assemble W+ column by column when the grid has at most this many points.
WMinusReport w_minus_and_adjoint(const Potential& pot, const ScalarField& f, const EvolutionConfig& cfg,
                                 std::size_t assemble_limit = 0);

struct IntertwiningReport {
  double t = 0.0;
  double defect = 0.0;  ///< ||e^{-itH} W f - W e^{-itH0} f|| / ||W e^{-itH0} f||
};

IntertwiningReport intertwining_defect(const Potential& pot, const ScalarField& f, double t,
                                       const EvolutionConfig& cfg);

// ---------------------------------------------------------------- Born law and calibration

struct BornLawEntry {
  std::vector<double> norms;      ///< structure_norm of g_1 .. g_nmax
  double ratio = 0.0;             ///< q = N2 / N1
  double constant = 0.0;          ///< q / ||V||_{B^{1/2}}
  std::vector<double> predicted;  ///< N1 q^{n-1}, n >= 3
  double worst_factor = 1.0;      ///< max over n >= 3 of max(pred/actual, actual/pred)
};

struct BornLawReport {
  std::vector<BornLawEntry> entries;
  double worst_factor = 1.0;
};

BornLawReport born_law(const std::vector<Potential>& corpus, const StructureGrids& grids, double eps,
                       int n_max = 4, const Grid3& norm_grid = Grid3(32, 16.0));

/// max |g1(s V) - s g1(V)| / max |s g1(V)| over the line densities.
double g1_linearity_defect(const Potential& pot, double s, const StructureGrids& grids, double eps);

struct CalibrationEntry {
  cplx fitted{0.0, 0.0};   ///< least-squares c in c * apply_g(g1 with c = 1) ~ Born-1
  double rel_residual = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationEntry> entries;
  double spread = 0.0;               ///< max |c_i - c_j| / |mean|
  double deviation_from_analytic = 0.0;  ///< max |c_i - kBornConstant| / |kBornConstant|
};

CalibrationReport calibrate_born_constant(const std::vector<Potential>& pots, const PointFunction& f,
                                          const Grid3& x_grid, const StructureGrids& grids,
                                          const Grid3& cook_grid, double eps, double t_cap = 400.0);

// ---------------------------------------------------------------- inequality suite

struct SuiteConfig {
  AxisGrid r = AxisGrid::centered(40.0, 640);
  int sphere_order = 26;
  Grid3 norm_grid{32, 16.0};
  Grid3 x_probe{8, 8.0};       ///< x points for the sup in the K1 bound
  Grid3 v_grid{16, 16.0};      ///< x grid of the weighted K1 bound
  double v_width = 1.0;        ///< weight v = exp(-|x|^2 / (2 v_width^2))
  AxisGrid rho{0.125, 0.25, 48};  ///< |y| nodes of the weighted K1 bound
  double sigma = 0.0;
  double gamma1 = 0.25;
  double slack = 1.1;
  double max_violation_fraction = 0.1;
};

struct InequalityCheck {
  std::string name;
  std::vector<double> lhs, rhs;
  double constant = 0.0;  ///< max over the fit half of lhs / rhs
  int holdout = 0;
  int violations = 0;     ///< holdout entries with lhs > slack * constant * rhs
  bool pass = false;
};

/// Fits on the first half of the entries, tests the rest.
InequalityCheck fitted_constant_check(const std::string& name, const std::vector<double>& lhs,
                                      const std::vector<double>& rhs, double slack = 1.1,
                                      double max_violation_fraction = 0.1);

/// Per-potential left sides of the four bounds.
struct InequalitySides {
  double l2_of_L = 0.0, l2_of_V = 0.0;
  double l1_of_L = 0.0, bdot_half = 0.0;
  double k1_sup_l1 = 0.0, b_half = 0.0;
  double k1_weighted = 0.0, weighted_rhs = 0.0;
};

InequalitySides inequality_sides(const Potential& pot, const SuiteConfig& cfg);

std::vector<InequalityCheck> inequality_suite(const std::vector<Potential>& corpus, const SuiteConfig& cfg = {});

}  // namespace waveop

#endif  // WAVEOP_VERIFY_HPP_INCLUDED_
