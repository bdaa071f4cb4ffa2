/**
 * @file acceptance.cpp
 * @brief Acceptance run: one PASS/FAIL line per criterion at the stated
 *        tolerances, nonzero exit when any fails. Criterion ids given as
 *        arguments restrict the run to those.
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "waveop/verify.hpp"
#include "waveop/wiener.hpp"

using namespace waveop;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator()(const std::string& key, T value) {
    if (out_.tellp() > 0) out_ << ' ';
    out_ << key << '=' << value;
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

int failures = 0;
std::set<std::string> selected;  // empty runs everything

void criterion(const std::string& id, const std::string& name, const std::function<Outcome()>& body) {
  if (!selected.empty() && !selected.count(id)) return;
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const Error& e) {
    o = {false, std::string("error ") + e.what()};
  } catch (const std::exception& e) {
    o = {false, std::string("exception ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PointFunction gaussian_probe(double w, Vec3 c = {0.0, 0.0, 0.0}) {
  return [w, c](const Vec3& x) {
    Vec3 d = x - c;
    return cplx(std::exp(-dot(d, d) / (2.0 * w * w)));
  };
}

// Reference case: Gaussian V of amplitude 0.1 and width 1, probe of width 2.
const Potential kReference = Potential::gaussian(0.1, 1.0);

EvolutionConfig evolution(const ScalarField& f, const Potential& pot, double eps) {
  EvolutionConfig ec;
  ec.dt = max_time_step(f.grid);
  ec.eps_reg = eps;
  ec.tail_tol = 1e-6;
  ec.t_max = cook_time_horizon(f, pot, ec, 400.0);
  return ec;
}

ConvElement with_hat(int n, double box, const std::function<cplx(double)>& hat_of) {
  ConvElement layout(1, n, box);
  std::vector<cplx> hat(layout.size());
  for (std::size_t i = 0; i < hat.size(); ++i) hat[i] = hat_of(layout.frequency(int(i)));
  ConvElement e = from_transform(hat, 1, n, box);
  e.has_delta = true;
  return e;
}

double spread(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi > 0.0 ? (*hi - *lo) / *hi : 0.0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.insert(argv[i]);
  const StructureGrids grids;  // x box 16, sphere 26, eta lattice 9^3
  const double eps = 0.05;

  criterion("1", "zero-potential identity", [&] {
    auto t0 = std::chrono::steady_clock::now();
    const Potential zero = Potential::zero();
    double sn = structure_norm(full_g(zero, grids, eps, FullGMethod::Resolvent, 4).g);
    Grid3 g(32, 16.0);
    ScalarField f = make_field(g, gaussian_probe(2.0));
    EvolutionConfig ec;
    ec.dt = max_time_step(g);
    ec.t_max = 10.0;
    bool cook_identity = cook_report(f, zero, ec).result.values == f.values;
    double m0 = m0_scan(zero, {0.0, 1.0, 2.0, 5.0, 10.0}, {1e-3}, Grid3(8, 4.0)).M0;
    double secs = seconds_since(t0);
    return Outcome{sn == 0.0 && cook_identity && m0 == 1.0 && secs < 60.0,
                   Detail()("structure_norm", sn)("cook_is_f", cook_identity)("M0", m0)("seconds", secs).str()};
  });

  criterion("calibration", "Born constant is potential independent", [&] {
    std::vector<Potential> pots{kReference, Potential::gaussian(-0.08, 1.3, {0.4, 0.0, 0.0}),
                                Potential::gaussian(0.12, 1.0, {0.0, -0.3, 0.5})};
    auto rep = calibrate_born_constant(pots, gaussian_probe(2.0), Grid3(16, 16.0), grids, Grid3(64, 32.0), eps);
    Detail d;
    d("spread", rep.spread)("deviation_from_analytic", rep.deviation_from_analytic);
    for (std::size_t i = 0; i < rep.entries.size(); ++i)
      d("residual_" + std::to_string(i), rep.entries[i].rel_residual);
    return Outcome{rep.spread <= 0.02, d.str()};
  });

  criterion("2", "structure formula vs Cook method", [&] {
    OracleConfig oc;
    oc.x_grid = Grid3(16, 16.0);
    oc.grids = grids;
    oc.eps = eps;
    oc.cook_grid = Grid3(64, 32.0);
    auto t0 = std::chrono::steady_clock::now();
    auto rep = oracle_equivalence(kReference, gaussian_probe(2.0), oc);
    double secs = seconds_since(t0);
    return Outcome{rep.rel_l2_error <= 0.05 && secs < 900.0,
                   Detail()("rel_l2_error", rep.rel_l2_error)("structure_norm", rep.structure_norm)(
                       "cook_isometry", rep.cook_isometry)("t_max", rep.t_max)("seconds", secs)
                       .str()};
  });

  criterion("3", "resolvent identity per eta", [&] {
    Grid3 g(8, 4.0);
    auto t1 = t1_plus(kReference, g, grids.lattice, eps);
    auto t = t_plus(kReference, g, grids.lattice, eps);
    auto r = resolvent_identity_residual(t1, t);
    return Outcome{r.left <= 1e-8 && r.right <= 1e-8, Detail()("left", r.left)("right", r.right).str()};
  });

  criterion("4", "lambda independence and high-energy decay", [&] {
    Grid3 g(8, 4.0);
    ScalarField v = sample_potential(kReference, g);
    std::vector<double> first;
    for (double lam : {0.0, 1.0, 2.0, 5.0, 10.0})
      first.push_back(birman_schwinger(SpectralPoint::plus(lam), v).inf_norm());
    double variation = spread(first);
    // lambda = 20 needs lambda h <= pi / 2
    auto d = high_energy_decay(kReference, {1.0, 20.0}, Grid3(64, 4.0));
    double ratio = d.squared_norm[1] / d.squared_norm[0];
    return Outcome{variation <= 1e-10 && ratio <= 0.2,
                   Detail()("first_norm_variation", variation)("first_norm", first[0])("decay_ratio", ratio).str()};
  });

  const auto corpus = make_corpus(20261014u);

  criterion("5", "Born geometric law and g1 linearity", [&] {
    auto law = born_law(corpus, grids, eps);
    double lin = 0.0;
    for (const Potential& p : {kReference, corpus[0], corpus[6]})
      lin = std::max(lin, g1_linearity_defect(p, 2.5, grids, eps));
    return Outcome{law.worst_factor <= 2.0 && lin <= 1e-10,
                   Detail()("worst_factor", law.worst_factor)("linearity_defect", lin).str()};
  });

  criterion("6", "small-V linear law", [&] {
    // B^{1+} taken as B^{3/2}; shape is fixed, so the choice of exponent only sets the scale
    Grid3 norm_grid(32, 16.0);
    std::vector<double> ratios;
    Detail d;
    for (double a : {0.05, 0.1, 0.2}) {
      Potential p = Potential::gaussian(a, 1.0);
      double sn = structure_norm(full_g(p, grids, eps, FullGMethod::Resolvent, 4).g);
      double b = b_norm(sample_potential(p, norm_grid), 1.5, false);
      ratios.push_back(sn / b);
      d("ratio_" + std::to_string(a).substr(0, 4), sn / b);
    }
    double s = spread(ratios);
    d("spread", s);
    return Outcome{s <= 0.2, d.str()};
  });

  criterion("7", "isometry and intertwining", [&] {
    Grid3 g(32, 16.0);
    if (!point_spectrum(kReference, Grid3(8, 4.0)).eigenvalues.empty()) return Outcome{false, "bound state present"};
    struct Probe {
      double w;
      Vec3 c;
    };
    std::vector<Probe> probes{{2.0, {0.0, 0.0, 0.0}}, {1.5, {0.0, 0.0, 0.0}}, {1.5, {1.0, 0.0, 0.0}},
                              {1.8, {0.0, -0.8, 0.6}}, {1.2, {0.5, 0.5, 0.5}}};
    double worst_iso = 0.0, worst_int = 0.0;
    Detail d;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      ScalarField f = make_field(g, gaussian_probe(probes[i].w, probes[i].c));
      EvolutionConfig ec = evolution(f, kReference, eps);
      double iso = l2_norm(cook_wave_operator(f, kReference, ec)) / l2_norm(f);
      worst_iso = std::max(worst_iso, std::abs(iso - 1.0));
      d("iso_" + std::to_string(i), iso);
      if (i < 2)
        for (double t : {0.5, 1.0}) {
          double def = intertwining_defect(kReference, f, t, ec).defect;
          worst_int = std::max(worst_int, def);
        }
    }
    d("worst_intertwining", worst_int);
    return Outcome{worst_iso <= 0.02 && worst_int <= 0.05, d.str()};
  });

  criterion("8", "scalar Wiener inversion", [&] {
    std::mt19937 rng(8u);
    std::uniform_real_distribution<double> amp(-0.8, 0.8), width(0.5, 2.0), shift(-3.0, 3.0);
    double worst = 0.0;
    int done = 0;
    while (done < 10) {
      const cplx a{amp(rng), amp(rng)};
      const double w = width(rng), c = shift(rng);
      auto hat = [&](double xi) { return a * std::exp(-w * w * xi * xi) * std::polar(1.0, -c * xi); };
      auto f = with_hat(4096, 200.0, hat);
      double min_abs = std::numeric_limits<double>::infinity();
      for (int i = 0; i < f.n; ++i) min_abs = std::min(min_abs, std::abs(1.0 + hat(f.frequency(i))));
      if (min_abs <= 0.1) continue;  // admissible inputs only
      auto inv = scalar_invert(f);
      worst = std::max(worst, check_inverse(f, inv.g));
      ++done;
    }
    bool refused = false;
    try {
      scalar_invert(with_hat(4096, 200.0, [](double xi) { return cplx(-(1.0 - 5e-7) * std::exp(-xi * xi)); }));
    } catch (const Error& e) {
      refused = e.code() == ErrorCode::NotInvertible;
    }
    return Outcome{worst <= 1e-8 && refused, Detail()("worst_residual", worst)("not_invertible_raised", refused).str()};
  });

  criterion("9", "operator Wiener vs direct inverses", [&] {
    Grid3 g(4, 2.0);
    ScalarField v = sample_potential(Potential::gaussian(0.2, 1.0), g);
    EtaLattice lattice(4, 9.0);
    auto rep = operator_invert(v, lattice, eps);
    double worst = 0.0;
    for (std::size_t k = 0; k < lattice.size(); ++k) {
      Eigen::MatrixXcd a = t1_slice_at(v, lattice.eta(k), eps);
      a.diagonal().array() += 1.0;
      Eigen::MatrixXcd want = a.inverse();
      want.diagonal().array() -= 1.0;
      worst = std::max(worst, (rep.inverse[k] - want).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= 1e-4, Detail()("worst_entry_gap", worst)("centers", rep.centers).str()};
  });

  criterion("10", "quantitative formulas", [&] {
    const double l2 = std::log(2.0);
    struct Case {
      double normV, M0, gamma, log2_M2, L0, log2_eps0, eps1;
    };
    // worked by hand with c = 1/100
    std::vector<Case> cases{{1.0, 1.0, 0.5, 257.0, 3600.0, std::log2(0.01) - 76.0, 0.01 / 36.0},
                            {3.0, 0.0, 0.25, 914.0, 25600.0, std::log2(0.01) - 284.0, 6.25e-4},
                            {0.0, 3.0, 0.5, 20.0, 1600.0, std::log2(0.01), 6.25e-4}};
    double worst = 0.0;
    auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
    for (const auto& c : cases) {
      auto q = quant_params(c.normV, c.M0, c.gamma);
      worst = std::max({worst, rel(q.log2_M2(), c.log2_M2), rel(q.log_L0, std::log(c.L0)),
                        rel(q.log_eps0 / l2, c.log2_eps0), rel(q.log_eps1, std::log(c.eps1))});
    }
    return Outcome{worst <= 1e-12, Detail()("worst_relative", worst).str()};
  });

  criterion("11", "x.omega dependence and regularity", [&] {
    // axis-aligned nodes give exactly equal projections for shifted points
    auto sphere = sphere_rule(6);
    auto r = AxisGrid::centered(8.0, 32);
    auto g = g1(kReference, sphere, r, 0.1, 2.0);
    bool bitwise = true;
    for (std::size_t o = 0; o < sphere.size(); ++o) {
      Vec3 a{0.3, -0.7, 0.45}, b = a;
      for (int c = 0; c < 3; ++c)
        if (sphere.nodes[o][std::size_t(c)] == 0.0) b[std::size_t(c)] += 0.9;
      std::vector<cplx> wa, wb;
      line_weights(g, o, dot(a, sphere.nodes[o]), wa);
      line_weights(g, o, dot(b, sphere.nodes[o]), wb);
      bitwise = bitwise && wa == wb;
    }
    // undamped: each (r, omega) jumps once, 2 |L| dx_omega = |L| dr
    Spectrum spec = Spectrum::of(kReference);
    auto sharp = g1(kReference, sphere, r, 0.0, 0.0);
    SRule rule = make_s_rule(spec.cutoff(), 0.05, 8);
    double want = 0.0;
    for (std::size_t o = 0; o < sphere.size(); ++o)
      for (int k = 0; k < r.count; ++k)
        want += sphere.weights[o] * 0.5 * r.step * 2.0 *
                std::abs(kBornConstant * l_value(spec, r.at(k), sphere.nodes[o], 0.0, 0.0, rule));
    double sharp_reg = x_omega_regularity(sharp);
    double e1 = std::abs(sharp_reg - want) / want;
    // damped: total variation over the stored x_omega nodes
    const auto& xw = g.line->xw;
    double tv = 0.0;
    for (std::size_t o = 0; o < sphere.size(); ++o) {
      double acc = 0.0;
      for (int k = 0; k < r.count; ++k) {
        cplx prev = 0.0;
        for (int j = 0; j < xw.count; ++j) {
          double t = r.at(k) + 2.0 * xw.at(j);
          cplx cur = t > 0.0 ? kBornConstant * l_value(spec, r.at(k), sphere.nodes[o], 0.1, t, rule) : cplx(0.0);
          if (j > 0) acc += r.step * std::abs(cur - prev);
          prev = cur;
        }
      }
      tv += sphere.weights[o] * acc;
    }
    double damped_reg = x_omega_regularity(g);
    double e2 = std::abs(damped_reg - tv) / tv;
    double full_reg = x_omega_regularity(full_g(Potential::gaussian(0.2, 1.0), grids, eps, FullGMethod::Resolvent, 4).g);
    return Outcome{bitwise && e1 <= 1e-10 && e2 <= 1e-10 && std::isfinite(full_reg),
                   Detail()("bitwise", bitwise)("undamped_gap", e1)("damped_gap", e2)("full_g_regularity", full_reg)
                       .str()};
  });

  criterion("12", "stability under perturbation", [&] {
    StabilityConfig sc;
    sc.grids = grids;
    sc.eps = eps;
    const StructureFunction ga = full_g(kReference, grids, eps, FullGMethod::Resolvent, 4).g;
    auto r1 = stability_check(ga, kReference, kReference.scaled(1.1), sc);
    auto r2 = stability_check(ga, kReference, kReference.scaled(1.05), sc);
    double s = spread({r1.ratio, r2.ratio});
    return Outcome{s <= 0.3 && r1.ratio > 0.0,
                   Detail()("ratio_0.11", r1.ratio)("ratio_0.105", r2.ratio)("spread", s).str()};
  });

  criterion("13", "inequality suite", [&] {
    bool all = true;
    Detail d;
    for (const auto& c : inequality_suite(corpus)) {
      all = all && c.pass;
      d(c.name, std::to_string(c.violations) + "/" + std::to_string(c.holdout));
    }
    return Outcome{all, d.str()};
  });

  std::printf("%s: %d failing\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
  return failures == 0 ? 0 : 1;
}
