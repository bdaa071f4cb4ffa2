#include "waveop/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>

namespace waveop {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Uniform double in [0, 1) from the top 53 bits, independent of the standard library.
double unit(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

ScalarField plus(const ScalarField& a, const ScalarField& b) {
  ScalarField out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out[i] += b[i];
  return out;
}

ScalarField conjugate(const ScalarField& a) {
  ScalarField out = a;
  for (auto& x : out.values) x = std::conj(x);
  return out;
}

double field_norm(const ScalarField& f, double p) {
  return std::isinf(p) ? max_norm(f) : lp_norm(f, p);
}

EvolutionConfig no_tail_check(EvolutionConfig cfg) {
  cfg.tail_tol = std::numeric_limits<double>::infinity();
  return cfg;
}

}  // namespace

std::vector<Potential> make_corpus(unsigned seed, int count, double max_amplitude) {
  std::mt19937_64 rng(seed);
  std::vector<Potential> out;
  for (int i = 0; i < count; ++i) {
    Potential p;
    const int terms = 1 + int(rng() % 2);
    for (int t = 0; t < terms; ++t) {
      Gaussian g;
      g.amplitude = max_amplitude * (0.3 + 0.7 * unit(rng)) * (unit(rng) < 0.25 ? -1.0 : 1.0);
      g.width = 1.0 + 0.5 * unit(rng);
      for (auto& c : g.center) c = 2.0 * unit(rng) - 1.0;
      p.terms.push_back(g);
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------- oracle

std::vector<std::size_t> embed_grid(const Grid3& coarse, const Grid3& fine) {
  std::vector<int> map(std::size_t(coarse.n));
  for (int i = 0; i < coarse.n; ++i) {
    double u = (coarse.coord(i) + 0.5 * fine.box) / fine.spacing();
    double k = std::round(u);
    if (std::abs(u - k) > 1e-9 || k < 0 || k >= fine.n)
      throw Error(ErrorCode::GridMismatch, "x grid point " + std::to_string(coarse.coord(i)) +
                                               " is not a point of the Cook grid");
    map[std::size_t(i)] = int(k);
  }
  std::vector<std::size_t> idx(coarse.size());
  for (int iz = 0; iz < coarse.n; ++iz)
    for (int iy = 0; iy < coarse.n; ++iy)
      for (int ix = 0; ix < coarse.n; ++ix)
        idx[coarse.index(ix, iy, iz)] = fine.index(map[std::size_t(ix)], map[std::size_t(iy)], map[std::size_t(iz)]);
  return idx;
}

OracleReport oracle_equivalence(const Potential& pot, const PointFunction& f, const OracleConfig& cfg) {
  embed_grid(cfg.x_grid, cfg.cook_grid);
  auto t0 = std::chrono::steady_clock::now();
  StructureFunction g = full_g(pot, cfg.grids, cfg.eps, cfg.method, cfg.born_order).g;
  double setup = seconds_since(t0);
  OracleReport rep = oracle_equivalence(g, pot, f, cfg);
  rep.structure_seconds += setup;
  return rep;
}

OracleReport oracle_equivalence(const StructureFunction& g, const Potential& pot, const PointFunction& f,
                                const OracleConfig& cfg) {
  OracleReport rep;
  const auto idx = embed_grid(cfg.x_grid, cfg.cook_grid);

  auto t0 = std::chrono::steady_clock::now();
  ScalarField xf = make_field(cfg.x_grid, f);
  ScalarField part = apply_g(g, xf);
  ScalarField structure = plus(xf, part);
  rep.structure_norm = structure_norm(g);
  const double fn = l2_norm(xf);
  rep.g_part_norm = fn > 0.0 ? l2_norm(part) / fn : 0.0;
  rep.structure_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  ScalarField cf = make_field(cfg.cook_grid, f);
  EvolutionConfig ec;
  ec.dt = cfg.dt > 0.0 ? cfg.dt : max_time_step(cfg.cook_grid);
  ec.eps_reg = cfg.eps;
  ec.tail_tol = cfg.tail_tol;
  ec.t_max = cfg.t_max > 0.0 ? cfg.t_max : cook_time_horizon(cf, pot, ec, cfg.t_cap);
  CookReport cook = cook_report(cf, pot, ec);
  rep.cook_seconds = seconds_since(t0);
  rep.cook_tail = cook.tail;
  rep.t_max = ec.t_max;
  rep.steps = cook.steps;
  const double cn = l2_norm(cf);
  rep.cook_isometry = cn > 0.0 ? l2_norm(cook.result) / cn : 1.0;

  ScalarField sub(cfg.x_grid);
  for (std::size_t i = 0; i < idx.size(); ++i) sub[i] = cook.result[idx[i]];
  rep.rel_l2_error = relative_l2(structure, sub);
  return rep;
}

// ---------------------------------------------------------------- L^p and half spaces

std::vector<ScalarField> lp_probes(const Grid3& grid) {
  struct Probe {
    double width;
    Vec3 center;
    Vec3 k;
  };
  const Probe probes[] = {
      {1.5, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}},
      {2.0, {1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}},
      {1.0, {0.0, -1.0, 1.0}, {1.0, 0.0, 0.0}},
      {1.8, {0.0, 0.0, 0.0}, {0.0, 0.5, 0.0}},
      {1.2, {-1.0, 1.0, 0.0}, {0.3, -0.3, 0.6}},
  };
  std::vector<ScalarField> out;
  for (const auto& p : probes)
    out.push_back(make_field(grid, [&](const Vec3& x) {
      Vec3 d = x - p.center;
      return std::exp(-dot(d, d) / (2.0 * p.width * p.width)) * std::exp(kI * dot(p.k, x));
    }));
  return out;
}

LpScan lp_bound_scan(const StructureFunction& g, const std::vector<double>& p_list,
                     const std::vector<ScalarField>& probes) {
  LpScan rep;
  rep.p = p_list;
  rep.max_ratio.assign(p_list.size(), 0.0);
  rep.bound = 1.0 + structure_norm(g);
  for (const auto& f : probes) {
    ScalarField w = plus(f, apply_g(g, f));
    for (std::size_t i = 0; i < p_list.size(); ++i) {
      double den = field_norm(f, p_list[i]);
      if (den > 0.0) rep.max_ratio[i] = std::max(rep.max_ratio[i], field_norm(w, p_list[i]) / den);
    }
  }
  return rep;
}

FieldNorm weighted_l2(const PointFunction& weight) {
  return [weight](const ScalarField& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) acc += weight(f.grid.point(i)).real() * std::norm(f[i]);
    return std::sqrt(acc * f.grid.cell_volume());
  };
}

HalfspaceReport halfspace_bound(const StructureFunction& g, const ScalarField& f,
                                const std::vector<Halfspace>& halfspaces, const FieldNorm& norm) {
  HalfspaceReport rep;
  rep.structure_norm = structure_norm(g);
  const double fn = norm(f);
  if (fn == 0.0) {
    rep.ratio = 1.0;
    rep.holds = true;
    return rep;
  }
  rep.ratio = norm(plus(f, apply_g(g, f))) / fn;
  for (const auto& h : halfspaces) {
    ScalarField cut = f;
    for (std::size_t i = 0; i < cut.values.size(); ++i)
      if (!(dot(f.grid.point(i), h.normal) > h.offset)) cut[i] = 0.0;
    rep.cut_constant = std::max(rep.cut_constant, norm(cut) / fn);
  }

  const FieldInterpolator fi(f);
  const Grid3& xg = f.grid;
  auto translated = [&](const Vec3& w, const Vec3& y) {
    Reflection s{w};
    ScalarField t(xg);
    for (std::size_t i = 0; i < xg.size(); ++i) t[i] = fi(s.apply(xg.point(i)) - y);
    return norm(t);
  };
  double total = 0.0;
  for (std::size_t o = 0; o < g.sphere.size(); ++o) {
    const Vec3& w = g.sphere.nodes[o];
    double acc = 0.0;
    if (g.line) {
      const LinePart& lp = *g.line;
      for (int k = 0; k < lp.r.count; ++k) {
        double c = 0.0;
        for (int j = 0; j < lp.xw.count; ++j) c = std::max(c, std::abs(lp.at(k, j, o)));
        if (c == 0.0) continue;
        acc += lp.r.step * c * translated(w, lp.r.at(k) * w);
      }
    }
    if (g.grid) {
      const GridPart& gp = *g.grid;
      const double vol = gp.y_grid.cell_volume();
      for (std::size_t y = 0; y < gp.y_grid.size(); ++y) {
        double c = 0.0;
        for (int j = 0; j < gp.xw.count; ++j) c = std::max(c, std::abs(gp.block(j, o)[y]));
        if (c == 0.0) continue;
        acc += vol * c * translated(w, gp.y_grid.point(y));
      }
    }
    total += g.sphere.weights[o] * acc;
  }
  rep.majorant = total / fn;
  const double a = std::max(1.0, rep.cut_constant);
  rep.holds = rep.ratio <= 1.0 + a * rep.majorant + 1e-10;
  return rep;
}

// ---------------------------------------------------------------- stability

StabilityBracket stability_bracket(const Potential& a, const Potential& b, const StabilityConfig& cfg) {
  StabilityBracket br;
  ScalarField va = sample_potential(a, cfg.norm_grid), vb = sample_potential(b, cfg.norm_grid);
  ScalarField d(cfg.norm_grid);
  double smax = 0.0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    d[i] = va[i] - vb[i];
    smax = std::max(smax, std::abs(va[i]) + std::abs(vb[i]));
  }
  if (smax == 0.0) return br;
  br.b_term = b_norm(d, 1.0 + 2.0 * cfg.gamma, false);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    double s = std::abs(va[i]) + std::abs(vb[i]);
    if (s > cfg.support_tol * smax) br.sup_term = std::max(br.sup_term, std::abs(d[i]) / s);
  }
  return br;
}

StabilityReport stability_check(const StructureFunction& ga, const Potential& a, const Potential& b,
                                const StabilityConfig& cfg) {
  StabilityReport rep;
  StructureFunction gb = full_g(b, cfg.grids, cfg.eps, cfg.method, cfg.born_order).g;
  rep.delta_g_norm = structure_norm(subtract(ga, gb));
  rep.bracket = stability_bracket(a, b, cfg);
  const double br = rep.bracket.value();
  rep.ratio = br > 0.0 ? rep.delta_g_norm / br : 0.0;
  return rep;
}

StabilityReport stability_check(const Potential& a, const Potential& b, const StabilityConfig& cfg) {
  return stability_check(full_g(a, cfg.grids, cfg.eps, cfg.method, cfg.born_order).g, a, b, cfg);
}

// ---------------------------------------------------------------- W-, adjoints, intertwining

WMinusReport w_minus_and_adjoint(const Potential& pot, const ScalarField& f, const EvolutionConfig& cfg,
                                 std::size_t assemble_limit) {
  WMinusReport rep;
  rep.w_plus = cook_wave_operator(f, pot, cfg);
  rep.w_minus = conjugate(cook_wave_operator(conjugate(f), pot, cfg));
  rep.w_plus_adjoint = cook_adjoint(f, pot, cfg);
  rep.w_minus_star_time = w_minus_adjoint_time(f, pot, cfg);
  rep.w_minus_star_conj = conjugate(cook_adjoint(conjugate(f), pot, cfg));
  const double fn = l2_norm(f);
  ScalarField back = cook_adjoint(rep.w_plus, pot, cfg);
  rep.isometry_defect = fn > 0.0 ? relative_l2(back, f) : 0.0;
  rep.w_minus_star_defect = relative_l2(rep.w_minus_star_time, rep.w_minus_star_conj);

  const std::size_t N = f.grid.size();
  if (N <= assemble_limit) {
    // column j of W+ is W+ e_j; the adjoint for the h^3-weighted inner product is the conjugate transpose
    EvolutionConfig loose = no_tail_check(cfg);
    const Eigen::Index dim = Eigen::Index(N);
    Eigen::MatrixXcd w(dim, dim);
    for (std::size_t j = 0; j < N; ++j) {
      ScalarField e(f.grid);
      e[j] = 1.0;
      ScalarField col = cook_wave_operator(e, pot, loose);
      for (std::size_t i = 0; i < N; ++i) w(Eigen::Index(i), Eigen::Index(j)) = col[i];
    }
    Eigen::Map<const Eigen::VectorXcd> fv(f.values.data(), dim);
    Eigen::VectorXcd adj = w.adjoint() * fv;
    ScalarField am(f.grid);
    for (std::size_t i = 0; i < N; ++i) am[i] = adj(Eigen::Index(i));
    rep.matrix_adjoint_error = relative_l2(rep.w_plus_adjoint, am);
  }
  return rep;
}

IntertwiningReport intertwining_defect(const Potential& pot, const ScalarField& f, double t,
                                       const EvolutionConfig& cfg) {
  IntertwiningReport rep;
  rep.t = t;
  ScalarField lhs = perturbed_evolve(cook_wave_operator(f, pot, cfg), t, pot, cfg);
  ScalarField rhs = cook_wave_operator(free_evolve(f, t), pot, cfg);
  rep.defect = relative_l2(lhs, rhs);
  return rep;
}

// ---------------------------------------------------------------- Born law and calibration

BornLawReport born_law(const std::vector<Potential>& corpus, const StructureGrids& grids, double eps, int n_max,
                       const Grid3& norm_grid) {
  if (n_max < 3) throw Error(ErrorCode::DomainError, "the Born law needs n_max >= 3");
  BornLawReport rep;
  for (const auto& pot : corpus) {
    BornLawEntry e;
    e.norms.push_back(structure_norm(g1(pot, grids, eps)));
    if (pot.is_zero() || e.norms[0] == 0.0) {
      e.norms.resize(std::size_t(n_max), 0.0);
      rep.entries.push_back(e);
      continue;
    }
    ScalarField v = sample_potential(pot, grids.kernel_grid);
    auto ks = born_wave_kernels(v, grids.lattice, eps, n_max - 1);
    for (int n = 2; n <= n_max; ++n)
      e.norms.push_back(structure_norm(grid_measure(v, ks[std::size_t(n - 2)], grids, eps)));
    e.ratio = e.norms[1] / e.norms[0];
    const double vb = b_norm(sample_potential(pot, norm_grid), 0.5, false);
    e.constant = vb > 0.0 ? e.ratio / vb : 0.0;
    for (int n = 3; n <= n_max; ++n) {
      double pred = e.norms[0] * std::pow(e.ratio, n - 1), act = e.norms[std::size_t(n - 1)];
      e.predicted.push_back(pred);
      double fac = (pred > 0.0 && act > 0.0) ? std::max(pred / act, act / pred)
                                              : std::numeric_limits<double>::infinity();
      e.worst_factor = std::max(e.worst_factor, fac);
    }
    rep.worst_factor = std::max(rep.worst_factor, e.worst_factor);
    rep.entries.push_back(e);
  }
  return rep;
}

double g1_linearity_defect(const Potential& pot, double s, const StructureGrids& grids, double eps) {
  StructureFunction a = g1(pot.scaled(s), grids, eps), b = g1(pot, grids, eps);
  if (!a.line || !b.line) return 0.0;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.line->density.size(); ++i) {
    num = std::max(num, std::abs(a.line->density[i] - s * b.line->density[i]));
    den = std::max(den, std::abs(s * b.line->density[i]));
  }
  return den > 0.0 ? num / den : num;
}

CalibrationReport calibrate_born_constant(const std::vector<Potential>& pots, const PointFunction& f,
                                          const Grid3& x_grid, const StructureGrids& grids,
                                          const Grid3& cook_grid, double eps, double t_cap) {
  CalibrationReport rep;
  const auto idx = embed_grid(x_grid, cook_grid);
  ScalarField xf = make_field(x_grid, f), cf = make_field(cook_grid, f);
  for (const auto& pot : pots) {
    ScalarField a = apply_g(g1(pot, grids, eps, cplx(1.0)), xf);
    EvolutionConfig ec;
    ec.dt = max_time_step(cook_grid);
    ec.eps_reg = eps;
    ec.t_max = cook_time_horizon(cf, pot, ec, t_cap);
    ScalarField b = born_term_time(cf, pot, 1, ec);
    cplx ab = 0.0;
    double aa = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ab += std::conj(a[i]) * b[idx[i]];
      aa += std::norm(a[i]);
    }
    CalibrationEntry e;
    e.fitted = aa > 0.0 ? ab / aa : cplx(0.0);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      num += std::norm(b[idx[i]] - e.fitted * a[i]);
      den += std::norm(b[idx[i]]);
    }
    e.rel_residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
    rep.entries.push_back(e);
  }
  if (rep.entries.empty()) return rep;
  cplx mean = 0.0;
  for (const auto& e : rep.entries) mean += e.fitted;
  mean /= double(rep.entries.size());
  for (const auto& a : rep.entries) {
    rep.deviation_from_analytic =
        std::max(rep.deviation_from_analytic, std::abs(a.fitted - kBornConstant) / std::abs(kBornConstant));
    for (const auto& b : rep.entries)
      if (std::abs(mean) > 0.0) rep.spread = std::max(rep.spread, std::abs(a.fitted - b.fitted) / std::abs(mean));
  }
  return rep;
}

// ---------------------------------------------------------------- inequality suite

InequalityCheck fitted_constant_check(const std::string& name, const std::vector<double>& lhs,
                                      const std::vector<double>& rhs, double slack, double max_violation_fraction) {
  if (lhs.size() != rhs.size()) throw Error(ErrorCode::DomainError, "lhs and rhs sizes differ");
  InequalityCheck c;
  c.name = name;
  c.lhs = lhs;
  c.rhs = rhs;
  const std::size_t nfit = lhs.size() / 2;
  for (std::size_t i = 0; i < nfit; ++i)
    if (rhs[i] > 0.0) c.constant = std::max(c.constant, lhs[i] / rhs[i]);
  for (std::size_t i = nfit; i < lhs.size(); ++i) {
    ++c.holdout;
    if (lhs[i] > slack * c.constant * rhs[i]) ++c.violations;
  }
  c.pass = c.violations <= max_violation_fraction * c.holdout;
  return c;
}

namespace {

// Linear interpolation of L(., omega) on the table; zero outside its range.
cplx l_interp(const LTable& t, double r, std::size_t omega) {
  double u = (r - t.r.start) / t.r.step;
  if (!(u >= 0.0) || u > double(t.r.count - 1)) return 0.0;
  int k = std::min(int(u), t.r.count - 2);
  double fr = u - k;
  return (1.0 - fr) * t.at(k, omega) + fr * t.at(k + 1, omega);
}

}  // namespace

InequalitySides inequality_sides(const Potential& pot, const SuiteConfig& cfg) {
  InequalitySides s;
  ScalarField vs = sample_potential(pot, cfg.norm_grid);
  s.l2_of_V = l2_norm(vs);
  if (pot.is_zero()) return s;
  s.bdot_half = b_norm(vs, 0.5, true);
  s.b_half = b_norm(vs, 0.5, false);

  const SphereQuadrature sphere = sphere_rule(cfg.sphere_order);
  const LTable lt = l_table(pot, cfg.r, sphere, 0.0);
  const double dr = cfg.r.step, c = std::abs(kBornConstant);
  double l2 = 0.0, l1 = 0.0;
  for (std::size_t o = 0; o < sphere.size(); ++o)
    for (int k = 0; k < lt.r.count; ++k) {
      double a = std::abs(lt.at(k, o));
      l2 += sphere.weights[o] * dr * a * a;
      l1 += sphere.weights[o] * dr * a;
    }
  s.l2_of_L = std::sqrt(l2);
  s.l1_of_L = l1;

  // sup_x int |K1(x, y)| dy in polar form: K1(x, rho w) rho^2 = c L(rho - 2 x.w, w)
  for (std::size_t i = 0; i < cfg.x_probe.size(); ++i) {
    Vec3 x = cfg.x_probe.point(i);
    double acc = 0.0;
    for (std::size_t o = 0; o < sphere.size(); ++o) {
      double xo = dot(x, sphere.nodes[o]), row = 0.0;
      for (int k = 0; k < lt.r.count; ++k)
        if (lt.r.at(k) + 2.0 * xo > 0.0) row += std::abs(lt.at(k, o));
      acc += sphere.weights[o] * dr * row;
    }
    s.k1_sup_l1 = std::max(s.k1_sup_l1, c * acc);
  }

  // int <y>^g1 || v(x) K1(x, y) ||_{B^sigma_x} dy over a polar y grid
  const Grid3& vg = cfg.v_grid;
  const double vw2 = cfg.v_width * cfg.v_width;
  ScalarField v = make_field(vg, [&](const Vec3& x) { return cplx(std::exp(-dot(x, x) / (2.0 * vw2))); });
  double kw = 0.0;
  for (std::size_t o = 0; o < sphere.size(); ++o) {
    const Vec3& w = sphere.nodes[o];
    for (int k = 0; k < cfg.rho.count; ++k) {
      const double rho = cfg.rho.at(k);
      ScalarField u(vg);
      for (std::size_t i = 0; i < vg.size(); ++i) u[i] = v[i] * l_interp(lt, rho - 2.0 * dot(vg.point(i), w), o);
      kw += sphere.weights[o] * cfg.rho.step * std::pow(1.0 + rho * rho, 0.5 * cfg.gamma1) * b_norm(u, cfg.sigma, false);
    }
  }
  s.k1_weighted = c * kw;
  s.weighted_rhs = b_norm(v, 0.5 + cfg.sigma + cfg.gamma1, false) * b_norm(vs, 0.5 + cfg.gamma1, false);
  return s;
}

std::vector<InequalityCheck> inequality_suite(const std::vector<Potential>& corpus, const SuiteConfig& cfg) {
  std::vector<InequalitySides> sides;
  for (const auto& p : corpus) sides.push_back(inequality_sides(p, cfg));
  auto column = [&](double InequalitySides::*m) {
    std::vector<double> out;
    for (const auto& s : sides) out.push_back(s.*m);
    return out;
  };
  std::vector<InequalityCheck> out;
  auto add = [&](const char* name, double InequalitySides::*l, double InequalitySides::*r) {
    out.push_back(fitted_constant_check(name, column(l), column(r), cfg.slack, cfg.max_violation_fraction));
  };
  add("L2_of_L_vs_L2_of_V", &InequalitySides::l2_of_L, &InequalitySides::l2_of_V);
  add("L1_of_L_vs_Bdot_half", &InequalitySides::l1_of_L, &InequalitySides::bdot_half);
  add("K1_sup_L1_vs_B_half", &InequalitySides::k1_sup_l1, &InequalitySides::b_half);
  add("K1_weighted_vs_B_weighted", &InequalitySides::k1_weighted, &InequalitySides::weighted_rhs);
  return out;
}

}  // namespace waveop
