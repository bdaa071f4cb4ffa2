#include "waveop/structure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace waveop {

// ---------------------------------------------------------------- grids and rules

AxisGrid AxisGrid::centered(double half_range, int count) {
  if (count < 1 || !(half_range > 0.0)) throw Error(ErrorCode::GridMismatch, "axis grid needs count >= 1 and range > 0");
  double step = 2.0 * half_range / count;
  return AxisGrid{-half_range + 0.5 * step, step, count};
}

AxisGrid AxisGrid::symmetric(double extent, double step) {
  if (!(step > 0.0) || extent < 0.0) throw Error(ErrorCode::GridMismatch, "symmetric axis grid needs step > 0");
  int half = int(std::llround(extent / step));
  return AxisGrid{-half * step, step, 2 * half + 1};
}

double StructureGrids::extent() const {
  return x_extent > 0.0 ? x_extent : 0.5 * std::sqrt(3.0) * application_box;
}

SRule make_s_rule(double s_max, double panel_max, int per_panel) {
  if (!(s_max > 0.0) || !(panel_max > 0.0) || per_panel < 1)
    throw Error(ErrorCode::DomainError, "s rule needs positive range, panel and order");
  int panels = std::max(1, int(std::ceil(s_max / panel_max - 1e-12)));
  double width = s_max / panels;
  std::vector<double> xn, wn;
  SRule r;
  r.s.reserve(std::size_t(panels + kGradedLevels) * per_panel);
  auto add_panel = [&](double a, double b) {
    gauss_legendre(per_panel, a, b, xn, wn);
    r.s.insert(r.s.end(), xn.begin(), xn.end());
    r.w.insert(r.w.end(), wn.begin(), wn.end());
  };
  // The first panel is split geometrically towards s = 0, where exp(-eps t / (2 s)) is flat but not analytic.
  double lo = width * std::ldexp(1.0, -kGradedLevels);
  add_panel(0.0, lo);
  for (int l = kGradedLevels; l > 0; --l) add_panel(width * std::ldexp(1.0, -l), width * std::ldexp(1.0, 1 - l));
  for (int p = 1; p < panels; ++p) add_panel(p * width, (p + 1) * width);
  return r;
}

// ---------------------------------------------------------------- spectrum

Spectrum Spectrum::of(const Potential& pot) {
  if (pot.is_tabulated()) return of_field(*pot.table);
  Spectrum s;
  s.pot_ = pot;
  return s;
}

Spectrum Spectrum::of_field(const ScalarField& u) {
  Spectrum s;
  s.field_ = u;
  return s;
}

cplx Spectrum::operator()(const Vec3& xi) const {
  if (pot_) return pot_->hat(xi);
  if (!field_) return 0.0;
  const Grid3& g = field_->grid;
  const int n = g.n;
  const double h = g.spacing(), x0 = -0.5 * g.box;
  // separable phases e^{-i xi_a x_a}
  const std::size_t un = std::size_t(n);
  std::vector<cplx> px(un), py(un), pz(un);
  for (int i = 0; i < n; ++i) {
    double c = x0 + i * h;
    px[std::size_t(i)] = std::exp(-kI * (xi[0] * c));
    py[std::size_t(i)] = std::exp(-kI * (xi[1] * c));
    pz[std::size_t(i)] = std::exp(-kI * (xi[2] * c));
  }
  cplx total = 0.0;
  std::size_t idx = 0;
  for (int iz = 0; iz < n; ++iz) {
    cplx sy = 0.0;
    for (int iy = 0; iy < n; ++iy) {
      cplx sx = 0.0;
      for (int ix = 0; ix < n; ++ix, ++idx) sx += field_->values[idx] * px[std::size_t(ix)];
      sy += sx * py[std::size_t(iy)];
    }
    total += sy * pz[std::size_t(iz)];
  }
  return total * g.cell_volume();
}

double Spectrum::cutoff(double tol) const {
  if (field_) return field_->grid.nyquist();
  if (!pot_ || pot_->terms.empty()) return 1.0;
  // tail of int_S^inf s |hat| ds for one term is |a| (2pi)^{3/2} w e^{-w^2 S^2 / 2}
  const double c = std::pow(2.0 * kPi, 1.5);
  double total = 0.0;
  for (const auto& t : pot_->terms) total += std::abs(t.amplitude) * c * t.width;
  if (total == 0.0) return 1.0;
  const double share = tol * total / double(pot_->terms.size());
  double s = 1.0;
  for (const auto& t : pot_->terms) {
    double a = std::abs(t.amplitude) * c * t.width;
    if (a <= share) continue;
    s = std::max(s, std::sqrt(2.0 * std::log(a / share)) / t.width);
  }
  return s;
}

bool Spectrum::is_zero() const {
  if (pot_) return pot_->is_zero();
  if (!field_) return true;
  for (const auto& v : field_->values)
    if (v != 0.0) return false;
  return true;
}

// ---------------------------------------------------------------- L table

namespace {

SRule oscillation_rule(const Spectrum& spec, double r_max, double s_max, double panel, int per_panel) {
  if (s_max <= 0.0) s_max = spec.cutoff(1e-12);
  const double limit = kPi / std::max(r_max, 1e-300);
  // at least 16 panels so that the decay of hat V is resolved even without oscillation
  if (panel <= 0.0) panel = std::min(limit, s_max / 16.0);
  if (panel * r_max > kPi * (1.0 + 1e-12))
    throw Error(ErrorCode::UnresolvedOscillation,
                "s panel " + std::to_string(panel) + " too coarse for r_max " + std::to_string(r_max));
  return make_s_rule(s_max, panel, per_panel);
}

double axis_abs_max(const AxisGrid& a) { return std::max(std::abs(a.lo()), std::abs(a.hi())); }

std::vector<cplx> spectrum_on_rays(const Spectrum& spec, const SRule& rule, const SphereQuadrature& sphere) {
  const std::size_t ns = rule.s.size();
  std::vector<cplx> out(ns * sphere.size());
  parallel_for(sphere.size(), [&](std::size_t o) {
    const Vec3& w = sphere.nodes[o];
    for (std::size_t i = 0; i < ns; ++i) out[i + ns * o] = spec(-rule.s[i] * w);
  });
  return out;
}

}  // namespace

LTable l_table(const Potential& pot, const AxisGrid& r, const SphereQuadrature& sphere, double eps,
               const LTableOptions& opt) {
  LTable t;
  t.r = r;
  t.sphere = sphere;
  t.epsilon = eps;
  t.values.assign(std::size_t(r.count) * sphere.size(), cplx(0.0));
  if (pot.is_zero()) return t;
  Spectrum spec = Spectrum::of(pot);
  SRule rule = oscillation_rule(spec, axis_abs_max(r), opt.s_max, opt.panel, opt.per_panel);
  auto hat = spectrum_on_rays(spec, rule, sphere);
  const std::size_t ns = rule.s.size();
  parallel_for(sphere.size(), [&](std::size_t o) {
    for (int k = 0; k < r.count; ++k) {
      double rk = r.at(k);
      cplx acc = 0.0;
      for (std::size_t i = 0; i < ns; ++i) {
        double s = rule.s[i];
        double damp = eps > 0.0 ? std::exp(-eps / (2.0 * s)) : 1.0;
        acc += rule.w[i] * s * damp * hat[i + ns * o] * std::exp(kI * (0.5 * rk * s));
      }
      t.values[std::size_t(k) + std::size_t(r.count) * o] = acc;
    }
  });
  return t;
}

cplx l_value(const Spectrum& spec, double r, const Vec3& omega, double eps, double t, const SRule& rule) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < rule.s.size(); ++i) {
    double s = rule.s[i];
    double damp = (eps > 0.0 && t > 0.0) ? std::exp(-eps * t / (2.0 * s)) : 1.0;
    acc += rule.w[i] * s * damp * spec(-s * omega) * std::exp(kI * (0.5 * r * s));
  }
  return acc;
}

cplx k1_kernel(const Potential& pot, const Vec3& x, const Vec3& z, double eps, cplx constant) {
  double zn = norm(z);
  if (zn == 0.0) throw Error(ErrorCode::SingularPoint, "k1_kernel at z = 0");
  if (pot.is_zero()) return 0.0;
  Vec3 zhat = (1.0 / zn) * z;
  double r = zn - 2.0 * dot(x, zhat);
  Spectrum spec = Spectrum::of(pot);
  SRule rule = oscillation_rule(spec, std::max(std::abs(r), 1.0), 0.0, 0.0, 8);
  return constant / (zn * zn) * l_value(spec, r, zhat, eps, zn, rule);
}

// ---------------------------------------------------------------- g1

namespace {

int xw_nodes_for(double extent, double step) { return int(std::ceil(extent / step - 1e-12)); }

// density(k, j) = c * int w s hat e^{i s r_k/2} e^{-eps t_kj/(2s)} with t_kj = r_k + 2 x_j on a
// diagonal band t_m = r_0 - 2X + m dr, so D = (P Q)(k, k + j).
void line_densities(const std::vector<cplx>& hat, const SRule& rule, const AxisGrid& r, const AxisGrid& xw,
                    double eps, cplx constant, std::size_t omega, cplx* out) {
  const Eigen::Index nr = r.count, ns = Eigen::Index(rule.s.size()), nx = xw.count;
  const std::size_t base = std::size_t(ns) * omega;
  Eigen::MatrixXcd P(nr, ns);
  for (Eigen::Index k = 0; k < nr; ++k)
    for (Eigen::Index i = 0; i < ns; ++i) {
      double s = rule.s[std::size_t(i)];
      P(k, i) = constant * rule.w[std::size_t(i)] * s * hat[base + std::size_t(i)] *
                std::exp(kI * (0.5 * r.at(int(k)) * s));
    }
  if (nx == 1 && eps == 0.0) {
    Eigen::VectorXcd d = P.rowwise().sum();
    for (Eigen::Index k = 0; k < nr; ++k) out[k] = d(k);
    return;
  }
  const Eigen::Index nm = nr + nx - 1;
  Eigen::MatrixXcd Q(ns, nm);
  const double t0 = r.at(0) + 2.0 * xw.at(0);
  for (Eigen::Index m = 0; m < nm; ++m) {
    double t = std::max(0.0, t0 + m * r.step);
    for (Eigen::Index i = 0; i < ns; ++i) Q(i, m) = std::exp(-eps * t / (2.0 * rule.s[std::size_t(i)]));
  }
  Eigen::MatrixXcd R = P * Q;
  for (Eigen::Index j = 0; j < nx; ++j)
    for (Eigen::Index k = 0; k < nr; ++k) out[k + nr * j] = R(k, k + j);
}

}  // namespace

StructureFunction g1(const Potential& pot, const SphereQuadrature& sphere, const AxisGrid& r, double eps,
                     double x_extent, cplx constant) {
  StructureFunction g;
  g.sphere = sphere;
  g.epsilon = eps;
  g.constant = constant;
  if (pot.is_zero()) return g;
  Spectrum spec = Spectrum::of(pot);
  SRule rule = oscillation_rule(spec, axis_abs_max(r), 0.0, 0.0, 6);
  auto hat = spectrum_on_rays(spec, rule, sphere);
  LinePart lp;
  lp.r = r;
  if (eps > 0.0) {
    // x_omega nodes at spacing dr/2 so that r + 2 x_omega stays on the r lattice
    double step = 0.5 * r.step;
    int half = xw_nodes_for(x_extent, step);
    lp.xw = AxisGrid{-half * step, step, 2 * half + 1};
  } else {
    lp.xw = AxisGrid{0.0, 1.0, 1};
  }
  const std::size_t block = std::size_t(r.count) * std::size_t(lp.xw.count);
  lp.density.assign(block * sphere.size(), cplx(0.0));
  parallel_for(sphere.size(), [&](std::size_t o) {
    line_densities(hat, rule, r, lp.xw, eps, constant, o, lp.density.data() + block * o);
  });
  g.line = std::move(lp);
  return g;
}

StructureFunction g1(const Potential& pot, const StructureGrids& grids, double eps, cplx constant) {
  return g1(pot, sphere_rule(grids.sphere_order), grids.line_r, eps, grids.extent(), constant);
}

// ---------------------------------------------------------------- weights

namespace {

struct XwStencil {
  int j0 = 0;
  double frac = 0.0;
};

XwStencil xw_stencil(const AxisGrid& xw, double x_omega) {
  if (xw.count <= 1) return {};
  double u = (x_omega - xw.start) / xw.step;
  u = std::clamp(u, 0.0, double(xw.count - 1));
  int j0 = std::min(int(std::floor(u)), xw.count - 2);
  return {j0, u - j0};
}

}  // namespace

void line_weights(const StructureFunction& g, std::size_t omega, double x_omega, std::vector<cplx>& out) {
  if (!g.line) {
    out.clear();
    return;
  }
  const LinePart& lp = *g.line;
  out.assign(std::size_t(lp.r.count), cplx(0.0));
  XwStencil st = xw_stencil(lp.xw, x_omega);
  for (int k = 0; k < lp.r.count; ++k) {
    if (!(lp.r.at(k) + 2.0 * x_omega > 0.0)) continue;
    cplx d = lp.at(k, st.j0, omega);
    if (lp.xw.count > 1) d = (1.0 - st.frac) * d + st.frac * lp.at(k, st.j0 + 1, omega);
    out[std::size_t(k)] = lp.r.step * d;
  }
}

void grid_weights(const StructureFunction& g, std::size_t omega, double x_omega, std::vector<cplx>& out) {
  if (!g.grid) {
    out.clear();
    return;
  }
  const GridPart& gp = *g.grid;
  const std::size_t ny = gp.y_grid.size();
  const double vol = gp.y_grid.cell_volume();
  out.assign(ny, cplx(0.0));
  XwStencil st = xw_stencil(gp.xw, x_omega);
  const cplx* a = gp.block(st.j0, omega);
  if (gp.xw.count > 1) {
    const cplx* b = gp.block(st.j0 + 1, omega);
    for (std::size_t y = 0; y < ny; ++y) out[y] = vol * ((1.0 - st.frac) * a[y] + st.frac * b[y]);
  } else {
    for (std::size_t y = 0; y < ny; ++y) out[y] = vol * a[y];
  }
}

// ---------------------------------------------------------------- application

FieldInterpolator::FieldInterpolator(const ScalarField& f, int refine) {
  const Grid3& g = f.grid;
  if (refine < 1) throw Error(ErrorCode::DomainError, "refinement factor must be >= 1");
  const int n = g.n, nf = n * refine;
  fine_ = Grid3(nf, g.box);
  std::vector<cplx> coarse = f.values;
  fft_inplace(coarse, {n, n, n}, -1);
  data_.assign(fine_.size(), cplx(0.0));
  // zero-pad the spectrum; the Nyquist plane is split evenly between +n/2 and -n/2
  auto targets = [&](int i, int* out) {
    int m = g.freq_index(i);
    if (refine > 1 && m == -n / 2) {
      out[0] = nf - n / 2;
      out[1] = n / 2;
      return 2;
    }
    out[0] = m < 0 ? m + nf : m;
    return 1;
  };
  const double scale = 1.0 / double(g.size());
  int tx[2], ty[2], tz[2];
  for (int iz = 0; iz < n; ++iz) {
    int cz = targets(iz, tz);
    for (int iy = 0; iy < n; ++iy) {
      int cy = targets(iy, ty);
      for (int ix = 0; ix < n; ++ix) {
        int cx = targets(ix, tx);
        cplx v = coarse[g.index(ix, iy, iz)] * scale / double(cx * cy * cz);
        for (int a = 0; a < cz; ++a)
          for (int b = 0; b < cy; ++b)
            for (int c = 0; c < cx; ++c) data_[fine_.index(tx[c], ty[b], tz[a])] += v;
      }
    }
  }
  fft_inplace(data_, {nf, nf, nf}, +1);
}

cplx FieldInterpolator::operator()(const Vec3& x) const {
  const int n = fine_.n;
  const double h = fine_.spacing(), x0 = -0.5 * fine_.box;
  int i0[3];
  double fr[3];
  for (int a = 0; a < 3; ++a) {
    double u = (x[a] - x0) / h;
    if (!(u >= 0.0) || u > double(n - 1)) return 0.0;
    int i = std::min(int(u), n - 2);
    i0[a] = i;
    fr[a] = u - i;
  }
  const std::size_t sx = 1, sy = std::size_t(n), sz = std::size_t(n) * n;
  const cplx* p = data_.data() + fine_.index(i0[0], i0[1], i0[2]);
  auto lerp = [](cplx a, cplx b, double t) { return a + t * (b - a); };
  cplx c00 = lerp(p[0], p[sx], fr[0]);
  cplx c10 = lerp(p[sy], p[sy + sx], fr[0]);
  cplx c01 = lerp(p[sz], p[sz + sx], fr[0]);
  cplx c11 = lerp(p[sz + sy], p[sz + sy + sx], fr[0]);
  return lerp(lerp(c00, c10, fr[1]), lerp(c01, c11, fr[1]), fr[2]);
}

ScalarField apply_g(const StructureFunction& g, const ScalarField& f) {
  ScalarField out(f.grid);
  if (g.empty()) return out;
  if (g.grid && g.grid->y_grid.box > 0.0 && g.grid->values.size() != g.grid->y_grid.size() * std::size_t(g.grid->xw.count) * g.sphere.size())
    throw Error(ErrorCode::GridMismatch, "grid part size does not match its layout");
  FieldInterpolator fi(f);
  const SphereQuadrature& sp = g.sphere;
  std::vector<Vec3> ypts;
  if (g.grid)
    for (std::size_t y = 0; y < g.grid->y_grid.size(); ++y) ypts.push_back(g.grid->y_grid.point(y));
  parallel_for(f.grid.size(), [&](std::size_t ix) {
    Vec3 x = f.grid.point(ix);
    std::vector<cplx> lw, gw;
    cplx total = 0.0;
    for (std::size_t o = 0; o < sp.size(); ++o) {
      const Vec3& w = sp.nodes[o];
      double xo = dot(x, w);
      Vec3 sx = Reflection{w}.apply(x);
      cplx acc = 0.0;
      if (g.line) {
        line_weights(g, o, xo, lw);
        const AxisGrid& r = g.line->r;
        for (int k = 0; k < r.count; ++k) {
          if (lw[std::size_t(k)] == 0.0) continue;
          acc += lw[std::size_t(k)] * fi(sx - r.at(k) * w);
        }
      }
      if (g.grid) {
        grid_weights(g, o, xo, gw);
        for (std::size_t y = 0; y < ypts.size(); ++y) {
          if (gw[y] == 0.0) continue;
          acc += gw[y] * fi(sx - ypts[y]);
        }
      }
      total += sp.weights[o] * acc;
    }
    out[ix] = total;
  });
  return out;
}

// ---------------------------------------------------------------- wave kernels

std::vector<ContractionKernel> born_wave_kernels(const ScalarField& v, const EtaLattice& lattice, double eps,
                                                 int n_max) {
  if (n_max < 1) throw Error(ErrorCode::DomainError, "born_wave_kernels needs n_max >= 1");
  const Grid3& grid = v.grid;
  const std::size_t N = grid.size();
  std::vector<std::vector<cplx>> hat(std::size_t(n_max), std::vector<cplx>(N * lattice.size()));
  EtaKernel t1 = t1_plus(v, lattice, eps);
  parallel_for(lattice.size(), [&](std::size_t k) {
    Eigen::MatrixXcd s = t1.slice(k);
    Eigen::VectorXcd u = Eigen::VectorXcd::Ones(Eigen::Index(N));
    double sign = 1.0;
    for (int n = 0; n < n_max; ++n) {
      u = (s * u).eval();
      sign = -sign;
      for (std::size_t x = 0; x < N; ++x) hat[std::size_t(n)][x + N * k] = sign * u(Eigen::Index(x));
    }
  });
  std::vector<ContractionKernel> out;
  for (auto& h : hat) out.push_back(kernel_from_eta(grid, lattice, std::move(h)));
  return out;
}

ContractionKernel full_wave_kernel(const ScalarField& v, const EtaLattice& lattice, double eps) {
  const Grid3& grid = v.grid;
  const std::size_t N = grid.size();
  std::vector<cplx> hat(N * lattice.size(), cplx(0.0));
  EtaKernel t1 = t1_plus(v, lattice, eps);
  parallel_for(lattice.size(), [&](std::size_t k) {
    Eigen::MatrixXcd m = t1.slice(k);
    m.diagonal().array() += 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    double rc = lu.rcond();
    if (!(rc > 0.0) || 1.0 / rc > kNearSingularCondition)
      throw Error(ErrorCode::NearSingular, "I + T1(eta) is near singular at eta index " + std::to_string(k));
    Eigen::VectorXcd u = lu.solve(Eigen::VectorXcd::Ones(Eigen::Index(N)));
    for (std::size_t x = 0; x < N; ++x) hat[x + N * k] = u(Eigen::Index(x)) - 1.0;
  });
  return kernel_from_eta(grid, lattice, std::move(hat));
}

// ---------------------------------------------------------------- grid measure

StructureFunction grid_measure(const ScalarField& v, const ContractionKernel& w, const StructureGrids& grids,
                               double eps, cplx constant) {
  if (v.grid != w.grid) throw Error(ErrorCode::GridMismatch, "potential and wave kernel grids differ");
  StructureFunction g;
  g.sphere = sphere_rule(grids.sphere_order);
  g.epsilon = eps;
  g.constant = constant;
  const Grid3& kg = v.grid;
  const EtaLattice& lat = w.lattice;
  const std::size_t N = kg.size(), L = lat.size(), no = g.sphere.size();
  bool zero = true;
  for (std::size_t i = 0; i < N && zero; ++i)
    if (v[i] != 0.0) zero = false;
  if (zero) return g;

  const AxisGrid& r = grids.h_r;
  SRule rule = make_s_rule(kg.nyquist(), kPi / std::max(axis_abs_max(r), 1e-300), grids.per_panel);
  const std::size_t ns = rule.s.size();
  const double ext = grids.extent();
  const int half = xw_nodes_for(ext, grids.h_xw_step);
  AxisGrid xw{-half * grids.h_xw_step, grids.h_xw_step, 2 * half + 1};
  const int nxw = xw.count, nr = r.count;

  // A[(s, omega), y0] = hat U_{y0}(-s omega), U_{y0} = V W(., y0)
  Eigen::MatrixXcd E(Eigen::Index(ns * no), Eigen::Index(N));
  const double h3 = kg.cell_volume();
  parallel_for(no, [&](std::size_t o) {
    const Vec3& om = g.sphere.nodes[o];
    for (std::size_t x = 0; x < N; ++x) {
      Vec3 p = kg.point(x);
      double xo = dot(p, om);
      cplx vx = v[x] * h3;
      for (std::size_t i = 0; i < ns; ++i) E(Eigen::Index(i + ns * o), Eigen::Index(x)) = vx * std::exp(kI * (rule.s[i] * xo));
    }
  });
  Eigen::Map<const Eigen::MatrixXcd> W(w.values.data(), Eigen::Index(N), Eigen::Index(L));
  Eigen::MatrixXcd A = E * W;

  GridPart gp;
  gp.y_grid = grids.y_grid;
  gp.xw = xw;
  const Grid3& yg = gp.y_grid;
  const std::size_t ny = yg.size(), block = ny * std::size_t(nxw);
  gp.values.assign(block * no, cplx(0.0));
  std::vector<double> kept(no, 0.0), lost(no, 0.0);
  const double atom = r.step * lat.y_cell() / yg.cell_volume();
  const double yh = yg.spacing(), y0c = -0.5 * yg.box;

  parallel_for(no, [&](std::size_t o) {
    const Vec3& om = g.sphere.nodes[o];
    const Eigen::Index rows = Eigen::Index(nr) * nxw;
    Eigen::MatrixXcd K(rows, Eigen::Index(ns));
    for (int j = 0; j < nxw; ++j)
      for (int k = 0; k < nr; ++k) {
        double t = r.at(k) + 2.0 * xw.at(j);
        Eigen::Index row = Eigen::Index(k) + Eigen::Index(nr) * j;
        for (std::size_t i = 0; i < ns; ++i) {
          double s = rule.s[i];
          K(row, Eigen::Index(i)) = t > 0.0 ? constant * rule.w[i] * s * std::exp(kI * (0.5 * r.at(k) * s)) *
                                                  (eps > 0.0 ? std::exp(-eps * t / (2.0 * s)) : 1.0)
                                            : cplx(0.0);
        }
      }
    Eigen::MatrixXcd D = K * A.middleRows(Eigen::Index(ns * o), Eigen::Index(ns));
    cplx* out = gp.values.data() + block * o;
    for (std::size_t y0 = 0; y0 < L; ++y0) {
      Vec3 base = lat.y(y0);
      for (int k = 0; k < nr; ++k) {
        Vec3 p = base + r.at(k) * om;
        int i0[3];
        double fr[3];
        for (int a = 0; a < 3; ++a) {
          double u = (p[a] - y0c) / yh;
          i0[a] = int(std::floor(u));
          fr[a] = u - i0[a];
        }
        for (int j = 0; j < nxw; ++j) {
          cplx val = atom * D(Eigen::Index(k) + Eigen::Index(nr) * j, Eigen::Index(y0));
          if (val == 0.0) continue;
          double mag = std::abs(val);
          cplx* dst = out + ny * std::size_t(j);
          for (int c = 0; c < 8; ++c) {
            int ix = i0[0] + (c & 1), iy = i0[1] + ((c >> 1) & 1), iz = i0[2] + ((c >> 2) & 1);
            double wt = ((c & 1) ? fr[0] : 1.0 - fr[0]) * (((c >> 1) & 1) ? fr[1] : 1.0 - fr[1]) *
                        (((c >> 2) & 1) ? fr[2] : 1.0 - fr[2]);
            if (wt == 0.0) continue;
            if (ix < 0 || iy < 0 || iz < 0 || ix >= yg.n || iy >= yg.n || iz >= yg.n) {
              lost[o] += wt * mag;
              continue;
            }
            kept[o] += wt * mag;
            dst[yg.index(ix, iy, iz)] += wt * val;
          }
        }
      }
    }
  });
  double tk = 0.0, tl = 0.0;
  for (std::size_t o = 0; o < no; ++o) {
    tk += kept[o];
    tl += lost[o];
  }
  gp.dropped = tk > 0.0 ? tl / tk : 0.0;
  g.grid = std::move(gp);
  return g;
}

StructureFunction born_g_n(const Potential& pot, int n, const StructureGrids& grids, double eps, cplx constant) {
  if (n < 1) throw Error(ErrorCode::DomainError, "Born order must be >= 1");
  if (n == 1) return g1(pot, grids, eps, constant);
  if (pot.is_zero()) {
    StructureFunction g;
    g.sphere = sphere_rule(grids.sphere_order);
    g.epsilon = eps;
    g.constant = constant;
    return g;
  }
  ScalarField v = sample_potential(pot, grids.kernel_grid);
  auto ks = born_wave_kernels(v, grids.lattice, eps, n - 1);
  return grid_measure(v, ks[std::size_t(n - 2)], grids, eps, constant);
}

FullGReport full_g(const Potential& pot, const StructureGrids& grids, double eps, FullGMethod method,
                   int born_order, cplx constant) {
  FullGReport rep;
  rep.g = g1(pot, grids, eps, constant);
  if (pot.is_zero()) return rep;
  ScalarField v = sample_potential(pot, grids.kernel_grid);
  if (method == FullGMethod::Resolvent) {
    auto z = zero_energy_check(pot, grids.kernel_grid);
    if (!z.regular) throw Error(ErrorCode::NotRegular, "zero energy is not regular for this potential");
    ContractionKernel w = full_wave_kernel(v, grids.lattice, eps);
    rep.g = add(rep.g, grid_measure(v, w, grids, eps, constant));
    return rep;
  }
  if (born_order < 2) throw Error(ErrorCode::DomainError, "born_sum needs born_order >= 2");
  rep.term_norms.push_back(structure_norm(rep.g));
  auto ks = born_wave_kernels(v, grids.lattice, eps, born_order - 1);
  std::vector<StructureFunction> terms;
  for (int n = 2; n <= born_order; ++n) {
    terms.push_back(grid_measure(v, ks[std::size_t(n - 2)], grids, eps, constant));
    rep.term_norms.push_back(structure_norm(terms.back()));
  }
  // geometric ratio from a least-squares fit of log N_n against n
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = 0; i < rep.term_norms.size(); ++i) {
    if (!(rep.term_norms[i] > 0.0)) continue;
    double x = double(i + 1), y = std::log(rep.term_norms[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  rep.ratio = cnt >= 2 ? std::exp((cnt * sxy - sx * sy) / (cnt * sxx - sx * sx)) : 0.0;
  if (!(rep.ratio < 1.0))
    throw Error(ErrorCode::BornDivergent, "fitted Born ratio " + std::to_string(rep.ratio) + " >= 1");
  rep.tail_bound = rep.term_norms.back() * rep.ratio / (1.0 - rep.ratio);
  for (auto& t : terms) rep.g = add(rep.g, t);
  return rep;
}

// ---------------------------------------------------------------- norms

namespace {

double line_norm_omega(const LinePart& lp, std::size_t o) {
  double acc = 0.0;
  for (int k = 0; k < lp.r.count; ++k) {
    double m = 0.0;
    for (int j = 0; j < lp.xw.count; ++j) {
      if (lp.xw.count > 1 && !(lp.r.at(k) + 2.0 * lp.xw.at(j) > 0.0)) continue;
      m = std::max(m, std::abs(lp.at(k, j, o)));
    }
    acc += lp.r.step * m;
  }
  return acc;
}

double grid_norm_omega(const GridPart& gp, std::size_t o) {
  const std::size_t ny = gp.y_grid.size();
  std::vector<double> m(ny, 0.0);
  for (int j = 0; j < gp.xw.count; ++j) {
    const cplx* b = gp.block(j, o);
    for (std::size_t y = 0; y < ny; ++y) m[y] = std::max(m[y], std::abs(b[y]));
  }
  double acc = 0.0;
  for (double x : m) acc += x;
  return acc * gp.y_grid.cell_volume();
}

}  // namespace

double structure_norm(const StructureFunction& g) {
  double total = 0.0;
  for (std::size_t o = 0; o < g.sphere.size(); ++o) {
    double acc = 0.0;
    if (g.line) acc += line_norm_omega(*g.line, o);
    if (g.grid) acc += grid_norm_omega(*g.grid, o);
    total += g.sphere.weights[o] * acc;
  }
  return total;
}

double x_omega_regularity(const StructureFunction& g) {
  double total = 0.0;
  for (std::size_t o = 0; o < g.sphere.size(); ++o) {
    double acc = 0.0;
    if (g.line) {
      const LinePart& lp = *g.line;
      for (int k = 0; k < lp.r.count; ++k) {
        if (lp.xw.count == 1) {
          // the indicator switches on once, at x_omega = -r/2
          acc += lp.r.step * std::abs(lp.at(k, 0, o));
          continue;
        }
        cplx prev = 0.0;
        for (int j = 0; j < lp.xw.count; ++j) {
          cplx cur = lp.r.at(k) + 2.0 * lp.xw.at(j) > 0.0 ? lp.at(k, j, o) : cplx(0.0);
          if (j > 0) acc += lp.r.step * std::abs(cur - prev);
          prev = cur;
        }
      }
    }
    if (g.grid) {
      const GridPart& gp = *g.grid;
      const std::size_t ny = gp.y_grid.size();
      double tv = 0.0;
      for (int j = 1; j < gp.xw.count; ++j) {
        const cplx* a = gp.block(j - 1, o);
        const cplx* b = gp.block(j, o);
        for (std::size_t y = 0; y < ny; ++y) tv += std::abs(b[y] - a[y]);
      }
      acc += tv * gp.y_grid.cell_volume();
    }
    total += g.sphere.weights[o] * acc;
  }
  return total;
}

// ---------------------------------------------------------------- arithmetic

namespace {

void check_same_sphere(const StructureFunction& a, const StructureFunction& b) {
  if (a.sphere.size() != b.sphere.size() || a.sphere.weights != b.sphere.weights)
    throw Error(ErrorCode::GridMismatch, "structure functions use different sphere rules");
}

}  // namespace

StructureFunction add(const StructureFunction& a, const StructureFunction& b, double scale_b) {
  if (b.empty()) return a;
  if (a.empty()) {
    StructureFunction out = scaled(b, scale_b);
    return out;
  }
  check_same_sphere(a, b);
  StructureFunction out = a;
  if (b.line) {
    if (!out.line) {
      out.line = b.line;
      for (auto& v : out.line->density) v *= scale_b;
    } else {
      if (out.line->r != b.line->r || out.line->xw != b.line->xw)
        throw Error(ErrorCode::GridMismatch, "line parts use different r or x_omega grids");
      for (std::size_t i = 0; i < out.line->density.size(); ++i) out.line->density[i] += scale_b * b.line->density[i];
    }
  }
  if (b.grid) {
    if (!out.grid) {
      out.grid = b.grid;
      for (auto& v : out.grid->values) v *= scale_b;
    } else {
      if (out.grid->y_grid != b.grid->y_grid || out.grid->xw != b.grid->xw)
        throw Error(ErrorCode::GridMismatch, "grid parts use different y or x_omega grids");
      for (std::size_t i = 0; i < out.grid->values.size(); ++i) out.grid->values[i] += scale_b * b.grid->values[i];
      out.grid->dropped = std::max(out.grid->dropped, b.grid->dropped);
    }
  }
  return out;
}

StructureFunction subtract(const StructureFunction& a, const StructureFunction& b) { return add(a, b, -1.0); }

StructureFunction scaled(const StructureFunction& a, cplx s) {
  StructureFunction out = a;
  if (out.line)
    for (auto& v : out.line->density) v *= s;
  if (out.grid)
    for (auto& v : out.grid->values) v *= s;
  return out;
}

// ---------------------------------------------------------------- serialization

namespace {

using nlohmann::json;

json axis_json(const AxisGrid& a) { return {{"start", a.start}, {"step", a.step}, {"count", a.count}}; }

AxisGrid axis_from(const json& j) {
  return AxisGrid{j.at("start").get<double>(), j.at("step").get<double>(), j.at("count").get<int>()};
}

// complex arrays are stored as consecutive WOPF records of at most one y grid each
void write_chunks(const std::string& path, const std::vector<cplx>& data, const Grid3& chunk) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  ScalarField f(chunk);
  const std::size_t c = chunk.size();
  for (std::size_t off = 0; off < data.size(); off += c) {
    std::fill(f.values.begin(), f.values.end(), cplx(0.0));
    std::copy(data.begin() + std::ptrdiff_t(off), data.begin() + std::ptrdiff_t(std::min(data.size(), off + c)),
              f.values.begin());
    write_field(os, f);
  }
}

std::vector<cplx> read_chunks(const std::string& path, std::size_t total) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<cplx> out;
  out.reserve(total);
  while (out.size() < total) {
    ScalarField f = read_field(is);
    std::size_t take = std::min(total - out.size(), f.values.size());
    out.insert(out.end(), f.values.begin(), f.values.begin() + std::ptrdiff_t(take));
  }
  return out;
}

std::string base_name(const std::string& path) {
  auto p = path.find_last_of('/');
  return p == std::string::npos ? path : path.substr(p + 1);
}

std::string dir_name(const std::string& path) {
  auto p = path.find_last_of('/');
  return p == std::string::npos ? std::string() : path.substr(0, p + 1);
}

}  // namespace

void save_structure(const std::string& prefix, const StructureFunction& g) {
  json j;
  j["format"] = "waveop-structure";
  j["version"] = 1;
  j["epsilon"] = g.epsilon;
  j["constant"] = {g.constant.real(), g.constant.imag()};
  json nodes = json::array();
  for (const auto& n : g.sphere.nodes) nodes.push_back({n[0], n[1], n[2]});
  j["sphere"] = {{"degree", g.sphere.degree}, {"nodes", nodes}, {"weights", g.sphere.weights}};
  if (g.line) {
    const std::string file = prefix + ".line.bin";
    write_chunks(file, g.line->density, Grid3(16, 1.0));
    j["line"] = {{"r", axis_json(g.line->r)}, {"x_omega", axis_json(g.line->xw)}, {"file", base_name(file)},
                 {"size", g.line->density.size()}};
  }
  if (g.grid) {
    const std::string file = prefix + ".grid.bin";
    write_chunks(file, g.grid->values, g.grid->y_grid);
    j["grid"] = {{"y_grid", {{"n", g.grid->y_grid.n}, {"box", g.grid->y_grid.box}}},
                 {"x_omega", axis_json(g.grid->xw)},
                 {"dropped", g.grid->dropped},
                 {"file", base_name(file)},
                 {"size", g.grid->values.size()}};
  }
  std::ofstream os(prefix + ".json");
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + prefix + ".json for writing");
  os << j.dump(2) << "\n";
}

StructureFunction load_structure(const std::string& prefix) {
  const std::string path = prefix + ".json";
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  StructureFunction g;
  try {
    if (j.at("format").get<std::string>() != "waveop-structure") throw Error(ErrorCode::IoError, path + ": wrong format tag");
    g.epsilon = j.at("epsilon").get<double>();
    g.constant = cplx(j.at("constant").at(0).get<double>(), j.at("constant").at(1).get<double>());
    const json& sp = j.at("sphere");
    g.sphere.degree = sp.at("degree").get<int>();
    for (const auto& n : sp.at("nodes")) g.sphere.nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>(), n.at(2).get<double>()});
    g.sphere.weights = sp.at("weights").get<std::vector<double>>();
    const std::string dir = dir_name(prefix);
    if (j.contains("line")) {
      const json& l = j.at("line");
      LinePart lp;
      lp.r = axis_from(l.at("r"));
      lp.xw = axis_from(l.at("x_omega"));
      lp.density = read_chunks(dir + l.at("file").get<std::string>(), l.at("size").get<std::size_t>());
      g.line = std::move(lp);
    }
    if (j.contains("grid")) {
      const json& gj = j.at("grid");
      GridPart gp;
      gp.y_grid = Grid3(gj.at("y_grid").at("n").get<int>(), gj.at("y_grid").at("box").get<double>());
      gp.xw = axis_from(gj.at("x_omega"));
      gp.dropped = gj.at("dropped").get<double>();
      gp.values = read_chunks(dir + gj.at("file").get<std::string>(), gj.at("size").get<std::size_t>());
      g.grid = std::move(gp);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, path + ": " + e.what());
  }
  return g;
}

std::string structure_norm_csv(const StructureFunction& g) {
  std::ostringstream os;
  os.precision(17);
  os << "omega,nx,ny,nz,weight,line_norm,grid_norm\n";
  for (std::size_t o = 0; o < g.sphere.size(); ++o) {
    const Vec3& n = g.sphere.nodes[o];
    os << o << ',' << n[0] << ',' << n[1] << ',' << n[2] << ',' << g.sphere.weights[o] << ','
       << (g.line ? line_norm_omega(*g.line, o) : 0.0) << ',' << (g.grid ? grid_norm_omega(*g.grid, o) : 0.0) << "\n";
  }
  return os.str();
}

}  // namespace waveop
