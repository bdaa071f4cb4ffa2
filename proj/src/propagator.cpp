#include "waveop/propagator.hpp"

#include <cmath>

namespace waveop {

void EvolutionConfig::validate(const Grid3& grid) const {
  if (!(dt > 0.0) || !(t_max > 0.0) || eps_reg < 0.0)
    throw Error(ErrorCode::DomainError, "evolution needs dt > 0, t_max > 0 and eps_reg >= 0");
  double eta = grid.nyquist();
  if (dt * eta * eta > 0.5 * (1.0 + 1e-12))
    throw Error(ErrorCode::StepTooLarge, "dt * eta_max^2 = " + std::to_string(dt * eta * eta) + " > 0.5");
}

int EvolutionConfig::steps() const { return std::max(1, int(std::ceil(t_max / dt - 1e-9))); }

double max_time_step(const Grid3& grid) {
  double eta = grid.nyquist();
  return 0.5 / (eta * eta);
}

namespace {

std::vector<int> dims_of(const Grid3& g) { return {g.n, g.n, g.n}; }

std::vector<double> kinetic(const Grid3& g) {
  std::vector<double> k(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec3 xi = g.frequency(i);
    k[i] = dot(xi, xi);
  }
  return k;
}

// Free multiplier e^{-i t |xi|^2} applied to a raw (unnormalized) spectrum.
void free_phase(std::vector<cplx>& hat, const std::vector<double>& k2, double t, double scale) {
  for (std::size_t i = 0; i < hat.size(); ++i) hat[i] *= scale * std::exp(-kI * (t * k2[i]));
}

// e^{-i t |xi|^2} along t = t0 + j * dt, advanced by multiplication and re-anchored every 256 steps.
class PhaseRotor {
 public:
  PhaseRotor(const std::vector<double>& k2, double t0, double dt) : k2_(k2), t0_(t0), dt_(dt) {
    step_.resize(k2.size());
    for (std::size_t i = 0; i < k2.size(); ++i) step_[i] = std::exp(-kI * (dt * k2[i]));
    anchor(0);
  }
  const std::vector<cplx>& phase() const { return cur_; }
  void advance() {
    ++j_;
    if (j_ % 256 == 0) {
      anchor(j_);
      return;
    }
    for (std::size_t i = 0; i < cur_.size(); ++i) cur_[i] *= step_[i];
  }

 private:
  void anchor(long j) {
    j_ = j;
    double t = t0_ + double(j) * dt_;
    cur_.resize(k2_.size());
    for (std::size_t i = 0; i < k2_.size(); ++i) cur_[i] = std::exp(-kI * (t * k2_[i]));
  }
  const std::vector<double>& k2_;
  double t0_, dt_;
  long j_ = 0;
  std::vector<cplx> step_, cur_;
};

ScalarField real_field(const Potential& pot, const Grid3& g) { return sample_potential(pot, g); }

// One Strang step of e^{-i tau H}: half potential, kinetic, half potential.
class Stepper {
 public:
  Stepper(const ScalarField& v, double tau) : grid_(v.grid), dims_(dims_of(v.grid)) {
    const std::size_t N = grid_.size();
    half_.resize(N);
    kin_.resize(N);
    auto k2 = kinetic(grid_);
    for (std::size_t i = 0; i < N; ++i) {
      half_[i] = std::exp(-kI * (0.5 * tau * v[i].real()));
      kin_[i] = std::exp(-kI * (tau * k2[i])) / double(N);
    }
  }

  void apply(std::vector<cplx>& psi) const {
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_[i];
    fft_inplace(psi, dims_, -1);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= kin_[i];
    fft_inplace(psi, dims_, +1);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_[i];
  }

 private:
  Grid3 grid_;
  std::vector<int> dims_;
  std::vector<cplx> half_;
  std::vector<cplx> kin_;
};

double vec_norm(const std::vector<cplx>& a, double h3) {
  double s = 0.0;
  for (const auto& x : a) s += std::norm(x);
  return std::sqrt(s * h3);
}

std::vector<double> trapezoid_weights(int n, double dt) {
  std::vector<double> w(std::size_t(n) + 1, dt);
  w.front() = w.back() = 0.5 * dt;
  return w;
}

}  // namespace

ScalarField free_evolve(const ScalarField& f, double t) {
  if (t == 0.0) return f;
  ScalarField out = f;
  auto k2 = kinetic(f.grid);
  fft_inplace(out.values, dims_of(f.grid), -1);
  free_phase(out.values, k2, t, 1.0 / double(f.grid.size()));
  fft_inplace(out.values, dims_of(f.grid), +1);
  return out;
}

ScalarField perturbed_evolve(const ScalarField& f, double t, const Potential& pot, const EvolutionConfig& cfg) {
  return perturbed_evolve(f, t, real_field(pot, f.grid), cfg);
}

ScalarField perturbed_evolve(const ScalarField& f, double t, const ScalarField& v, const EvolutionConfig& cfg) {
  if (v.grid != f.grid) throw Error(ErrorCode::GridMismatch, "potential and field grids differ");
  cfg.validate(f.grid);
  if (t == 0.0) return f;
  int m = std::max(1, int(std::ceil(std::abs(t) / cfg.dt - 1e-9)));
  Stepper st(v, t / m);
  ScalarField out = f;
  for (int i = 0; i < m; ++i) st.apply(out.values);
  return out;
}

double cook_time_horizon(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg, double cap) {
  const Grid3& g = f.grid;
  ScalarField v = real_field(pot, g);
  const double fn = l2_norm(f);
  if (fn == 0.0 || pot.is_zero()) return cfg.dt;
  auto k2 = kinetic(g);
  std::vector<cplx> fh = f.values;
  fft_inplace(fh, dims_of(g), -1);
  const double h3 = g.cell_volume(), probe = std::max(cfg.dt, 0.5);
  for (double t = probe; t < cap + probe; t += probe) {
    std::vector<cplx> psi = fh;
    free_phase(psi, k2, t, 1.0 / double(g.size()));
    fft_inplace(psi, dims_of(g), +1);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= v[i];
    double tail = vec_norm(psi, h3) * std::exp(-cfg.eps_reg * t) / fn;
    if (tail < cfg.tail_tol) return std::min(cap, cfg.dt * std::ceil(t / cfg.dt));
  }
  return cap;
}

CookReport cook_report(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg) {
  const Grid3& g = f.grid;
  CookReport rep;
  rep.result = f;
  if (pot.is_zero()) return rep;
  cfg.validate(g);
  ScalarField v = real_field(pot, g);
  const int n = cfg.steps();
  const double dt = cfg.t_max / n, h3 = g.cell_volume();
  const std::size_t N = g.size();
  auto k2 = kinetic(g);
  std::vector<cplx> fh = f.values;
  fft_inplace(fh, dims_of(g), -1);
  const double inv = 1.0 / double(N);
  PhaseRotor rot(k2, n * dt, -dt);  // samples run backwards from t_max
  std::vector<cplx> psi(N);
  auto sample = [&](int j) {
    const auto& ph = rot.phase();
    for (std::size_t i = 0; i < N; ++i) psi[i] = fh[i] * ph[i] * inv;
    fft_inplace(psi, dims_of(g), +1);
    double damp = std::exp(-cfg.eps_reg * (j * dt));
    for (std::size_t i = 0; i < N; ++i) psi[i] *= damp * v[i].real();
    rot.advance();
  };
  auto w = trapezoid_weights(n, dt);
  sample(n);
  std::vector<cplx> acc = psi;
  const double fn = l2_norm(f);
  rep.tail = fn > 0.0 ? vec_norm(acc, h3) / fn : 0.0;
  if (rep.tail > cfg.tail_tol)
    throw Error(ErrorCode::WrapAround, "damped Cook integrand at t_max is " + std::to_string(rep.tail) +
                                           " of ||f||, above " + std::to_string(cfg.tail_tol));
  for (auto& x : acc) x *= w.back();
  Stepper up(v, -dt);  // e^{+i dt H}
  for (int j = n - 1; j >= 0; --j) {
    up.apply(acc);
    sample(j);
    for (std::size_t i = 0; i < N; ++i) acc[i] += w[std::size_t(j)] * psi[i];
  }
  for (std::size_t i = 0; i < N; ++i) rep.result[i] += kI * acc[i];
  rep.steps = n;
  return rep;
}

ScalarField cook_wave_operator(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg) {
  return cook_report(f, pot, cfg).result;
}

namespace {

// f + sign * i * sum_j w_j e^{-eps t_j} e^{sign_free * i t_j H0} V phi_j, phi_j = U^j f.
ScalarField adjoint_sweep(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg, double step_sign,
                          double free_sign, double out_sign) {
  const Grid3& g = f.grid;
  if (pot.is_zero()) return f;
  cfg.validate(g);
  ScalarField v = real_field(pot, g);
  const int n = cfg.steps();
  const double dt = cfg.t_max / n;
  const std::size_t N = g.size();
  auto k2 = kinetic(g);
  auto w = trapezoid_weights(n, dt);
  Stepper st(v, step_sign * dt);
  std::vector<cplx> phi = f.values, acc(N, cplx(0.0)), tmp(N);
  PhaseRotor rot(k2, 0.0, -free_sign * dt);
  for (int j = 0; j <= n; ++j) {
    if (j > 0) {
      st.apply(phi);
      rot.advance();
    }
    double t = j * dt, c = w[std::size_t(j)] * std::exp(-cfg.eps_reg * t);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = v[i].real() * phi[i];
    fft_inplace(tmp, dims_of(g), -1);
    const auto& ph = rot.phase();
    for (std::size_t i = 0; i < N; ++i) acc[i] += c * ph[i] * tmp[i];
  }
  fft_inplace(acc, dims_of(g), +1);
  ScalarField out = f;
  for (std::size_t i = 0; i < N; ++i) out[i] += out_sign * kI * acc[i] / double(N);
  return out;
}

}  // namespace

ScalarField cook_adjoint(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg) {
  // U^{-1} = e^{-i dt H}; e^{+i t H0} carries the samples back; overall factor -i.
  return adjoint_sweep(f, pot, cfg, +1.0, +1.0, -1.0);
}

ScalarField w_minus_adjoint_time(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg) {
  // phi_j = e^{i s_j H} f, then e^{-i s_j H0} V phi_j; overall factor +i.
  return adjoint_sweep(f, pot, cfg, -1.0, -1.0, +1.0);
}

ScalarField born_term_time(const ScalarField& f, const Potential& pot, int n, const EvolutionConfig& cfg) {
  if (n != 1 && n != 2) throw Error(ErrorCode::UnsupportedOrder, "time-domain Born terms exist for n = 1, 2");
  const Grid3& g = f.grid;
  ScalarField out(g);
  if (pot.is_zero()) return out;
  cfg.validate(g);
  ScalarField v = real_field(pot, g);
  const int m = cfg.steps();
  const double dt = cfg.t_max / m;
  const std::size_t N = g.size();
  const auto dims = dims_of(g);
  auto k2 = kinetic(g);
  auto w = trapezoid_weights(m, dt);
  std::vector<cplx> fh = f.values;
  fft_inplace(fh, dims, -1);
  std::vector<cplx> acc(N, cplx(0.0)), u(N), b(N), et(N);
  const double inv = 1.0 / double(N);
  PhaseRotor rot(k2, 0.0, dt);  // e^{-i t_j |xi|^2}
  for (int j = 0; j <= m; ++j) {
    if (j > 0) rot.advance();
    double t = j * dt, c = w[std::size_t(j)] * std::exp(-cfg.eps_reg * t);
    const auto& ph = rot.phase();
    for (std::size_t i = 0; i < N; ++i) u[i] = fh[i] * ph[i] * inv;
    fft_inplace(u, dims, +1);
    for (std::size_t i = 0; i < N; ++i) u[i] *= v[i].real();
    fft_inplace(u, dims, -1);  // hat of V e^{-itH0} f
    if (n == 1) {
      for (std::size_t i = 0; i < N; ++i) acc[i] += c * std::conj(ph[i]) * u[i];
      continue;
    }
    if (j == 0) continue;
    auto wi = trapezoid_weights(j, dt);
    for (std::size_t i = 0; i < N; ++i) et[i] = std::conj(ph[i]);  // e^{i t |xi|^2}
    PhaseRotor inner(k2, 0.0, dt);                                 // e^{-i s |xi|^2}
    for (int k = 0; k <= j; ++k) {
      if (k > 0) inner.advance();
      const auto& ps = inner.phase();
      for (std::size_t i = 0; i < N; ++i) b[i] = u[i] * std::conj(ps[i]) * inv;
      fft_inplace(b, dims, +1);
      for (std::size_t i = 0; i < N; ++i) b[i] *= v[i].real();
      fft_inplace(b, dims, -1);
      double ck = c * wi[std::size_t(k)];
      for (std::size_t i = 0; i < N; ++i) acc[i] += ck * et[i] * ps[i] * b[i];
    }
  }
  fft_inplace(acc, dims, +1);
  const cplx pre = n == 1 ? kI : cplx(-1.0);
  for (std::size_t i = 0; i < N; ++i) out[i] = pre * acc[i] / double(N);
  return out;
}

ScalarField project_continuous(const ScalarField& f, const PointSpectrum& ps) {
  ScalarField out = f;
  for (const auto& e : ps.eigenfunctions) {
    cplx c = inner(e, f);
    for (std::size_t i = 0; i < out.values.size(); ++i) out[i] -= c * e[i];
  }
  return out;
}

ScalarField project_continuous(const ScalarField& f, const Potential& pot) {
  if (pot.is_zero()) return f;
  return project_continuous(f, point_spectrum(pot, f.grid));
}

}  // namespace waveop
