#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "waveop/propagator.hpp"

using namespace waveop;

namespace {

ScalarField gaussian_field(const Grid3& g, double w, Vec3 c = {0.0, 0.0, 0.0}) {
  return make_field(g, [&](const Vec3& x) {
    Vec3 d = x - c;
    return cplx(std::exp(-dot(d, d) / (2.0 * w * w)));
  });
}

Potential constant_potential(const Grid3& g, double c) {
  ScalarField v(g);
  for (auto& x : v.values) x = c;
  return Potential::tabulated(v);
}

ScalarField random_field(const Grid3& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

// Trapezoid sum of e^{a t} on [0, T] with n steps.
cplx trapezoid_exp(cplx a, double T, int n) {
  double dt = T / n;
  cplx s = 0.5 * (1.0 + std::exp(a * T));
  for (int j = 1; j < n; ++j) s += std::exp(a * (j * dt));
  return s * dt;
}

double max_gap(const ScalarField& a, const ScalarField& b, cplx scale) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a[i] - scale * b[i]));
  return m;
}

}  // namespace

TEST_CASE("free evolution of a Gaussian") {
  // e^{-it H0} e^{-x^2/(2w^2)} = (w^2/s^2)^{3/2} e^{-x^2/(2 s^2)}, s^2 = w^2 + 2it
  Grid3 g(64, 32.0);
  const double w = 1.5, t = 1.0;
  auto f = gaussian_field(g, w);
  auto got = free_evolve(f, t);
  const cplx s2 = w * w + 2.0 * kI * t;
  auto want = make_field(g, [&](const Vec3& x) { return std::pow(w * w / s2, 1.5) * std::exp(-dot(x, x) / (2.0 * s2)); });
  CHECK(relative_l2(got, want) < 1e-10);
  CHECK(relative_l2(free_evolve(got, -t), f) < 1e-13);
  CHECK(l2_norm(got) == doctest::Approx(l2_norm(f)).epsilon(1e-13));
}

TEST_CASE("time step limit") {
  Grid3 g(8, 8.0);
  CHECK(max_time_step(g) == doctest::Approx(0.05066059182116889).epsilon(1e-15));
  EvolutionConfig cfg;
  cfg.dt = 0.06;
  cfg.t_max = 1.0;
  CHECK_THROWS_AS(cfg.validate(g), Error);
  cfg.dt = max_time_step(g);
  CHECK_NOTHROW(cfg.validate(g));
  cfg.t_max = 1.0;
  CHECK(cfg.steps() == 20);
}

TEST_CASE("perturbed evolution") {
  Grid3 g(16, 16.0);
  auto f = gaussian_field(g, 1.5, {0.5, 0.0, -0.5});
  EvolutionConfig cfg;
  cfg.dt = max_time_step(g);
  // A constant potential only shifts the phase.
  auto got = perturbed_evolve(f, 1.3, constant_potential(g, 0.4), cfg);
  CHECK(max_gap(got, free_evolve(f, 1.3), std::polar(1.0, -0.4 * 1.3)) < 1e-12);
  CHECK(relative_l2(perturbed_evolve(f, 0.7, Potential::zero(), cfg), free_evolve(f, 0.7)) < 1e-13);
  // Unitary and reversible for a Gaussian well.
  Potential well = Potential::gaussian(-0.5, 2.0);
  auto u = perturbed_evolve(f, 2.0, well, cfg);
  CHECK(l2_norm(u) == doctest::Approx(l2_norm(f)).epsilon(1e-12));
  CHECK(relative_l2(perturbed_evolve(u, -2.0, well, cfg), f) < 1e-12);
}

TEST_CASE("Cook formula with a constant potential") {
  // W f = f (1 + i c sum_n w_n e^{(ic - eps) t_n}) exactly, since H and H0 commute.
  Grid3 g(8, 8.0);
  const double c = 0.1;
  auto pot = constant_potential(g, c);
  auto f = gaussian_field(g, 1.5);
  EvolutionConfig cfg;
  cfg.dt = 0.05;
  cfg.t_max = 10.0;
  cfg.eps_reg = 2.0;
  const cplx a = kI * c - cfg.eps_reg;
  const cplx factor = 1.0 + kI * c * trapezoid_exp(a, cfg.t_max, cfg.steps());
  auto rep = cook_report(f, pot, cfg);
  CHECK(rep.steps == 200);
  CHECK(max_gap(rep.result, f, factor) < 1e-12);
  // the continuous integral is i c / (eps - i c)
  CHECK(std::abs(factor - (1.0 + kI * c / (cfg.eps_reg - kI * c))) < 1e-3);
  // the adjoint carries the conjugate factor
  CHECK(max_gap(cook_adjoint(f, pot, cfg), f, std::conj(factor)) < 1e-12);
  // time formula for W-* gives the same scalar
  CHECK(max_gap(w_minus_adjoint_time(f, pot, cfg), f, factor) < 1e-12);
  // first Born term: i c sum w_n e^{-eps t_n}
  cplx born1 = kI * c * trapezoid_exp(-cfg.eps_reg, cfg.t_max, cfg.steps());
  CHECK(max_gap(born_term_time(f, pot, 1, cfg), f, born1) < 1e-12);
  CHECK_THROWS_AS(born_term_time(f, pot, 3, cfg), Error);
}

TEST_CASE("Cook map with zero potential and the damped tail") {
  Grid3 g(8, 8.0);
  auto f = gaussian_field(g, 1.5);
  EvolutionConfig cfg;
  cfg.dt = 0.05;
  cfg.t_max = 1.0;
  auto rep = cook_report(f, Potential::zero(), cfg);
  CHECK(rep.result.values == f.values);
  CHECK(cook_time_horizon(f, Potential::zero(), cfg, 100.0) == cfg.dt);
  // the tail check refuses a horizon that is too short
  cfg.eps_reg = 0.1;
  cfg.t_max = 0.5;
  CHECK_THROWS_AS(cook_report(f, Potential::gaussian(0.3, 2.0), cfg), Error);
  double T = cook_time_horizon(f, Potential::gaussian(0.3, 2.0), cfg, 400.0);
  cfg.t_max = T;
  CHECK_NOTHROW(cook_report(f, Potential::gaussian(0.3, 2.0), cfg));
}

TEST_CASE("discrete adjoint of the Cook map") {
  Grid3 g(8, 8.0);
  Potential pot = Potential::gaussian(0.4, 2.0, {0.3, 0.0, 0.0});
  EvolutionConfig cfg;
  cfg.dt = 0.05;
  cfg.t_max = 3.0;
  cfg.eps_reg = 0.5;
  cfg.tail_tol = 1.0;
  auto a = random_field(g, 1), b = random_field(g, 2);
  cplx lhs = inner(cook_wave_operator(a, pot, cfg), b);
  cplx rhs = inner(a, cook_adjoint(b, pot, cfg));
  CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));
}

TEST_CASE("projection onto the continuous spectrum") {
  Grid3 g(8, 8.0);
  Potential well = Potential::gaussian(-3.0, 2.0);
  auto ps = point_spectrum(well, g);
  REQUIRE(!ps.eigenfunctions.empty());
  auto f = gaussian_field(g, 1.5);
  auto p = project_continuous(f, ps);
  for (const auto& e : ps.eigenfunctions) CHECK(std::abs(inner(e, p)) < 1e-12);
  CHECK(relative_l2(project_continuous(p, ps), p) < 1e-12);
  CHECK(relative_l2(project_continuous(f, Potential::gaussian(0.3, 2.0)), f) == 0.0);
}
