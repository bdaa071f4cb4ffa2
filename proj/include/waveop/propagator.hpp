/**
 * @file propagator.hpp
 * @brief Time-domain oracle: free and perturbed Schrodinger evolution on the
 *        periodic box, Cook's formula for W+, time-domain Born terms and the
 *        projection onto the continuous spectrum.
 */

#ifndef WAVEOP_PROPAGATOR_HPP_INCLUDED_
#define WAVEOP_PROPAGATOR_HPP_INCLUDED_

#include "waveop/fields.hpp"
#include "waveop/resolvent.hpp"

namespace waveop {

struct EvolutionConfig {
  double dt = 0.01;
  double t_max = 10.0;
  double eps_reg = 0.0;     ///< damping e^{-eps t} in the Cook integrand
  double tail_tol = 1e-6;   ///< limit for ||V e^{-i t_max H0} f|| e^{-eps t_max} / ||f||

  /// StepTooLarge unless dt * eta_max^2 <= 0.5 with eta_max the per-axis Nyquist frequency.
  void validate(const Grid3& grid) const;
  int steps() const;
};

/// Largest dt allowed on grid.
double max_time_step(const Grid3& grid);

/// e^{-itH0} f as the exact multiplier e^{-it|xi|^2}; t may be negative.
ScalarField free_evolve(const ScalarField& f, double t);

/// e^{-itH} f by Strang splitting with steps of at most cfg.dt; t may be negative.
ScalarField perturbed_evolve(const ScalarField& f, double t, const Potential& pot, const EvolutionConfig& cfg);
ScalarField perturbed_evolve(const ScalarField& f, double t, const ScalarField& v, const EvolutionConfig& cfg);

struct CookReport {
  ScalarField result;
  double tail = 0.0;  ///< damped integrand norm at t_max relative to ||f||
  int steps = 0;
};

/// f + i int_0^t_max e^{itH - eps t} V e^{-itH0} f dt, trapezoid in t; WrapAround if the tail check fails.
CookReport cook_report(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg);
ScalarField cook_wave_operator(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg);

/// Discrete adjoint of the Cook map: f - i sum_n w_n e^{-eps t_n} e^{i t_n H0} V U^{-n} f.
ScalarField cook_adjoint(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg);

/// W-* f = f + i int_{-inf}^0 e^{itH0} V e^{-itH} f dt with the same damping and trapezoid rule.
ScalarField w_minus_adjoint_time(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg);

/// Smallest multiple of dt at which the relative damped tail drops below cfg.tail_tol (capped at cap).
double cook_time_horizon(const ScalarField& f, const Potential& pot, const EvolutionConfig& cfg, double cap);

/// Born term n in {1, 2} of the damped wave operator, with free propagators only.
ScalarField born_term_time(const ScalarField& f, const Potential& pot, int n, const EvolutionConfig& cfg);

/// f - sum <f_l, f> f_l over the eigenfunctions.
ScalarField project_continuous(const ScalarField& f, const PointSpectrum& ps);
ScalarField project_continuous(const ScalarField& f, const Potential& pot);

}  // namespace waveop

#endif  // WAVEOP_PROPAGATOR_HPP_INCLUDED_
