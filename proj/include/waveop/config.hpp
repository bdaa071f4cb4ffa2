/**
 * @file config.hpp
 * @brief Experiment configuration (versioned JSON schema) and the runners
 *        behind each command-line subcommand.
 */

#ifndef WAVEOP_CONFIG_HPP_INCLUDED_
#define WAVEOP_CONFIG_HPP_INCLUDED_

#include <string>
#include <vector>

#include "json.hpp"
#include "waveop/verify.hpp"
#include "waveop/wiener.hpp"

namespace waveop {

constexpr int kConfigVersion = 1;

struct TimeSpec {
  Grid3 grid{64, 32.0};
  double dt = 0.0;     ///< 0 picks the largest stable step
  double t_max = 0.0;  ///< 0 picks the damped-tail horizon
  double t_cap = 400.0;
  double tail_tol = 1e-6;
  std::vector<double> intertwining_times{0.5, 1.0};
  std::size_t assemble_limit = 0;
};

struct SpectralSpec {
  Grid3 grid{8, 4.0};
  std::vector<double> lambdas{0.0, 1.0, 2.0, 5.0, 10.0};
  std::vector<double> epsilons{1e-3};
  std::vector<double> decay_lambdas{1.0, 20.0};
  Grid3 decay_grid{64, 4.0};  ///< must resolve the largest decay lambda
};

struct CorpusSpec {
  unsigned seed = 20261014u;
  int count = 10;
  double max_amplitude = 0.2;
};

struct StabilitySpec {
  std::vector<double> deltas{0.1, 0.05};  ///< relative amplitude perturbations
  double gamma = 0.25;
  Grid3 norm_grid{32, 16.0};
};

/// Scalar input for wiener-scalar: hat f(xi) = amplitude * exp(-(width |xi|)^2).
struct WienerSpec {
  int dimension = 1;
  int n = 4096;
  double box = 200.0;
  double amplitude = -0.5;
  double width = 1.0;
};

struct Tolerances {
  double oracle = 0.05;
  double isometry = 0.05;
  double w_minus = 0.05;
  double intertwining = 0.05;
  double stability = 0.30;
  double born_factor = 2.0;
  double wiener = 1e-8;
  double halfspace = 1e-10;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  Potential potential;
  std::string potential_file;  ///< tabulated potential in the field format, if set
  double probe_width = 2.0;
  Vec3 probe_center{0.0, 0.0, 0.0};
  Grid3 x_grid{16, 16.0};
  StructureGrids grids;
  double eps = 0.05;
  std::vector<double> eps_schedule;  ///< l-table and g1 runs; empty means {eps}
  FullGMethod method = FullGMethod::Resolvent;
  int born_order = 4;
  TimeSpec time;
  SpectralSpec spectral;
  CorpusSpec corpus;
  StabilitySpec stability;
  WienerSpec wiener;
  SuiteConfig suite;
  Tolerances tol;
  std::vector<std::string> checks{"oracle", "lp_bound", "w_minus", "intertwining",
                                  "stability", "inequality_suite", "born_law"};
  std::string output_dir = "waveop_out";
  unsigned seed = 1;

  /// Gaussian probe exp(-|x - c|^2 / (2 w^2)).
  PointFunction probe() const;
  std::vector<double> schedule() const;
};

/// ConfigInvalid naming the offending field for unknown keys, wrong types or inconsistent sizes.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_json(const ExperimentConfig& cfg);
/// Size consistency: x grid inside the Cook grid, application box equal to the x box.
void validate_config(const ExperimentConfig& cfg);

/// {"value", "tolerance", "pass"}; tolerance null marks a reported quantity without a limit.
nlohmann::json metric(double value, double tolerance);
nlohmann::json info(double value);

struct RunOutcome {
  nlohmann::json summary;
  bool pass = true;
};

/// Artifacts go under cfg.output_dir; the summary is also written there as summary.json.
RunOutcome run_l_table(const ExperimentConfig& cfg);
RunOutcome run_g1(const ExperimentConfig& cfg);
RunOutcome run_born(const ExperimentConfig& cfg, int order);
RunOutcome run_full_g(const ExperimentConfig& cfg);
RunOutcome run_cook(const ExperimentConfig& cfg);
RunOutcome run_spectral_scan(const ExperimentConfig& cfg);
/// input: field file (dimension 3) or empty for the configured scalar; check compares the residual with tol.wiener.
RunOutcome run_wiener_scalar(const ExperimentConfig& cfg, const std::string& input, bool check);
RunOutcome run_quant(double normV, double M0, double gamma);
RunOutcome run_verify_all(const ExperimentConfig& cfg);

/// Writes summary.json into the output directory (created if needed).
void write_summary(const std::string& dir, const std::string& name, const nlohmann::json& summary);

}  // namespace waveop

#endif  // WAVEOP_CONFIG_HPP_INCLUDED_
