/**
 * @file waveop_cli.cpp
 * @brief Command-line front end: one subcommand per pipeline, JSON summary on
 *        stdout, exit 0 iff every declared tolerance is met.
 *
 * Exit codes: 0 pass, 1 tolerance failure, 2 invalid configuration or usage,
 * 3 any other error (the JSON on stdout names the error code).
 */

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "waveop/config.hpp"

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitError = 3;

int report_error(const waveop::Error& e) {
  nlohmann::json j = {{"error", {{"code", waveop::error_code_name(e.code())}, {"message", e.what()}}}, {"pass", false}};
  std::cout << j.dump(2) << std::endl;
  return e.code() == waveop::ErrorCode::ConfigInvalid ? kExitConfig : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"waveop: structure formula and Cook-method pipelines for the wave operator W+"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration (JSON)");
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
  };

  auto* l_table = app.add_subcommand("l-table", "tabulate L(r, omega) for each eps of the schedule");
  auto* g1 = app.add_subcommand("g1", "first-order structure function");
  int born_order = 2;
  auto* born = app.add_subcommand("born", "n-th Born structure term");
  born->add_option("--order", born_order, "Born order n >= 1");
  auto* full = app.add_subcommand("full-g", "full structure function g = g1 + h");
  auto* cook = app.add_subcommand("cook", "W+ f by Cook's method");
  auto* spectral = app.add_subcommand("spectral-scan", "limiting absorption scan, zero energy and decay");

  std::string wiener_input;
  bool wiener_check = false;
  auto* wiener_scalar = app.add_subcommand("wiener-scalar", "scalar Wiener inversion of delta + f");
  auto add_wiener_options = [&](CLI::App* sub) {
    sub->add_option("--input", wiener_input, "density f as a field file (3-D)");
    sub->add_flag("--check", wiener_check, "gate the exit code on the inversion residual");
  };
  add_wiener_options(wiener_scalar);

  double normV = 1.0, m0 = 1.0, gamma = 0.5;
  auto add_quant_options = [&](CLI::App* sub) {
    sub->add_option("--normV", normV, "norm of V")->required();
    sub->add_option("--m0", m0, "limiting absorption constant M0")->required();
    sub->add_option("--gamma", gamma, "exponent gamma in (0, 1/2]")->required();
  };
  auto* quant = app.add_subcommand("quant", "quantitative parameters of the conditioned inversion");
  add_quant_options(quant);

  auto* wiener = app.add_subcommand("wiener", "Wiener inversion tools");
  wiener->require_subcommand(1);
  auto* wiener_sub_scalar = wiener->add_subcommand("scalar", "same as wiener-scalar");
  add_wiener_options(wiener_sub_scalar);
  auto* wiener_sub_quant = wiener->add_subcommand("quant", "same as quant");
  add_quant_options(wiener_sub_quant);

  auto* verify = app.add_subcommand("verify", "verification pipelines");
  verify->require_subcommand(1);
  auto* verify_all = verify->add_subcommand("all", "run every configured check");

  for (auto* sub : {l_table, g1, born, full, cook, spectral, wiener_scalar, wiener_sub_scalar, verify_all})
    add_common(sub);
  for (auto* sub : {quant, wiener_sub_quant}) sub->add_option("--out", out_dir, "also write the summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    waveop::RunOutcome out;
    if (*quant || *wiener_sub_quant) {
      out = waveop::run_quant(normV, m0, gamma);
      if (!out_dir.empty()) waveop::write_summary(out_dir, "summary", out.summary);
    } else {
      waveop::ExperimentConfig cfg = config_path.empty() ? waveop::ExperimentConfig{} : waveop::load_config(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (*l_table) out = waveop::run_l_table(cfg);
      else if (*g1) out = waveop::run_g1(cfg);
      else if (*born) out = waveop::run_born(cfg, born_order);
      else if (*full) out = waveop::run_full_g(cfg);
      else if (*cook) out = waveop::run_cook(cfg);
      else if (*spectral) out = waveop::run_spectral_scan(cfg);
      else if (*wiener_scalar || *wiener_sub_scalar) out = waveop::run_wiener_scalar(cfg, wiener_input, wiener_check);
      else if (*verify_all) out = waveop::run_verify_all(cfg);
    }
    std::cout << out.summary.dump(2) << std::endl;
    return out.pass ? 0 : kExitFail;
  } catch (const waveop::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    return report_error(waveop::Error(waveop::ErrorCode::IoError, e.what()));
  }
}
