#include "waveop/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace waveop {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ConfigInvalid, "field '" + field + "': " + what);
}

void check_keys(const json& o, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!o.is_object()) invalid(path.empty() ? "<root>" : path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = o.begin(); it != o.end(); ++it)
    if (!ok.count(it.key())) invalid(join(path, it.key()), "unknown field");
}

template <class T>
void read(const json& o, const char* key, const std::string& path, T& out) {
  auto it = o.find(key);
  if (it == o.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    invalid(join(path, key), "wrong type");
  }
}

void read_number(const json& o, const char* key, const std::string& path, double& out) {
  auto it = o.find(key);
  if (it == o.end()) return;
  if (!it->is_number()) invalid(join(path, key), "expected a number");
  out = it->get<double>();
}

void read_vec3(const json& o, const char* key, const std::string& path, Vec3& out) {
  auto it = o.find(key);
  if (it == o.end()) return;
  if (!it->is_array() || it->size() != 3) invalid(join(path, key), "expected three numbers");
  for (int a = 0; a < 3; ++a) {
    if (!(*it)[std::size_t(a)].is_number()) invalid(join(path, key), "expected three numbers");
    out[std::size_t(a)] = (*it)[std::size_t(a)].get<double>();
  }
}

void read_grid(const json& o, const char* key, const std::string& path, Grid3& out) {
  auto it = o.find(key);
  if (it == o.end()) return;
  const std::string p = join(path, key);
  check_keys(*it, p, {"n", "box"});
  int n = out.n;
  double box = out.box;
  read(*it, "n", p, n);
  read_number(*it, "box", p, box);
  try {
    out = Grid3(n, box);
  } catch (const Error& e) {
    invalid(p, e.what());
  }
}

void read_axis(const json& o, const char* key, const std::string& path, AxisGrid& out) {
  auto it = o.find(key);
  if (it == o.end()) return;
  const std::string p = join(path, key);
  check_keys(*it, p, {"half_range", "count", "start", "step"});
  int count = out.count;
  read(*it, "count", p, count);
  if (count < 2) invalid(join(p, "count"), "needs at least two nodes");
  if (it->contains("half_range")) {
    if (it->contains("start") || it->contains("step")) invalid(p, "give half_range or start/step, not both");
    double hr = 0.0;
    read_number(*it, "half_range", p, hr);
    if (!(hr > 0.0)) invalid(join(p, "half_range"), "must be positive");
    out = AxisGrid::centered(hr, count);
    return;
  }
  double start = out.start, step = out.step;
  read_number(*it, "start", p, start);
  read_number(*it, "step", p, step);
  if (!(step > 0.0)) invalid(join(p, "step"), "must be positive");
  out = AxisGrid{start, step, count};
}

json grid_json(const Grid3& g) { return {{"n", g.n}, {"box", g.box}}; }
json axis_json(const AxisGrid& a) { return {{"start", a.start}, {"step", a.step}, {"count", a.count}}; }
json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

const std::set<std::string>& known_checks() {
  static const std::set<std::string> s{"oracle",    "lp_bound",         "halfspace", "w_minus", "intertwining",
                                       "stability", "inequality_suite", "born_law"};
  return s;
}

Potential parse_potential(const json& o, const std::string& path, std::string& file) {
  check_keys(o, path, {"gaussians", "file"});
  Potential pot;
  if (auto it = o.find("gaussians"); it != o.end()) {
    if (!it->is_array()) invalid(join(path, "gaussians"), "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string p = join(path, "gaussians[" + std::to_string(i) + "]");
      const json& t = (*it)[i];
      check_keys(t, p, {"amplitude", "width", "center"});
      Gaussian g;
      read_number(t, "amplitude", p, g.amplitude);
      read_number(t, "width", p, g.width);
      read_vec3(t, "center", p, g.center);
      if (!(g.width > 0.0)) invalid(join(p, "width"), "must be positive");
      pot.terms.push_back(g);
    }
  }
  read(o, "file", path, file);
  if (!file.empty()) {
    if (!pot.terms.empty()) invalid(path, "give gaussians or file, not both");
    pot = Potential::tabulated(read_field(file));
  }
  return pot;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path);
  os << text;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json error_json(const Error& e) { return {{"code", error_code_name(e.code())}, {"message", e.what()}}; }

json potential_json(const ExperimentConfig& cfg) {
  if (!cfg.potential_file.empty()) return {{"file", cfg.potential_file}};
  json terms = json::array();
  for (const auto& g : cfg.potential.terms)
    terms.push_back({{"amplitude", g.amplitude}, {"width", g.width}, {"center", vec_json(g.center)}});
  return {{"gaussians", terms}};
}

EvolutionConfig evolution_for(const ExperimentConfig& cfg, const ScalarField& f) {
  EvolutionConfig ec;
  ec.dt = cfg.time.dt > 0.0 ? cfg.time.dt : max_time_step(cfg.time.grid);
  ec.eps_reg = cfg.eps;
  ec.tail_tol = cfg.time.tail_tol;
  ec.t_max = cfg.time.t_max > 0.0 ? cfg.time.t_max : cook_time_horizon(f, cfg.potential, ec, cfg.time.t_cap);
  return ec;
}

OracleConfig oracle_config(const ExperimentConfig& cfg) {
  OracleConfig oc;
  oc.x_grid = cfg.x_grid;
  oc.grids = cfg.grids;
  oc.eps = cfg.eps;
  oc.method = cfg.method;
  oc.born_order = cfg.born_order;
  oc.cook_grid = cfg.time.grid;
  oc.dt = cfg.time.dt;
  oc.t_max = cfg.time.t_max;
  oc.t_cap = cfg.time.t_cap;
  oc.tail_tol = cfg.time.tail_tol;
  return oc;
}

RunOutcome finish(const ExperimentConfig& cfg, const std::string& command, json metrics, json extra = json::object()) {
  RunOutcome out;
  for (auto it = metrics.begin(); it != metrics.end(); ++it)
    if (it->is_object() && it->contains("pass") && !(*it)["pass"].get<bool>()) out.pass = false;
  out.summary = {{"command", command}, {"version", kConfigVersion}, {"metrics", metrics}, {"pass", out.pass}};
  for (auto it = extra.begin(); it != extra.end(); ++it) out.summary[it.key()] = *it;
  write_summary(cfg.output_dir, "summary", out.summary);
  return out;
}

WienerSpec parse_wiener(const json& o, const std::string& p) {
  WienerSpec w;
  check_keys(o, p, {"dimension", "n", "box", "amplitude", "width"});
  read(o, "dimension", p, w.dimension);
  read(o, "n", p, w.n);
  read_number(o, "box", p, w.box);
  read_number(o, "amplitude", p, w.amplitude);
  read_number(o, "width", p, w.width);
  if (w.dimension != 1 && w.dimension != 3) invalid(join(p, "dimension"), "must be 1 or 3");
  if (w.n < 2 || (w.n & (w.n - 1)) != 0) invalid(join(p, "n"), "must be a power of two");
  if (!(w.box > 0.0)) invalid(join(p, "box"), "must be positive");
  return w;
}

}  // namespace

// ---------------------------------------------------------------- config

PointFunction ExperimentConfig::probe() const {
  const double w2 = probe_width * probe_width;
  const Vec3 c = probe_center;
  return [w2, c](const Vec3& x) {
    Vec3 d = x - c;
    return cplx(std::exp(-dot(d, d) / (2.0 * w2)));
  };
}

std::vector<double> ExperimentConfig::schedule() const {
  return eps_schedule.empty() ? std::vector<double>{eps} : eps_schedule;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  check_keys(j, "", {"version", "potential", "probe", "x_grid", "sphere_order", "r_grid", "x_extent", "kernel_grid",
                     "eta_grid", "h_r_grid", "h_xw_step", "y_grid", "per_panel", "eps", "eps_schedule", "full_g",
                     "time", "spectral", "corpus", "stability", "wiener", "suite", "tolerances", "checks",
                     "output_dir", "seed"});
  read(j, "version", "", c.version);
  if (c.version != kConfigVersion) invalid("version", "unsupported version " + std::to_string(c.version));
  if (auto it = j.find("potential"); it != j.end()) c.potential = parse_potential(*it, "potential", c.potential_file);
  if (auto it = j.find("probe"); it != j.end()) {
    check_keys(*it, "probe", {"width", "center"});
    read_number(*it, "width", "probe", c.probe_width);
    read_vec3(*it, "center", "probe", c.probe_center);
    if (!(c.probe_width > 0.0)) invalid("probe.width", "must be positive");
  }
  read_grid(j, "x_grid", "", c.x_grid);
  StructureGrids& g = c.grids;
  read(j, "sphere_order", "", g.sphere_order);
  read_axis(j, "r_grid", "", g.line_r);
  read_number(j, "x_extent", "", g.x_extent);
  read_grid(j, "kernel_grid", "", g.kernel_grid);
  if (auto it = j.find("eta_grid"); it != j.end()) {
    check_keys(*it, "eta_grid", {"m", "box"});
    int m = g.lattice.m;
    double box = g.lattice.y_box;
    read(*it, "m", "eta_grid", m);
    read_number(*it, "box", "eta_grid", box);
    if (m < 1 || !(box > 0.0)) invalid("eta_grid", "needs m >= 1 and a positive box");
    g.lattice = EtaLattice(m, box);
  }
  read_axis(j, "h_r_grid", "", g.h_r);
  read_number(j, "h_xw_step", "", g.h_xw_step);
  read_grid(j, "y_grid", "", g.y_grid);
  read(j, "per_panel", "", g.per_panel);
  read_number(j, "eps", "", c.eps);
  read(j, "eps_schedule", "", c.eps_schedule);
  if (auto it = j.find("full_g"); it != j.end()) {
    check_keys(*it, "full_g", {"method", "born_order"});
    std::string m = "resolvent";
    read(*it, "method", "full_g", m);
    if (m == "resolvent") c.method = FullGMethod::Resolvent;
    else if (m == "born_sum") c.method = FullGMethod::BornSum;
    else invalid("full_g.method", "expected resolvent or born_sum");
    read(*it, "born_order", "full_g", c.born_order);
  }
  if (auto it = j.find("time"); it != j.end()) {
    const std::string p = "time";
    check_keys(*it, p, {"grid", "dt", "t_max", "t_cap", "tail_tol", "intertwining_times", "assemble_limit"});
    read_grid(*it, "grid", p, c.time.grid);
    read_number(*it, "dt", p, c.time.dt);
    read_number(*it, "t_max", p, c.time.t_max);
    read_number(*it, "t_cap", p, c.time.t_cap);
    read_number(*it, "tail_tol", p, c.time.tail_tol);
    read(*it, "intertwining_times", p, c.time.intertwining_times);
    read(*it, "assemble_limit", p, c.time.assemble_limit);
  }
  if (auto it = j.find("spectral"); it != j.end()) {
    const std::string p = "spectral";
    check_keys(*it, p, {"grid", "lambdas", "epsilons", "decay_lambdas", "decay_grid"});
    read_grid(*it, "grid", p, c.spectral.grid);
    read_grid(*it, "decay_grid", p, c.spectral.decay_grid);
    read(*it, "lambdas", p, c.spectral.lambdas);
    read(*it, "epsilons", p, c.spectral.epsilons);
    read(*it, "decay_lambdas", p, c.spectral.decay_lambdas);
  }
  if (auto it = j.find("corpus"); it != j.end()) {
    const std::string p = "corpus";
    check_keys(*it, p, {"seed", "count", "max_amplitude"});
    read(*it, "seed", p, c.corpus.seed);
    read(*it, "count", p, c.corpus.count);
    read_number(*it, "max_amplitude", p, c.corpus.max_amplitude);
    if (c.corpus.count < 0) invalid("corpus.count", "must be non-negative");
  }
  if (auto it = j.find("stability"); it != j.end()) {
    const std::string p = "stability";
    check_keys(*it, p, {"deltas", "gamma", "norm_grid"});
    read(*it, "deltas", p, c.stability.deltas);
    read_number(*it, "gamma", p, c.stability.gamma);
    read_grid(*it, "norm_grid", p, c.stability.norm_grid);
    if (c.stability.deltas.size() != 2) invalid("stability.deltas", "expected two perturbation sizes");
  }
  if (auto it = j.find("wiener"); it != j.end()) c.wiener = parse_wiener(*it, "wiener");
  if (auto it = j.find("suite"); it != j.end()) {
    const std::string p = "suite";
    SuiteConfig& s = c.suite;
    check_keys(*it, p, {"r_grid", "sphere_order", "norm_grid", "x_probe", "v_grid", "v_width", "rho_grid", "sigma",
                        "gamma1", "slack", "max_violation_fraction"});
    read_axis(*it, "r_grid", p, s.r);
    read(*it, "sphere_order", p, s.sphere_order);
    read_grid(*it, "norm_grid", p, s.norm_grid);
    read_grid(*it, "x_probe", p, s.x_probe);
    read_grid(*it, "v_grid", p, s.v_grid);
    read_number(*it, "v_width", p, s.v_width);
    read_axis(*it, "rho_grid", p, s.rho);
    read_number(*it, "sigma", p, s.sigma);
    read_number(*it, "gamma1", p, s.gamma1);
    read_number(*it, "slack", p, s.slack);
    read_number(*it, "max_violation_fraction", p, s.max_violation_fraction);
  }
  if (auto it = j.find("tolerances"); it != j.end()) {
    const std::string p = "tolerances";
    Tolerances& t = c.tol;
    check_keys(*it, p, {"oracle", "isometry", "w_minus", "intertwining", "stability", "born_factor", "wiener",
                        "halfspace"});
    read_number(*it, "oracle", p, t.oracle);
    read_number(*it, "isometry", p, t.isometry);
    read_number(*it, "w_minus", p, t.w_minus);
    read_number(*it, "intertwining", p, t.intertwining);
    read_number(*it, "stability", p, t.stability);
    read_number(*it, "born_factor", p, t.born_factor);
    read_number(*it, "wiener", p, t.wiener);
    read_number(*it, "halfspace", p, t.halfspace);
  }
  if (auto it = j.find("checks"); it != j.end()) {
    read(j, "checks", "", c.checks);
    for (std::size_t i = 0; i < c.checks.size(); ++i)
      if (!known_checks().count(c.checks[i])) invalid("checks[" + std::to_string(i) + "]", "unknown check '" + c.checks[i] + "'");
  }
  read(j, "output_dir", "", c.output_dir);
  read(j, "seed", "", c.seed);
  c.grids.application_box = c.x_grid.box;
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void validate_config(const ExperimentConfig& c) {
  try {
    embed_grid(c.x_grid, c.time.grid);
  } catch (const Error&) {
    invalid("x_grid", "its points must be points of time.grid");
  }
  if (c.grids.application_box != c.x_grid.box) invalid("x_grid", "application box must equal the x box");
  if (c.eps < 0.0) invalid("eps", "must be non-negative");
  for (double e : c.eps_schedule)
    if (e < 0.0) invalid("eps_schedule", "entries must be non-negative");
  if (c.born_order < 2) invalid("full_g.born_order", "must be at least 2");
  if (!(c.grids.h_xw_step > 0.0)) invalid("h_xw_step", "must be positive");
  if (c.grids.per_panel < 2) invalid("per_panel", "must be at least 2");
  static const std::set<int> orders{6, 14, 26, 38, 50};
  if (!orders.count(c.grids.sphere_order)) invalid("sphere_order", "expected 6, 14, 26, 38 or 50");
  if (!orders.count(c.suite.sphere_order)) invalid("suite.sphere_order", "expected 6, 14, 26, 38 or 50");
  if (c.time.dt < 0.0 || c.time.t_max < 0.0 || !(c.time.t_cap > 0.0) || !(c.time.tail_tol > 0.0))
    invalid("time", "dt, t_max must be >= 0 and t_cap, tail_tol positive");
  if (c.time.dt > 0.0) {
    double eta = c.time.grid.nyquist();
    if (c.time.dt * eta * eta > 0.5) invalid("time.dt", "exceeds the stability limit 0.5 / eta_max^2 of time.grid");
  }
  if (!(c.stability.gamma > 0.0) || c.stability.gamma > 0.5) invalid("stability.gamma", "must lie in (0, 1/2]");
}

json config_json(const ExperimentConfig& c) {
  const StructureGrids& g = c.grids;
  return {
      {"version", c.version},
      {"potential", potential_json(c)},
      {"probe", {{"width", c.probe_width}, {"center", vec_json(c.probe_center)}}},
      {"x_grid", grid_json(c.x_grid)},
      {"sphere_order", g.sphere_order},
      {"r_grid", axis_json(g.line_r)},
      {"x_extent", g.x_extent},
      {"kernel_grid", grid_json(g.kernel_grid)},
      {"eta_grid", {{"m", g.lattice.m}, {"box", g.lattice.y_box}}},
      {"h_r_grid", axis_json(g.h_r)},
      {"h_xw_step", g.h_xw_step},
      {"y_grid", grid_json(g.y_grid)},
      {"per_panel", g.per_panel},
      {"eps", c.eps},
      {"eps_schedule", c.eps_schedule},
      {"full_g", {{"method", c.method == FullGMethod::Resolvent ? "resolvent" : "born_sum"}, {"born_order", c.born_order}}},
      {"time",
       {{"grid", grid_json(c.time.grid)},
        {"dt", c.time.dt},
        {"t_max", c.time.t_max},
        {"t_cap", c.time.t_cap},
        {"tail_tol", c.time.tail_tol},
        {"intertwining_times", c.time.intertwining_times},
        {"assemble_limit", c.time.assemble_limit}}},
      {"spectral",
       {{"grid", grid_json(c.spectral.grid)},
        {"lambdas", c.spectral.lambdas},
        {"epsilons", c.spectral.epsilons},
        {"decay_lambdas", c.spectral.decay_lambdas},
        {"decay_grid", grid_json(c.spectral.decay_grid)}}},
      {"corpus", {{"seed", c.corpus.seed}, {"count", c.corpus.count}, {"max_amplitude", c.corpus.max_amplitude}}},
      {"stability",
       {{"deltas", c.stability.deltas}, {"gamma", c.stability.gamma}, {"norm_grid", grid_json(c.stability.norm_grid)}}},
      {"wiener",
       {{"dimension", c.wiener.dimension},
        {"n", c.wiener.n},
        {"box", c.wiener.box},
        {"amplitude", c.wiener.amplitude},
        {"width", c.wiener.width}}},
      {"suite",
       {{"r_grid", axis_json(c.suite.r)},
        {"sphere_order", c.suite.sphere_order},
        {"norm_grid", grid_json(c.suite.norm_grid)},
        {"x_probe", grid_json(c.suite.x_probe)},
        {"v_grid", grid_json(c.suite.v_grid)},
        {"v_width", c.suite.v_width},
        {"rho_grid", axis_json(c.suite.rho)},
        {"sigma", c.suite.sigma},
        {"gamma1", c.suite.gamma1},
        {"slack", c.suite.slack},
        {"max_violation_fraction", c.suite.max_violation_fraction}}},
      {"tolerances",
       {{"oracle", c.tol.oracle},
        {"isometry", c.tol.isometry},
        {"w_minus", c.tol.w_minus},
        {"intertwining", c.tol.intertwining},
        {"stability", c.tol.stability},
        {"born_factor", c.tol.born_factor},
        {"wiener", c.tol.wiener},
        {"halfspace", c.tol.halfspace}}},
      {"checks", c.checks},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
  };
}

json metric(double value, double tolerance) {
  return {{"value", value}, {"tolerance", tolerance}, {"pass", value <= tolerance}};
}

json info(double value) { return {{"value", value}, {"tolerance", nullptr}, {"pass", true}}; }

void write_summary(const std::string& dir, const std::string& name, const json& summary) {
  std::filesystem::create_directories(dir);
  write_text((std::filesystem::path(dir) / (name + ".json")).string(), summary.dump(2) + "\n");
}

// ---------------------------------------------------------------- runners

RunOutcome run_l_table(const ExperimentConfig& cfg) {
  const SphereQuadrature sphere = sphere_rule(cfg.grids.sphere_order);
  std::ostringstream csv;
  csv << "eps,r,omega,re,im\n";
  json metrics = json::object();
  for (double eps : cfg.schedule()) {
    LTable t = l_table(cfg.potential, cfg.grids.line_r, sphere, eps);
    double l1 = 0.0, mx = 0.0;
    for (std::size_t o = 0; o < sphere.size(); ++o)
      for (int k = 0; k < t.r.count; ++k) {
        cplx v = t.at(k, o);
        csv << num(eps) << ',' << num(t.r.at(k)) << ',' << o << ',' << num(v.real()) << ',' << num(v.imag()) << '\n';
        l1 += sphere.weights[o] * t.r.step * std::abs(v);
        mx = std::max(mx, std::abs(v));
      }
    metrics["l1_norm_eps_" + num(eps)] = info(l1);
    metrics["max_abs_eps_" + num(eps)] = info(mx);
  }
  write_text(out_path(cfg, "l_table.csv"), csv.str());
  return finish(cfg, "l-table", metrics, {{"config", config_json(cfg)}});
}

RunOutcome run_g1(const ExperimentConfig& cfg) {
  json metrics = json::object();
  const auto sched = cfg.schedule();
  for (std::size_t i = 0; i < sched.size(); ++i) {
    StructureFunction g = g1(cfg.potential, cfg.grids, sched[i]);
    const std::string tag = "g1_" + std::to_string(i);
    save_structure(out_path(cfg, tag), g);
    write_text(out_path(cfg, tag + "_norms.csv"), structure_norm_csv(g));
    metrics["structure_norm_eps_" + num(sched[i])] = info(structure_norm(g));
    metrics["x_omega_regularity_eps_" + num(sched[i])] = info(x_omega_regularity(g));
  }
  return finish(cfg, "g1", metrics, {{"config", config_json(cfg)}});
}

RunOutcome run_born(const ExperimentConfig& cfg, int order) {
  if (order < 1) invalid("order", "must be at least 1");
  StructureFunction g = born_g_n(cfg.potential, order, cfg.grids, cfg.eps);
  const std::string tag = "born_" + std::to_string(order);
  save_structure(out_path(cfg, tag), g);
  write_text(out_path(cfg, tag + "_norms.csv"), structure_norm_csv(g));
  json metrics = {{"structure_norm", info(structure_norm(g))}};
  if (g.grid) metrics["dropped_mass"] = info(g.grid->dropped);
  return finish(cfg, "born", metrics, {{"order", order}, {"config", config_json(cfg)}});
}

RunOutcome run_full_g(const ExperimentConfig& cfg) {
  FullGReport r = full_g(cfg.potential, cfg.grids, cfg.eps, cfg.method, cfg.born_order);
  save_structure(out_path(cfg, "full_g"), r.g);
  write_text(out_path(cfg, "full_g_norms.csv"), structure_norm_csv(r.g));
  json metrics = {{"structure_norm", info(structure_norm(r.g))}, {"x_omega_regularity", info(x_omega_regularity(r.g))}};
  if (cfg.method == FullGMethod::BornSum) {
    metrics["born_ratio"] = metric(r.ratio, 1.0);
    metrics["tail_bound"] = info(r.tail_bound);
    for (std::size_t i = 0; i < r.term_norms.size(); ++i)
      metrics["term_norm_" + std::to_string(i + 1)] = info(r.term_norms[i]);
  }
  return finish(cfg, "full-g", metrics, {{"config", config_json(cfg)}});
}

RunOutcome run_cook(const ExperimentConfig& cfg) {
  ScalarField f = make_field(cfg.time.grid, cfg.probe());
  EvolutionConfig ec = evolution_for(cfg, f);
  CookReport r = cook_report(f, cfg.potential, ec);
  write_field(out_path(cfg, "probe.bin"), f);
  write_field(out_path(cfg, "cook.bin"), r.result);
  const double fn = l2_norm(f);
  json metrics = {{"tail", metric(r.tail, ec.tail_tol)},
                  {"isometry", info(fn > 0.0 ? l2_norm(r.result) / fn : 1.0)},
                  {"t_max", info(ec.t_max)},
                  {"dt", info(ec.dt)},
                  {"steps", info(double(r.steps))}};
  return finish(cfg, "cook", metrics, {{"config", config_json(cfg)}});
}

RunOutcome run_spectral_scan(const ExperimentConfig& cfg) {
  const SpectralSpec& s = cfg.spectral;
  M0Report m0 = m0_scan(cfg.potential, s.lambdas, s.epsilons, s.grid);
  write_text(out_path(cfg, "m0.csv"), m0.csv());
  ZeroEnergyReport z = zero_energy_check(cfg.potential, s.grid);
  const ScalarField v = sample_potential(cfg.potential, s.grid);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double lam : s.lambdas) {
    double n1 = birman_schwinger(SpectralPoint::plus(lam), v).inf_norm();
    lo = std::min(lo, n1);
    hi = std::max(hi, n1);
  }
  const double variation = hi > 0.0 ? (hi - lo) / hi : 0.0;
  DecayReport d = high_energy_decay(cfg.potential, s.decay_lambdas, s.decay_grid);
  std::ostringstream csv;
  csv << "lambda,first_norm,squared_norm\n";
  for (std::size_t i = 0; i < d.lambdas.size(); ++i)
    csv << num(d.lambdas[i]) << ',' << num(d.first_norm[i]) << ',' << num(d.squared_norm[i]) << '\n';
  write_text(out_path(cfg, "decay.csv"), csv.str());
  json metrics = {{"M0", info(m0.M0)},
                  {"zero_energy_inverse_norm", info(z.inverse_norm)},
                  {"zero_energy_condition", metric(z.condition, kNearSingularCondition)},
                  {"first_norm_variation", metric(variation, 1e-10)}};
  if (d.lambdas.size() >= 2 && d.squared_norm.front() > 0.0)
    metrics["decay_ratio"] = metric(d.squared_norm.back() / d.squared_norm.front(), 0.2);
  return finish(cfg, "spectral-scan", metrics,
                {{"regular", z.regular}, {"boundary_max", m0.boundary_max}, {"singular", m0.singular},
                 {"config", config_json(cfg)}});
}

RunOutcome run_wiener_scalar(const ExperimentConfig& cfg, const std::string& input, bool check) {
  ConvElement f;
  if (!input.empty()) {
    ScalarField in = read_field(input);
    f = ConvElement(3, in.grid.n, in.grid.box);
    f.density = in.values;
  } else {
    const WienerSpec& w = cfg.wiener;
    ConvElement layout(w.dimension, w.n, w.box);
    std::vector<cplx> hat(layout.size());
    const std::size_t n = std::size_t(w.n);
    for (std::size_t i = 0; i < hat.size(); ++i) {
      double a = layout.frequency(int(i % n)), r2 = a * a;
      if (w.dimension == 3) {
        double b = layout.frequency(int((i / n) % n)), c = layout.frequency(int(i / (n * n)));
        r2 += b * b + c * c;
      }
      hat[i] = w.amplitude * std::exp(-w.width * w.width * r2);
    }
    f = from_transform(hat, w.dimension, w.n, w.box);
  }
  ScalarInverse inv = scalar_invert(f);
  if (f.dimension == 1) {
    std::ostringstream csv;
    csv << "x,re,im\n";
    for (int i = 0; i < inv.g.n; ++i)
      csv << num(inv.g.coord(i)) << ',' << num(inv.g.density[std::size_t(i)].real()) << ','
          << num(inv.g.density[std::size_t(i)].imag()) << '\n';
    write_text(out_path(cfg, "wiener_g.csv"), csv.str());
  } else {
    ScalarField g(Grid3(inv.g.n, inv.g.box));
    g.values = inv.g.density;
    write_field(out_path(cfg, "wiener_g.bin"), g);
  }
  const double residual = check_inverse(f, inv.g);
  json metrics = {{"residual", check ? metric(residual, cfg.tol.wiener) : info(residual)},
                  {"R", info(inv.params.R)},
                  {"eps_loc", info(inv.params.eps_loc)},
                  {"centers", info(double(inv.params.partition_centers.size()))},
                  {"far_norm", metric(inv.params.far_norm, 0.5)},
                  {"g_l1_norm", info(inv.g.l1_norm())}};
  return finish(cfg, "wiener-scalar", metrics, {{"input", input}, {"config", config_json(cfg)}});
}

RunOutcome run_quant(double normV, double M0, double gamma) {
  QuantParams q = quant_params(normV, M0, gamma);
  json metrics = {{"K", info(q.K)},       {"M1", info(q.M1)},     {"L0", info(q.L0)},
                  {"eps0", info(q.eps0)}, {"eps1", info(q.eps1)}, {"M2", info(q.M2)},
                  {"log_K", info(q.log_K)},       {"log_M1", info(q.log_M1)},     {"log_L0", info(q.log_L0)},
                  {"log_eps0", info(q.log_eps0)}, {"log_eps1", info(q.log_eps1)}, {"log_M2", info(q.log_M2)},
                  {"log2_M2", info(q.log2_M2())}};
  RunOutcome out;
  out.summary = {{"command", "quant"},
                 {"version", kConfigVersion},
                 {"inputs", {{"normV", normV}, {"M0", M0}, {"gamma", gamma}, {"c", q.c}}},
                 {"log2_M2", q.log2_M2()},
                 {"metrics", metrics},
                 {"pass", true}};
  return out;
}

RunOutcome run_verify_all(const ExperimentConfig& cfg) {
  std::set<std::string> want(cfg.checks.begin(), cfg.checks.end());
  json checks = json::object();
  bool all = true;
  std::optional<StructureFunction> g;
  auto structure = [&]() -> const StructureFunction& {
    if (!g) g = full_g(cfg.potential, cfg.grids, cfg.eps, cfg.method, cfg.born_order).g;
    return *g;
  };
  std::optional<std::vector<Potential>> corpus;
  auto get_corpus = [&]() -> const std::vector<Potential>& {
    if (!corpus) corpus = make_corpus(cfg.corpus.seed, cfg.corpus.count, cfg.corpus.max_amplitude);
    return *corpus;
  };
  auto run = [&](const std::string& name, const std::function<json()>& body) {
    if (!want.count(name)) return;
    json entry;
    try {
      json metrics = body();
      bool pass = true;
      for (auto it = metrics.begin(); it != metrics.end(); ++it)
        if (it->is_object() && it->contains("pass") && !(*it)["pass"].get<bool>()) pass = false;
      entry = {{"metrics", metrics}, {"pass", pass}};
    } catch (const Error& e) {
      entry = {{"error", error_json(e)}, {"pass", false}};
    }
    all = all && entry["pass"].get<bool>();
    checks[name] = entry;
  };

  run("oracle", [&] {
    OracleReport r = oracle_equivalence(structure(), cfg.potential, cfg.probe(), oracle_config(cfg));
    return json{{"rel_l2_error", metric(r.rel_l2_error, cfg.tol.oracle)},
                {"structure_norm", info(r.structure_norm)},
                {"g_part_norm", info(r.g_part_norm)},
                {"cook_isometry_defect", metric(std::abs(r.cook_isometry - 1.0), cfg.tol.isometry)},
                {"cook_tail", metric(r.cook_tail, cfg.time.tail_tol)},
                {"t_max", info(r.t_max)}};
  });
  run("lp_bound", [&] {
    const double inf = std::numeric_limits<double>::infinity();
    LpScan s = lp_bound_scan(structure(), {1.0, 2.0, 4.0, inf}, lp_probes(cfg.x_grid));
    json m = {{"bound", info(s.bound)}};
    for (std::size_t i = 0; i < s.p.size(); ++i)
      m[std::isinf(s.p[i]) ? std::string("ratio_p_max") : "ratio_p_" + num(s.p[i])] = metric(s.max_ratio[i], s.bound);
    return m;
  });
  run("halfspace", [&] {
    ScalarField f = make_field(cfg.x_grid, cfg.probe());
    std::vector<Halfspace> hs;
    for (int a = 0; a < 3; ++a)
      for (double sgn : {1.0, -1.0})
        for (double off : {0.0, 1.0}) {
          Halfspace h;
          h.normal = {0.0, 0.0, 0.0};
          h.normal[std::size_t(a)] = sgn;
          h.offset = off;
          hs.push_back(h);
        }
    auto norm = weighted_l2([](const Vec3& x) { return cplx(1.0 / (1.0 + dot(x, x))); });
    HalfspaceReport r = halfspace_bound(structure(), f, hs, norm);
    const double excess = r.ratio - (1.0 + std::max(1.0, r.cut_constant) * r.majorant);
    return json{{"ratio", info(r.ratio)},
                {"majorant", info(r.majorant)},
                {"cut_constant", metric(r.cut_constant, 1.0)},
                {"excess_over_bound", metric(excess, cfg.tol.halfspace)}};
  });
  run("w_minus", [&] {
    ScalarField f = make_field(cfg.time.grid, cfg.probe());
    EvolutionConfig ec = evolution_for(cfg, f);
    WMinusReport r = w_minus_and_adjoint(cfg.potential, f, ec, cfg.time.assemble_limit);
    json m = {{"adjoint_isometry_defect", metric(r.isometry_defect, cfg.tol.isometry)},
              {"w_minus_star_defect", metric(r.w_minus_star_defect, cfg.tol.w_minus)}};
    if (r.matrix_adjoint_error >= 0.0) m["matrix_adjoint_error"] = metric(r.matrix_adjoint_error, 1e-8);
    return m;
  });
  run("intertwining", [&] {
    ScalarField f = make_field(cfg.time.grid, cfg.probe());
    EvolutionConfig ec = evolution_for(cfg, f);
    json m = json::object();
    for (double t : cfg.time.intertwining_times)
      m["defect_t_" + num(t)] = metric(intertwining_defect(cfg.potential, f, t, ec).defect, cfg.tol.intertwining);
    return m;
  });
  run("stability", [&] {
    StabilityConfig sc;
    sc.grids = cfg.grids;
    sc.eps = cfg.eps;
    sc.method = cfg.method;
    sc.born_order = cfg.born_order;
    sc.gamma = cfg.stability.gamma;
    sc.norm_grid = cfg.stability.norm_grid;
    const StructureFunction& ga = structure();
    StabilityReport r1 = stability_check(ga, cfg.potential, cfg.potential.scaled(1.0 + cfg.stability.deltas[0]), sc);
    StabilityReport r2 = stability_check(ga, cfg.potential, cfg.potential.scaled(1.0 + cfg.stability.deltas[1]), sc);
    const double hi = std::max(r1.ratio, r2.ratio);
    const double spread = hi > 0.0 ? std::abs(r1.ratio - r2.ratio) / hi : 0.0;
    return json{{"ratio_1", info(r1.ratio)},
                {"ratio_2", info(r2.ratio)},
                {"delta_g_norm_1", info(r1.delta_g_norm)},
                {"bracket_1", info(r1.bracket.value())},
                {"ratio_spread", metric(spread, cfg.tol.stability)}};
  });
  run("inequality_suite", [&] {
    json m = json::object();
    for (const auto& c : inequality_suite(get_corpus(), cfg.suite)) {
      m[c.name + "_constant"] = info(c.constant);
      const double frac = c.holdout > 0 ? double(c.violations) / c.holdout : 0.0;
      m[c.name + "_violation_fraction"] = metric(frac, cfg.suite.max_violation_fraction);
    }
    return m;
  });
  run("born_law", [&] {
    BornLawReport r = born_law(get_corpus(), cfg.grids, cfg.eps);
    return json{{"worst_factor", metric(r.worst_factor, cfg.tol.born_factor)}};
  });

  RunOutcome out;
  out.pass = all;
  out.summary = {{"command", "verify all"}, {"version", kConfigVersion}, {"checks", checks}, {"pass", all},
                 {"config", config_json(cfg)}};
  write_summary(cfg.output_dir, "verify_all", out.summary);
  return out;
}

}  // namespace waveop
