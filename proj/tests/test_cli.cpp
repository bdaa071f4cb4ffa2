#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

std::string cli() {
  const char* p = std::getenv("WAVEOP_CLI");
  REQUIRE(p != nullptr);
  return p;
}

Run run(const std::string& args) {
  Run r;
  std::string cmd = cli() + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("waveop_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small grids so every command finishes in seconds.
json small_config(const json& potential, const fs::path& out) {
  return {{"version", 1},
          {"potential", potential},
          {"x_grid", {{"n", 8}, {"box", 8}}},
          {"sphere_order", 6},
          {"r_grid", {{"half_range", 8}, {"count", 32}}},
          {"kernel_grid", {{"n", 4}, {"box", 4}}},
          {"eta_grid", {{"m", 1}, {"box", 3}}},
          {"h_r_grid", {{"half_range", 4}, {"count", 8}}},
          {"y_grid", {{"n", 8}, {"box", 8}}},
          {"time", {{"grid", {{"n", 16}, {"box", 16}}}, {"t_max", 1.0}}},
          {"corpus", {{"count", 4}, {"max_amplitude", 0.0}}},
          {"output_dir", out.string()}};
}

}  // namespace

TEST_CASE("quant prints the closed-form exponent") {
  auto r = run("quant --normV 1 --m0 1 --gamma 0.5");
  CHECK(r.status == 0);
  auto j = json::parse(r.out);
  CHECK(j["log2_M2"].get<double>() == 257.0);
  CHECK(j["pass"].get<bool>());
}

TEST_CASE("bad inputs map to their exit codes") {
  auto dir = scratch("bad");
  write(dir / "bad.json", R"({"version":1,"tme":{}})");
  auto r = run("g1 --config " + (dir / "bad.json").string());
  CHECK(r.status == 2);
  auto j = json::parse(r.out);
  CHECK(j["error"]["code"] == "ConfigInvalid");
  CHECK(j["error"]["message"].get<std::string>().find("'tme'") != std::string::npos);

  write(dir / "version.json", R"({"version":7})");
  CHECK(run("g1 --config " + (dir / "version.json").string()).status == 2);
  CHECK(run("g1 --config " + (dir / "missing.json").string()).status != 0);
  CHECK(run("no-such-command").status == 2);

  auto dom = run("quant --normV 1 --m0 1 --gamma 0.7");
  CHECK(dom.status == 3);
  CHECK(json::parse(dom.out)["error"]["code"] == "DomainError");
}

TEST_CASE("zero potential passes verify all") {
  auto dir = scratch("zero");
  json cfg = small_config({{"gaussians", json::array()}}, dir / "out");
  cfg["checks"] = {"oracle", "lp_bound", "halfspace", "w_minus", "intertwining", "stability", "inequality_suite", "born_law"};
  write(dir / "zero.json", cfg.dump());
  auto r = run("verify all --config " + (dir / "zero.json").string());
  CHECK(r.status == 0);
  auto j = json::parse(r.out);
  CHECK(j["pass"].get<bool>());
  CHECK(j["checks"]["oracle"]["metrics"]["rel_l2_error"]["value"].get<double>() == 0.0);
  CHECK(j["checks"]["oracle"]["metrics"]["structure_norm"]["value"].get<double>() == 0.0);
  CHECK(fs::exists(dir / "out" / "verify_all.json"));
}

TEST_CASE("reruns are bit identical") {
  auto dir = scratch("rerun");
  json pot = {{"gaussians", {{{"amplitude", 0.1}, {"width", 2.0}}}}};
  write(dir / "a.json", small_config(pot, dir / "a").dump());
  write(dir / "b.json", small_config(pot, dir / "b").dump());
  for (const char* cmd : {"l-table", "g1"}) {
    CAPTURE(cmd);
    REQUIRE(run(std::string(cmd) + " --config " + (dir / "a.json").string()).status == 0);
    REQUIRE(run(std::string(cmd) + " --config " + (dir / "b.json").string()).status == 0);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto name = e.path().filename();
    if (name.extension() == ".json") continue;  // summaries echo the output_dir
    REQUIRE(fs::exists(dir / "b" / name));
    CHECK(slurp(e.path()) == slurp(dir / "b" / name));
    ++compared;
  }
  CHECK(compared >= 2);
}
