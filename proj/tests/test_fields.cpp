#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <random>

#include "waveop/fields.hpp"

using namespace waveop;

namespace {

// Simpson rule on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double h = (b - a) / n, s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double monomial_moment(int a, int b, int c) {
  if (a % 2 || b % 2 || c % 2) return 0.0;
  auto g = [](double x) { return std::tgamma(x); };
  return 2.0 * g((a + 1) / 2.0) * g((b + 1) / 2.0) * g((c + 1) / 2.0) / g((a + b + c + 3) / 2.0);
}

Potential random_mixture(std::mt19937& rng) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0), pos(-1.5, 1.5), wid(0.8, 1.6);
  Potential p;
  int terms = 1 + int(rng() % 3);
  for (int t = 0; t < terms; ++t)
    p.terms.push_back({amp(rng), {pos(rng), pos(rng), pos(rng)}, wid(rng)});
  return p;
}

}  // namespace

TEST_CASE("grid rejects non power of two sizes") {
  CHECK_THROWS_AS(Grid3(12, 12.0), Error);
  CHECK_NOTHROW(Grid3(16, 16.0));
  Grid3 g(16, 16.0);
  CHECK(g.spacing() == 1.0);
  CHECK(g.point(g.index(8, 8, 8)) == Vec3{0.0, 0.0, 0.0});
}

TEST_CASE("sample_potential") {
  Grid3 g(16, 16.0);
  auto zero = sample_potential(Potential::zero(), g);
  CHECK(max_norm(zero) == 0.0);

  auto f = sample_potential(Potential::gaussian(1.0, 2.0), g);
  CHECK(f[g.index(8, 8, 8)].real() == doctest::Approx(1.0).epsilon(1e-15));
  auto h = sample_potential(Potential::gaussian(1.0, 2.0), g);
  CHECK(h[g.index(9, 8, 8)].real() == doctest::Approx(std::exp(-1.0 / 8.0)));

  Grid3 fine(32, 16.0);
  auto u = sample_potential(Potential::gaussian(1.0, 1.0), fine);
  CHECK(u[fine.index(18, 16, 16)].real() == doctest::Approx(0.6065306597126334));
  CHECK(u[fine.index(18, 16, 16)].imag() == 0.0);

  CHECK_THROWS_AS(sample_potential(Potential::gaussian(1.0, 1.0), g), Error);

  auto tab = Potential::tabulated(u);
  auto back = sample_potential(tab, fine);
  CHECK(back.values == u.values);
}

TEST_CASE("fourier transform conventions") {
  Grid3 g(32, 16.0);
  ScalarField delta(g);
  delta[g.index(16, 16, 16)] = 1.0;
  auto flat = fourier_transform(delta, Direction::Forward);
  for (std::size_t i = 0; i < g.size(); ++i)
    REQUIRE(std::abs(flat[i] - cplx(g.cell_volume())) < 1e-15);

  auto gauss = make_field(g, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
  auto gh = fourier_transform(gauss, Direction::Forward);
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec3 xi = g.frequency(i);
    double exact = std::pow(2.0 * kPi, 1.5) * std::exp(-0.5 * dot(xi, xi));
    err = std::max(err, std::abs(gh[i] - exact));
  }
  CHECK(err < 1e-6);

  // Potential::hat agrees with the sampled transform for an off-center mixture
  Potential p;
  p.terms.push_back({0.7, {0.5, -1.0, 0.25}, 1.1});
  auto ph = fourier_transform(sample_potential(p, g), Direction::Forward);
  double perr = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) perr = std::max(perr, std::abs(ph[i] - p.hat(g.frequency(i))));
  CHECK(perr < 1e-6);

  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  ScalarField r(g);
  for (auto& v : r.values) v = cplx(nd(rng), nd(rng));
  auto back = fourier_transform(fourier_transform(r, Direction::Forward), Direction::Inverse);
  double rt = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) rt = std::max(rt, std::abs(back[i] - r[i]));
  CHECK(rt < 1e-12);

  // Plancherel with (2 pi)^-3 dual^3
  auto rh = fourier_transform(r, Direction::Forward);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lhs += std::norm(r[i]);
    rhs += std::norm(rh[i]);
  }
  lhs *= g.cell_volume();
  double d = g.dual_spacing();
  rhs *= d * d * d / std::pow(2.0 * kPi, 3);
  CHECK(std::abs(lhs - rhs) / lhs < 1e-10);
}

TEST_CASE("b_norm") {
  Grid3 g(64, 4.0);
  ScalarField zero(g);
  CHECK(b_norm(zero, 0.5, false) == 0.0);

  auto ball = make_field(g, [](const Vec3& x) { return norm(x) < 1.0 ? 1.0 : 0.0; });
  double bn = b_norm(ball, 0.5, false);
  CHECK(bn == doctest::Approx(std::sqrt(l2_norm(ball) * l2_norm(ball))).epsilon(1e-12));
  CHECK(bn == doctest::Approx(std::sqrt(4.0 * kPi / 3.0)).epsilon(0.01));
  CHECK(b_norm(ball, 3.0, false) == doctest::Approx(bn).epsilon(1e-14));

  // radial oracle for e^{-|x|^2/2}: shells [2^k, 2^{k+1})
  Grid3 fine(64, 16.0);
  auto gauss = make_field(fine, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
  auto shell = [](double a, double b) {
    return std::sqrt(4.0 * kPi * simpson([](double r) { return r * r * std::exp(-r * r); }, a, b, 2000));
  };
  double oracle = shell(0.0, 1.0);
  for (int k = 0; k < 3; ++k) oracle += std::pow(2.0, 0.5 * k) * shell(std::ldexp(1.0, k), std::ldexp(1.0, k + 1));
  CHECK(b_norm(gauss, 0.5, false) == doctest::Approx(oracle).epsilon(0.01));

  double dotted_oracle = 0.0;
  for (int k = -6; k < 3; ++k)
    dotted_oracle += std::pow(2.0, 0.5 * k) * shell(std::ldexp(1.0, k), std::ldexp(1.0, k + 1));
  CHECK(b_norm(gauss, 0.5, true) == doctest::Approx(dotted_oracle).epsilon(0.02));

  double prev = 0.0;
  for (double a : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    double v = b_norm(gauss, a, false);
    CHECK(v >= prev);
    prev = v;
  }

  auto wide = make_field(fine, [](const Vec3& x) { return std::exp(-0.02 * dot(x, x)); });
  CHECK_THROWS_AS(b_norm(wide, 0.5, false), Error);
}

TEST_CASE("lorentz_norm") {
  Grid3 g(64, 4.0);
  ScalarField zero(g);
  CHECK(lorentz_norm(zero, 1.5, 1.0) == 0.0);

  auto ball = make_field(g, [](const Vec3& x) { return norm(x) < 1.0 ? 1.0 : 0.0; });
  double vol = std::pow(l2_norm(ball), 2.0);
  CHECK(lorentz_norm(ball, 1.5, 1.0) == doctest::Approx(std::pow(vol, 2.0 / 3.0) * 1.5).epsilon(1e-12));
  CHECK(lorentz_norm(ball, 1.5, 1.0) == doctest::Approx(3.901).epsilon(0.01));
  CHECK(lorentz_norm(ball, 2.0, INFINITY) == doctest::Approx(std::sqrt(vol)).epsilon(1e-12));

  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  Grid3 s(16, 8.0);
  for (int trial = 0; trial < 5; ++trial) {
    ScalarField r(s);
    for (auto& v : r.values) v = cplx(nd(rng), nd(rng));
    for (double p : {1.5, 2.0, 3.0}) {
      double a = lorentz_norm(r, p, p), b = lp_norm(r, p);
      CHECK(std::abs(a - b) / b < 1e-10);
    }
  }
}

TEST_CASE("Lorentz norm is dominated by the dotted B^{1/2} norm on a mixture family") {
  std::mt19937 rng(11);
  Grid3 g(64, 24.0);
  std::vector<double> ratio;
  for (int i = 0; i < 10; ++i) {
    auto f = sample_potential(random_mixture(rng), g);
    ratio.push_back(lorentz_norm(f, 1.5, 1.0) / b_norm(f, 0.5, true));
  }
  double c = *std::max_element(ratio.begin(), ratio.begin() + 5);
  for (int i = 5; i < 10; ++i) CHECK(ratio[i] <= 1.05 * c);
}

TEST_CASE("sphere rules") {
  CHECK_THROWS_AS(sphere_rule(7), Error);
  auto r6 = sphere_rule(6);
  REQUIRE(r6.size() == 6);
  for (double w : r6.weights) CHECK(w == doctest::Approx(4.0 * kPi / 6.0).epsilon(1e-15));

  for (int order : {6, 14, 26, 38, 50}) {
    auto r = sphere_rule(order);
    CAPTURE(order);
    REQUIRE(int(r.size()) == order);
    double s = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      s += w;
    }
    CHECK(std::abs(s - 4.0 * kPi) < 1e-12);
    for (const auto& x : r.nodes) CHECK(std::abs(norm(x) - 1.0) < 1e-14);
    for (int a = 0; a <= r.degree; ++a)
      for (int b = 0; a + b <= r.degree; ++b)
        for (int c = 0; a + b + c <= r.degree; ++c) {
          double q = 0.0;
          for (std::size_t j = 0; j < r.size(); ++j)
            q += r.weights[j] * std::pow(r.nodes[j][0], a) * std::pow(r.nodes[j][1], b) *
                 std::pow(r.nodes[j][2], c);
          CHECK(std::abs(q - monomial_moment(a, b, c)) < 1e-12);
        }
    // closed under antipodes
    for (const auto& x : r.nodes) {
      bool found = false;
      for (const auto& y : r.nodes) found |= norm(x + y) < 1e-14;
      CHECK(found);
    }
  }
  auto r26 = sphere_rule(26);
  double second = 0.0;
  for (std::size_t j = 0; j < r26.size(); ++j) second += r26.weights[j] * r26.nodes[j][0] * r26.nodes[j][0];
  CHECK(second == doctest::Approx(4.0 * kPi / 3.0).epsilon(1e-13));

  auto pr = product_sphere_rule(6);
  CHECK(pr.degree == 11);
  double s2 = 0.0;
  for (std::size_t j = 0; j < pr.size(); ++j)
    s2 += pr.weights[j] * std::pow(pr.nodes[j][2], 10);
  CHECK(s2 == doctest::Approx(monomial_moment(0, 0, 10)).epsilon(1e-12));
}

TEST_CASE("gauss_legendre integrates polynomials exactly") {
  for (int n : {1, 2, 5, 8, 13}) {
    std::vector<double> x, w;
    gauss_legendre(n, -0.5, 2.0, x, w);
    for (int i = 1; i < n; ++i) CHECK(x[i] > x[i - 1]);
    for (int d = 0; d < 2 * n; ++d) {
      double q = 0.0;
      for (int i = 0; i < n; ++i) q += w[i] * std::pow(x[i], d);
      double exact = (std::pow(2.0, d + 1) - std::pow(-0.5, d + 1)) / (d + 1);
      CHECK(q == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("field file round trip") {
  Grid3 g(8, 3.0);
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  ScalarField f(g);
  for (auto& v : f.values) v = cplx(nd(rng), nd(rng));
  std::string path = "test_fields_roundtrip.wopf";
  write_field(path, f);
  auto back = read_field(path);
  CHECK(back.grid == g);
  CHECK(back.values == f.values);
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  char magic[5] = {0};
  REQUIRE(std::fread(magic, 1, 4, fp) == 4);
  std::fclose(fp);
  CHECK(std::string(magic) == "WOPF");
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_field("does_not_exist.wopf"), Error);
}
