#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "waveop/kernelalg.hpp"

using namespace waveop;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

// e^{-i x1.eta} K(x1, x0) e^{i x0.eta} built from the plain Birman-Schwinger matrix.
Eigen::MatrixXcd phased(const OperatorMatrix& bs, const Vec3& eta) {
  const Grid3& g = bs.grid;
  Eigen::MatrixXcd out = bs.op;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      out(Eigen::Index(i), Eigen::Index(j)) *= std::polar(1.0, dot(g.point(j) - g.point(i), eta));
  return out;
}

ScalarField random_field(const Grid3& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

}  // namespace

TEST_CASE("eta lattice geometry") {
  EtaLattice l(2, 5.0);
  CHECK(l.per_axis() == 5);
  CHECK(l.size() == 125);
  CHECK(l.eta_spacing() == doctest::Approx(2.0 * kPi / 5.0));
  CHECK(l.y_spacing() == doctest::Approx(1.0));
  CHECK(l.y_cell() == doctest::Approx(1.0));
  for (std::size_t k = 0; k < l.size(); ++k) {
    auto o = l.offsets(k);
    std::size_t back = std::size_t(o[0] + 2) + 5 * (std::size_t(o[1] + 2) + 5 * std::size_t(o[2] + 2));
    CHECK(back == k);
    CHECK(l.y(k)[1] == doctest::Approx(o[1] * 1.0));
    CHECK(l.eta(k)[2] == doctest::Approx(o[2] * 2.0 * kPi / 5.0));
  }
  CHECK(norm(l.eta(62)) == 0.0);  // centre of the lattice
}

TEST_CASE("t1 slices are phase-conjugated birman schwinger operators") {
  Grid3 g(4, 2.0);
  Potential pot = Potential::gaussian(0.6, 1.0, {0.1, 0.0, -0.1});
  auto v = sample_potential(pot, g);
  EtaLattice l(1, 3.0);
  const double eps = 0.05;
  auto t1 = t1_plus(v, l, eps);
  auto t1p = t1_plus(v, l, eps, Side::Plus);
  CHECK(t1.identity_coefficient() == 0.0);
  for (std::size_t k : {std::size_t(0), std::size_t(5), std::size_t(13), std::size_t(26)}) {
    Vec3 eta = l.eta(k);
    auto want = phased(birman_schwinger(SpectralPoint::minus(norm(eta), eps), v), eta);
    CHECK(max_abs(t1.slice(k) - want) < 1e-13);
    auto want_p = phased(birman_schwinger(SpectralPoint::plus(norm(eta), eps), v), eta);
    CHECK(max_abs(t1p.slice(k) - want_p) < 1e-13);
    CHECK(max_abs(t1_slice_at(v, eta, eps) - want) < 1e-13);
  }
}

TEST_CASE("resolvent identity holds slice by slice") {
  Grid3 g(8, 4.0);
  Potential pot = Potential::gaussian(-0.3, 1.0);
  EtaLattice l(1, 5.0);
  auto t1 = t1_plus(pot, g, l, 0.05);
  auto t = t_plus(pot, g, l, 0.05);
  auto r = resolvent_identity_residual(t1, t);
  CHECK(r.left < 1e-8);
  CHECK(r.right < 1e-8);
  // T = I - (I + T1)^{-1}
  Eigen::MatrixXcd a = t1.slice(3);
  a.diagonal().array() += 1.0;
  Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(a.rows(), a.cols());
  CHECK(max_abs(t.slice(3) - (id - a.inverse())) < 1e-10);
}

TEST_CASE("composition algebra") {
  Grid3 g(4, 2.0);
  auto v = sample_potential(Potential::gaussian(0.5, 1.0), g);
  EtaLattice l(1, 3.0);
  auto t1 = t1_plus(v, l, 0.1);
  auto id = EtaKernel::identity(g, l);
  auto zero = EtaKernel::zero(g, l);
  CHECK(z_norm(id) == 1.0);
  CHECK(z_norm(zero) == 0.0);
  auto left = compose(id, t1), right = compose(t1, id);
  auto sq = compose(t1, t1), p2 = power(t1, 2), tn = t_n_plus(Potential::gaussian(0.5, 1.0), 2, g, l, 0.1);
  auto three = power(t1, 3);
  for (std::size_t k = 0; k < l.size(); k += 4) {
    Eigen::MatrixXcd s = t1.slice(k);
    CHECK(max_abs(left.slice(k) - s) < 1e-15);
    CHECK(max_abs(right.slice(k) - s) < 1e-15);
    CHECK(max_abs(left.full_slice(k) - s) < 1e-15);
    CHECK(max_abs(sq.slice(k) - s * s) < 1e-14);
    CHECK(max_abs(p2.slice(k) - s * s) < 1e-14);
    CHECK(max_abs(tn.slice(k) - s * s) < 1e-14);
    CHECK(max_abs(three.slice(k) - s * s * s) < 1e-14);
    CHECK(max_abs(compose(zero, t1).slice(k) - Eigen::MatrixXcd::Zero(s.rows(), s.cols())) == 0.0);
  }
  // (2I)(I + A) = 2I + 2A
  auto shifted = compose(EtaKernel(g, l, 1.0, [t1](std::size_t k) { return t1.slice(k); }), EtaKernel(g, l, 2.0, nullptr));
  CHECK(shifted.identity_coefficient() == 2.0);
  CHECK(max_abs(shifted.slice(7) - 2.0 * t1.slice(7)) < 1e-15);
  CHECK_THROWS_AS(compose(t1, EtaKernel::identity(g, EtaLattice(2, 3.0))), Error);
  CHECK_THROWS_AS(t_n_plus(Potential::gaussian(0.5, 1.0), 5, g, l, 0.1), Error);
  CHECK_THROWS_AS(power(t1, 0), Error);
}

TEST_CASE("z norm is the largest slice row sum") {
  Grid3 g(4, 2.0);
  auto v = sample_potential(Potential::gaussian(0.5, 1.0), g);
  EtaLattice l(1, 3.0);
  auto t1 = t1_plus(v, l, 0.2);
  double want = 0.0;
  for (std::size_t k = 0; k < l.size(); ++k)
    want = std::max(want, birman_schwinger(SpectralPoint::minus(norm(l.eta(k)), 0.2), v).inf_norm());
  CHECK(z_norm(t1) == doctest::Approx(want).epsilon(1e-13));
  auto y = y_norm(t1, Potential::gaussian(0.5, 1.0), 0.0);
  CHECK(y.z_part == doctest::Approx(z_norm(t1)));
  CHECK(y.value >= y.z_part);
  CHECK(y_norm_probes(g).size() == 12);
}

TEST_CASE("inverse eta transform") {
  Grid3 g(4, 2.0);
  EtaLattice l(1, 3.0);
  const std::size_t N = g.size(), L = l.size();
  // Constant spectrum: a delta at y = 0 of mass 1.
  auto delta = kernel_from_eta(g, l, std::vector<cplx>(N * L, 1.0));
  for (std::size_t y = 0; y < L; ++y) {
    double want = norm(l.y(y)) == 0.0 ? 1.0 / l.y_cell() : 0.0;
    CHECK(std::abs(delta.at(5, y) - want) < 1e-13);
  }
  // Single frequency: e^{i eta0 . y} / y_box^3.
  const std::size_t k0 = 16;
  std::vector<cplx> hat(N * L, 0.0);
  for (std::size_t x = 0; x < N; ++x) hat[x + N * k0] = double(x + 1);
  auto wave = kernel_from_eta(g, l, hat);
  for (std::size_t y = 0; y < L; ++y) {
    cplx want = 3.0 * std::polar(1.0, dot(l.eta(k0), l.y(y))) / 27.0;
    CHECK(std::abs(wave.at(2, y) - want) < 1e-13);
  }
  CHECK(xinf_l1_norm(wave) == doctest::Approx(L * double(N) / 27.0 * l.y_cell()).epsilon(1e-12));
  CHECK_THROWS_AS(kernel_from_eta(g, l, std::vector<cplx>(3)), Error);
}

TEST_CASE("contraction by a function") {
  Grid3 g(4, 2.0);
  EtaLattice l(1, 3.0);
  auto f = random_field(g, 3);
  auto c = contract(f, EtaKernel(g, l, 2.0, nullptr));
  std::size_t centre = l.size() / 2;
  for (std::size_t x = 0; x < g.size(); ++x) {
    CHECK(std::abs(c.at(x, centre) - 2.0 * f[x] / l.y_cell()) < 1e-12);
    CHECK(std::abs(c.at(x, 0)) < 1e-12);
  }
  // Remainder: hat(x1, eta) = sum_x0 slice(x1, x0) f(x0), checked through a direct inverse sum.
  auto v = sample_potential(Potential::gaussian(0.5, 1.0), g);
  auto t1 = t1_plus(v, l, 0.1);
  auto k = contract(f, t1);
  Eigen::VectorXcd fv(Eigen::Index(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) fv(Eigen::Index(i)) = f[i];
  for (std::size_t y : {std::size_t(0), std::size_t(13), std::size_t(20)}) {
    cplx want = 0.0;
    for (std::size_t e = 0; e < l.size(); ++e)
      want += (t1.slice(e) * fv)(9) * std::polar(1.0, dot(l.eta(e), l.y(y)));
    want /= 27.0;
    CHECK(std::abs(k.at(9, y) - want) < 1e-12);
  }
  auto many = contract_many({f, f}, t1);
  CHECK(many.size() == 2);
  for (std::size_t i = 0; i < k.values.size(); ++i) CHECK(std::abs(many[1].values[i] - k.values[i]) < 1e-13);
  CHECK(t1_plus(ScalarField(g), l, 0.1).is_zero_remainder());
  CHECK_THROWS_AS(contract(random_field(Grid3(8, 2.0), 1), t1), Error);
}
