#include "waveop/wiener.hpp"

#include <algorithm>
#include <cmath>

namespace waveop {

// ---------------------------------------------------------------- convolution algebra

ConvElement::ConvElement(int dim, int points, double box_length) : dimension(dim), n(points), box(box_length) {
  if (dim != 1 && dim != 3) throw Error(ErrorCode::DomainError, "convolution elements live in dimension 1 or 3");
  if (points < 2 || (points & (points - 1)) != 0 || !(box_length > 0.0))
    throw Error(ErrorCode::GridMismatch, "convolution grid needs a power-of-two size and a positive box");
  density.assign(size(), cplx(0.0));
}

double ConvElement::cell() const {
  double h = spacing();
  return dimension == 1 ? h : h * h * h;
}

std::size_t ConvElement::size() const {
  return dimension == 1 ? std::size_t(n) : std::size_t(n) * n * n;
}

std::vector<int> ConvElement::dims() const {
  return dimension == 1 ? std::vector<int>{n} : std::vector<int>{n, n, n};
}

double ConvElement::frequency(int i) const {
  int m = i < n / 2 ? i : i - n;
  return 2.0 * kPi * m / box;
}

double ConvElement::l1_norm() const {
  double s = 0.0;
  for (const auto& v : density) s += std::abs(v);
  return s * cell();
}

namespace {

// (-1)^{k_x + k_y + k_z}: the dual phase of the grid origin at -box/2
double parity(const ConvElement& e, std::size_t idx) {
  const std::size_t n = std::size_t(e.n);
  std::size_t s = idx % n;
  if (e.dimension == 3) s += (idx / n) % n + idx / (n * n);
  return (s & 1) ? -1.0 : 1.0;
}

double freq_radius(const ConvElement& e, std::size_t idx) {
  const std::size_t n = std::size_t(e.n);
  double a = e.frequency(int(idx % n));
  if (e.dimension == 1) return std::abs(a);
  double b = e.frequency(int((idx / n) % n)), c = e.frequency(int(idx / (n * n)));
  return std::sqrt(a * a + b * b + c * c);
}

Vec3 freq_vector(const ConvElement& e, std::size_t idx) {
  const std::size_t n = std::size_t(e.n);
  if (e.dimension == 1) return {e.frequency(int(idx)), 0.0, 0.0};
  return {e.frequency(int(idx % n)), e.frequency(int((idx / n) % n)), e.frequency(int(idx / (n * n)))};
}

Vec3 point_vector(const ConvElement& e, std::size_t idx) {
  const std::size_t n = std::size_t(e.n);
  if (e.dimension == 1) return {e.coord(int(idx)), 0.0, 0.0};
  return {e.coord(int(idx % n)), e.coord(int((idx / n) % n)), e.coord(int(idx / (n * n)))};
}

double l1_of_hat(const std::vector<cplx>& hat, const ConvElement& layout) {
  return from_transform(hat, layout.dimension, layout.n, layout.box).l1_norm();
}

cplx hat_at(const ConvElement& f, const Vec3& xi) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f.density[i] * std::exp(-kI * dot(xi, point_vector(f, i)));
  return s * f.cell();
}

}  // namespace

std::vector<cplx> transform(const ConvElement& f) {
  std::vector<cplx> out = f.density;
  fft_inplace(out, f.dims(), -1);
  const double c = f.cell();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c * parity(f, i);
  return out;
}

ConvElement from_transform(const std::vector<cplx>& hat, int dim, int n, double box) {
  ConvElement e(dim, n, box);
  if (hat.size() != e.size()) throw Error(ErrorCode::GridMismatch, "transform size does not match the grid");
  e.density = hat;
  for (std::size_t i = 0; i < e.size(); ++i) e.density[i] *= parity(e, i);
  fft_inplace(e.density, e.dims(), +1);
  const double s = 1.0 / (double(e.size()) * e.cell());
  for (auto& v : e.density) v *= s;
  return e;
}

ConvElement convolve(const ConvElement& f, const ConvElement& g) {
  if (!f.same_layout(g)) throw Error(ErrorCode::GridMismatch, "convolution of elements on different grids");
  auto a = transform(f), b = transform(g);
  std::vector<cplx> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    cplx fa = a[i] + (f.has_delta ? 1.0 : 0.0), gb = b[i] + (g.has_delta ? 1.0 : 0.0);
    c[i] = fa * gb - ((f.has_delta && g.has_delta) ? 1.0 : 0.0);
  }
  ConvElement out = from_transform(c, f.dimension, f.n, f.box);
  out.has_delta = f.has_delta && g.has_delta;
  return out;
}

ConvElement convolve_direct(const ConvElement& f, const ConvElement& g) {
  if (!f.same_layout(g)) throw Error(ErrorCode::GridMismatch, "convolution of elements on different grids");
  ConvElement out(f.dimension, f.n, f.box);
  const int n = f.n;
  const int d = f.dimension;
  // grid offsets: x_i - x_j maps to index (i - j + n/2) mod n for an origin at -box/2
  auto split = [&](std::size_t idx, int* c) {
    c[0] = int(idx % std::size_t(n));
    c[1] = d == 3 ? int((idx / std::size_t(n)) % std::size_t(n)) : 0;
    c[2] = d == 3 ? int(idx / (std::size_t(n) * n)) : 0;
  };
  auto join = [&](const int* c) {
    return d == 1 ? std::size_t(c[0]) : std::size_t(c[0]) + std::size_t(n) * (std::size_t(c[1]) + std::size_t(n) * c[2]);
  };
  for (std::size_t i = 0; i < f.size(); ++i) {
    int ci[3];
    split(i, ci);
    cplx acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      int cj[3], ck[3];
      split(j, cj);
      for (int a = 0; a < 3; ++a) ck[a] = (a < d) ? ((ci[a] - cj[a] + n / 2) % n + n) % n : 0;
      acc += f.density[j] * g.density[join(ck)];
    }
    out.density[i] = acc * f.cell();
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.has_delta) out.density[i] += g.density[i];
    if (g.has_delta) out.density[i] += f.density[i];
  }
  out.has_delta = f.has_delta && g.has_delta;
  return out;
}

double smooth_step(double t) {
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  double t4 = t * t * t * t;
  return 1.0 - t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}

double mollifier_hat(double r) { return smooth_step(r - 1.0); }

// ---------------------------------------------------------------- scalar inversion

namespace {

constexpr double kWienerThreshold = 1e-6;

// sum_{n >= 1} (-a)^n on the dual grid, stopped when the L1 norm of a term is below tol.
std::vector<cplx> neumann_hat(const std::vector<cplx>& a, const ConvElement& layout, int cap, double tol,
                              int* terms) {
  std::vector<cplx> term(a.size()), sum(a.size(), cplx(0.0));
  for (std::size_t i = 0; i < a.size(); ++i) term[i] = -a[i];
  for (int k = 1; k <= cap; ++k) {
    for (std::size_t i = 0; i < a.size(); ++i) sum[i] += term[i];
    double nrm = l1_of_hat(term, layout);
    if (nrm < tol) {
      if (terms) *terms = k;
      return sum;
    }
    for (std::size_t i = 0; i < a.size(); ++i) term[i] *= -a[i];
  }
  throw Error(ErrorCode::NoConvergence, "Neumann series did not reach tolerance within " + std::to_string(cap) + " terms");
}

std::vector<double> axis_centers(double reach, double spacing, double offset) {
  std::vector<double> c;
  int m = int(std::ceil(reach / spacing)) + 1;
  for (int k = -m; k <= m; ++k) {
    double x = (k + offset) * spacing;
    if (std::abs(x) <= reach + spacing) c.push_back(x);
  }
  return c;
}

}  // namespace

ScalarInverse scalar_invert(const ConvElement& f, double center_offset) {
  ScalarInverse out;
  out.g = ConvElement(f.dimension, f.n, f.box);
  out.params.center_offset = center_offset;
  const std::size_t N = f.size();
  auto fh = transform(f);
  double min_abs = INFINITY;
  bool zero = true;
  for (std::size_t i = 0; i < N; ++i) {
    min_abs = std::min(min_abs, std::abs(1.0 + fh[i]));
    if (f.density[i] != 0.0) zero = false;
  }
  if (min_abs <= kWienerThreshold)
    throw Error(ErrorCode::NotInvertible, "min |1 + f hat| = " + std::to_string(min_abs) + " on the dual grid");
  if (zero) return out;

  WienerParams& P = out.params;
  std::vector<double> rad(N);
  double rad_max = 0.0;
  for (std::size_t i = 0; i < N; ++i) rad_max = std::max(rad_max, rad[i] = freq_radius(f, i));

  // (1) far cutoff by doubling
  std::vector<cplx> far(N);
  double R = 1.0;
  for (;;) {
    for (std::size_t i = 0; i < N; ++i) far[i] = (1.0 - mollifier_hat(rad[i] / R)) * fh[i];
    P.far_norm = l1_of_hat(far, f);
    if (P.far_norm < 0.5) break;
    if (R > 2.0 * rad_max) throw Error(ErrorCode::NoConvergence, "far cutoff doubling did not reach ||.||_1 < 1/2");
    R *= 2.0;
  }
  P.R = R;
  // (2) far solution
  auto g0 = neumann_hat(far, f, P.neumann_cap, P.neumann_tol, &P.far_terms);

  // (3) patch radius by halving
  const double dual = 2.0 * kPi / f.box;
  double eps = 1.0;
  std::vector<Vec3> centers;
  std::vector<cplx> f0;
  for (;;) {
    // the bump of radius 4 eps must still reach the neighbouring dual points
    if (eps < 0.25 * dual) throw Error(ErrorCode::NoConvergence, "local patches cannot be made small on this grid");
    auto ax = axis_centers(3.0 * R, eps, center_offset);
    centers.clear();
    if (f.dimension == 1) {
      for (double a : ax) centers.push_back({a, 0.0, 0.0});
    } else {
      for (double c : ax)
        for (double b : ax)
          for (double a : ax)
            if (std::sqrt(a * a + b * b + c * c) <= 3.0 * R + eps) centers.push_back({a, b, c});
    }
    f0.assign(centers.size(), cplx(0.0));
    bool ok = true;
    for (std::size_t j = 0; j < centers.size() && ok; ++j) {
      f0[j] = hat_at(f, centers[j]);
      std::vector<cplx> d(N);
      for (std::size_t i = 0; i < N; ++i) {
        Vec3 xi = freq_vector(f, i);
        double r = norm(xi - centers[j]);
        d[i] = (fh[i] - f0[j]) * mollifier_hat(r / (2.0 * eps));
      }
      double modulus = l1_of_hat(d, f);
      if (!(modulus < 0.5 * std::abs(1.0 + f0[j]))) ok = false;
    }
    if (ok) break;
    eps *= 0.5;
  }
  P.eps_loc = eps;
  for (const auto& c : centers) P.partition_centers.push_back(c[0]);

  // (4) local solutions and (5) partition of unity
  std::vector<cplx> num(N, cplx(0.0));
  std::vector<double> den(N, 0.0);
  for (std::size_t j = 0; j < centers.size(); ++j) {
    std::vector<cplx> d(N), omega_big(N);
    for (std::size_t i = 0; i < N; ++i) {
      double r = norm(freq_vector(f, i) - centers[j]);
      double om = mollifier_hat(r / (2.0 * eps));
      omega_big[i] = om;
      d[i] = (fh[i] - f0[j]) * om / (1.0 + f0[j]);
    }
    int terms = 0;
    auto H = neumann_hat(d, f, P.neumann_cap, P.neumann_tol, &terms);
    P.max_local_terms = std::max(P.max_local_terms, terms);
    for (std::size_t i = 0; i < N; ++i) {
      double r = norm(freq_vector(f, i) - centers[j]);
      double b = mollifier_hat(r / eps);
      if (b == 0.0) continue;
      cplx gj = -fh[i] * omega_big[i] * (1.0 + H[i]) / (1.0 + f0[j]);
      num[i] += b * gj;
      den[i] += b;
    }
  }
  std::vector<cplx> gh(N);
  for (std::size_t i = 0; i < N; ++i) {
    double psi = smooth_step(rad[i] / R - 2.0);
    cplx local = den[i] > 0.0 ? num[i] / den[i] : cplx(0.0);
    if (psi > 0.0 && !(den[i] > 0.0))
      throw Error(ErrorCode::NoConvergence, "partition of unity leaves a frequency uncovered");
    gh[i] = (1.0 - psi) * g0[i] + psi * local;
  }
  out.g = from_transform(gh, f.dimension, f.n, f.box);
  out.residual = check_inverse(f, out.g);
  return out;
}

double check_inverse(const ConvElement& f, const ConvElement& g) {
  if (!f.same_layout(g)) throw Error(ErrorCode::GridMismatch, "check_inverse on different grids");
  auto a = transform(f), b = transform(g);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs((1.0 + a[i]) * (1.0 + b[i]) - 1.0));
  return m;
}

// ---------------------------------------------------------------- operator inversion

namespace {

double induced_inf(const Eigen::MatrixXcd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

Eigen::MatrixXcd neumann_matrix(const Eigen::MatrixXcd& a, int cap, double tol) {
  Eigen::MatrixXcd term = -a, sum = Eigen::MatrixXcd::Zero(a.rows(), a.cols());
  for (int k = 1; k <= cap; ++k) {
    sum += term;
    if (induced_inf(term) < tol) return sum;
    term = (-a * term).eval();
  }
  throw Error(ErrorCode::NoConvergence, "operator Neumann series did not converge");
}

}  // namespace

OperatorWienerReport operator_invert(const SliceAt& s, const EtaLattice& lattice, const OperatorWienerParams& p) {
  OperatorWienerReport rep;
  const std::size_t L = lattice.size();
  std::vector<Eigen::MatrixXcd> S(L);
  std::vector<double> rad(L), nrm(L);
  double rad_max = 0.0;
  for (std::size_t k = 0; k < L; ++k) {
    S[k] = s(lattice.eta(k));
    rad[k] = norm(lattice.eta(k));
    rad_max = std::max(rad_max, rad[k]);
    nrm[k] = induced_inf(S[k]);
  }
  const Eigen::Index N = S.empty() ? 0 : S[0].rows();
  if (double(N) * double(N) * 16.0 * double(L) > 2.0e9)
    throw Error(ErrorCode::DomainError, "operator_invert keeps one matrix per eta; this grid is too large");

  // high-frequency cutoff: ||S(eta)|| < 1/2 wherever |eta| >= R
  double R = p.R_start;
  for (;;) {
    bool ok = true;
    for (std::size_t k = 0; k < L; ++k)
      if (rad[k] >= R && !(nrm[k] < 0.5)) ok = false;
    if (ok) break;
    R *= 2.0;
    if (R > 2.0 * rad_max + 1.0) break;
  }
  rep.R = R;

  rep.inverse.assign(L, Eigen::MatrixXcd::Zero(N, N));
  std::vector<double> psi(L);
  for (std::size_t k = 0; k < L; ++k) {
    psi[k] = smooth_step(rad[k] / R - 2.0);
    if (psi[k] < 1.0) rep.inverse[k] = (1.0 - psi[k]) * neumann_matrix(S[k], p.neumann_cap, p.neumann_tol);
  }

  for (double eps = p.eps_start;; eps *= 0.5) {
    if (eps < p.eps_min * (1.0 - 1e-12))
      throw Error(ErrorCode::PatchFailure, "local contraction fails down to eps = " + std::to_string(p.eps_min));
    auto ax = axis_centers(3.0 * R, eps, 0.0);
    std::vector<Vec3> centers;
    for (double c : ax)
      for (double b : ax)
        for (double a : ax) {
          Vec3 e{a, b, c};
          bool used = false;
          for (std::size_t k = 0; k < L && !used; ++k)
            if (psi[k] > 0.0 && norm(lattice.eta(k) - e) < 2.0 * eps) used = true;
          if (used) centers.push_back(e);
        }
    std::vector<Eigen::MatrixXcd> num(L, Eigen::MatrixXcd::Zero(N, N));
    std::vector<double> den(L, 0.0);
    bool ok = true;
    for (std::size_t j = 0; j < centers.size() && ok; ++j) {
      Eigen::MatrixXcd m0 = s(centers[j]);
      m0.diagonal().array() += 1.0;
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m0);
      double rc = lu.rcond();
      if (!(rc > 0.0) || 1.0 / rc > kNearSingularCondition)
        throw Error(ErrorCode::NotInvertible, "I + S is singular near eta = (" + std::to_string(centers[j][0]) + ", " +
                                                  std::to_string(centers[j][1]) + ", " + std::to_string(centers[j][2]) + ")");
      Eigen::MatrixXcd inv0 = lu.inverse();  // I + U(eta0)
      Eigen::MatrixXcd U = inv0;
      U.diagonal().array() -= 1.0;
      Eigen::MatrixXcd s0 = m0;
      s0.diagonal().array() -= 1.0;
      for (std::size_t k = 0; k < L; ++k) {
        if (!(psi[k] > 0.0)) continue;
        double b = mollifier_hat(norm(lattice.eta(k) - centers[j]) / eps);
        if (b == 0.0) continue;
        Eigen::MatrixXcd A = inv0 * (S[k] - s0);  // D + U D
        if (!(induced_inf(A) < 0.5)) {
          ok = false;
          break;
        }
        Eigen::MatrixXcd H = neumann_matrix(A, p.neumann_cap, p.neumann_tol);
        num[k] += b * (U + H + H * U);
        den[k] += b;
      }
    }
    if (!ok) continue;
    for (std::size_t k = 0; k < L; ++k) {
      if (!(psi[k] > 0.0)) continue;
      if (!(den[k] > 0.0)) throw Error(ErrorCode::PatchFailure, "eta patches leave a lattice point uncovered");
      rep.inverse[k] += psi[k] * (num[k] / den[k]);
    }
    rep.eps = eps;
    rep.centers = centers.size();
    break;
  }

  for (std::size_t k = 0; k < L; ++k) {
    Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(N, N);
    Eigen::MatrixXcd a = I + rep.inverse[k], b = I + S[k];
    rep.max_left_residual = std::max(rep.max_left_residual, induced_inf(a * b - I));
    rep.max_right_residual = std::max(rep.max_right_residual, induced_inf(b * a - I));
  }
  return rep;
}

OperatorWienerReport operator_invert(const ScalarField& v, const EtaLattice& lattice, double eps,
                                     const OperatorWienerParams& p) {
  auto vs = std::make_shared<ScalarField>(v);
  return operator_invert([vs, eps](const Vec3& eta) { return t1_slice_at(*vs, eta, eps); }, lattice, p);
}

// ---------------------------------------------------------------- quantitative parameters

double QuantParams::log2_M2() const { return log_M2 / std::log(2.0); }

QuantParams quant_params(double normV, double M0, double gamma, double c) {
  if (!(gamma > 0.0) || gamma > 0.5) throw Error(ErrorCode::DomainError, "gamma must lie in (0, 1/2]");
  if (normV < 0.0 || M0 < 0.0 || !(c > 0.0)) throw Error(ErrorCode::DomainError, "normV, M0 >= 0 and c > 0 required");
  QuantParams q;
  q.normV = normV;
  q.M0 = M0;
  q.gamma = gamma;
  q.c = c;
  q.log_K = std::log1p(normV);
  q.K = 1.0 + normV;
  q.M1 = 1.0 + q.K * M0;
  q.log_M1 = std::log(q.M1);
  const double lc = std::log(c);
  q.log_L0 = -lc + (q.log_K + q.log_M1) / gamma;
  q.log_eps0 = lc - (10.0 + 33.0 / gamma) * q.log_K;
  q.log_eps1 = lc - 2.0 * q.log_K - 2.0 * q.log_M1;
  q.log_M2 = (37.0 + 105.0 / gamma) * q.log_K + (4.0 + 3.0 / gamma) * std::log1p(M0);
  q.L0 = std::exp(q.log_L0);
  q.eps0 = std::exp(q.log_eps0);
  q.eps1 = std::exp(q.log_eps1);
  q.M2 = std::exp(q.log_M2);
  return q;
}

double inverse_budget(double eps0, double eps1, double L0, double M1, double normS) {
  return std::pow(eps0, -3.0) * (std::pow(eps1, -3.0) + std::pow(L0 * M1 * normS, 3.0)) * M1;
}

double log_inverse_budget(double log_eps0, double log_eps1, double log_L0, double log_M1, double normS) {
  // log(a + b) with a = eps1^{-3}, b = (L0 M1 |S|)^3, evaluated stably
  double la = -3.0 * log_eps1;
  double lb = normS > 0.0 ? 3.0 * (log_L0 + log_M1 + std::log(normS)) : -INFINITY;
  double hi = std::max(la, lb), lo = std::min(la, lb);
  double lsum = hi + std::log1p(std::exp(lo - hi));
  return -3.0 * log_eps0 + lsum + log_M1;
}

}  // namespace waveop
