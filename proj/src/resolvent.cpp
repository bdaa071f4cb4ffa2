#include "waveop/resolvent.hpp"

#include <algorithm>
#include <mutex>
#include <random>
#include <sstream>

namespace waveop {

cplx SpectralPoint::z() const {
  return cplx(lambda * lambda - below * below, side == Side::Plus ? epsilon : -epsilon);
}

cplx SpectralPoint::branch_root() const {
  cplx up = std::sqrt(cplx(lambda * lambda - below * below, epsilon));
  return side == Side::Plus ? up : std::conj(up);
}

cplx SpectralPoint::kappa() const {
  cplx k = branch_root();
  return side == Side::Plus ? k : -k;
}

SpectralPoint SpectralPoint::conjugate() const {
  SpectralPoint s = *this;
  s.side = side == Side::Plus ? Side::Minus : Side::Plus;
  return s;
}

cplx free_resolvent_kernel(const SpectralPoint& z, const Vec3& x, const Vec3& y) {
  double r = norm(x - y);
  if (r == 0.0) throw Error(ErrorCode::SingularPoint, "free resolvent kernel at x == y");
  return std::exp(kI * z.kappa() * r) / (4.0 * kPi * r);
}

ScalarField OperatorMatrix::apply(const ScalarField& f) const {
  if (f.grid != grid) throw Error(ErrorCode::GridMismatch, "operator and field grids differ");
  Eigen::Map<const Eigen::VectorXcd> in(f.values.data(), Eigen::Index(f.values.size()));
  ScalarField out(grid);
  Eigen::Map<Eigen::VectorXcd>(out.values.data(), Eigen::Index(out.values.size())) = op * in;
  return out;
}

double OperatorMatrix::inf_norm() const {
  if (op.size() == 0) return 0.0;
  return op.cwiseAbs().rowwise().sum().maxCoeff();
}

OperatorMatrix identity_operator(const Grid3& grid) {
  OperatorMatrix m;
  m.grid = grid;
  m.weight = grid.cell_volume();
  m.op = Eigen::MatrixXcd::Identity(Eigen::Index(grid.size()), Eigen::Index(grid.size()));
  return m;
}

std::vector<cplx> free_kernel_offsets(const SpectralPoint& z, const Grid3& grid) {
  const int n = grid.n, w = 2 * n - 1;
  const double h = grid.spacing();
  const cplx kappa = z.kappa();
  std::vector<cplx> table(std::size_t(w) * w * w);
  for (int dz = -(n - 1); dz < n; ++dz)
    for (int dy = -(n - 1); dy < n; ++dy)
      for (int dx = -(n - 1); dx < n; ++dx) {
        std::size_t idx = std::size_t(dx + n - 1) + std::size_t(w) * (std::size_t(dy + n - 1) + std::size_t(w) * (dz + n - 1));
        if (dx == 0 && dy == 0 && dz == 0) {
          table[idx] = kCubeInverseDistance / (4.0 * kPi * h);
        } else {
          double r = h * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          table[idx] = std::exp(kI * kappa * r) / (4.0 * kPi * r);
        }
      }
  return table;
}

OperatorMatrix birman_schwinger(const SpectralPoint& z, const Potential& pot, const Grid3& grid) {
  return birman_schwinger(z, sample_potential(pot, grid));
}

OperatorMatrix birman_schwinger(const SpectralPoint& z, const ScalarField& v) {
  const Grid3& grid = v.grid;
  const int n = grid.n, w = 2 * n - 1;
  const Eigen::Index N = Eigen::Index(grid.size());
  const double h3 = grid.cell_volume();
  auto table = free_kernel_offsets(z, grid);
  OperatorMatrix m;
  m.grid = grid;
  m.weight = h3;
  m.op.resize(N, N);
  parallel_for(std::size_t(N), [&](std::size_t j) {
    int jx = int(j % n), jy = int((j / n) % n), jz = int(j / (std::size_t(n) * n));
    cplx vj = v[j].real() * h3;
    for (std::size_t i = 0; i < std::size_t(N); ++i) {
      int ix = int(i % n), iy = int((i / n) % n), iz = int(i / (std::size_t(n) * n));
      std::size_t off = std::size_t(ix - jx + n - 1) +
                        std::size_t(w) * (std::size_t(iy - jy + n - 1) + std::size_t(w) * (iz - jz + n - 1));
      m.op(Eigen::Index(i), Eigen::Index(j)) = table[off] * vj;
    }
  });
  return m;
}

OperatorMatrix ResolventInverse::rv_v() const {
  OperatorMatrix m = inverse;
  m.op = -m.op;
  m.op.diagonal().array() += 1.0;
  return m;
}

ResolventInverse resolvent_inverse(const SpectralPoint& z, const Potential& pot, const Grid3& grid) {
  return resolvent_inverse(z, sample_potential(pot, grid));
}

ResolventInverse resolvent_inverse(const SpectralPoint& z, const ScalarField& v) {
  OperatorMatrix k = birman_schwinger(z, v);
  k.op.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(k.op);
  double rc = lu.rcond();
  double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(cond <= kNearSingularCondition)) {
    std::ostringstream os;
    os << "I + R0(z)V has condition estimate " << cond << " at z = " << z.z();
    throw Error(ErrorCode::NearSingular, os.str());
  }
  ResolventInverse out;
  out.condition = cond;
  out.inverse.grid = v.grid;
  out.inverse.weight = v.grid.cell_volume();
  out.inverse.op = lu.inverse();
  return out;
}

// ---------------------------------------------------------------- FFT resolvent

FreeResolventFFT::FreeResolventFFT(const SpectralPoint& z, const Grid3& grid) : grid_(grid) {
  const int n = grid.n;
  m_ = 2 * n;
  const int w = 2 * n - 1;
  auto table = free_kernel_offsets(z, grid);
  kernel_hat_.assign(std::size_t(m_) * m_ * m_, cplx(0.0));
  auto wrap = [&](int d) { return d < 0 ? d + m_ : d; };
  for (int dz = -(n - 1); dz < n; ++dz)
    for (int dy = -(n - 1); dy < n; ++dy)
      for (int dx = -(n - 1); dx < n; ++dx) {
        std::size_t src = std::size_t(dx + n - 1) + std::size_t(w) * (std::size_t(dy + n - 1) + std::size_t(w) * (dz + n - 1));
        std::size_t dst = std::size_t(wrap(dx)) + std::size_t(m_) * (std::size_t(wrap(dy)) + std::size_t(m_) * wrap(dz));
        kernel_hat_[dst] = table[src];
      }
  fft_inplace(kernel_hat_, {m_, m_, m_}, -1);
}

std::vector<cplx> FreeResolventFFT::apply(const std::vector<cplx>& u) const {
  const int n = grid_.n;
  std::vector<cplx> buf(std::size_t(m_) * m_ * m_, cplx(0.0));
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix)
        buf[std::size_t(ix) + std::size_t(m_) * (iy + std::size_t(m_) * iz)] = u[grid_.index(ix, iy, iz)];
  fft_inplace(buf, {m_, m_, m_}, -1);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= kernel_hat_[i];
  fft_inplace(buf, {m_, m_, m_}, +1);
  const double scale = grid_.cell_volume() / double(buf.size());
  std::vector<cplx> out(grid_.size());
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix)
        out[grid_.index(ix, iy, iz)] = buf[std::size_t(ix) + std::size_t(m_) * (iy + std::size_t(m_) * iz)] * scale;
  return out;
}

// ---------------------------------------------------------------- scans

std::string M0Report::csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "lambda,epsilon,side,norm\n";
  for (const auto& e : table)
    os << e.lambda << ',' << e.epsilon << ',' << (e.side == Side::Plus ? "+" : "-") << ',' << e.norm << '\n';
  return os.str();
}

M0Report m0_scan(const Potential& pot, const std::vector<double>& lambdas,
                 const std::vector<double>& epsilons, const Grid3& grid) {
  if (lambdas.empty() || epsilons.empty())
    throw Error(ErrorCode::DomainError, "m0_scan needs at least one lambda and one epsilon");
  ScalarField v = sample_potential(pot, grid);
  M0Report rep;
  for (double l : lambdas)
    for (double e : epsilons)
      for (Side s : {Side::Plus, Side::Minus}) rep.table.push_back({l, e, s, 0.0});
  std::vector<char> singular(rep.table.size(), 0);
  parallel_for(rep.table.size(), [&](std::size_t i) {
    auto& ent = rep.table[i];
    try {
      ent.norm = resolvent_inverse({ent.lambda, ent.epsilon, ent.side, 0.0}, v).inverse.inf_norm();
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NearSingular) throw;
      ent.norm = std::numeric_limits<double>::infinity();
      singular[i] = 1;
    }
  });
  rep.M0 = 0.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < rep.table.size(); ++i) {
    if (singular[i] && !rep.singular) {
      rep.singular = true;
      rep.singular_lambda = rep.table[i].lambda;
    }
    if (rep.table[i].norm > rep.M0) {
      rep.M0 = rep.table[i].norm;
      arg = i;
    }
  }
  double lmax = *std::max_element(lambdas.begin(), lambdas.end());
  double emin = *std::min_element(epsilons.begin(), epsilons.end());
  const auto& best = rep.table[arg];
  rep.boundary_max = !rep.singular && rep.M0 > 1.0 &&
                     ((best.lambda == lmax && lambdas.size() > 1) || (best.epsilon == emin && epsilons.size() > 1 && emin > 0.0));
  return rep;
}

ZeroEnergyReport zero_energy_check(const Potential& pot, const Grid3& grid) {
  ZeroEnergyReport rep;
  try {
    auto inv = resolvent_inverse(SpectralPoint::plus(0.0), pot, grid);
    rep.inverse_norm = inv.inverse.inf_norm();
    rep.condition = inv.condition;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::NearSingular) throw;
    rep.regular = false;
    rep.inverse_norm = std::numeric_limits<double>::infinity();
    rep.condition = std::numeric_limits<double>::infinity();
  }
  return rep;
}

namespace {

// Largest eigenvalue of D G D with D = sqrt(-V h^3), by power iteration with
// Rayleigh quotients (the matrix is real symmetric for z = -E^2).
double attractive_top_eigenvalue(const SpectralPoint& z, const ScalarField& v,
                                 std::vector<cplx>& vec) {
  const Grid3& g = v.grid;
  FreeResolventFFT conv(z, g);
  std::vector<double> d(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (v[i].real() > 0.0)
      throw Error(ErrorCode::DomainError, "bound-state search needs a nonpositive potential");
    d[i] = std::sqrt(-v[i].real());
  }
  if (vec.size() != g.size()) {
    vec.assign(g.size(), cplx(0.0));
    for (std::size_t i = 0; i < g.size(); ++i) vec[i] = d[i];
  }
  auto normalize = [](std::vector<cplx>& x) {
    double s = 0.0;
    for (const auto& c : x) s += std::norm(c);
    s = std::sqrt(s);
    if (s == 0.0) throw Error(ErrorCode::DomainError, "zero potential has no bound state");
    for (auto& c : x) c /= s;
  };
  normalize(vec);
  double mu = 0.0, prev = -1.0;
  int stable = 0;
  for (int it = 0; it < 5000; ++it) {
    std::vector<cplx> u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = d[i] * vec[i];
    auto w = conv.apply(u);
    double rq = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      w[i] = cplx(d[i] * w[i].real(), 0.0);
      rq += vec[i].real() * w[i].real();
    }
    mu = rq;
    vec = std::move(w);
    normalize(vec);
    if (std::abs(mu - prev) <= 1e-15 * std::abs(mu)) {
      if (++stable >= 3) break;
    } else {
      stable = 0;
    }
    prev = mu;
  }
  return mu;
}

}  // namespace

double critical_coupling(const Potential& pot, const Grid3& grid) {
  ScalarField v = sample_potential(pot, grid);
  std::vector<cplx> vec;
  double mu = attractive_top_eigenvalue(SpectralPoint::plus(0.0), v, vec);
  return 1.0 / mu;
}

BoundStateRoot bound_state_search(const Potential& pot, const Grid3& grid) {
  ScalarField v = sample_potential(pot, grid);
  std::vector<cplx> vec;
  auto f = [&](double e) {
    return attractive_top_eigenvalue(SpectralPoint::negative_energy(e), v, vec) - 1.0;
  };
  double a = 0.0, fa = f(0.0);
  if (fa <= 0.0) throw Error(ErrorCode::DomainError, "no bound state: largest eigenvalue of -R0(0)V is below 1");
  double b = 1.0, fb = f(b);
  while (fb > 0.0) {
    a = b;
    fa = fb;
    b *= 2.0;
    fb = f(b);
    if (b > 1e6) throw Error(ErrorCode::NoConvergence, "bound state bracket search diverged");
  }
  BoundStateRoot root;
  int side = 0;
  double c = b;
  for (int it = 0; it < 200; ++it) {
    root.iterations = it + 1;
    c = (a * fb - b * fa) / (fb - fa);
    double fc = f(c);
    if (fc == 0.0 || std::abs(b - a) <= 1e-15 * std::abs(c)) break;
    if ((fc > 0.0) == (fa > 0.0)) {
      a = c;
      fa = fc;
      if (side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = c;
      fb = fc;
      if (side == 1) fa *= 0.5;
      side = 1;
    }
  }
  root.kappa = c;
  root.energy = -c * c;
  return root;
}

DecayReport high_energy_decay(const Potential& pot, const std::vector<double>& lambdas,
                              const Grid3& grid, std::size_t max_rows) {
  const double h = grid.spacing();
  for (double l : lambdas)
    if (l * h > 0.5 * kPi + 1e-12)
      throw Error(ErrorCode::UnresolvedFrequency,
                  "lambda " + std::to_string(l) + " exceeds pi/(2 h) = " + std::to_string(0.5 * kPi / h));
  ScalarField v = sample_potential(pot, grid);
  DecayReport rep;
  rep.lambdas = lambdas;
  rep.squared_norm.assign(lambdas.size(), 0.0);
  rep.first_norm.assign(lambdas.size(), 0.0);
  if (grid.n <= 8) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      auto k = birman_schwinger(SpectralPoint::plus(lambdas[i]), v);
      rep.first_norm[i] = k.inf_norm();
      Eigen::MatrixXcd k2 = k.op * k.op;
      rep.squared_norm[i] = k2.cwiseAbs().rowwise().sum().maxCoeff();
    }
    return rep;
  }
  const double h3 = grid.cell_volume();
  const std::size_t N = grid.size();
  const int n = grid.n, w = 2 * n - 1;
  // First power: row sums of |G| |V| h^3 are lambda-free, one convolution gives all rows.
  {
    Grid3 g = grid;
    FreeResolventFFT conv(SpectralPoint::plus(0.0), g);
    std::vector<cplx> av(N);
    for (std::size_t i = 0; i < N; ++i) av[i] = std::abs(v[i].real());
    auto rows = conv.apply(av);
    double m = 0.0;
    std::vector<std::pair<double, std::size_t>> order(N);
    for (std::size_t i = 0; i < N; ++i) {
      m = std::max(m, rows[i].real());
      order[i] = {-rows[i].real(), i};
    }
    for (auto& x : rep.first_norm) x = m;
    std::size_t take = std::min(max_rows, N);
    std::partial_sort(order.begin(), order.begin() + take, order.end());
    std::vector<std::size_t> sample(take);
    for (std::size_t i = 0; i < take; ++i) sample[i] = order[i].second;
    std::sort(sample.begin(), sample.end());
    rep.rows_sampled = take;

    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      SpectralPoint z = SpectralPoint::plus(lambdas[li]);
      FreeResolventFFT gz(z, grid);
      auto table = free_kernel_offsets(z, grid);
      std::vector<double> row_norm(take, 0.0);
      for (std::size_t si = 0; si < take; ++si) {
        std::size_t x = sample[si];
        int ix = int(x % n), iy = int((x / n) % n), iz = int(x / (std::size_t(n) * n));
        std::vector<cplx> u(N);
        for (std::size_t j = 0; j < N; ++j) {
          int jx = int(j % n), jy = int((j / n) % n), jz = int(j / (std::size_t(n) * n));
          std::size_t off = std::size_t(ix - jx + n - 1) +
                            std::size_t(w) * (std::size_t(iy - jy + n - 1) + std::size_t(w) * (iz - jz + n - 1));
          u[j] = table[off] * v[j].real();
        }
        auto gu = gz.apply(u);
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += std::abs(v[j].real() * h3 * gu[j]);
        row_norm[si] = s;
      }
      rep.squared_norm[li] = *std::max_element(row_norm.begin(), row_norm.end());
    }
  }
  return rep;
}

// ---------------------------------------------------------------- point spectrum

namespace {

void apply_hamiltonian(const ScalarField& v, const std::vector<double>& symbol,
                       const std::vector<cplx>& in, std::vector<cplx>& out) {
  const int n = v.grid.n;
  out = in;
  fft_inplace(out, {n, n, n}, -1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= symbol[i];
  fft_inplace(out, {n, n, n}, +1);
  const double inv = 1.0 / double(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * inv + v[i].real() * in[i];
}

}  // namespace

PointSpectrum point_spectrum(const Potential& pot, const Grid3& grid, double tolerance) {
  return point_spectrum(sample_potential(pot, grid), tolerance);
}

PointSpectrum point_spectrum(const ScalarField& v, double tolerance) {
  const Grid3& g = v.grid;
  const std::size_t N = g.size();
  PointSpectrum out;
  bool any_negative = false;
  for (const auto& x : v.values) any_negative |= x.real() < 0.0;
  if (!any_negative) return out;

  std::vector<double> symbol(N);
  for (std::size_t i = 0; i < N; ++i) {
    Vec3 xi = g.frequency(i);
    symbol[i] = dot(xi, xi);
  }
  const double inv_sqrt_h3 = 1.0 / std::sqrt(g.cell_volume());
  auto emit = [&](double lambda, const Eigen::VectorXcd& vec) {
    ScalarField f(g);
    // fix the global phase so the largest entry is real positive
    Eigen::Index arg;
    vec.cwiseAbs().maxCoeff(&arg);
    cplx phase = std::abs(vec[arg]) > 0 ? std::conj(vec[arg]) / std::abs(vec[arg]) : 1.0;
    for (std::size_t i = 0; i < N; ++i) f[i] = vec[Eigen::Index(i)] * phase * inv_sqrt_h3;
    out.eigenvalues.push_back(lambda);
    out.eigenfunctions.push_back(std::move(f));
  };

  if (N <= 512) {
    Eigen::MatrixXcd H(N, N);
    std::vector<cplx> e(N), he;
    for (std::size_t j = 0; j < N; ++j) {
      std::fill(e.begin(), e.end(), cplx(0.0));
      e[j] = 1.0;
      apply_hamiltonian(v, symbol, e, he);
      for (std::size_t i = 0; i < N; ++i) H(Eigen::Index(i), Eigen::Index(j)) = he[i];
    }
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    for (Eigen::Index k = 0; k < Eigen::Index(N); ++k)
      if (es.eigenvalues()[k] < -tolerance) emit(es.eigenvalues()[k], es.eigenvectors().col(k));
    return out;
  }

  // Lanczos with full reorthogonalization; converged states are locked and
  // projected out before the next sweep.
  double hnorm = 0.0;
  for (double s : symbol) hnorm = std::max(hnorm, s);
  double vmax = 0.0;
  for (const auto& x : v.values) vmax = std::max(vmax, std::abs(x.real()));
  hnorm += vmax;
  const int steps = int(std::min<std::size_t>(N, 160));
  std::vector<Eigen::VectorXcd> locked;
  std::mt19937 rng(12345);
  std::normal_distribution<double> nd;
  auto project = [&](Eigen::VectorXcd& x) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : locked) x -= q * q.dot(x);
  };
  for (int state = 0; state < 64; ++state) {
    Eigen::VectorXcd start(N);
    for (std::size_t i = 0; i < N; ++i) start[Eigen::Index(i)] = nd(rng);
    double theta = 0.0;
    Eigen::VectorXcd ritz;
    bool converged = false;
    for (int restart = 0; restart < 40 && !converged; ++restart) {
      project(start);
      start.normalize();
      std::vector<Eigen::VectorXcd> basis{start};
      std::vector<double> alpha, beta;
      std::vector<cplx> in(N), hv;
      for (int k = 0; k < steps; ++k) {
        Eigen::Map<Eigen::VectorXcd>(in.data(), Eigen::Index(N)) = basis[k];
        apply_hamiltonian(v, symbol, in, hv);
        Eigen::VectorXcd wv = Eigen::Map<Eigen::VectorXcd>(hv.data(), Eigen::Index(N));
        project(wv);
        alpha.push_back(basis[k].dot(wv).real());
        for (int pass = 0; pass < 2; ++pass)
          for (const auto& b : basis) wv -= b * b.dot(wv);
        project(wv);
        double bnorm = wv.norm();
        if (k + 1 == steps || bnorm < 1e-13 * hnorm) {
          beta.push_back(bnorm);
          break;
        }
        beta.push_back(bnorm);
        basis.push_back(wv / bnorm);
      }
      const int m = int(alpha.size());
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      theta = es.eigenvalues()[0];
      Eigen::VectorXd s = es.eigenvectors().col(0);
      ritz = Eigen::VectorXcd::Zero(N);
      for (int i = 0; i < m; ++i) ritz += basis[i] * s[i];
      ritz.normalize();
      double resid = std::abs(beta.back() * s[m - 1]);
      converged = resid < 1e-9 * hnorm || m < steps;
      start = ritz;
    }
    if (!converged) throw Error(ErrorCode::NoConvergence, "Lanczos did not converge");
    if (theta >= -tolerance) break;
    locked.push_back(ritz);
    emit(theta, ritz);
  }
  std::vector<std::size_t> order(out.eigenvalues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return out.eigenvalues[a] < out.eigenvalues[b]; });
  PointSpectrum sorted;
  for (auto i : order) {
    sorted.eigenvalues.push_back(out.eigenvalues[i]);
    sorted.eigenfunctions.push_back(std::move(out.eigenfunctions[i]));
  }
  return sorted;
}

}  // namespace waveop
