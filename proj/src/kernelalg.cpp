#include "waveop/kernelalg.hpp"

#include <algorithm>
#include <mutex>
#include <random>

namespace waveop {

EtaLattice::EtaLattice(int half_width, double box) : m(half_width), y_box(box) {
  if (m < 0 || !(box > 0.0))
    throw Error(ErrorCode::GridMismatch, "eta lattice needs m >= 0 and a positive box");
}

std::array<int, 3> EtaLattice::offsets(std::size_t idx) const {
  const std::size_t p = std::size_t(per_axis());
  return {int(idx % p) - m, int((idx / p) % p) - m, int(idx / (p * p)) - m};
}

Vec3 EtaLattice::eta(std::size_t idx) const {
  auto o = offsets(idx);
  double d = eta_spacing();
  return {d * o[0], d * o[1], d * o[2]};
}

Vec3 EtaLattice::y(std::size_t idx) const {
  auto o = offsets(idx);
  double d = y_spacing();
  return {d * o[0], d * o[1], d * o[2]};
}

// ---------------------------------------------------------------- EtaKernel

EtaKernel::EtaKernel(const Grid3& grid, const EtaLattice& lattice, cplx identity, SliceFn fn)
    : grid_(grid), lattice_(lattice), identity_(identity), fn_(std::move(fn)) {}

EtaKernel EtaKernel::zero(const Grid3& grid, const EtaLattice& lattice) {
  return EtaKernel(grid, lattice, 0.0, nullptr);
}

EtaKernel EtaKernel::identity(const Grid3& grid, const EtaLattice& lattice) {
  return EtaKernel(grid, lattice, 1.0, nullptr);
}

Eigen::MatrixXcd EtaKernel::slice(std::size_t k) const {
  if (!fn_) {
    const Eigen::Index N = Eigen::Index(grid_.size());
    return Eigen::MatrixXcd::Zero(N, N);
  }
  return fn_(k);
}

Eigen::MatrixXcd EtaKernel::full_slice(std::size_t k) const {
  Eigen::MatrixXcd s = slice(k);
  if (identity_ != 0.0) s.diagonal().array() += identity_;
  return s;
}

EtaKernel EtaKernel::materialize() const {
  if (!fn_) return *this;
  auto store = std::make_shared<std::vector<Eigen::MatrixXcd>>(lattice_.size());
  parallel_for(lattice_.size(), [&](std::size_t k) { (*store)[k] = fn_(k); });
  return EtaKernel(grid_, lattice_, identity_, [store](std::size_t k) { return (*store)[k]; });
}

void EtaKernel::for_each_slice(
    const std::function<void(std::size_t, const Eigen::MatrixXcd&)>& fn) const {
  parallel_for(lattice_.size(), [&](std::size_t k) { fn(k, full_slice(k)); });
}

// ---------------------------------------------------------------- builders

namespace {

std::size_t offset_index(int n, std::size_t i, std::size_t j) {
  const int w = 2 * n - 1;
  int ix = int(i % n), iy = int((i / n) % n), iz = int(i / (std::size_t(n) * n));
  int jx = int(j % n), jy = int((j / n) % n), jz = int(j / (std::size_t(n) * n));
  return std::size_t(ix - jx + n - 1) +
         std::size_t(w) * (std::size_t(iy - jy + n - 1) + std::size_t(w) * (iz - jz + n - 1));
}

Eigen::MatrixXcd phased_bs_slice(const ScalarField& v, const Vec3& eta, double eps, Side side) {
  const Grid3& g = v.grid;
  const int n = g.n, w = 2 * n - 1;
  const double h = g.spacing(), h3 = g.cell_volume();
  SpectralPoint z{norm(eta), eps, side, 0.0};
  auto table = free_kernel_offsets(z, g);
  for (int dz = -(n - 1); dz < n; ++dz)
    for (int dy = -(n - 1); dy < n; ++dy)
      for (int dx = -(n - 1); dx < n; ++dx) {
        std::size_t idx = std::size_t(dx + n - 1) + std::size_t(w) * (std::size_t(dy + n - 1) + std::size_t(w) * (dz + n - 1));
        double ph = h * (dx * eta[0] + dy * eta[1] + dz * eta[2]);
        table[idx] *= std::exp(-kI * ph);
      }
  const Eigen::Index N = Eigen::Index(g.size());
  Eigen::MatrixXcd s(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    double vj = v[std::size_t(j)].real() * h3;
    for (Eigen::Index i = 0; i < N; ++i) s(i, j) = table[offset_index(n, std::size_t(i), std::size_t(j))] * vj;
  }
  return s;
}

bool field_is_zero(const ScalarField& v) {
  for (const auto& x : v.values)
    if (x != 0.0) return false;
  return true;
}

}  // namespace

Eigen::MatrixXcd t1_slice_at(const ScalarField& v, const Vec3& eta, double eps, Side side) {
  return phased_bs_slice(v, eta, eps, side);
}

EtaKernel t1_plus(const Potential& pot, const Grid3& grid, const EtaLattice& lattice, double eps, Side side) {
  return t1_plus(sample_potential(pot, grid), lattice, eps, side);
}

EtaKernel t1_plus(const ScalarField& v, const EtaLattice& lattice, double eps, Side side) {
  if (field_is_zero(v)) return EtaKernel::zero(v.grid, lattice);
  auto vs = std::make_shared<ScalarField>(v);
  return EtaKernel(v.grid, lattice, 0.0, [vs, lattice, eps, side](std::size_t k) {
    return phased_bs_slice(*vs, lattice.eta(k), eps, side);
  });
}

EtaKernel t_plus(const Potential& pot, const Grid3& grid, const EtaLattice& lattice, double eps, Side side) {
  return t_plus(sample_potential(pot, grid), lattice, eps, side);
}

EtaKernel t_plus(const ScalarField& v, const EtaLattice& lattice, double eps, Side side) {
  if (field_is_zero(v)) return EtaKernel::zero(v.grid, lattice);
  auto vs = std::make_shared<ScalarField>(v);
  return EtaKernel(v.grid, lattice, 0.0, [vs, lattice, eps, side](std::size_t k) {
    Eigen::MatrixXcd m = phased_bs_slice(*vs, lattice.eta(k), eps, side);
    m.diagonal().array() += 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    double rc = lu.rcond();
    if (!(rc > 0.0) || 1.0 / rc > kNearSingularCondition)
      throw Error(ErrorCode::NearSingular, "I + T1(eta) is near singular at eta index " + std::to_string(k));
    Eigen::MatrixXcd r = -lu.inverse();
    r.diagonal().array() += 1.0;
    return r;
  });
}

EtaKernel compose(const EtaKernel& a, const EtaKernel& b) {
  if (a.grid() != b.grid() || a.lattice() != b.lattice())
    throw Error(ErrorCode::GridMismatch, "compose needs kernels on the same grid and eta lattice");
  const cplx ia = a.identity_coefficient(), ib = b.identity_coefficient();
  if (a.is_zero_remainder() && b.is_zero_remainder())
    return EtaKernel(a.grid(), a.lattice(), ia * ib, nullptr);
  return EtaKernel(a.grid(), a.lattice(), ia * ib, [a, b, ia, ib](std::size_t k) {
    Eigen::MatrixXcd sa = a.slice(k), sb = b.slice(k);
    Eigen::MatrixXcd out = sb * sa;
    if (ib != 0.0) out += ib * sa;
    if (ia != 0.0) out += ia * sb;
    return out;
  });
}

EtaKernel power(const EtaKernel& t, int n) {
  if (n < 1) throw Error(ErrorCode::DomainError, "power needs n >= 1");
  if (n == 1) return t;
  const cplx a = t.identity_coefficient();
  const cplx an = std::pow(a, n);
  if (t.is_zero_remainder()) return EtaKernel(t.grid(), t.lattice(), an, nullptr);
  return EtaKernel(t.grid(), t.lattice(), an, [t, n, an](std::size_t k) {
    Eigen::MatrixXcd f = t.full_slice(k);
    Eigen::MatrixXcd p = f;
    for (int i = 1; i < n; ++i) p = (f * p).eval();
    if (an != 0.0) p.diagonal().array() -= an;
    return p;
  });
}

EtaKernel t_n_plus(const Potential& pot, int n, const Grid3& grid, const EtaLattice& lattice,
                   double eps, int max_order) {
  if (n < 1 || n > max_order)
    throw Error(ErrorCode::DomainError, "t_n_plus order " + std::to_string(n) + " outside [1, " +
                                            std::to_string(max_order) + "]");
  return power(t1_plus(pot, grid, lattice, eps), n);
}

// ---------------------------------------------------------------- contraction

namespace {

// values(x, y) = y_box^{-3} sum_eta e^{i eta.y} hat(x, eta), separable along axes.
void inverse_eta_transform(const EtaLattice& l, std::size_t nx, std::vector<cplx>& data) {
  const int p = l.per_axis();
  std::vector<cplx> tw(std::size_t(p) * p);
  for (int k = 0; k < p; ++k)
    for (int j = 0; j < p; ++j) {
      long long kj = (long long)(k - l.m) * (j - l.m);
      double ang = 2.0 * kPi * double(kj % p) / p;
      tw[std::size_t(k) * p + j] = std::polar(1.0, ang);
    }
  std::vector<cplx> tmp(data.size());
  auto pass = [&](int axis) {
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? std::size_t(p) : std::size_t(p) * p;
    const std::size_t L = l.size();
    for (std::size_t idx = 0; idx < L; ++idx) {
      std::size_t coord = (idx / stride) % std::size_t(p);
      std::size_t base = idx - coord * stride;
      for (std::size_t x = 0; x < nx; ++x) {
        cplx s = 0.0;
        for (int k = 0; k < p; ++k) s += tw[std::size_t(k) * p + coord] * data[x + nx * (base + std::size_t(k) * stride)];
        tmp[x + nx * idx] = s;
      }
    }
    data.swap(tmp);
  };
  pass(0);
  pass(1);
  pass(2);
  const double scale = 1.0 / (l.y_box * l.y_box * l.y_box);
  for (auto& v : data) v *= scale;
}

}  // namespace

std::vector<ContractionKernel> contract_many(const std::vector<ScalarField>& fs, const EtaKernel& t) {
  const Grid3& g = t.grid();
  const std::size_t N = g.size(), L = t.lattice().size();
  for (const auto& f : fs)
    if (f.grid != g) throw Error(ErrorCode::GridMismatch, "contract: field and kernel grids differ");
  Eigen::MatrixXcd in(Eigen::Index(N), Eigen::Index(fs.size()));
  for (std::size_t c = 0; c < fs.size(); ++c)
    for (std::size_t i = 0; i < N; ++i) in(Eigen::Index(i), Eigen::Index(c)) = fs[c][i];
  std::vector<std::vector<cplx>> hat(fs.size(), std::vector<cplx>(N * L));
  if (t.is_zero_remainder()) {
    const cplx a = t.identity_coefficient();
    for (std::size_t c = 0; c < fs.size(); ++c)
      for (std::size_t k = 0; k < L; ++k)
        for (std::size_t i = 0; i < N; ++i) hat[c][i + N * k] = a * fs[c][i];
  } else {
    t.for_each_slice([&](std::size_t k, const Eigen::MatrixXcd& s) {
      Eigen::MatrixXcd out = s * in;
      for (std::size_t c = 0; c < fs.size(); ++c)
        for (std::size_t i = 0; i < N; ++i) hat[c][i + N * k] = out(Eigen::Index(i), Eigen::Index(c));
    });
  }
  std::vector<ContractionKernel> res;
  for (std::size_t c = 0; c < fs.size(); ++c) res.push_back(kernel_from_eta(g, t.lattice(), std::move(hat[c])));
  return res;
}

ContractionKernel kernel_from_eta(const Grid3& grid, const EtaLattice& lattice, std::vector<cplx> hat) {
  if (hat.size() != grid.size() * lattice.size())
    throw Error(ErrorCode::GridMismatch, "eta data size does not match grid and lattice");
  inverse_eta_transform(lattice, grid.size(), hat);
  ContractionKernel k(grid, lattice);
  k.values = std::move(hat);
  return k;
}

ContractionKernel contract(const ScalarField& f, const EtaKernel& t) {
  return contract_many({f}, t).front();
}

double z_norm(const EtaKernel& t) {
  if (t.is_zero_remainder()) return std::abs(t.identity_coefficient());
  std::vector<double> best(t.lattice().size(), 0.0);
  t.for_each_slice([&](std::size_t k, const Eigen::MatrixXcd& s) {
    best[k] = s.cwiseAbs().rowwise().sum().maxCoeff();
  });
  return *std::max_element(best.begin(), best.end());
}

double xinf_l1_norm(const ContractionKernel& k) {
  const std::size_t N = k.grid.size();
  double s = 0.0;
  for (std::size_t y = 0; y < k.lattice.size(); ++y) {
    double m = 0.0;
    for (std::size_t x = 0; x < N; ++x) m = std::max(m, std::abs(k.at(x, y)));
    s += m;
  }
  return s * k.lattice.y_cell();
}

std::vector<ScalarField> y_norm_probes(const Grid3& grid) {
  std::mt19937 rng(20170601);
  std::uniform_real_distribution<double> pos(-0.25, 0.25), wid(0.6, 1.4), amp(0.5, 1.0), phase(0.0, 2.0 * kPi);
  const double scale = grid.box / 4.0;
  std::vector<ScalarField> probes;
  for (int p = 0; p < 12; ++p) {
    std::vector<Gaussian> terms;
    std::vector<double> phases;
    int count = 1 + p % 3;
    for (int t = 0; t < count; ++t) {
      terms.push_back({amp(rng), {scale * pos(rng), scale * pos(rng), scale * pos(rng)}, scale * 0.5 * wid(rng)});
      phases.push_back(p < 6 ? 0.0 : phase(rng));
    }
    probes.push_back(make_field(grid, [&](const Vec3& x) {
      cplx s = 0.0;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        Vec3 d = x - terms[t].center;
        s += std::polar(terms[t].amplitude * std::exp(-dot(d, d) / (2.0 * terms[t].width * terms[t].width)), phases[t]);
      }
      return s;
    }));
  }
  return probes;
}

YNormReport y_norm(const EtaKernel& t, const Potential& pot, double sigma) {
  ScalarField v = sample_potential(pot, t.grid());
  for (auto& x : v.values) x = std::abs(x.real());
  return y_norm(t, v, sigma);
}

YNormReport y_norm(const EtaKernel& t, const ScalarField& weight, double sigma) {
  const Grid3& g = t.grid();
  if (weight.grid != g) throw Error(ErrorCode::GridMismatch, "y_norm weight grid differs");
  YNormReport rep;
  rep.z_part = z_norm(t);
  auto probes = y_norm_probes(g);
  auto ks = contract_many(probes, t);
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t N = g.size();
  for (std::size_t p = 0; p < probes.size(); ++p) {
    ScalarField vf(g);
    for (std::size_t i = 0; i < N; ++i) vf[i] = weight[i] * probes[p][i];
    double den = b_norm_report(vf, sigma, false, inf).value;
    if (den == 0.0) continue;
    double num = 0.0;
    for (std::size_t y = 0; y < t.lattice().size(); ++y) {
      ScalarField slice(g);
      for (std::size_t i = 0; i < N; ++i) slice[i] = weight[i] * ks[p].at(i, y);
      num += b_norm_report(slice, sigma, false, inf).value;
    }
    num *= t.lattice().y_cell();
    rep.b_part = std::max(rep.b_part, num / den);
  }
  rep.value = rep.z_part + rep.b_part;
  return rep;
}

ResolventResidual resolvent_identity_residual(const EtaKernel& t1, const EtaKernel& t) {
  if (t1.grid() != t.grid() || t1.lattice() != t.lattice())
    throw Error(ErrorCode::GridMismatch, "resolvent residual needs matching kernels");
  std::vector<double> left(t.lattice().size()), right(t.lattice().size());
  const Eigen::Index N = Eigen::Index(t.grid().size());
  parallel_for(t.lattice().size(), [&](std::size_t k) {
    Eigen::MatrixXcd a = t1.full_slice(k);
    a.diagonal().array() += 1.0;
    Eigen::MatrixXcd b = -t.full_slice(k);
    b.diagonal().array() += 1.0;
    Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(N, N);
    left[k] = (a * b - id).cwiseAbs().rowwise().sum().maxCoeff();
    right[k] = (b * a - id).cwiseAbs().rowwise().sum().maxCoeff();
  });
  ResolventResidual r;
  r.left = *std::max_element(left.begin(), left.end());
  r.right = *std::max_element(right.begin(), right.end());
  return r;
}

}  // namespace waveop
