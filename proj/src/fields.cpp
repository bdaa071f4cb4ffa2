#include "waveop/fields.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include <boost/math/special_functions/legendre.hpp>

namespace waveop {

Grid3::Grid3(int n_per_axis, double box_length) : n(n_per_axis), box(box_length) {
  if (n < 1 || (n & (n - 1)) != 0 || !(box > 0.0))
    throw Error(ErrorCode::GridMismatch,
                "grid needs a power-of-two size and a positive box, got n=" +
                    std::to_string(n) + " box=" + std::to_string(box));
}

Vec3 Grid3::point(std::size_t idx) const {
  int ix = int(idx % n), iy = int((idx / n) % n), iz = int(idx / (std::size_t(n) * n));
  return {coord(ix), coord(iy), coord(iz)};
}

Vec3 Grid3::frequency(std::size_t idx) const {
  int ix = int(idx % n), iy = int((idx / n) % n), iz = int(idx / (std::size_t(n) * n));
  double d = dual_spacing();
  return {d * freq_index(ix), d * freq_index(iy), d * freq_index(iz)};
}

ScalarField make_field(const Grid3& grid, const std::function<cplx(const Vec3&)>& fn) {
  ScalarField f(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = fn(grid.point(i));
  return f;
}

double l2_norm(const ScalarField& f) {
  double s = 0.0;
  for (const auto& v : f.values) s += std::norm(v);
  return std::sqrt(s * f.grid.cell_volume());
}

double lp_norm(const ScalarField& f, double p) {
  if (std::isinf(p)) return max_norm(f);
  double s = 0.0;
  for (const auto& v : f.values) s += std::pow(std::abs(v), p);
  return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

double max_norm(const ScalarField& f) {
  double m = 0.0;
  for (const auto& v : f.values) m = std::max(m, std::abs(v));
  return m;
}

cplx inner(const ScalarField& a, const ScalarField& b) {
  if (a.grid != b.grid) throw Error(ErrorCode::GridMismatch, "inner product grids differ");
  cplx s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::conj(a[i]) * b[i];
  return s * a.grid.cell_volume();
}

double relative_l2(const ScalarField& a, const ScalarField& b) {
  if (a.grid != b.grid) throw Error(ErrorCode::GridMismatch, "relative_l2 grids differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------- potentials

Potential Potential::gaussian(double amplitude, double width, Vec3 center) {
  Potential p;
  p.terms.push_back({amplitude, center, width});
  return p;
}

Potential Potential::tabulated(const ScalarField& field) {
  Potential p;
  p.table = field;
  for (auto& v : p.table->values) v = cplx(v.real(), 0.0);
  return p;
}

bool Potential::is_zero() const {
  if (table) {
    for (const auto& v : table->values)
      if (v != 0.0) return false;
    return true;
  }
  for (const auto& t : terms)
    if (t.amplitude != 0.0) return false;
  return true;
}

double Potential::min_width() const {
  double w = std::numeric_limits<double>::infinity();
  for (const auto& t : terms)
    if (t.amplitude != 0.0) w = std::min(w, t.width);
  return w;
}

double Potential::value(const Vec3& x) const {
  if (table) throw Error(ErrorCode::DomainError, "pointwise value of a tabulated potential");
  double v = 0.0;
  for (const auto& t : terms) {
    Vec3 d = x - t.center;
    v += t.amplitude * std::exp(-dot(d, d) / (2.0 * t.width * t.width));
  }
  return v;
}

cplx Potential::hat(const Vec3& xi) const {
  if (table) throw Error(ErrorCode::DomainError, "analytic transform of a tabulated potential");
  static const double c = std::pow(2.0 * kPi, 1.5);
  cplx s = 0.0;
  double x2 = dot(xi, xi);
  for (const auto& t : terms) {
    double w = t.width;
    double mag = t.amplitude * c * w * w * w * std::exp(-0.5 * w * w * x2);
    s += mag * std::exp(-kI * dot(xi, t.center));
  }
  return s;
}

Potential Potential::scaled(double s) const {
  Potential p = *this;
  for (auto& t : p.terms) t.amplitude *= s;
  if (p.table)
    for (auto& v : p.table->values) v *= s;
  return p;
}

Potential Potential::plus(const Potential& other) const {
  if (table || other.table)
    throw Error(ErrorCode::DomainError, "sum of tabulated potentials is not supported");
  Potential p = *this;
  p.terms.insert(p.terms.end(), other.terms.begin(), other.terms.end());
  return p;
}

ScalarField sample_potential(const Potential& pot, const Grid3& grid) {
  if (pot.table) {
    if (pot.table->grid != grid)
      throw Error(ErrorCode::GridMismatch, "tabulated potential lives on another grid");
    return *pot.table;
  }
  double w = pot.min_width();
  if (grid.spacing() > 0.5 * w)
    throw Error(ErrorCode::UnresolvedPotential,
                "spacing " + std::to_string(grid.spacing()) + " exceeds half the width " +
                    std::to_string(w));
  ScalarField f(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = pot.value(grid.point(i));
  return f;
}

// ---------------------------------------------------------------- transforms

namespace {

struct PlanKey {
  std::vector<int> dims;
  int sign;
  bool operator<(const PlanKey& o) const {
    return dims != o.dims ? dims < o.dims : sign < o.sign;
  }
};

std::mutex plan_mutex;
std::map<PlanKey, fftw_plan>& plan_cache() {
  static std::map<PlanKey, fftw_plan> cache;
  return cache;
}

fftw_plan get_plan(const std::vector<int>& dims, int sign) {
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto& cache = plan_cache();
  PlanKey key{dims, sign};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::size_t total = 1;
  for (int d : dims) total *= std::size_t(d);
  auto* buf = fftw_alloc_complex(total);
  fftw_plan p = fftw_plan_dft(int(dims.size()), dims.data(), buf, buf,
                              sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                              FFTW_ESTIMATE);
  fftw_free(buf);
  cache.emplace(key, p);
  return p;
}

}  // namespace

void fft_inplace(std::vector<cplx>& data, const std::vector<int>& dims, int sign) {
  fftw_plan p = get_plan(dims, sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  if (fftw_alignment_of(reinterpret_cast<double*>(ptr)) == 0) {
    fftw_execute_dft(p, ptr, ptr);
    return;
  }
  // plans are made for SIMD-aligned storage; stage misaligned data through an aligned buffer
  struct Scratch {
    fftw_complex* buf = nullptr;
    std::size_t size = 0;
    ~Scratch() { fftw_free(buf); }
  };
  thread_local Scratch scratch;
  if (scratch.size < data.size()) {
    fftw_free(scratch.buf);
    scratch.buf = fftw_alloc_complex(data.size());
    scratch.size = data.size();
  }
  std::memcpy(scratch.buf, ptr, data.size() * sizeof(fftw_complex));
  fftw_execute_dft(p, scratch.buf, scratch.buf);
  std::memcpy(ptr, scratch.buf, data.size() * sizeof(fftw_complex));
}

ScalarField fourier_transform(const ScalarField& f, Direction dir) {
  const Grid3& g = f.grid;
  ScalarField out = f;
  const int n = g.n;
  auto parity = [&](std::size_t idx) {
    int ix = int(idx % n), iy = int((idx / n) % n), iz = int(idx / (std::size_t(n) * n));
    return ((g.freq_index(ix) + g.freq_index(iy) + g.freq_index(iz)) & 1) ? -1.0 : 1.0;
  };
  if (dir == Direction::Forward) {
    fft_inplace(out.values, {n, n, n}, -1);
    double h3 = g.cell_volume();
    for (std::size_t i = 0; i < out.values.size(); ++i) out[i] *= h3 * parity(i);
  } else {
    for (std::size_t i = 0; i < out.values.size(); ++i) out[i] *= parity(i);
    fft_inplace(out.values, {n, n, n}, +1);
    double scale = 1.0 / (g.box * g.box * g.box);
    for (auto& v : out.values) v *= scale;
  }
  return out;
}

// ---------------------------------------------------------------- norms

BNormReport b_norm_report(const ScalarField& f, double alpha, bool dotted, double tail_limit) {
  const Grid3& g = f.grid;
  const double rmax = 0.5 * g.box;
  const double h = g.spacing();
  std::map<int, double> shells;
  double ball = 0.0, inside = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double m = std::norm(f[i]);
    if (m == 0.0) continue;
    double r = norm(g.point(i));
    if (r >= rmax) {
      outside += m;
      continue;
    }
    inside += m;
    if (!dotted && r < 1.0) {
      ball += m;
      continue;
    }
    int k = int(std::floor(std::log2(r > 0.0 ? r : 0.5 * h)));
    shells[k] += m;
  }
  BNormReport rep;
  double total = inside + outside;
  rep.tail_fraction = total > 0.0 ? std::sqrt(outside / total) : 0.0;
  if (rep.tail_fraction > tail_limit)
    throw Error(ErrorCode::TailTooLarge,
                "field mass outside radius box/2 is " + std::to_string(rep.tail_fraction) +
                    " of its norm");
  double h3 = g.cell_volume();
  double v = dotted ? 0.0 : std::sqrt(ball * h3);
  for (const auto& [k, m] : shells) v += std::pow(2.0, alpha * k) * std::sqrt(m * h3);
  rep.value = v;
  return rep;
}

double b_norm(const ScalarField& f, double alpha, bool dotted) {
  return b_norm_report(f, alpha, dotted).value;
}

double lorentz_norm(const ScalarField& f, double p, double q) {
  if (!(p > 1.0) || std::isinf(p) || !(q >= 1.0))
    throw Error(ErrorCode::DomainError, "lorentz_norm needs 1 < p < inf and q >= 1");
  std::vector<double> a;
  a.reserve(f.values.size());
  for (const auto& v : f.values) {
    double m = std::abs(v);
    if (m > 0.0) a.push_back(m);
  }
  std::sort(a.begin(), a.end(), std::greater<double>());
  const double mu = f.grid.cell_volume();
  if (std::isinf(q)) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j)
      s = std::max(s, a[j] * std::pow((j + 1) * mu, 1.0 / p));
    return s;
  }
  if (q == p) {
    double s = 0.0;
    for (double v : a) s += std::pow(v, p);
    return std::pow(s * mu, 1.0 / p);
  }
  const double e = q / p;
  double s = 0.0, prev = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double next = std::pow((j + 1) * mu, e);
    s += std::pow(a[j], q) * (next - prev);
    prev = next;
  }
  return std::pow(s * p / q, 1.0 / q);
}

// ---------------------------------------------------------------- sphere rules

namespace {

void add_orbit_a1(SphereQuadrature& r, double w) {
  for (int ax = 0; ax < 3; ++ax)
    for (double s : {1.0, -1.0}) {
      Vec3 v{0.0, 0.0, 0.0};
      v[ax] = s;
      r.nodes.push_back(v);
      r.weights.push_back(w);
    }
}

void add_orbit_a2(SphereQuadrature& r, double w) {
  const double a = 1.0 / std::sqrt(2.0);
  for (int zero = 0; zero < 3; ++zero)
    for (double s1 : {1.0, -1.0})
      for (double s2 : {1.0, -1.0}) {
        Vec3 v{0.0, 0.0, 0.0};
        int i1 = (zero + 1) % 3, i2 = (zero + 2) % 3;
        v[i1] = s1 * a;
        v[i2] = s2 * a;
        r.nodes.push_back(v);
        r.weights.push_back(w);
      }
}

void add_orbit_a3(SphereQuadrature& r, double w) {
  const double a = 1.0 / std::sqrt(3.0);
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0})
      for (double s3 : {1.0, -1.0}) {
        r.nodes.push_back({s1 * a, s2 * a, s3 * a});
        r.weights.push_back(w);
      }
}

// (l, l, m) with m = sqrt(1 - 2 l^2): 24 nodes.
void add_orbit_b(SphereQuadrature& r, double l, double w) {
  const double m = std::sqrt(1.0 - 2.0 * l * l);
  for (int odd = 0; odd < 3; ++odd)
    for (double s1 : {1.0, -1.0})
      for (double s2 : {1.0, -1.0})
        for (double s3 : {1.0, -1.0}) {
          Vec3 v;
          v[odd] = s1 * m;
          v[(odd + 1) % 3] = s2 * l;
          v[(odd + 2) % 3] = s3 * l;
          r.nodes.push_back(v);
          r.weights.push_back(w);
        }
}

// (p, q, 0) and permutations: 24 nodes.
void add_orbit_c(SphereQuadrature& r, double p, double q, double w) {
  const int perms[6][3] = {{0, 1, 2}, {1, 0, 2}, {0, 2, 1}, {2, 0, 1}, {1, 2, 0}, {2, 1, 0}};
  for (const auto& pm : perms)
    for (double s1 : {1.0, -1.0})
      for (double s2 : {1.0, -1.0}) {
        Vec3 v{0.0, 0.0, 0.0};
        v[pm[0]] = s1 * p;
        v[pm[1]] = s2 * q;
        r.nodes.push_back(v);
        r.weights.push_back(w);
      }
}

}  // namespace

SphereQuadrature sphere_rule(int order) {
  SphereQuadrature r;
  switch (order) {
    case 6:
      add_orbit_a1(r, 1.0 / 6.0);
      r.degree = 3;
      break;
    case 14:
      add_orbit_a1(r, 1.0 / 15.0);
      add_orbit_a3(r, 3.0 / 40.0);
      r.degree = 5;
      break;
    case 26:
      add_orbit_a1(r, 1.0 / 21.0);
      add_orbit_a2(r, 4.0 / 105.0);
      add_orbit_a3(r, 9.0 / 280.0);
      r.degree = 7;
      break;
    case 38:
      add_orbit_a1(r, 1.0 / 105.0);
      add_orbit_a3(r, 9.0 / 280.0);
      add_orbit_c(r, 0.4597008433809831, 0.8880738339771153, 1.0 / 35.0);
      r.degree = 9;
      break;
    case 50:
      add_orbit_a1(r, 4.0 / 315.0);
      add_orbit_a2(r, 64.0 / 2835.0);
      add_orbit_a3(r, 27.0 / 1280.0);
      add_orbit_b(r, 0.3015113445777636, 14641.0 / 725760.0);
      r.degree = 11;
      break;
    default:
      throw Error(ErrorCode::UnsupportedOrder,
                  "sphere rule order " + std::to_string(order) + " (use 6, 14, 26, 38, 50)");
  }
  for (auto& w : r.weights) w *= 4.0 * kPi;
  return r;
}

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  // boost returns the nonnegative zeros in increasing order
  auto zeros = boost::math::legendre_p_zeros<double>(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  int m = int(zeros.size());
  for (int j = 0; j < m; ++j) {
    double x = zeros[j];
    double dp = boost::math::legendre_p_prime<double>(n, x);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    if (n % 2) {
      // zeros[0] == 0 sits in the middle
      nodes[n / 2 + j] = mid + half * x;
      weights[n / 2 + j] = half * w;
      nodes[n / 2 - j] = mid - half * x;
      weights[n / 2 - j] = half * w;
    } else {
      nodes[n / 2 + j] = mid + half * x;
      weights[n / 2 + j] = half * w;
      nodes[n / 2 - 1 - j] = mid - half * x;
      weights[n / 2 - 1 - j] = half * w;
    }
  }
}

SphereQuadrature product_sphere_rule(int n_theta) {
  if (n_theta < 2) throw Error(ErrorCode::UnsupportedOrder, "product rule needs n_theta >= 2");
  SphereQuadrature r;
  std::vector<double> ct, wt;
  gauss_legendre(n_theta, -1.0, 1.0, ct, wt);
  const int n_phi = 2 * n_theta;
  for (int i = 0; i < n_theta; ++i) {
    double st = std::sqrt(std::max(0.0, 1.0 - ct[i] * ct[i]));
    for (int j = 0; j < n_phi; ++j) {
      double phi = 2.0 * kPi * (j + 0.5) / n_phi;
      r.nodes.push_back({st * std::cos(phi), st * std::sin(phi), ct[i]});
      r.weights.push_back(wt[i] * 2.0 * kPi / n_phi);
    }
  }
  r.degree = 2 * n_theta - 1;
  return r;
}

// ---------------------------------------------------------------- file format

namespace {

constexpr char kMagic[4] = {'W', 'O', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!is) throw Error(ErrorCode::IoError, "truncated field file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_field(std::ostream& os, const ScalarField& f) {
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, std::uint32_t(f.grid.n));
  put_le<double>(os, f.grid.box);
  for (const auto& v : f.values) {
    put_le<double>(os, v.real());
    put_le<double>(os, v.imag());
  }
  if (!os) throw Error(ErrorCode::IoError, "field write failed");
}

ScalarField read_field(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "not a WOPF field record");
  auto version = get_le<std::uint32_t>(is);
  if (version != kVersion)
    throw Error(ErrorCode::IoError, "unsupported WOPF version " + std::to_string(version));
  auto n = get_le<std::uint32_t>(is);
  double box = get_le<double>(is);
  ScalarField f(Grid3(int(n), box));
  for (auto& v : f.values) {
    double re = get_le<double>(is);
    double im = get_le<double>(is);
    v = cplx(re, im);
  }
  return f;
}

void write_field(const std::string& path, const ScalarField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_field(os, f);
}

ScalarField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return read_field(is);
  } catch (const Error& e) {
    throw Error(ErrorCode::IoError, path + ": " + std::string(e.what()));
  }
}

}  // namespace waveop
