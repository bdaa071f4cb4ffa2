/**
 * @file common.hpp
 * @brief Shared scalar types, error codes and the parallel map helper.
 */

#ifndef WAVEOP_COMMON_HPP_INCLUDED_
#define WAVEOP_COMMON_HPP_INCLUDED_

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace waveop {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr cplx kI{0.0, 1.0};

/// Machine-readable error codes shared by the library and the CLI.
enum class ErrorCode {
  UnresolvedPotential,
  TailTooLarge,
  UnsupportedOrder,
  SingularPoint,
  NearSingular,
  UnresolvedFrequency,
  GridMismatch,
  UnresolvedOscillation,
  NotRegular,
  BornDivergent,
  NotInvertible,
  NoConvergence,
  PatchFailure,
  DomainError,
  StepTooLarge,
  WrapAround,
  ConfigInvalid,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

/// Number of worker threads, capped by WAVEOP_THREADS when set.
int thread_count();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker,
/// so callers writing to slot i get results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace waveop

#endif  // WAVEOP_COMMON_HPP_INCLUDED_
