#include "waveop/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace waveop {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnresolvedPotential: return "UnresolvedPotential";
    case ErrorCode::TailTooLarge: return "TailTooLarge";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::SingularPoint: return "SingularPoint";
    case ErrorCode::NearSingular: return "NearSingular";
    case ErrorCode::UnresolvedFrequency: return "UnresolvedFrequency";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::UnresolvedOscillation: return "UnresolvedOscillation";
    case ErrorCode::NotRegular: return "NotRegular";
    case ErrorCode::BornDivergent: return "BornDivergent";
    case ErrorCode::NotInvertible: return "NotInvertible";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::PatchFailure: return "PatchFailure";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::WrapAround: return "WrapAround";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("WAVEOP_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) return std::min(hw, cap);
  }
  return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace waveop
