// Counter-based RNG, warning log, and the parallel-for helper.

#include "ogpp/common.hpp"

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace ogpp {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Fenwick/Steele SplitMix64 output mix.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::mutex g_warn_mutex;
std::vector<std::string> g_warnings;

}  // namespace

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  g_warnings.push_back(message);
}

std::vector<std::string> drain_warnings() {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::vector<std::string> out;
  out.swap(g_warnings);
  return out;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  // Two mixing rounds decorrelate (seed, stream) pairs; streams of the same
  // seed behave as independent generators.
  state_ = mix64(seed + kGolden) ^ mix64((stream + 1) * kGolden);
}

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 is kept strictly positive so log() is finite.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below requires n >= 1");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    // Fixed block partition: worker w owns [lo, hi).
    const std::size_t lo = n * w / workers;
    const std::size_t hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

int default_threads() {
  if (const char* env = std::getenv("OGPP_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

}  // namespace ogpp
