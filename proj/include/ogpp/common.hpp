#pragma once
// Shared infrastructure: Eigen aliases, error taxonomy, warning log,
// counter-based RNG, and a deterministic parallel-for helper.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ogpp {

using Mat = Eigen::MatrixXd;  // rows = particles, cols = coordinates
using Vec = Eigen::VectorXd;

// --- error taxonomy ---------------------------------------------------------
// ConfigError: an invalid spec/config object (caller bug or bad CLI flags).
// DomainError: a value outside an operation's stated domain.
// ConvergenceError: an iterative solver failed to reach its tolerance.
// IoError: malformed or unreadable file.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- warning log ------------------------------------------------------------
// Non-fatal conditions (degenerate rescale axis, near-equal PCA eigenvalues,
// widened conditioning balls, ...) are recorded here instead of thrown.
void warn(const std::string& message);
std::vector<std::string> drain_warnings();  // returns and clears the log

// --- counter-based RNG ------------------------------------------------------
// SplitMix64 counter generator. A stream is fully determined by
// (seed, stream_id), so per-sample sub-streams are independent and
// reproducible regardless of evaluation order or thread count. Distributions
// are implemented here rather than with <random> because libstdc++'s
// distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1), 53-bit resolution
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard normal (Box-Muller)
  std::uint64_t below(std::uint64_t n);    // {0..n-1}, unbiased

  template <typename T>
  void shuffle(std::vector<T>& v) {        // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// --- threading --------------------------------------------------------------
// Runs fn(i) for i in [0, n) across `threads` workers using a fixed block
// partition. With threads <= 1 everything runs inline on the calling thread.
// Callers must write results into per-index slots; any cross-index reduction
// must happen afterwards in index order so results are independent of the
// thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

// Thread count from the OGPP_THREADS environment variable, defaulting to 1.
int default_threads();

}  // namespace ogpp
