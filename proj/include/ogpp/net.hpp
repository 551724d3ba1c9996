#pragma once
// Velocity network: plain pre-layer-norm transformer encoder over particle
// tokens with learned particle-index embeddings, optional condition tokens,
// and a global sinusoidal time embedding. Reverse-mode gradients are computed
// by an in-repo tape (per-layer forward caches + hand-derived backward), with
// no external autodiff dependency.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ogpp/common.hpp"
#include "ogpp/io.hpp"

namespace ogpp::net {

struct NetConfig {
  int d_in = 2;          // input (and output) dims per particle
  int d_emb = 128;       // token width; must be even and divisible by n_heads
  int n_layers = 4;
  int n_heads = 4;
  int d_mlp = 512;
  int n_particles = 64;  // index-table size; forward requires exactly N rows
  int n_cond = 0;        // max condition tokens (0 = unconditional)
  std::string param_dtype = "f32";  // "f32" or "f64" parameter/compute scalar

  int d_out() const { return d_in; }
  void validate() const;
};

namespace detail {
template <typename S>
struct ParamsT;
}  // namespace detail

// Parameters live in the precision named by cfg.param_dtype; exactly one of
// the two stores is engaged. Copyable (parameter snapshots are cheap at desk
// scale) and safe to read concurrently.
class VelocityNet {
 public:
  VelocityNet();
  VelocityNet(const VelocityNet& other);
  VelocityNet(VelocityNet&&) noexcept;
  VelocityNet& operator=(const VelocityNet& other);
  VelocityNet& operator=(VelocityNet&&) noexcept;
  ~VelocityNet();

  NetConfig cfg;
  std::unique_ptr<detail::ParamsT<float>> p32;
  std::unique_ptr<detail::ParamsT<double>> p64;
};

// Fresh network: truncated-normal(std 0.02, cut at 2 std) tables and
// projections, zero biases, unit layer-norm gains, zero output head (so the
// initial velocity field is identically zero).
VelocityNet make_net(const NetConfig& cfg, std::uint64_t seed);

std::int64_t param_count(const VelocityNet& net);

// Parameter access by name, in a fixed enumeration order shared by gradients,
// Adam state, and checkpoint blobs. Values cross the boundary as doubles.
std::vector<std::string> param_names(const VelocityNet& net);
Mat get_param(const VelocityNet& net, const std::string& name);
void set_param(VelocityNet& net, const std::string& name, const Mat& value);

// Sinusoidal time embedding phi(t): d_emb/2 geometric timescales from 1 down
// to 1e-4; even slots sin(t/lambda_k), odd slots cos(t/lambda_k).
Vec time_embedding(const NetConfig& cfg, double t);

// u_theta(x, t): x must be n_particles x d_in; cond, when nonempty, at most
// n_cond rows of d_in (appended as tokens with their own slot embeddings and
// excluded from the output head). Throws ConvergenceError on non-finite
// activations.
Mat forward(const VelocityNet& net, const Mat& x, double t,
            const Mat& cond = Mat());

struct Batch {
  std::vector<Mat> x;       // B entries, each n_particles x d_in
  std::vector<double> t;    // B entries
  std::vector<Mat> target;  // B entries, each n_particles x d_out
  std::vector<Mat> cond;    // empty, or B entries of M x d_in
};

// Gradient of the mean-squared error over (batch, particle, dim), as
// (name, value) pairs in param_names order.
using Gradients = std::vector<std::pair<std::string, Mat>>;

std::pair<double, Gradients> loss_and_grads(const VelocityNet& net,
                                            const Batch& batch);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Mat>> m;  // first moments
  std::vector<std::pair<std::string, Mat>> v;  // second moments
};

// Standard Adam with bias correction; state is created on first use and must
// keep matching the network's parameter shapes afterwards.
void adam_step(VelocityNet& net, const Gradients& grads, AdamState& state,
               const AdamHyper& hyper);

// Checkpoints carry the config as JSON plus one f32 row-major blob per
// parameter in param_names order.
io::Checkpoint to_checkpoint(const VelocityNet& net);
VelocityNet from_checkpoint(const io::Checkpoint& ckpt);

}  // namespace ogpp::net
