#pragma once
// Flow-matching engine: noise-data coupling, training-target construction
// along a probability path, the optimization loop, and ODE sampling with
// terminal normal extraction.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ogpp/canon.hpp"
#include "ogpp/common.hpp"
#include "ogpp/io.hpp"
#include "ogpp/net.hpp"
#include "ogpp/paths.hpp"

namespace ogpp::flow {

enum class Coupling { independent, minibatch_ot };

// Which side(s) of each noise-data pair get canonicalized before the path is
// built. x1_only (data only) is the default regime.
enum class CanonSide { none, x0_only, x1_only, both };

// Noise distributions for the t=0 endpoint, drawn per particle.
// toroidal_uniform is the [0,1)^D override that accompanies toroidal paths.
enum class Prior {
  uniform_box,      // uniform in [-1,1]^D
  gaussian,         // standard normal
  scaled_gaussian,  // normal with std prior_scale
  sphere,           // uniform on the unit sphere surface
  shell,            // uniform direction, radius uniform in [0.8, 1.2]
  toroidal_uniform  // uniform in [0,1)^D
};

// Where per-particle unit normals (terminal tangent directions) come from.
enum class NormalSource {
  none,           // no normals; terminal_mode must be none
  attrs,          // read from attribute columns [normal_channel, +D)
  ring_geometry,  // outward normals of the row-ordered closed polyline
};

const char* coupling_name(Coupling c);
Coupling coupling_from_name(const std::string& name);
const char* canon_side_name(CanonSide s);
CanonSide canon_side_from_name(const std::string& name);
const char* prior_name(Prior p);
Prior prior_from_name(const std::string& name);
const char* normal_source_name(NormalSource s);
NormalSource normal_source_from_name(const std::string& name);

struct CouplingSpec {
  Coupling kind = Coupling::independent;
  // minibatch_ot pairs by minimizing the total flattened squared Euclidean
  // distance; the exact assignment solve is cubic, hence the batch cap.
  int max_batch = 128;
};

// pairing[i] = index of the data configuration assigned to noise i.
// independent returns the identity pairing.
std::vector<int> couple(const std::vector<Mat>& noise,
                        const std::vector<Mat>& data,
                        const CouplingSpec& spec);

// One configuration of n particles in d dimensions from the chosen prior.
Mat draw_prior(Prior prior, int n, int d, double scale, Rng& rng);

struct TrainConfig {
  paths::PathSpec path;
  canon::CanonSpec canon;
  CanonSide canon_side = CanonSide::x1_only;
  CouplingSpec coupling;
  Prior prior = Prior::uniform_box;
  double prior_scale = 0.5;  // scaled_gaussian standard deviation
  NormalSource normal_source = NormalSource::none;
  int normal_channel = 0;  // first attribute column holding normals
  // When set, data rows whose attribute column 0 exceeds 0.5 (anchor flags)
  // are fed to the network as condition tokens.
  bool cond_from_anchors = false;
  int batch_size = 16;
  int steps = 1000;
  net::AdamHyper adam;
  std::uint64_t seed = 0;
  int print_every = 50;  // progress-line period on stderr; 0 = silent

  void validate() const;
};

struct TrainingTarget {
  Mat x_t;        // N x D interpolant position
  double t = 0.0;
  Mat u_ref;      // N x D regression target
  Mat cond;       // condition rows (0 x 0 when unused)
};

// Draws one training batch: data samples (with replacement), prior noise,
// canonicalization per canon_side, coupling, terminal tangents per the path
// spec, and one shared time per configuration. force_t pins that time for
// every element (used by the variance studies).
std::vector<TrainingTarget> make_batch(const io::ParticleSet& dataset,
                                       const TrainConfig& cfg, Rng& rng,
                                       std::optional<double> force_t = {});

net::Batch to_net_batch(const std::vector<TrainingTarget>& targets);

struct TrainResult {
  net::VelocityNet net;
  std::vector<double> losses;  // one entry per completed step
  // True when a non-finite loss stopped training early; net then holds the
  // last state whose loss was finite.
  bool aborted = false;
};

// Runs steps of make_batch -> loss_and_grads -> adam_step. Deterministic in
// (dataset, net_cfg, cfg). Progress lines go to stderr as `step=<n> loss=<v>`.
TrainResult train(const io::ParticleSet& dataset, const net::NetConfig& net_cfg,
                  const TrainConfig& cfg);

struct SampleConfig {
  int n_steps = 10;  // Euler steps K; dt = 1/K
  int n_samples = 1;
  Prior prior = Prior::uniform_box;
  double prior_scale = 0.5;
  Mat cond;  // condition rows fed at every evaluation (may be 0 x 0)
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = default_threads()

  void validate() const;
};

// Integrates dx/dt = u(x, t) by forward Euler from t=0 to t=1, one extra
// evaluation at t=1 supplying the per-particle normal as the unit terminal
// velocity. Rows with terminal speed below 1e-8 get a zero normal and a
// warning. With the toroidal prior, positions wrap into [0,1)^D after every
// step. Output attributes are the D normal components.
io::ParticleSet sample(const net::VelocityNet& net, const SampleConfig& cfg);

}  // namespace ogpp::flow
