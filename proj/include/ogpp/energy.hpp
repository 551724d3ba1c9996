// Energy-driven dataset generators: blue-noise point sets, lattice DLA
// clusters, Thomson shell configurations, and minimal-surface boundary
// curves.  Every generator is deterministic in (config, seed): sample k of a
// set always draws from the stream (seed, k), so generation order and thread
// count never change the output.
#pragma once

#include <cstdint>
#include <vector>

#include "ogpp/common.hpp"
#include "ogpp/io.hpp"

namespace ogpp::energy {

// --- Gaussian blue noise ---------------------------------------------------

// Points in the unit torus [0,1)^2 minimizing the periodic pair energy
//   E = sum_{i<j} exp(-|x_i - x_j|^2_torus / (2 sigma^2)),
// sigma = sigma_factor / sqrt(n_points), by gradient descent from seeded
// uniform noise.  Steps that would raise the energy are backtracked (halved)
// until the energy is nonincreasing, so accepted energy is monotone.
struct BlueNoiseConfig {
  int n_points = 256;
  int n_samples = 1;
  double sigma_factor = 0.35;
  double step = 1e-3;  // initial step size; adapted by backtracking
  int iters = 400;
  uint64_t seed = 0;
  void validate() const;
};

io::ParticleSet gen_blue_noise(const BlueNoiseConfig& cfg);

// Periodic pair energy of a point set in [0,1)^2 (exposed for tests).
double blue_noise_energy(const Mat& points, double sigma);

// --- diffusion-limited aggregation ----------------------------------------

// Lattice DLA: a seed cell at the grid center; walkers are launched uniformly
// on a circle of radius R_cluster + 5, take 4-neighbor random steps, attach
// on first 4-neighbor contact with the cluster, and are relaunched when they
// stray beyond twice the launch radius.  Attribute channel 0 records the
// attachment order (0 for the seed).  Positions are recentered on the seed
// and rescaled to fit [-1,1]^2.
struct DlaConfig {
  int n_particles = 512;
  int grid_size = 256;
  int n_samples = 1;
  uint64_t seed = 0;
  void validate() const;  // grid_size >= 64; n_particles <= grid_size^2 / 8
};

io::ParticleSet gen_dla(const DlaConfig& cfg);

// --- Thomson shells --------------------------------------------------------

// Minimizes  E = sum_{i<j} 1/|x_i-x_j| + (k/2) sum_i (|x_i| - r_shell(i))^2
// by gradient descent with a backtracking line search (never accepting an
// energy increase) until every tangential force component is below tol.
// Shell assignment is fixed a priori: particle i belongs to shell
// i / per_shell.  Samples that fail to converge are regenerated from a fresh
// sub-seed, at most 5 times, before a convergence error is raised.
struct ThomsonConfig {
  int n_shells = 3;
  int per_shell = 32;
  std::vector<double> radii = {1.0, 1.5, 2.0};  // strictly increasing
  double spring_k = 100.0;
  double lr = 2e-3;  // initial step size
  int iters = 20000;
  double tol = 1e-4;  // max |tangential force component| at convergence
  int n_samples = 1;
  uint64_t seed = 0;
  void validate() const;
};

io::ParticleSet gen_thomson(const ThomsonConfig& cfg);

// --- minimal surface (2-D soap film) --------------------------------------

// Closed boundary curve through anchors pinned on the unit-square boundary,
// minimizing perimeter subject to a fixed enclosed area, by projected
// gradient descent: curve-shortening (Laplacian) force on free vertices, a
// uniform normal offset enforcing the area constraint after every step, and
// periodic tangential redistribution.  The result is arc-length
// reparameterized (vertex counts per anchor span proportional to span
// length), canonicalized to counterclockwise order starting at the left-
// bottom anchor, and carries an anchor-flag attribute channel.  At
// equilibrium each free span is a circular arc and all spans share one
// curvature (constant pressure), which the tests verify.  Samples whose curve
// self-intersects or leaves the domain are regenerated from a fresh sub-seed
// (at most 5 times).
struct MinSurfaceConfig {
  int n_anchors = 6;
  int boundary_points = 256;
  double area_fraction = 0.7;
  double domain_lo = 0.0;  // square domain [lo, hi]^2
  double domain_hi = 1.0;
  int iters = 4000;
  int n_samples = 1;
  uint64_t seed = 0;
  // When non-empty: anchor positions as boundary parameters in [0,4)
  // (side + fraction, counterclockwise from the bottom-left corner) used for
  // every sample instead of seeded random anchors.
  std::vector<double> fixed_anchor_params;
  // When true, each emitted sample is a random dihedral relabeling (cyclic
  // rotation plus optional reflection) of the canonical ring, so a
  // fixed-anchor run yields one geometric curve under many labelings.
  bool dihedral_shuffle = false;
  void validate() const;
};

io::ParticleSet gen_min_surface(const MinSurfaceConfig& cfg);

// Maps a boundary parameter u in [0,4) to a point on the square boundary
// (side floor(u): 0 bottom, 1 right, 2 top, 3 left, counterclockwise).
Vec square_boundary_point(double u, double lo, double hi);

// Outward unit normals of a closed counterclockwise polyline: at each vertex
// the right-hand perpendicular of the central-difference tangent.
Mat polyline_outward_normals(const Mat& ring);

}  // namespace ogpp::energy
