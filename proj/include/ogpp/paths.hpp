#pragma once
// Conditional probability paths. A path interpolates a noise endpoint x0
// (t = 0) to a data endpoint x1 (t = 1); each family also defines the exact
// velocity of a point moving along it, which is the regression target for the
// velocity network. Geometric Hermite paths additionally carry a terminal
// tangent v1 that encodes a per-particle attribute (a surface normal
// direction scaled by one of the terminal-magnitude rules below).

#include "ogpp/common.hpp"

namespace ogpp::paths {

enum class Family { linear, toroidal_linear, hermite_quadratic, hermite_cubic };
enum class TerminalMode { none, ntv, atv, atv_optimal };
enum class N0Mode { zero, chord };

const char* family_name(Family f);
Family family_from_name(const std::string& name);
const char* terminal_mode_name(TerminalMode m);
TerminalMode terminal_mode_from_name(const std::string& name);

struct PathSpec {
  Family family = Family::linear;
  TerminalMode terminal_mode = TerminalMode::none;
  double lambda = 1.0;            // ATV bend penalty
  N0Mode n0_mode = N0Mode::zero;  // cubic initial tangent rule
  double alpha_lo = 0.5;          // ATV-optimal search range
  double alpha_hi = 15.0;

  void validate() const;
};

struct PathSample {
  Mat x_t;    // N x D position at time t
  Mat u_ref;  // N x D reference velocity
  double t = 0.0;
};

// Straight-line path: x_t = (1-t) x0 + t x1, u = x1 - x0.
PathSample linear_sample(const Mat& x0, const Mat& x1, double t);

// Straight-line path on the unit torus: the displacement is the minimal-image
// difference wrapped into [-0.5, 0.5) per coordinate (ties at |d| = 0.5
// resolve to -0.5) and positions wrap modulo 1.
PathSample toroidal_sample(const Mat& x0, const Mat& x1, double t);

// Quadratic Hermite curve gamma(t) = x0 + (2t - t^2)(x1 - x0) + (t^2 - t) v1;
// it hits x0 at t=0, x1 at t=1, with terminal tangent gamma'(1) = v1.
Vec hermite_eval(const Vec& x0, const Vec& x1, const Vec& v1, double t);

// Conditional velocity of the quadratic Hermite path expressed through the
// current position: u(x_t) = 2/(1-t) (x1 - x_t) - v1, with the removable
// limit u = v1 at t = 1.
Vec hermite_velocity(const Vec& x_t, const Vec& x1, const Vec& v1, double t);

// Arc-length-aware terminal velocity: D = |x1 - x0|, S = chord_dir . n_hat,
// L_arc = D (1 + lambda (1 - S)), v1 = L_arc n_hat. The magnitude grows with
// chord length and with chord/normal misalignment.
Vec atv(const Vec& x0, const Vec& x1, const Vec& n_hat, double lambda);

// Normalized terminal velocity: v1 = n_hat (unit magnitude).
Vec ntv(const Vec& n_hat);

// Variance-optimal terminal magnitude: v1 = alpha* n_hat with alpha*
// minimizing the scale-free over-t variance of the quadratic Hermite speed
// profile (variance normalized by squared mean speed, i.e. the squared
// coefficient of variation -- scale-free so that slow and fast trajectories
// are judged by the same uniformity yardstick), found by golden-section
// search (after a coarse bracketing scan) over [alpha_lo, alpha_hi] on a
// 129-point uniform-t quadrature.
Vec atv_optimal(const Vec& x0, const Vec& x1, const Vec& n_hat,
                double alpha_lo, double alpha_hi);
double atv_optimal_alpha(const Vec& x0, const Vec& x1, const Vec& n_hat,
                         double alpha_lo, double alpha_hi);

// Variance and coefficient of variation of |gamma'(t)| on the 129-point
// uniform grid (trapezoid weights); shared by atv_optimal and the tests.
double hermite_speed_variance(const Vec& x0, const Vec& x1, const Vec& v1);
double hermite_speed_cv(const Vec& x0, const Vec& x1, const Vec& v1);

// Exact length of the quadratic Hermite curve. |gamma'(t)|^2 is a quadratic
// a t^2 + b t + c; the closed form of integral sqrt(a t^2 + b t + c) dt is
// used except when the discriminant 4ac - b^2 is within 1e-12 of zero (speed
// touches zero), where Gauss-Legendre quadrature on the smooth sub-intervals
// takes over.
double hermite_arc_length(const Vec& x0, const Vec& x1, const Vec& v1);

// Cubic Hermite path with endpoint tangents (v0, v1); v0 is 0 or the unit
// chord direction per n0_mode. u_ref is the exact derivative.
PathSample cubic_hermite_sample(const Mat& x0, const Mat& x1, N0Mode n0_mode,
                                const Mat& v1, double t);

// Batch counterpart of hermite_eval / hermite_velocity over N x D matrices.
PathSample hermite_sample(const Mat& x0, const Mat& x1, const Mat& v1,
                          double t);

}  // namespace ogpp::paths
