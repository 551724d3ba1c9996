#pragma once
// Task-specific evaluation: radial power spectra, gyration-fit fractal
// dimension, Thomson residuals, minimal-surface quality, set-distribution
// metrics (Chamfer, exact EMD, 1-NNA), and normal accuracy.

#include <string>
#include <utility>
#include <vector>

#include "ogpp/common.hpp"

namespace ogpp::metrics {

// Azimuthally averaged power spectrum of 2-D point sets on the unit torus.
// Power is normalized by the point count, so an ideal Poisson process has
// power 1 in every bin.
struct SpectrumProfile {
  std::vector<double> freq_bins;  // radial bin centers, strictly increasing
  std::vector<double> power;      // mean power per bin, nonnegative
  int n_samples_averaged = 0;
};

struct SpectrumComparison {
  double pearson = 0.0;  // Pearson correlation of the two power arrays
  double rel_l2 = 0.0;   // ||gen - gt||_2 / ||gt||_2
};

// Least-squares fit of log R_g(n) against log n over growth prefixes.
struct FractalFit {
  double d_f = 0.0;     // estimated fractal dimension (1 / fitted slope)
  double fit_r2 = 0.0;  // R^2 of the log-log fit
  int n_lo = 0;         // smallest prefix size used
  int n_hi = 0;         // largest prefix size used (the full cluster)
};

struct MinSurfaceMetrics {
  double area_err = 0.0;          // |shoelace/domain - target fraction|
  double angle_smoothness = 0.0;  // std of turning angles (radians)
  double uniformity_cv = 0.0;     // CV of consecutive segment lengths
  bool valid = true;              // false when the polyline self-intersects
};

struct ThomsonMetrics {
  double cv_avg = 0.0;    // within-shell nearest-neighbor CV, shell-averaged
  double ftan_rms = 0.0;  // RMS tangential Coulomb force over particles
  bool valid = true;      // false when particles coincide (infinite force)
};

struct NormalStats {
  double mean_cos = 0.0;
  double std_cos = 0.0;
  double median_unoriented_deg = 0.0;
};

// Mean over an integer frequency lattice |f| <= 2*sqrt(N) (DC excluded) of
// P(f) = |sum_j exp(-2*pi*i f.x_j)|^2 / N, azimuthally averaged into
// n_freq_bins radial bins and then averaged over samples. All samples must
// share one point count; empty bins are dropped.
SpectrumProfile radial_power_spectrum(const std::vector<Mat>& batch,
                                      int n_freq_bins);

// Requires identical binning; throws DomainError when either profile has
// zero variance (Pearson undefined) or a zero ground-truth norm.
SpectrumComparison spectrum_compare(const SpectrumProfile& gen,
                                    const SpectrumProfile& gt);

// Cluster rows must be ordered by attachment. Fits prefixes
// n in [min_prefix_frac * N, N]; throws DomainError on a nonpositive slope.
FractalFit fractal_dimension(const Mat& cluster, double min_prefix_frac = 0.125);

// Boundary is a closed polyline (rows are consecutive vertices); the segment
// closing last row to first is implied. The anchors argument is carried for
// report context and does not enter the three scalars. domain_area scales the
// shoelace area into a fraction.
MinSurfaceMetrics min_surface_metrics(const Mat& boundary, const Mat& anchors,
                                      double target_fraction,
                                      double domain_area = 1.0);

// shell_of[i] gives the shell index of particle i; radii must cover every
// assigned shell. Coulomb forces only (no spring terms): the residual
// tangential force is the physical equilibrium measure.
ThomsonMetrics thomson_metrics(const Mat& config,
                               const std::vector<int>& shell_of,
                               const std::vector<double>& radii);

// Symmetric Chamfer: mean over each set of the squared distance to the
// nearest point of the other set, averaged over the two directions.
double chamfer(const Mat& a, const Mat& b);

// Exact earth mover's distance: minimal mean Euclidean assignment cost via
// the Hungarian algorithm. Requires equal sizes, N <= 512.
double emd(const Mat& a, const Mat& b);

enum class SetDistance { chamfer, emd };

// Leave-one-out 1-nearest-neighbor two-sample accuracy over the pooled
// samples; 0.5 means indistinguishable sets. Distance ties vote for the
// other set, so exact duplicates between sets drive the accuracy to 0.
double one_nna(const std::vector<Mat>& set_a, const std::vector<Mat>& set_b,
               SetDistance dist);

// Per-particle cosine similarity between predicted normals and the normal of
// the nearest ground-truth position. All normals must be unit within 1e-3.
NormalStats normal_stats(const Mat& pred_pos, const Mat& pred_normals,
                         const Mat& gt_pos, const Mat& gt_normals);

// Task tag plus named scalars and optional spectrum profiles; serializes to
// a JSON object. All values must be finite.
struct MetricReport {
  std::string task;
  std::vector<std::pair<std::string, double>> scalars;
  std::vector<std::pair<std::string, SpectrumProfile>> profiles;

  std::string to_json() const;
};

// One "freq,power" line per bin.
std::string spectrum_csv(const SpectrumProfile& profile);

}  // namespace ogpp::metrics
