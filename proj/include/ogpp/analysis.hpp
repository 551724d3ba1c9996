#pragma once
// Flow-geometry diagnostics: Lipschitz ratios and cancellation scores of
// displacement fields over k-NN edges of interpolants, the four-regime
// mid-time study, and the conditional-covariance (variance collapse) study.

#include <cstdint>
#include <string>
#include <vector>

#include "ogpp/canon.hpp"
#include "ogpp/common.hpp"
#include "ogpp/flow.hpp"
#include "ogpp/io.hpp"

namespace ogpp::analysis {

// ||d1 - d0|| / ||(1-t) d0 + t d1|| for flattened endpoint differences of an
// edge; +infinity when the interpolated difference collapses below 1e-12.
// Large values mark steep, hard-to-regress velocity fields.
double lipschitz_ratio(const Vec& d0, const Vec& d1, double t);

// ||(1-t) d0 + t d1|| / ((1-t)||d0|| + t||d1|| + eps) in [0, 1]: 1 means the
// endpoint differences reinforce, near 0 means they cancel mid-path.
double cancellation_score(const Vec& d0, const Vec& d1, double t,
                          double eps = 1e-12);

// One k-NN edge between interpolant pairs i and j.
struct EdgeStats {
  Vec delta0;           // x0_i - x0_j, flattened
  Vec delta1;           // x1_i - x1_j, flattened
  double t = 0.0;
  double lipschitz = 0.0;
  double cancellation = 0.0;
  double dist_t = 0.0;  // ||(1-t) delta0 + t delta1||
};

EdgeStats edge_stats(const Vec& d0, const Vec& d1, double t);

struct BinRecord {
  double median_l = 0.0;
  double p90_l = 0.0;
  double median_canc = 0.0;
  double p90_canc = 0.0;
  double mean_dist = 0.0;
  int count = 0;
};

// Distance-binned edge statistics for one canonicalization regime; bins are
// ordered by increasing distance and hold equal edge counts (+-1).
struct RegimeStudy {
  flow::CanonSide regime = flow::CanonSide::none;
  std::vector<BinRecord> bins;
};

struct MidtimeConfig {
  int m_pairs = 200000;    // interpolant pool size M
  int n_anchors = 2000;    // anchors A (the first A pool entries)
  int k_neighbors = 32;    // K nearest pool neighbors per anchor
  int n_bins = 10;         // equal-frequency distance bins B
  double t = 0.5;          // interpolation time
  flow::Prior prior = flow::Prior::uniform_box;
  double prior_scale = 0.5;
  canon::CanonSpec canon;  // applied per regime side
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = default_threads()

  void validate() const;  // requires m_pairs >= n_anchors * k_neighbors
};

// Draws M (noise, data) pairs per regime (identical underlying draws across
// regimes), interpolates at time t, builds the anchor k-NN graph over the
// flattened interpolants, and reports per-bin medians and 90th percentiles of
// the Lipschitz ratio and cancellation score.
std::vector<RegimeStudy> midtime_study(
    const io::ParticleSet& dataset, const std::vector<flow::CanonSide>& regimes,
    const MidtimeConfig& cfg);

struct CondCovConfig {
  std::vector<double> t_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int n_mc = 20000;     // Monte-Carlo pair pool per t
  int n_anchors = 100;  // conditioning anchors (the first pool entries)
  // Conditioning ball radius as a fraction of the flattened interpolant
  // cloud's bounding-box diagonal; balls with fewer than two members are
  // widened (doubled) with a warning.
  double ball_radius_frac = 0.05;
  flow::Prior prior = flow::Prior::uniform_box;
  double prior_scale = 0.5;
  canon::CanonSpec canon;
  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const;
};

// Trace of the conditional covariance of the regression target Y = x1 - x0
// given that the interpolant lies in a ball, averaged over anchors, with and
// without x1 canonicalization. Standard errors are across anchors; the
// difference uses anchor-paired draws (identical noise and data indices in
// both arms), so se_diff reflects the paired estimator.
struct CondCovPoint {
  double t = 0.0;
  double trace_canon = 0.0;
  double se_canon = 0.0;
  double trace_plain = 0.0;
  double se_plain = 0.0;
  double diff = 0.0;     // plain - canon
  double se_diff = 0.0;
};

std::vector<CondCovPoint> cond_cov_study(const io::ParticleSet& dataset,
                                         const CondCovConfig& cfg);

// CSV exports (one row per bin / per t), %.9g formatting.
std::string regime_study_csv(const std::vector<RegimeStudy>& studies);
std::string cond_cov_csv(const std::vector<CondCovPoint>& points);

}  // namespace ogpp::analysis
