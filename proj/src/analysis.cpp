// Edge statistics and CSV exports for the flow-geometry diagnostics.

#include "ogpp/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace ogpp::analysis {

namespace {

void check_edge_inputs(const Vec& d0, const Vec& d1, double t) {
  if (d0.size() != d1.size() || d0.size() == 0)
    throw ConfigError("edge stats: differences must share a nonzero size");
  if (!(t > 0.0 && t < 1.0))
    throw DomainError("edge stats: t must lie strictly inside (0,1)");
}

std::string format_row(const std::vector<double>& vals) {
  std::string row;
  char buf[64];
  for (size_t i = 0; i < vals.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", vals[i]);
    if (i) row += ',';
    row += buf;
  }
  return row;
}

}  // namespace

double lipschitz_ratio(const Vec& d0, const Vec& d1, double t) {
  check_edge_inputs(d0, d1, t);
  const double denom = ((1.0 - t) * d0 + t * d1).norm();
  if (denom < 1e-12) return std::numeric_limits<double>::infinity();
  return (d1 - d0).norm() / denom;
}

double cancellation_score(const Vec& d0, const Vec& d1, double t, double eps) {
  check_edge_inputs(d0, d1, t);
  if (eps < 0.0) throw ConfigError("cancellation_score: eps must be >= 0");
  const double num = ((1.0 - t) * d0 + t * d1).norm();
  return num / ((1.0 - t) * d0.norm() + t * d1.norm() + eps);
}

EdgeStats edge_stats(const Vec& d0, const Vec& d1, double t) {
  EdgeStats e;
  e.delta0 = d0;
  e.delta1 = d1;
  e.t = t;
  e.lipschitz = lipschitz_ratio(d0, d1, t);
  e.cancellation = cancellation_score(d0, d1, t);
  e.dist_t = ((1.0 - t) * d0 + t * d1).norm();
  return e;
}

void MidtimeConfig::validate() const {
  canon.validate();
  if (m_pairs < 1 || n_anchors < 1 || k_neighbors < 1 || n_bins < 1)
    throw ConfigError("midtime config: sizes must be positive");
  if (static_cast<long long>(n_anchors) * k_neighbors > m_pairs)
    throw ConfigError(
        "midtime config: m_pairs must cover n_anchors * k_neighbors edges");
  if (k_neighbors >= m_pairs)
    throw ConfigError("midtime config: k_neighbors must be below m_pairs");
  if (static_cast<long long>(n_bins) >
      static_cast<long long>(n_anchors) * k_neighbors)
    throw ConfigError("midtime config: more bins than graph edges");
  if (!(t > 0.0 && t < 1.0))
    throw ConfigError("midtime config: t must lie strictly inside (0,1)");
  if (prior_scale <= 0.0)
    throw ConfigError("midtime config: prior_scale must be positive");
  if (threads < 0) throw ConfigError("midtime config: threads must be >= 0");
}

void CondCovConfig::validate() const {
  canon.validate();
  if (t_grid.empty()) throw ConfigError("cond cov config: empty t grid");
  for (double t : t_grid)
    if (!(t > 0.0 && t < 1.0))
      throw ConfigError("cond cov config: every t must lie inside (0,1)");
  if (n_mc < 2 || n_anchors < 1)
    throw ConfigError("cond cov config: sizes must be positive");
  if (n_anchors > n_mc)
    throw ConfigError("cond cov config: n_anchors must not exceed n_mc");
  if (ball_radius_frac <= 0.0)
    throw ConfigError("cond cov config: ball_radius_frac must be positive");
  if (prior_scale <= 0.0)
    throw ConfigError("cond cov config: prior_scale must be positive");
  if (threads < 0) throw ConfigError("cond cov config: threads must be >= 0");
}

std::string regime_study_csv(const std::vector<RegimeStudy>& studies) {
  std::string out =
      "regime,bin,median_l,p90_l,median_canc,p90_canc,mean_dist,count\n";
  for (const auto& study : studies) {
    for (size_t b = 0; b < study.bins.size(); ++b) {
      const BinRecord& r = study.bins[b];
      out += flow::canon_side_name(study.regime);
      out += ',';
      out += format_row({static_cast<double>(b), r.median_l, r.p90_l,
                         r.median_canc, r.p90_canc, r.mean_dist,
                         static_cast<double>(r.count)});
      out += '\n';
    }
  }
  return out;
}

std::string cond_cov_csv(const std::vector<CondCovPoint>& points) {
  std::string out =
      "t,trace_canon,se_canon,trace_plain,se_plain,diff,se_diff\n";
  for (const auto& p : points) {
    out += format_row({p.t, p.trace_canon, p.se_canon, p.trace_plain,
                       p.se_plain, p.diff, p.se_diff});
    out += '\n';
  }
  return out;
}

}  // namespace ogpp::analysis
