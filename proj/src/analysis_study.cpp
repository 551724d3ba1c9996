// The mid-time regime study and the conditional-covariance study.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "ogpp/analysis.hpp"

namespace ogpp::analysis {

namespace {

template <typename Out>
void flatten_into(const Mat& config, Out&& out) {
  const int n = static_cast<int>(config.rows());
  const int d = static_cast<int>(config.cols());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) out(r * d + c) = config(r, c);
}

double median_sorted(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Nearest-rank 90th percentile of sorted values.
double p90_sorted(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const size_t idx = static_cast<size_t>(
      std::ceil(0.9 * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

struct Edge {
  double dist = 0.0;
  double lips = 0.0;
  double canc = 0.0;
};

}  // namespace

std::vector<RegimeStudy> midtime_study(
    const io::ParticleSet& dataset, const std::vector<flow::CanonSide>& regimes,
    const MidtimeConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.samples() < 1)
    throw ConfigError("midtime study: dataset has no samples");
  if (regimes.empty()) throw ConfigError("midtime study: no regimes given");

  const int m = cfg.m_pairs;
  const int a = cfg.n_anchors;
  const int k = cfg.k_neighbors;
  const int n = dataset.n;
  const int d = dataset.d;
  const int dim = n * d;
  const double t = cfg.t;
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();

  std::vector<RegimeStudy> out;
  for (const flow::CanonSide regime : regimes) {
    const bool canon_x0 = regime == flow::CanonSide::x0_only ||
                          regime == flow::CanonSide::both;
    const bool canon_x1 = regime == flow::CanonSide::x1_only ||
                          regime == flow::CanonSide::both;

    // Pair pool. Streams depend only on the pair index, so every regime sees
    // identical underlying draws (the comparison is paired).
    Mat px0(m, dim), px1(m, dim), pz(m, dim);
    parallel_for(static_cast<size_t>(m), threads, [&](std::size_t i) {
      Rng rng(cfg.seed, static_cast<std::uint64_t>(i));
      const int s =
          static_cast<int>(rng.below(static_cast<uint64_t>(dataset.samples())));
      Mat x1v = dataset.configs[static_cast<size_t>(s)];
      Mat x0v = flow::draw_prior(cfg.prior, n, d, cfg.prior_scale, rng);
      if (canon_x1) x1v = canon::canonicalize(x1v, nullptr, cfg.canon).config;
      if (canon_x0) x0v = canon::canonicalize(x0v, nullptr, cfg.canon).config;
      flatten_into(x0v, px0.row(static_cast<int>(i)));
      flatten_into(x1v, px1.row(static_cast<int>(i)));
      pz.row(static_cast<int>(i)) = (1.0 - t) * px0.row(static_cast<int>(i)) +
                                    t * px1.row(static_cast<int>(i));
    });

    // k-NN of each anchor over the full pool, via chunked Gram products to
    // bound the distance-matrix memory.
    const Vec zn = pz.rowwise().squaredNorm();
    std::vector<Edge> edges(static_cast<size_t>(a) * k);
    const int chunk = 32;
    for (int a0 = 0; a0 < a; a0 += chunk) {
      const int ac = std::min(chunk, a - a0);
      const Mat gram = pz.middleRows(a0, ac) * pz.transpose();  // ac x m
      parallel_for(static_cast<size_t>(ac), threads, [&](std::size_t r) {
        const int ai = a0 + static_cast<int>(r);
        // K smallest (squared distance, index) via a bounded max-heap; the
        // index tie-break keeps the selection deterministic.
        std::vector<std::pair<double, int>> heap;
        heap.reserve(static_cast<size_t>(k) + 1);
        for (int j = 0; j < m; ++j) {
          if (j == ai) continue;
          const std::pair<double, int> cand(
              zn(ai) + zn(j) - 2.0 * gram(static_cast<int>(r), j), j);
          if (static_cast<int>(heap.size()) < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
          } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
          }
        }
        std::sort_heap(heap.begin(), heap.end());
        for (int q = 0; q < k; ++q) {
          const int j = heap[static_cast<size_t>(q)].second;
          const Vec d0 = (px0.row(ai) - px0.row(j)).transpose();
          const Vec d1 = (px1.row(ai) - px1.row(j)).transpose();
          Edge e;
          e.lips = lipschitz_ratio(d0, d1, t);
          e.canc = cancellation_score(d0, d1, t);
          e.dist = ((1.0 - t) * d0 + t * d1).norm();
          edges[static_cast<size_t>(ai) * k + static_cast<size_t>(q)] = e;
        }
      });
    }

    // Equal-frequency distance bins (counts differ by at most one).
    std::vector<int> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      const auto& ex = edges[static_cast<size_t>(x)];
      const auto& ey = edges[static_cast<size_t>(y)];
      if (ex.dist != ey.dist) return ex.dist < ey.dist;
      return x < y;
    });

    RegimeStudy study;
    study.regime = regime;
    const int total = static_cast<int>(edges.size());
    int pos = 0;
    for (int bi = 0; bi < cfg.n_bins; ++bi) {
      const int cnt = total / cfg.n_bins + (bi < total % cfg.n_bins ? 1 : 0);
      std::vector<double> ls, cs;
      ls.reserve(static_cast<size_t>(cnt));
      cs.reserve(static_cast<size_t>(cnt));
      double dist_acc = 0.0;
      for (int q = 0; q < cnt; ++q) {
        const Edge& e = edges[static_cast<size_t>(order[pos + q])];
        ls.push_back(e.lips);
        cs.push_back(e.canc);
        dist_acc += e.dist;
      }
      pos += cnt;
      std::sort(ls.begin(), ls.end());
      std::sort(cs.begin(), cs.end());
      BinRecord rec;
      rec.median_l = median_sorted(ls);
      rec.p90_l = p90_sorted(ls);
      rec.median_canc = median_sorted(cs);
      rec.p90_canc = p90_sorted(cs);
      rec.mean_dist = cnt > 0 ? dist_acc / cnt : 0.0;
      rec.count = cnt;
      study.bins.push_back(rec);
    }
    out.push_back(std::move(study));
  }
  return out;
}

std::vector<CondCovPoint> cond_cov_study(const io::ParticleSet& dataset,
                                         const CondCovConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.samples() < 1)
    throw ConfigError("cond cov study: dataset has no samples");

  const int m = cfg.n_mc;
  const int a = cfg.n_anchors;
  const int n = dataset.n;
  const int d = dataset.d;
  const int dim = n * d;
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();

  std::vector<CondCovPoint> out;
  for (size_t ti = 0; ti < cfg.t_grid.size(); ++ti) {
    const double t = cfg.t_grid[ti];

    // Both arms share the same underlying draws (paired comparison); only the
    // data endpoint differs by canonicalization.
    Mat y_plain(m, dim), z_plain(m, dim), y_canon(m, dim), z_canon(m, dim);
    parallel_for(static_cast<size_t>(m), threads, [&](std::size_t i) {
      Rng rng(cfg.seed,
              (static_cast<std::uint64_t>(ti) << 32) | static_cast<std::uint64_t>(i));
      const int s =
          static_cast<int>(rng.below(static_cast<uint64_t>(dataset.samples())));
      const Mat x0v = flow::draw_prior(cfg.prior, n, d, cfg.prior_scale, rng);
      const Mat& x1raw = dataset.configs[static_cast<size_t>(s)];
      const Mat x1can = canon::canonicalize(x1raw, nullptr, cfg.canon).config;
      Eigen::RowVectorXd f0(dim), fr(dim), fc(dim);
      flatten_into(x0v, f0);
      flatten_into(x1raw, fr);
      flatten_into(x1can, fc);
      const int row = static_cast<int>(i);
      y_plain.row(row) = fr - f0;
      z_plain.row(row) = (1.0 - t) * f0 + t * fr;
      y_canon.row(row) = fc - f0;
      z_canon.row(row) = (1.0 - t) * f0 + t * fc;
    });

    // Per-anchor trace of the sample covariance of Y over the conditioning
    // ball around the anchor's interpolant.
    const auto arm_traces = [&](const Mat& y, const Mat& z) {
      const Eigen::RowVectorXd lo = z.colwise().minCoeff();
      const Eigen::RowVectorXd hi = z.colwise().maxCoeff();
      double base_radius = cfg.ball_radius_frac * (hi - lo).norm();
      if (base_radius <= 0.0) base_radius = 1e-9;  // all-identical cloud
      std::vector<double> traces(static_cast<size_t>(a), 0.0);
      parallel_for(static_cast<size_t>(a), threads, [&](std::size_t ai) {
        double radius = base_radius;
        std::vector<int> members;
        bool widened = false;
        for (;;) {
          members.clear();
          const double r2 = radius * radius;
          for (int j = 0; j < m; ++j)
            if ((z.row(j) - z.row(static_cast<int>(ai))).squaredNorm() <= r2)
              members.push_back(j);
          if (static_cast<int>(members.size()) >= 2) break;
          radius *= 2.0;
          widened = true;
        }
        if (widened)
          warn("cond cov study: widened conditioning ball at anchor " +
               std::to_string(ai));
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
        for (int j : members) mean += y.row(j);
        mean /= static_cast<double>(members.size());
        double acc = 0.0;
        for (int j : members) acc += (y.row(j) - mean).squaredNorm();
        traces[ai] = acc / static_cast<double>(members.size() - 1);
      });
      return traces;
    };

    const auto tc = arm_traces(y_canon, z_canon);
    const auto tp = arm_traces(y_plain, z_plain);

    const auto mean_se = [a](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(a);
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double se =
          a > 1 ? std::sqrt(var / (a - 1) / a) : 0.0;
      return std::make_pair(mean, se);
    };

    CondCovPoint pt;
    pt.t = t;
    std::tie(pt.trace_canon, pt.se_canon) = mean_se(tc);
    std::tie(pt.trace_plain, pt.se_plain) = mean_se(tp);
    std::vector<double> diffs(static_cast<size_t>(a));
    for (int i = 0; i < a; ++i)
      diffs[static_cast<size_t>(i)] = tp[static_cast<size_t>(i)] - tc[static_cast<size_t>(i)];
    std::tie(pt.diff, pt.se_diff) = mean_se(diffs);
    out.push_back(pt);
  }
  return out;
}

}  // namespace ogpp::analysis
