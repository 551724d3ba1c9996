// Evaluation metrics for generated particle configurations.

#include "ogpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ogpp/io.hpp"

namespace ogpp::metrics {

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double pop_std(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / double(v.size()));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// --- radial power spectrum ---------------------------------------------------

SpectrumProfile radial_power_spectrum(const std::vector<Mat>& batch,
                                      int n_freq_bins) {
  if (batch.empty())
    throw ConfigError("spectrum: need at least one sample");
  if (n_freq_bins < 1) throw ConfigError("spectrum: n_freq_bins must be >= 1");
  const int n = static_cast<int>(batch[0].rows());
  if (n < 1) throw ConfigError("spectrum: empty point set");
  for (const Mat& m : batch) {
    if (m.rows() != n || m.cols() != 2)
      throw ConfigError("spectrum: all samples must be N x 2 with one N");
  }

  const int f_max = std::max(1, int(std::floor(2.0 * std::sqrt(double(n)))));
  const double f_max_sq = double(f_max) * double(f_max);

  // Half-lattice: fy > 0, plus the fy = 0, fx > 0 axis. P(-f) = P(f), so the
  // half covers every radius with the same azimuthal weighting.
  struct LatticePoint {
    int fx, fy, bin;
  };
  std::vector<LatticePoint> lattice;
  std::vector<int> bin_counts(static_cast<size_t>(n_freq_bins), 0);
  for (int fy = 0; fy <= f_max; ++fy)
    for (int fx = (fy == 0 ? 1 : -f_max); fx <= f_max; ++fx) {
      const double r2 = double(fx) * fx + double(fy) * fy;
      if (r2 > f_max_sq) continue;
      int bin = int(std::sqrt(r2) / f_max * n_freq_bins);
      bin = std::min(bin, n_freq_bins - 1);
      lattice.push_back({fx, fy, bin});
      ++bin_counts[static_cast<size_t>(bin)];
    }

  // Per-sample bin means, then a fixed-order mean over samples.
  std::vector<std::vector<double>> per_sample(batch.size());
  parallel_for(batch.size(), default_threads(), [&](size_t s) {
    const Mat& pts = batch[s];
    using CMat = Eigen::MatrixXcd;
    // ax(k, j) = exp(-2*pi*i*(k - f_max)*x_j), ay(k, j) likewise for y >= 0;
    // the transform at (fx, fy) is then the row-column dot product, evaluated
    // for the whole lattice at once as a complex GEMM.
    CMat ax(2 * f_max + 1, n), ay(f_max + 1, n);
    for (int j = 0; j < n; ++j) {
      const std::complex<double> wx =
          std::polar(1.0, -2.0 * kPi * pts(j, 0));
      const std::complex<double> wy =
          std::polar(1.0, -2.0 * kPi * pts(j, 1));
      ax(f_max, j) = 1.0;
      for (int k = 1; k <= f_max; ++k) {
        ax(f_max + k, j) = ax(f_max + k - 1, j) * wx;
        ax(f_max - k, j) = std::conj(ax(f_max + k, j));
      }
      ay(0, j) = 1.0;
      for (int k = 1; k <= f_max; ++k) ay(k, j) = ay(k - 1, j) * wy;
    }
    const CMat transform = ax * ay.transpose();

    std::vector<double> bins(static_cast<size_t>(n_freq_bins), 0.0);
    for (const LatticePoint& lp : lattice)
      bins[static_cast<size_t>(lp.bin)] +=
          std::norm(transform(lp.fx + f_max, lp.fy)) / double(n);
    for (int b = 0; b < n_freq_bins; ++b)
      if (bin_counts[static_cast<size_t>(b)] > 0)
        bins[static_cast<size_t>(b)] /= bin_counts[static_cast<size_t>(b)];
    per_sample[s] = std::move(bins);
  });

  SpectrumProfile prof;
  prof.n_samples_averaged = static_cast<int>(batch.size());
  for (int b = 0; b < n_freq_bins; ++b) {
    if (bin_counts[static_cast<size_t>(b)] == 0) continue;  // drop empty bins
    double acc = 0.0;
    for (const auto& bins : per_sample) acc += bins[static_cast<size_t>(b)];
    prof.freq_bins.push_back((b + 0.5) * double(f_max) / n_freq_bins);
    prof.power.push_back(acc / double(batch.size()));
  }
  return prof;
}

SpectrumComparison spectrum_compare(const SpectrumProfile& gen,
                                    const SpectrumProfile& gt) {
  if (gen.freq_bins.size() != gt.freq_bins.size() ||
      !std::equal(gen.freq_bins.begin(), gen.freq_bins.end(),
                  gt.freq_bins.begin()))
    throw ConfigError("spectrum_compare: binning mismatch");
  const size_t k = gen.power.size();
  if (k < 2) throw ConfigError("spectrum_compare: need at least two bins");

  const double mg = mean_of(gen.power);
  const double mt = mean_of(gt.power);
  double cov = 0.0, vg = 0.0, vt = 0.0, diff2 = 0.0, gt2 = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const double a = gen.power[i] - mg;
    const double b = gt.power[i] - mt;
    cov += a * b;
    vg += a * a;
    vt += b * b;
    diff2 += (gen.power[i] - gt.power[i]) * (gen.power[i] - gt.power[i]);
    gt2 += gt.power[i] * gt.power[i];
  }
  if (vg <= 0.0 || vt <= 0.0)
    throw DomainError("spectrum_compare: zero-variance profile");
  if (gt2 <= 0.0)
    throw DomainError("spectrum_compare: zero ground-truth spectrum");
  SpectrumComparison out;
  out.pearson = cov / std::sqrt(vg * vt);
  out.rel_l2 = std::sqrt(diff2 / gt2);
  return out;
}

// --- fractal dimension -------------------------------------------------------

FractalFit fractal_dimension(const Mat& cluster, double min_prefix_frac) {
  const int n = static_cast<int>(cluster.rows());
  if (n < 64) throw ConfigError("fractal fit: need at least 64 particles");
  if (cluster.cols() != 2) throw ConfigError("fractal fit: cluster must be Nx2");
  if (min_prefix_frac <= 0.0 || min_prefix_frac >= 1.0)
    throw ConfigError("fractal fit: min_prefix_frac must be in (0,1)");

  const int n_lo = std::max(2, int(std::ceil(min_prefix_frac * n)));

  // R_g of every prefix from running first and second moments.
  double sx = 0.0, sy = 0.0, s2 = 0.0;
  std::vector<double> log_n, log_rg;
  for (int i = 0; i < n; ++i) {
    sx += cluster(i, 0);
    sy += cluster(i, 1);
    s2 += cluster(i, 0) * cluster(i, 0) + cluster(i, 1) * cluster(i, 1);
    const int m = i + 1;
    if (m < n_lo) continue;
    const double cx = sx / m, cy = sy / m;
    const double rg2 = s2 / m - cx * cx - cy * cy;
    if (rg2 <= 0.0)
      throw DomainError("fractal fit: degenerate prefix (zero gyration)");
    log_n.push_back(std::log(double(m)));
    log_rg.push_back(0.5 * std::log(rg2));
  }

  const double mx = mean_of(log_n), my = mean_of(log_rg);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < log_n.size(); ++i) {
    cov += (log_n[i] - mx) * (log_rg[i] - my);
    vx += (log_n[i] - mx) * (log_n[i] - mx);
    vy += (log_rg[i] - my) * (log_rg[i] - my);
  }
  const double slope = cov / vx;
  if (slope <= 0.0) throw DomainError("fractal fit: nonpositive slope");

  FractalFit fit;
  fit.d_f = 1.0 / slope;
  fit.fit_r2 = vy > 0.0 ? (cov * cov) / (vx * vy) : 1.0;
  fit.n_lo = n_lo;
  fit.n_hi = n;
  return fit;
}

// --- minimal-surface quality -------------------------------------------------

namespace {

// Proper crossing or endpoint-touch between segments ab and cd, excluding
// shared polyline endpoints (handled by the caller's index arithmetic).
bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                    const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  const auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                         const Eigen::Vector2d& r) {
    const double v = (q.x() - p.x()) * (r.y() - p.y()) -
                     (q.y() - p.y()) * (r.x() - p.x());
    if (v > 1e-15) return 1;
    if (v < -1e-15) return -1;
    return 0;
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  const auto on_seg = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                         const Eigen::Vector2d& r) {
    return std::min(p.x(), q.x()) - 1e-15 <= r.x() &&
           r.x() <= std::max(p.x(), q.x()) + 1e-15 &&
           std::min(p.y(), q.y()) - 1e-15 <= r.y() &&
           r.y() <= std::max(p.y(), q.y()) + 1e-15;
  };
  if (o1 == 0 && on_seg(a, b, c)) return true;
  if (o2 == 0 && on_seg(a, b, d)) return true;
  if (o3 == 0 && on_seg(c, d, a)) return true;
  if (o4 == 0 && on_seg(c, d, b)) return true;
  return false;
}

bool ring_self_intersects(const Mat& ring) {
  const int m = static_cast<int>(ring.rows());
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d a = ring.row(i), b = ring.row((i + 1) % m);
    for (int j = i + 1; j < m; ++j) {
      if (j == i || (j + 1) % m == i || (i + 1) % m == j) continue;
      const Eigen::Vector2d c = ring.row(j), d = ring.row((j + 1) % m);
      if (segments_cross(a, b, c, d)) return true;
    }
  }
  return false;
}

}  // namespace

MinSurfaceMetrics min_surface_metrics(const Mat& boundary, const Mat& anchors,
                                      double target_fraction,
                                      double domain_area) {
  (void)anchors;  // report context only
  const int m = static_cast<int>(boundary.rows());
  if (m < 3 || boundary.cols() != 2)
    throw ConfigError("min surface metrics: boundary must be a closed Mx2 ring");
  if (domain_area <= 0.0)
    throw ConfigError("min surface metrics: domain_area must be positive");

  double shoelace = 0.0;
  for (int i = 0; i < m; ++i) {
    const int j = (i + 1) % m;
    shoelace += boundary(i, 0) * boundary(j, 1) -
                boundary(j, 0) * boundary(i, 1);
  }
  const double area = 0.5 * std::abs(shoelace);

  std::vector<double> lengths(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i)
    lengths[static_cast<size_t>(i)] =
        (boundary.row((i + 1) % m) - boundary.row(i)).norm();

  std::vector<double> turning(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d e0 =
        (boundary.row(i) - boundary.row((i + m - 1) % m)).transpose();
    const Eigen::Vector2d e1 =
        (boundary.row((i + 1) % m) - boundary.row(i)).transpose();
    turning[static_cast<size_t>(i)] =
        std::atan2(e0.x() * e1.y() - e0.y() * e1.x(), e0.dot(e1));
  }

  MinSurfaceMetrics out;
  out.area_err = std::abs(area / domain_area - target_fraction);
  out.angle_smoothness = pop_std(turning, mean_of(turning));
  const double len_mean = mean_of(lengths);
  out.uniformity_cv =
      len_mean > 0.0 ? pop_std(lengths, len_mean) / len_mean : 0.0;
  out.valid = !ring_self_intersects(boundary);
  return out;
}

// --- Thomson residuals -------------------------------------------------------

ThomsonMetrics thomson_metrics(const Mat& config,
                               const std::vector<int>& shell_of,
                               const std::vector<double>& radii) {
  const int n = static_cast<int>(config.rows());
  if (n < 2 || config.cols() != 3)
    throw ConfigError("thomson metrics: config must be Nx3 with N >= 2");
  if (static_cast<int>(shell_of.size()) != n)
    throw ConfigError("thomson metrics: shell_of must have one entry per row");
  int n_shells = 0;
  for (int s : shell_of) {
    if (s < 0) throw ConfigError("thomson metrics: negative shell index");
    n_shells = std::max(n_shells, s + 1);
  }
  if (static_cast<int>(radii.size()) < n_shells)
    throw ConfigError("thomson metrics: radii do not cover all shells");

  ThomsonMetrics out;

  // Tangential Coulomb force residual.
  double ftan2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d f = Eigen::Vector3d::Zero();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const Eigen::Vector3d d = config.row(i) - config.row(j);
      const double r = d.norm();
      if (r < 1e-12) {
        out.valid = false;
        out.ftan_rms = std::numeric_limits<double>::infinity();
        break;
      }
      f += d / (r * r * r);
    }
    if (!out.valid) break;
    const double rn = config.row(i).norm();
    if (rn < 1e-12) {
      out.valid = false;
      out.ftan_rms = std::numeric_limits<double>::infinity();
      break;
    }
    const Eigen::Vector3d radial = config.row(i).transpose() / rn;
    const Eigen::Vector3d tangential = f - f.dot(radial) * radial;
    ftan2 += tangential.squaredNorm();
  }
  if (out.valid) out.ftan_rms = std::sqrt(ftan2 / n);

  // Within-shell nearest-neighbor CV, averaged over shells with >= 2 members.
  double cv_sum = 0.0;
  int cv_shells = 0;
  for (int s = 0; s < n_shells; ++s) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (shell_of[static_cast<size_t>(i)] == s) members.push_back(i);
    if (members.size() < 2) continue;
    std::vector<double> nn(members.size(),
                           std::numeric_limits<double>::infinity());
    for (size_t a = 0; a < members.size(); ++a)
      for (size_t b = 0; b < members.size(); ++b) {
        if (a == b) continue;
        nn[a] = std::min(
            nn[a], (config.row(members[a]) - config.row(members[b])).norm());
      }
    const double mean = mean_of(nn);
    cv_sum += mean > 0.0 ? pop_std(nn, mean) / mean : 0.0;
    ++cv_shells;
  }
  out.cv_avg = cv_shells > 0 ? cv_sum / cv_shells : 0.0;
  return out;
}

// --- set distances -----------------------------------------------------------

double chamfer(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols())
    throw ConfigError("chamfer: dimension mismatch");
  if (a.rows() < 1 || b.rows() < 1)
    throw ConfigError("chamfer: empty point set");
  const auto one_way = [](const Mat& from, const Mat& to) {
    double acc = 0.0;
    for (int i = 0; i < from.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < to.rows(); ++j)
        best = std::min(best, (from.row(i) - to.row(j)).squaredNorm());
      acc += best;
    }
    return acc / double(from.rows());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

double emd(const Mat& a, const Mat& b) {
  const int n = static_cast<int>(a.rows());
  if (n != b.rows()) throw ConfigError("emd: sets must have equal size");
  if (a.cols() != b.cols()) throw ConfigError("emd: dimension mismatch");
  if (n < 1) throw ConfigError("emd: empty point set");
  if (n > 512) throw ConfigError("emd: exact assignment capped at N = 512");

  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (a.row(i) - b.row(j)).norm();

  // Hungarian algorithm, shortest-augmenting-path form with row/column
  // potentials; exact optimum in O(n^3). Indices are 1-based with a virtual
  // column 0 holding the row currently being assigned.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur =
            cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
            v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    total += cost(match[static_cast<size_t>(j)] - 1, j - 1);
  return total / n;
}

double one_nna(const std::vector<Mat>& set_a, const std::vector<Mat>& set_b,
               SetDistance dist) {
  const size_t sa = set_a.size(), sb = set_b.size();
  if (sa < 2 || sb < 2)
    throw ConfigError("one_nna: need at least two samples per set");
  const size_t m = sa + sb;
  const auto sample = [&](size_t i) -> const Mat& {
    return i < sa ? set_a[i] : set_b[i - sa];
  };
  const auto metric = [&](const Mat& x, const Mat& y) {
    return dist == SetDistance::chamfer ? chamfer(x, y) : emd(x, y);
  };

  // Upper-triangular pairwise distances, rows in parallel.
  std::vector<std::vector<double>> rows(m);
  parallel_for(m, default_threads(), [&](size_t i) {
    rows[i].resize(m - i - 1);
    for (size_t j = i + 1; j < m; ++j)
      rows[i][j - i - 1] = metric(sample(i), sample(j));
  });
  const auto d_of = [&](size_t i, size_t j) {
    return i < j ? rows[i][j - i - 1] : rows[j][i - j - 1];
  };

  size_t correct = 0;
  for (size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < m; ++j)
      if (j != i) best = std::min(best, d_of(i, j));
    bool other_at_best = false;
    for (size_t j = 0; j < m; ++j) {
      if (j == i || d_of(i, j) != best) continue;
      if ((j < sa) != (i < sa)) {
        other_at_best = true;
        break;
      }
    }
    // Ties vote for the other set; the prediction is correct only when every
    // nearest neighbor shares the query's label.
    if (!other_at_best) ++correct;
  }
  return double(correct) / double(m);
}

// --- normals -----------------------------------------------------------------

NormalStats normal_stats(const Mat& pred_pos, const Mat& pred_normals,
                         const Mat& gt_pos, const Mat& gt_normals) {
  const int n = static_cast<int>(pred_pos.rows());
  const int g = static_cast<int>(gt_pos.rows());
  if (n < 1 || g < 1) throw ConfigError("normal_stats: empty input");
  if (pred_normals.rows() != n || gt_normals.rows() != g ||
      pred_pos.cols() != gt_pos.cols() ||
      pred_normals.cols() != gt_normals.cols())
    throw ConfigError("normal_stats: shape mismatch");
  for (int i = 0; i < n; ++i)
    if (std::abs(pred_normals.row(i).norm() - 1.0) > 1e-3)
      throw DomainError("normal_stats: predicted normal not unit length");
  for (int j = 0; j < g; ++j)
    if (std::abs(gt_normals.row(j).norm() - 1.0) > 1e-3)
      throw DomainError("normal_stats: ground-truth normal not unit length");

  std::vector<double> cosines(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best_j = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < g; ++j) {
      const double d = (pred_pos.row(i) - gt_pos.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best_j = j;
      }
    }
    cosines[static_cast<size_t>(i)] = std::clamp(
        pred_normals.row(i).dot(gt_normals.row(best_j)), -1.0, 1.0);
  }

  NormalStats out;
  out.mean_cos = mean_of(cosines);
  out.std_cos = pop_std(cosines, out.mean_cos);
  std::vector<double> angles(cosines.size());
  for (size_t i = 0; i < cosines.size(); ++i)
    angles[i] = std::acos(std::min(1.0, std::abs(cosines[i]))) * 180.0 / kPi;
  out.median_unoriented_deg = median_of(std::move(angles));
  return out;
}

// --- reports -----------------------------------------------------------------

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  nlohmann::json js = nlohmann::json::object();
  for (const auto& [name, value] : scalars) {
    if (!std::isfinite(value))
      throw DomainError("metric report: non-finite scalar '" + name + "'");
    js[name] = value;
  }
  j["scalars"] = js;
  nlohmann::json jp = nlohmann::json::object();
  for (const auto& [name, prof] : profiles) {
    for (double p : prof.power)
      if (!std::isfinite(p))
        throw DomainError("metric report: non-finite power in '" + name + "'");
    jp[name] = {{"freq", prof.freq_bins},
                {"power", prof.power},
                {"n_samples_averaged", prof.n_samples_averaged}};
  }
  j["profiles"] = jp;
  return j.dump(2);
}

std::string spectrum_csv(const SpectrumProfile& profile) {
  std::vector<std::vector<double>> rows;
  rows.reserve(profile.freq_bins.size());
  for (size_t i = 0; i < profile.freq_bins.size(); ++i)
    rows.push_back({profile.freq_bins[i], profile.power[i]});
  return io::csv_to_string({"freq", "power"}, rows);
}

}  // namespace ogpp::metrics
