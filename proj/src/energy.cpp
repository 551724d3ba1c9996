// Dataset generators driven by explicit energies.

#include "ogpp/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ogpp/canon.hpp"

namespace ogpp::energy {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Deterministic per-sample stream: sample k of a run uses (seed', k) where
// seed' folds in the retry counter, so regeneration is reproducible too.
Rng sample_rng(uint64_t seed, int sample, int retry = 0) {
  return Rng(seed + 0x100000000ull * static_cast<uint64_t>(retry),
             static_cast<uint64_t>(sample));
}

double wrap01(double x) { return x - std::floor(x); }

// Minimal-image difference on the unit torus, in [-0.5, 0.5).
double torus_diff(double a, double b) {
  const double d = a - b;
  return d - std::floor(d + 0.5);
}

}  // namespace

// --- Gaussian blue noise ---------------------------------------------------

void BlueNoiseConfig::validate() const {
  if (n_points < 2) throw ConfigError("blue noise: n_points must be >= 2");
  if (n_samples < 1) throw ConfigError("blue noise: n_samples must be >= 1");
  if (sigma_factor <= 0 || step <= 0 || iters < 1)
    throw ConfigError("blue noise: sigma_factor, step, iters must be positive");
}

double blue_noise_energy(const Mat& points, double sigma) {
  const int n = static_cast<int>(points.rows());
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double e = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dx = torus_diff(points(i, 0), points(j, 0));
      const double dy = torus_diff(points(i, 1), points(j, 1));
      e += std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
  return e;
}

namespace {

// Energy and gradient in one pass.
double blue_noise_grad(const Mat& p, double sigma, Mat& grad) {
  const int n = static_cast<int>(p.rows());
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double invs2 = 1.0 / (sigma * sigma);
  grad.setZero(n, 2);
  double e = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dx = torus_diff(p(i, 0), p(j, 0));
      const double dy = torus_diff(p(i, 1), p(j, 1));
      const double w = std::exp(-(dx * dx + dy * dy) * inv2s2);
      e += w;
      const double fx = w * dx * invs2;  // -dE/dx_i accumulates below
      const double fy = w * dy * invs2;
      grad(i, 0) -= fx;
      grad(i, 1) -= fy;
      grad(j, 0) += fx;
      grad(j, 1) += fy;
    }
  return e;
}

// Sum of the pair terms that involve point i; moving only point i changes the
// total energy by exactly the change in this partial sum.
double blue_noise_point_energy(const Mat& p, int i, double inv2s2) {
  const int n = static_cast<int>(p.rows());
  double e = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const double dx = torus_diff(p(i, 0), p(j, 0));
    const double dy = torus_diff(p(i, 1), p(j, 1));
    e += std::exp(-(dx * dx + dy * dy) * inv2s2);
  }
  return e;
}

}  // namespace

io::ParticleSet gen_blue_noise(const BlueNoiseConfig& cfg) {
  cfg.validate();
  const double sigma = cfg.sigma_factor / std::sqrt(double(cfg.n_points));

  io::ParticleSet set;
  set.task = io::Task::bluenoise;
  set.seed = cfg.seed;
  set.n = cfg.n_points;
  set.d = 2;
  set.a = 0;
  set.bounds.resize(2, 2);
  set.bounds << 0, 0, 1, 1;
  set.configs.resize(cfg.n_samples);

  parallel_for(cfg.n_samples, default_threads(), [&](size_t s) {
    Rng rng = sample_rng(cfg.seed, static_cast<int>(s));
    Mat p(cfg.n_points, 2);
    for (int i = 0; i < cfg.n_points; ++i) {
      p(i, 0) = rng.uniform();
      p(i, 1) = rng.uniform();
    }

    Mat grad;
    double step = cfg.step;
    double energy = blue_noise_grad(p, sigma, grad);
    if (!std::isfinite(energy))
      throw ConvergenceError("blue noise: non-finite energy at init");
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int it = 0; it < cfg.iters; ++it) {
      bool moved = false;
      for (int bt = 0; bt < 30; ++bt) {
        Mat trial = p - step * grad;
        for (int i = 0; i < cfg.n_points; ++i) {
          trial(i, 0) = wrap01(trial(i, 0));
          trial(i, 1) = wrap01(trial(i, 1));
        }
        Mat trial_grad;
        const double trial_energy = blue_noise_grad(trial, sigma, trial_grad);
        if (!std::isfinite(trial_energy))
          throw ConvergenceError("blue noise: non-finite energy");
        if (trial_energy < energy) {
          p = std::move(trial);
          grad = std::move(trial_grad);
          energy = trial_energy;
          step *= 1.2;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) {
        // The full-vector step deadlocks when some pair separation sits on a
        // wrap seam (|delta| = 1/2): the seam is a one-sided minimum whose
        // branch gradient still points across it, so every joint trial is
        // rejected no matter how small the step. Per-coordinate line searches
        // let the seam-locked components veto only their own moves while the
        // rest keep descending; each accepted move strictly lowers the total.
        for (int i = 0; i < cfg.n_points; ++i)
          for (int axis = 0; axis < 2; ++axis) {
            const double g = grad(i, axis);
            if (g == 0.0) continue;
            const double base = blue_noise_point_energy(p, i, inv2s2);
            for (double t = cfg.step * 256.0; t >= cfg.step * 0.4; t *= 0.5) {
              const double saved = p(i, axis);
              p(i, axis) = wrap01(saved - t * g);
              if (blue_noise_point_energy(p, i, inv2s2) < base) {
                moved = true;
                break;
              }
              p(i, axis) = saved;
            }
          }
        if (!moved) break;  // stationary to machine precision
        energy = blue_noise_grad(p, sigma, grad);
        step = cfg.step;
      }
    }
    set.configs[s] = std::move(p);
  });

  set.validate();
  return set;
}

// --- diffusion-limited aggregation ----------------------------------------

void DlaConfig::validate() const {
  if (grid_size < 64) throw ConfigError("dla: grid_size must be >= 64");
  if (n_particles < 1) throw ConfigError("dla: n_particles must be >= 1");
  if (static_cast<long long>(n_particles) >
      static_cast<long long>(grid_size) * grid_size / 8)
    throw ConfigError("dla: n_particles must be <= grid_size^2 / 8");
  if (n_samples < 1) throw ConfigError("dla: n_samples must be >= 1");
}

io::ParticleSet gen_dla(const DlaConfig& cfg) {
  cfg.validate();

  io::ParticleSet set;
  set.task = io::Task::dla;
  set.seed = cfg.seed;
  set.n = cfg.n_particles;
  set.d = 2;
  set.a = 1;
  set.bounds.resize(2, 2);
  set.bounds << -1, -1, 1, 1;
  set.configs.resize(cfg.n_samples);
  set.attrs.resize(cfg.n_samples);

  const int g = cfg.grid_size;
  const int c = g / 2;
  constexpr uint64_t kStepBudget = 1000000000ull;
  const int dx4[4] = {1, -1, 0, 0};
  const int dy4[4] = {0, 0, 1, -1};

  parallel_for(cfg.n_samples, default_threads(), [&](size_t s) {
    Rng rng = sample_rng(cfg.seed, static_cast<int>(s));
    std::vector<uint8_t> occupied(static_cast<size_t>(g) * g, 0);
    const auto cell = [&](int x, int y) -> uint8_t& {
      return occupied[static_cast<size_t>(y) * g + x];
    };

    std::vector<std::pair<int, int>> cluster;
    cluster.reserve(cfg.n_particles);
    cell(c, c) = 1;
    cluster.emplace_back(c, c);
    double r_cluster = 0.0;
    uint64_t steps = 0;

    while (static_cast<int>(cluster.size()) < cfg.n_particles) {
      const double r_launch = r_cluster + 5.0;
      const double r_kill = 2.0 * r_launch;
      if (r_launch >= c - 1)
        throw ConvergenceError("dla: cluster outgrew the grid; raise grid_size");

      // Launch on the circle of radius r_launch.
      const double theta = rng.uniform(0.0, 2.0 * kPi);
      int x = c + static_cast<int>(std::lround(r_launch * std::cos(theta)));
      int y = c + static_cast<int>(std::lround(r_launch * std::sin(theta)));
      if (cell(x, y)) continue;  // degenerate launch; redraw

      while (true) {
        // Attach on 4-neighbor contact.
        bool touching = false;
        for (int k = 0; k < 4; ++k) {
          const int nx = x + dx4[k], ny = y + dy4[k];
          if (nx >= 0 && nx < g && ny >= 0 && ny < g && cell(nx, ny)) {
            touching = true;
            break;
          }
        }
        if (touching) {
          cell(x, y) = 1;
          cluster.emplace_back(x, y);
          const double rr = std::hypot(double(x - c), double(y - c));
          r_cluster = std::max(r_cluster, rr);
          break;
        }

        if (++steps > kStepBudget)
          throw ConvergenceError("dla: walker budget exhausted (>1e9 steps)");
        const int k = static_cast<int>(rng.below(4));
        x += dx4[k];
        y += dy4[k];

        const double rr = std::hypot(double(x - c), double(y - c));
        if (rr > r_kill || x <= 0 || x >= g - 1 || y <= 0 || y >= g - 1)
          break;  // killed; relaunch
      }
    }

    // Recenter on the seed and scale the farthest coordinate to magnitude 1.
    double extent = 0.0;
    for (const auto& [x, y] : cluster)
      extent = std::max({extent, std::abs(double(x - c)), std::abs(double(y - c))});
    if (extent == 0.0) extent = 1.0;
    Mat pos(cfg.n_particles, 2), attr(cfg.n_particles, 1);
    for (int i = 0; i < cfg.n_particles; ++i) {
      pos(i, 0) = (cluster[i].first - c) / extent;
      pos(i, 1) = (cluster[i].second - c) / extent;
      attr(i, 0) = i;  // attachment order
    }
    set.configs[s] = std::move(pos);
    set.attrs[s] = std::move(attr);
  });

  set.validate();
  return set;
}

// --- Thomson shells --------------------------------------------------------

void ThomsonConfig::validate() const {
  if (n_shells < 1 || per_shell < 1)
    throw ConfigError("thomson: n_shells and per_shell must be >= 1");
  if (n_shells * per_shell < 2)
    throw ConfigError("thomson: need at least 2 particles");
  if (static_cast<int>(radii.size()) != n_shells)
    throw ConfigError("thomson: radii must have length n_shells");
  for (int k = 0; k < n_shells; ++k) {
    if (radii[k] <= 0) throw ConfigError("thomson: radii must be positive");
    if (k > 0 && radii[k] <= radii[k - 1])
      throw ConfigError("thomson: radii must be strictly increasing");
  }
  if (spring_k <= 0 || lr <= 0 || iters < 1 || tol <= 0)
    throw ConfigError("thomson: spring_k, lr, iters, tol must be positive");
  if (n_samples < 1) throw ConfigError("thomson: n_samples must be >= 1");
}

namespace {

// Energy and gradient of the Coulomb-plus-shell-spring system.
double thomson_grad(const Mat& x, const std::vector<double>& radii,
                    int per_shell, double spring_k, Mat& grad) {
  const int n = static_cast<int>(x.rows());
  grad.setZero(n, 3);
  double e = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Vec d = x.row(i) - x.row(j);
      const double r = d.norm();
      e += 1.0 / r;
      const Vec f = d / (r * r * r);  // -grad of 1/r w.r.t. x_i is +d/r^3
      grad.row(i) -= f.transpose();
      grad.row(j) += f.transpose();
    }
  for (int i = 0; i < n; ++i) {
    const double r = x.row(i).norm();
    const double target = radii[static_cast<size_t>(i / per_shell)];
    e += 0.5 * spring_k * (r - target) * (r - target);
    if (r > 1e-12)
      grad.row(i) += (spring_k * (r - target) / r) * x.row(i);
  }
  return e;
}

// Largest |component| of the force projected onto the shell tangent plane.
double thomson_max_tangential(const Mat& grad, const Mat& x) {
  double worst = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    const double r = x.row(i).norm();
    if (r < 1e-12) return std::numeric_limits<double>::infinity();
    const Vec radial = x.row(i).transpose() / r;
    const Vec force = -grad.row(i).transpose();
    const Vec tangential = force - force.dot(radial) * radial;
    worst = std::max(worst, tangential.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

io::ParticleSet gen_thomson(const ThomsonConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_shells * cfg.per_shell;
  const double r_max = cfg.radii.back();

  io::ParticleSet set;
  set.task = io::Task::thomson;
  set.seed = cfg.seed;
  set.n = n;
  set.d = 3;
  set.a = 0;
  set.bounds.resize(2, 3);
  const double half = 1.25 * r_max;
  set.bounds << -half, -half, -half, half, half, half;
  set.configs.resize(cfg.n_samples);

  parallel_for(cfg.n_samples, default_threads(), [&](size_t s) {
    for (int retry = 0;; ++retry) {
      Rng rng = sample_rng(cfg.seed, static_cast<int>(s), retry);
      Mat x(n, 3);
      for (int i = 0; i < n; ++i) {
        Vec u(3);
        do {
          u << rng.normal(), rng.normal(), rng.normal();
        } while (u.norm() < 1e-6);
        x.row(i) = (cfg.radii[static_cast<size_t>(i / cfg.per_shell)] /
                    u.norm()) * u.transpose();
      }

      Mat grad;
      double energy =
          thomson_grad(x, cfg.radii, cfg.per_shell, cfg.spring_k, grad);
      double step = cfg.lr;
      bool converged = false;
      // Phase 1 judges steps by energy decrease. Once the per-step decrement
      // falls below one ulp of the total energy the comparison is pure
      // rounding noise (that happens at force residuals around sqrt(ulp),
      // ~1e-8), so phase 2 judges steps by gradient-norm decrease instead,
      // which resolves progress linearly down to ~1e-13. An energy backstop
      // at noise scale keeps every accepted step non-increasing.
      bool polish = false;
      for (int it = 0; it < cfg.iters; ++it) {
        if (thomson_max_tangential(grad, x) < cfg.tol) {
          converged = true;
          break;
        }
        bool moved = false;
        if (!polish) {
          for (int bt = 0; bt < 40 && !moved; ++bt) {
            Mat trial = x - step * grad;
            Mat trial_grad;
            const double trial_energy = thomson_grad(
                trial, cfg.radii, cfg.per_shell, cfg.spring_k, trial_grad);
            // Strict decrease: an exactly-equal energy means the decrement
            // rounded to zero, which is the cue to hand over to phase 2.
            if (std::isfinite(trial_energy) && trial_energy < energy) {
              x = std::move(trial);
              grad = std::move(trial_grad);
              energy = trial_energy;
              step *= 1.2;
              moved = true;
            } else {
              step *= 0.5;
            }
          }
          if (!moved) {
            polish = true;
            step = cfg.lr;
          }
        }
        if (polish) {
          const double gnorm = grad.norm();
          const double energy_cap = energy + 1e-12 * (std::abs(energy) + 1.0);
          for (int bt = 0; bt < 40 && !moved; ++bt) {
            Mat trial = x - step * grad;
            Mat trial_grad;
            const double trial_energy = thomson_grad(
                trial, cfg.radii, cfg.per_shell, cfg.spring_k, trial_grad);
            if (std::isfinite(trial_energy) && trial_energy <= energy_cap &&
                trial_grad.norm() < gnorm) {
              x = std::move(trial);
              grad = std::move(trial_grad);
              energy = std::min(energy, trial_energy);
              step *= 1.2;
              moved = true;
            } else {
              step *= 0.5;
            }
          }
          if (!moved) break;  // stalled at machine precision in both merits
        }
      }
      if (converged || thomson_max_tangential(grad, x) < cfg.tol) {
        set.configs[s] = std::move(x);
        break;
      }
      if (retry >= 5)
        throw ConvergenceError(
            "thomson: sample failed to converge after 5 regenerations");
    }
  });

  set.validate();
  return set;
}

// --- minimal surface -------------------------------------------------------

void MinSurfaceConfig::validate() const {
  if (n_anchors < 3) throw ConfigError("min surface: n_anchors must be >= 3");
  if (area_fraction <= 0 || area_fraction >= 1)
    throw ConfigError("min surface: area_fraction must lie in (0,1)");
  if (boundary_points < 4 * n_anchors)
    throw ConfigError("min surface: boundary_points must be >= 4 * n_anchors");
  if (!(domain_lo < domain_hi))
    throw ConfigError("min surface: domain_lo must be < domain_hi");
  if (iters < 1 || n_samples < 1)
    throw ConfigError("min surface: iters and n_samples must be >= 1");
  if (!fixed_anchor_params.empty()) {
    if (static_cast<int>(fixed_anchor_params.size()) != n_anchors)
      throw ConfigError("min surface: fixed_anchor_params length != n_anchors");
    for (double u : fixed_anchor_params)
      if (u < 0.0 || u >= 4.0)
        throw ConfigError("min surface: boundary parameters must be in [0,4)");
  }
}

Vec square_boundary_point(double u, double lo, double hi) {
  if (u < 0.0 || u >= 4.0)
    throw DomainError("square boundary parameter must be in [0,4)");
  const double side_len = hi - lo;
  const int side = static_cast<int>(u);
  const double f = (u - side) * side_len;
  Vec p(2);
  switch (side) {
    case 0: p << lo + f, lo; break;          // bottom, left to right
    case 1: p << hi, lo + f; break;          // right, bottom to top
    case 2: p << hi - f, hi; break;          // top, right to left
    default: p << lo, hi - f; break;         // left, top to bottom
  }
  return p;
}

Mat polyline_outward_normals(const Mat& ring) {
  const int m = static_cast<int>(ring.rows());
  if (m < 3) throw DomainError("polyline normals: need at least 3 vertices");
  if (ring.cols() != 2) throw DomainError("polyline normals: 2-D rings only");
  Mat normals(m, 2);
  for (int i = 0; i < m; ++i) {
    const int prev = (i + m - 1) % m, next = (i + 1) % m;
    const double tx = ring(next, 0) - ring(prev, 0);
    const double ty = ring(next, 1) - ring(prev, 1);
    const double len = std::hypot(tx, ty);
    if (len < 1e-15)
      throw DomainError("polyline normals: coincident neighbor vertices");
    // Counterclockwise ring: outward = tangent rotated -90 degrees.
    normals(i, 0) = ty / len;
    normals(i, 1) = -tx / len;
  }
  return normals;
}

namespace {

double ring_area(const Mat& v) { return canon::polygon_signed_area(v); }

// d(area)/d(vertex i): half the -90-degree rotation of the central
// difference (points outward for counterclockwise rings).
void area_gradient(const Mat& v, Mat& out) {
  const int m = static_cast<int>(v.rows());
  out.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    const int prev = (i + m - 1) % m, next = (i + 1) % m;
    out(i, 0) = 0.5 * (v(next, 1) - v(prev, 1));
    out(i, 1) = 0.5 * (v(prev, 0) - v(next, 0));
  }
}

// d(perimeter)/d(vertex i) = unit(v_i - v_prev) + unit(v_i - v_next).
// Returns the perimeter (used to scale the descent step).
double perimeter_gradient(const Mat& v, Mat& out) {
  const int m = static_cast<int>(v.rows());
  out.setZero(m, 2);
  double perimeter = 0.0;
  for (int i = 0; i < m; ++i) {
    const int next = (i + 1) % m;
    double ex = v(next, 0) - v(i, 0);
    double ey = v(next, 1) - v(i, 1);
    const double len = std::hypot(ex, ey);
    perimeter += len;
    if (len < 1e-15) continue;
    ex /= len;
    ey /= len;
    out(i, 0) -= ex;
    out(i, 1) -= ey;
    out(next, 0) += ex;
    out(next, 1) += ey;
  }
  return perimeter;
}

// Moves free vertices along the area gradient so the enclosed area matches
// the target (anchors stay pinned).  Two Newton corrections reach roundoff.
void project_area(Mat& v, const std::vector<uint8_t>& is_anchor,
                  double target) {
  Mat g;
  for (int pass = 0; pass < 3; ++pass) {
    const double a = ring_area(v);
    if (std::abs(a - target) < 1e-13) return;
    area_gradient(v, g);
    double denom = 0.0;
    for (int i = 0; i < v.rows(); ++i)
      if (!is_anchor[i]) denom += g(i, 0) * g(i, 0) + g(i, 1) * g(i, 1);
    if (denom < 1e-30) throw ConvergenceError("min surface: degenerate ring");
    const double s = (target - a) / denom;
    for (int i = 0; i < v.rows(); ++i)
      if (!is_anchor[i]) {
        v(i, 0) += s * g(i, 0);
        v(i, 1) += s * g(i, 1);
      }
  }
}

// Arc-length resample of one open span (endpoints kept exactly) to `count`
// segments; writes the count-1 interior vertices into `out` rows.
void resample_span(const Mat& span, int count, Mat& out, int out_row) {
  const int m = static_cast<int>(span.rows());
  std::vector<double> cum(m, 0.0);
  for (int i = 1; i < m; ++i)
    cum[i] = cum[i - 1] + std::hypot(span(i, 0) - span(i - 1, 0),
                                     span(i, 1) - span(i - 1, 1));
  const double total = cum[m - 1];
  int seg = 0;
  for (int k = 1; k < count; ++k) {
    const double want = total * k / count;
    while (seg + 2 < m && cum[seg + 1] < want) ++seg;
    const double span_len = cum[seg + 1] - cum[seg];
    const double f = span_len > 1e-300 ? (want - cum[seg]) / span_len : 0.0;
    out(out_row, 0) = span(seg, 0) + f * (span(seg + 1, 0) - span(seg, 0));
    out(out_row, 1) = span(seg, 1) + f * (span(seg + 1, 1) - span(seg, 1));
    ++out_row;
  }
}

struct RingLayout {
  std::vector<int> anchor_index;  // vertex index of each anchor
  std::vector<int> span_count;    // segments between anchor k and k+1
};

// Rebuilds the ring with per-span segment counts proportional to the given
// weights (largest remainder, at least 2 per span), resampling each span by
// arc length.  Anchors keep their exact positions.
void rebuild_ring(Mat& v, RingLayout& layout, const Mat& anchors,
                  const std::vector<double>& weights, int total_points) {
  const int k = static_cast<int>(anchors.rows());
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(k, 2);
  int assigned = 2 * k;
  std::vector<std::pair<double, int>> remainders(k);
  for (int j = 0; j < k; ++j) {
    const double exact = weights[j] / wsum * total_points;
    const int extra = std::max(0, static_cast<int>(exact) - 2);
    counts[j] += extra;
    assigned += extra;
    remainders[j] = {exact - std::floor(exact), j};
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (int j = 0; assigned < total_points; ++j, ++assigned)
    ++counts[remainders[static_cast<size_t>(j) % k].second];
  while (assigned > total_points) {
    int big = 0;
    for (int j = 1; j < k; ++j)
      if (counts[j] > counts[big]) big = j;
    if (counts[big] <= 2)
      throw ConfigError("min surface: boundary_points too small");
    --counts[big];
    --assigned;
  }

  // Extract each old span (anchor j .. anchor j+1) and resample.
  Mat next(total_points, 2);
  RingLayout out;
  out.anchor_index.resize(k);
  out.span_count = counts;
  int row = 0;
  for (int j = 0; j < k; ++j) {
    out.anchor_index[j] = row;
    next.row(row) = anchors.row(j);
    ++row;
    const int from = layout.anchor_index[j];
    const int to = layout.anchor_index[(j + 1) % k];
    const int m = static_cast<int>(v.rows());
    const int len = (to - from + m) % m;  // segments in the old span
    Mat span(len + 1, 2);
    for (int i = 0; i <= len; ++i) span.row(i) = v.row((from + i) % m);
    resample_span(span, counts[j], next, row);
    row += counts[j] - 1;
  }
  v = std::move(next);
  layout = std::move(out);
}

bool segments_cross(const Mat& v, int a, int b) {
  const int m = static_cast<int>(v.rows());
  const auto orient = [&](int p, int q, double rx, double ry) {
    return (v(q, 0) - v(p, 0)) * (ry - v(p, 1)) -
           (v(q, 1) - v(p, 1)) * (rx - v(p, 0));
  };
  const int a2 = (a + 1) % m, b2 = (b + 1) % m;
  const double o1 = orient(a, a2, v(b, 0), v(b, 1));
  const double o2 = orient(a, a2, v(b2, 0), v(b2, 1));
  const double o3 = orient(b, b2, v(a, 0), v(a, 1));
  const double o4 = orient(b, b2, v(a2, 0), v(a2, 1));
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

bool ring_self_intersects(const Mat& v) {
  const int m = static_cast<int>(v.rows());
  for (int a = 0; a < m; ++a)
    for (int b = a + 2; b < m; ++b) {
      if (a == 0 && b == m - 1) continue;  // shared vertex with segment 0
      if (segments_cross(v, a, b)) return true;
    }
  return false;
}

}  // namespace

io::ParticleSet gen_min_surface(const MinSurfaceConfig& cfg) {
  cfg.validate();
  const double side = cfg.domain_hi - cfg.domain_lo;
  const double target_area = cfg.area_fraction * side * side;
  const int k = cfg.n_anchors;
  const int m = cfg.boundary_points;

  io::ParticleSet set;
  set.task = io::Task::minsurf;
  set.seed = cfg.seed;
  set.n = m;
  set.d = 2;
  set.a = 1;
  set.bounds.resize(2, 2);
  set.bounds << cfg.domain_lo, cfg.domain_lo, cfg.domain_hi, cfg.domain_hi;
  set.configs.resize(cfg.n_samples);
  set.attrs.resize(cfg.n_samples);

  parallel_for(cfg.n_samples, default_threads(), [&](size_t s) {
    for (int retry = 0;; ++retry) {
      Rng rng = sample_rng(cfg.seed, static_cast<int>(s), retry);

      // Anchor boundary parameters: fixed, or stratified random around the
      // perimeter (one anchor per arc of length 4/k, jittered) so anchors
      // never cluster on one side.
      std::vector<double> params(k);
      if (!cfg.fixed_anchor_params.empty()) {
        params = cfg.fixed_anchor_params;
        std::sort(params.begin(), params.end());
      } else {
        for (int j = 0; j < k; ++j)
          params[j] = 4.0 * (j + 0.15 + 0.7 * rng.uniform()) / k;
      }
      Mat anchors(k, 2);
      for (int j = 0; j < k; ++j)
        anchors.row(j) =
            square_boundary_point(params[j], cfg.domain_lo, cfg.domain_hi)
                .transpose();

      // Counterclockwise anchors (boundary parameters ascend
      // counterclockwise already; guard against numerical degeneracies).
      if (canon::polygon_signed_area(anchors) <= 1e-12 * side * side) {
        if (retry >= 5)
          throw ConvergenceError(
              "min surface: degenerate anchors after 5 regenerations");
        continue;
      }

      // Initial ring: anchor polygon with chord-proportional vertex counts.
      std::vector<double> chord(k);
      for (int j = 0; j < k; ++j)
        chord[j] = (anchors.row((j + 1) % k) - anchors.row(j)).norm();
      Mat v = anchors;  // placeholder span content for rebuild_ring
      RingLayout layout;
      layout.anchor_index.resize(k);
      for (int j = 0; j < k; ++j) layout.anchor_index[j] = j;
      layout.span_count.assign(k, 1);
      rebuild_ring(v, layout, anchors, chord, m);

      std::vector<uint8_t> is_anchor(m, 0);
      for (int idx : layout.anchor_index) is_anchor[idx] = 1;

      // Projected gradient descent on perimeter at fixed area.  The step is
      // a fixed fraction of the mean vertex spacing: the perimeter gradient
      // behaves like spacing * curvature * normal, so this keeps the
      // effective diffusion number of the explicit scheme at a stable 0.3.
      Mat pgrad;
      for (int it = 0; it < cfg.iters; ++it) {
        project_area(v, is_anchor, target_area);
        const double perimeter = perimeter_gradient(v, pgrad);
        const double h = 0.3 * perimeter / m;
        for (int i = 0; i < m; ++i)
          if (!is_anchor[i]) {
            v(i, 0) -= h * pgrad(i, 0);
            v(i, 1) -= h * pgrad(i, 1);
          }
        if ((it + 1) % 25 == 0) {
          std::vector<double> arc(k, 0.0);
          for (int j = 0; j < k; ++j) {
            const int from = layout.anchor_index[j];
            for (int t = 0; t < layout.span_count[j]; ++t)
              arc[j] += (v.row((from + t + 1) % m) - v.row((from + t) % m)).norm();
          }
          rebuild_ring(v, layout, anchors, arc, m);
          for (auto& f : is_anchor) f = 0;
          for (int idx : layout.anchor_index) is_anchor[idx] = 1;
        }
      }
      project_area(v, is_anchor, target_area);

      // Acceptance checks; failures regenerate with a fresh sub-seed.
      bool ok = !ring_self_intersects(v);
      const double slack = 1e-9 * side;
      for (int i = 0; ok && i < m; ++i)
        ok = v(i, 0) >= cfg.domain_lo - slack && v(i, 0) <= cfg.domain_hi + slack &&
             v(i, 1) >= cfg.domain_lo - slack && v(i, 1) <= cfg.domain_hi + slack;
      if (!ok) {
        if (retry >= 5)
          throw ConvergenceError(
              "min surface: invalid curve after 5 regenerations");
        continue;
      }
      // Clamp roundoff-level excursions so domain containment is exact.
      for (int i = 0; i < m; ++i) {
        v(i, 0) = std::clamp(v(i, 0), cfg.domain_lo, cfg.domain_hi);
        v(i, 1) = std::clamp(v(i, 1), cfg.domain_lo, cfg.domain_hi);
      }

      Mat flags = Mat::Zero(m, 1);
      for (int idx : layout.anchor_index) flags(idx, 0) = 1.0;

      canon::CanonSpec spec;
      spec.curve = canon::Curve::polygon_ccw;
      spec.dims = 2;
      canon::CanonResult canon_result = canon::canonicalize(v, &flags, spec);
      Mat ring = std::move(canon_result.config);
      Mat ring_flags = std::move(canon_result.attrs);

      if (cfg.dihedral_shuffle) {
        const int shift = static_cast<int>(rng.below(uint64_t(m)));
        const bool reflect = rng.below(2) == 1;
        Mat sv(m, 2), sf(m, 1);
        for (int i = 0; i < m; ++i) {
          const int src = reflect ? ((shift - i) % m + m) % m : (shift + i) % m;
          sv.row(i) = ring.row(src);
          sf.row(i) = ring_flags.row(src);
        }
        ring = std::move(sv);
        ring_flags = std::move(sf);
      }

      set.configs[s] = std::move(ring);
      set.attrs[s] = std::move(ring_flags);
      break;
    }
  });

  set.validate();
  return set;
}

}  // namespace ogpp::energy
