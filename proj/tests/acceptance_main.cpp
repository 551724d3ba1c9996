// Acceptance gate: twelve numbered end-to-end checks, one per subsystem
// contract, each printing exactly one [PASS]/[FAIL] line. The binary exits
// nonzero when any requested check fails.
//
// Usage: ogpp_acceptance [N]   (N in 1..12; no argument runs all twelve)
//
// Checks 10-12 need the command-line binary; its location comes from the
// OGPP_CLI_PATH environment variable (only check 12 actually shells out).

#include <json.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ogpp/analysis.hpp"
#include "ogpp/canon.hpp"
#include "ogpp/common.hpp"
#include "ogpp/energy.hpp"
#include "ogpp/flow.hpp"
#include "ogpp/io.hpp"
#include "ogpp/metrics.hpp"
#include "ogpp/net.hpp"
#include "ogpp/paths.hpp"

namespace {

using ogpp::Mat;
using ogpp::Rng;
using ogpp::Vec;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& why) {
  if (!ok) throw Failure(why);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Mat rand_mat(int rows, int cols, Rng& rng, double lo, double hi) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Mat gauss_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Vec rand_vec(int n, Rng& rng, double lo, double hi) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

double median(std::vector<double> v) {
  require(!v.empty(), "median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Frobenius distance relative to the reference scale (floored at 1).
double rel_diff(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

bool bits_equal(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return (a.array() == b.array()).all();
}

// Minimal-image representative of each entry: d - round(d), in [-0.5, 0.5].
Mat wrap_pm(const Mat& m) {
  return (m.array() - m.array().round()).matrix();
}

Mat sorted_rows(const Mat& m) {
  std::vector<int> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int c = 0; c < m.cols(); ++c)
      if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
    return false;
  });
  Mat out(m.rows(), m.cols());
  for (int k = 0; k < m.rows(); ++k) out.row(k) = m.row(idx[k]);
  return out;
}

Mat hcat(const Mat& a, const Mat& b) {
  if (b.size() == 0) return a;
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) {
  const auto pos = s.find('\n');
  return pos == std::string::npos ? s : s.substr(0, pos);
}

// ---------------------------------------------------------------- check 1
// Endpoint interpolation, velocity consistency, and terminal tangents for
// every path family, against finite differences of the position curve.
void check_paths_exact() {
  Rng rng(2101);
  const int n = 4, d = 3;
  const double h_mid = 1e-6;  // central difference half-step
  const double h_end = 1e-5;  // one-sided terminal difference step
  const double tol_end = 1e-12, tol_fd = 1e-6;

  for (int trial = 0; trial < 1000; ++trial) {
    const Mat x0 = rand_mat(n, d, rng, -1.0, 1.0);
    const Mat x1 = rand_mat(n, d, rng, -1.0, 1.0);
    const Mat v1 = rand_mat(n, d, rng, -1.5, 1.5);
    const Mat y0 = rand_mat(n, d, rng, 0.0, 1.0);  // torus endpoints
    const Mat y1 = rand_mat(n, d, rng, 0.0, 1.0);
    const double t = rng.uniform(0.1, 0.9);

    struct Fam {
      const char* name;
      std::function<ogpp::paths::PathSample(double)> at;
      const Mat* v_end;  // tangent the curve must reach t=1 with
    };
    const Mat chord = x1 - x0;
    const std::vector<Fam> fams = {
        {"linear",
         [&](double s) { return ogpp::paths::linear_sample(x0, x1, s); },
         &chord},
        {"hermite_quadratic",
         [&](double s) { return ogpp::paths::hermite_sample(x0, x1, v1, s); },
         &v1},
        {"hermite_cubic/zero",
         [&](double s) {
           return ogpp::paths::cubic_hermite_sample(
               x0, x1, ogpp::paths::N0Mode::zero, v1, s);
         },
         &v1},
        {"hermite_cubic/chord",
         [&](double s) {
           return ogpp::paths::cubic_hermite_sample(
               x0, x1, ogpp::paths::N0Mode::chord, v1, s);
         },
         &v1},
    };
    for (const auto& f : fams) {
      require(rel_diff(f.at(0.0).x_t, x0) <= tol_end,
              std::string(f.name) + ": start point misses x0");
      require(rel_diff(f.at(1.0).x_t, x1) <= tol_end,
              std::string(f.name) + ": end point misses x1");
      const auto st = f.at(t);
      const Mat fd =
          (f.at(t + h_mid).x_t - f.at(t - h_mid).x_t) / (2.0 * h_mid);
      require(rel_diff(fd, st.u_ref) <= tol_fd,
              std::string(f.name) + ": velocity vs finite difference, rel=" +
                  fmt(rel_diff(fd, st.u_ref)));
      // Second-order one-sided difference keeps all evaluations in [0, 1].
      const Mat tt = (3.0 * f.at(1.0).x_t - 4.0 * f.at(1.0 - h_end).x_t +
                      f.at(1.0 - 2.0 * h_end).x_t) /
                     (2.0 * h_end);
      require(rel_diff(tt, *f.v_end) <= tol_fd,
              std::string(f.name) + ": terminal tangent vs finite difference");
    }

    // Torus family: compare through minimal-image differences so coordinate
    // wraps in the stored positions cannot masquerade as motion.
    const auto tor = [&](double s) {
      return ogpp::paths::toroidal_sample(y0, y1, s);
    };
    require(wrap_pm(tor(0.0).x_t - y0).norm() / std::max(1.0, y0.norm()) <=
                tol_end,
            "toroidal: start point misses x0 on the torus");
    require(wrap_pm(tor(1.0).x_t - y1).norm() / std::max(1.0, y1.norm()) <=
                tol_end,
            "toroidal: end point misses x1 on the torus");
    const auto st = tor(t);
    const Mat fd =
        wrap_pm(tor(t + h_mid).x_t - tor(t - h_mid).x_t) / (2.0 * h_mid);
    require(rel_diff(fd, st.u_ref) <= tol_fd,
            "toroidal: velocity vs finite difference");
    const Mat d1 = wrap_pm(tor(1.0 - h_end).x_t - tor(1.0).x_t);
    const Mat d2 = wrap_pm(tor(1.0 - 2.0 * h_end).x_t - tor(1.0).x_t);
    const Mat tt = (-4.0 * d1 + d2) / (2.0 * h_end);
    require(rel_diff(tt, tor(1.0).u_ref) <= tol_fd,
            "toroidal: terminal tangent vs finite difference");
  }
}

// ---------------------------------------------------------------- check 2
// Closed-form quadratic-Hermite arc length against composite Simpson
// quadrature with 1e4 intervals, plus collinear-degenerate cases where the
// speed touches zero and the length has an elementary piecewise value.
void check_arc_length() {
  Rng rng(2102);
  const int m = 10000;
  const auto simpson = [&](const Vec& x0, const Vec& x1, const Vec& v1) {
    const auto speed = [&](double t) {
      const Vec g = (2.0 - 2.0 * t) * (x1 - x0) + (2.0 * t - 1.0) * v1;
      return g.norm();
    };
    double sum = speed(0.0) + speed(1.0);
    for (int i = 1; i < m; ++i)
      sum += speed(double(i) / m) * (i % 2 ? 4.0 : 2.0);
    return sum / (3.0 * m);
  };

  for (int trial = 0; trial < 1000; ++trial) {
    const Vec x0 = rand_vec(3, rng, -1.0, 1.0);
    const Vec x1 = rand_vec(3, rng, -1.0, 1.0);
    const Vec v1 = rand_vec(3, rng, -1.5, 1.5);
    const double closed = ogpp::paths::hermite_arc_length(x0, x1, v1);
    const double quad = simpson(x0, x1, v1);
    const double rel = std::abs(closed - quad) / std::max(quad, 1e-12);
    require(rel <= 1e-8,
            "arc length off quadrature by rel=" + fmt(rel) + " (trial " +
                std::to_string(trial) + ")");
  }

  // Collinear chord and tangent: gamma'(t) = ((2-2t)a + (2t-1)b) w for unit
  // w, so the length is the integral of |c + s t| with c = 2a-b, s = 2(b-a).
  const std::array<std::array<double, 2>, 10> cases = {{{1.0, -1.0},
                                                        {2.0, -1.0},
                                                        {1.0, -3.0},
                                                        {-1.0, 2.0},
                                                        {1.0, 0.0},
                                                        {0.0, 1.0},
                                                        {1.0, 1.0},
                                                        {2.0, 3.0},
                                                        {-2.0, 1.0},
                                                        {0.5, -0.5}}};
  for (const auto& [a, b] : cases) {
    Vec w = rand_vec(3, rng, -1.0, 1.0);
    w.normalize();
    const Vec x0 = rand_vec(3, rng, -1.0, 1.0);
    const Vec x1 = x0 + a * w;
    const Vec v1 = b * w;
    const double c = 2.0 * a - b, s = 2.0 * (b - a);
    double expect = 0.0;
    if (std::abs(s) < 1e-15) {
      expect = std::abs(c);
    } else {
      const double root = -c / s;
      const auto seg = [&](double lo, double hi) {
        return std::abs(c * (hi - lo) + 0.5 * s * (hi * hi - lo * lo));
      };
      expect = (root <= 0.0 || root >= 1.0) ? seg(0.0, 1.0)
                                            : seg(0.0, root) + seg(root, 1.0);
    }
    const double closed = ogpp::paths::hermite_arc_length(x0, x1, v1);
    require(std::abs(closed - expect) <= 1e-8 * std::max(1.0, expect),
            "degenerate arc length a=" + fmt(a) + " b=" + fmt(b) + ": got " +
                fmt(closed) + " want " + fmt(expect));
  }
}

// ---------------------------------------------------------------- check 3
// Speed-profile uniformity: the variance-optimal terminal magnitude cannot
// lose to the arc-length-aware rule, which cannot lose to the unit rule
// (medians over random geometry), and the optimizer agrees with a dense
// magnitude grid.
void check_terminal_rules() {
  Rng rng(2103);
  std::vector<double> cv_ntv, cv_atv, cv_opt;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec x0 = rand_vec(2, rng, -1.0, 1.0);
    Vec x1 = rand_vec(2, rng, -1.0, 1.0);
    while ((x1 - x0).norm() < 0.3) x1 = rand_vec(2, rng, -1.0, 1.0);
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    Vec nh(2);
    nh << std::cos(ang), std::sin(ang);

    cv_ntv.push_back(ogpp::paths::hermite_speed_cv(x0, x1, ogpp::paths::ntv(nh)));
    cv_atv.push_back(
        ogpp::paths::hermite_speed_cv(x0, x1, ogpp::paths::atv(x0, x1, nh, 1.0)));
    cv_opt.push_back(ogpp::paths::hermite_speed_cv(
        x0, x1, ogpp::paths::atv_optimal(x0, x1, nh, 0.5, 15.0)));

    const double alpha = ogpp::paths::atv_optimal_alpha(x0, x1, nh, 0.5, 15.0);
    double best_a = 0.5, best_cv = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1450; ++k) {
      const double a = 0.5 + 0.01 * k;
      const Vec va = a * nh;
      const double cv = ogpp::paths::hermite_speed_cv(x0, x1, va);
      if (cv < best_cv) {
        best_cv = cv;
        best_a = a;
      }
    }
    require(std::abs(alpha - best_a) <= 1e-2 + 1e-9,
            "optimal magnitude " + fmt(alpha) + " disagrees with grid scan " +
                fmt(best_a) + " (trial " + std::to_string(trial) + ")");
  }
  const double m_opt = median(cv_opt), m_atv = median(cv_atv),
               m_ntv = median(cv_ntv);
  require(m_opt <= m_atv,
          "median CV: optimal " + fmt(m_opt) + " > arc-aware " + fmt(m_atv));
  require(m_atv <= m_ntv,
          "median CV: arc-aware " + fmt(m_atv) + " > unit " + fmt(m_ntv));
}

// ---------------------------------------------------------------- check 4
// Canonicalization laws (relabeling invariance, orbit membership,
// idempotence, permutation bookkeeping) for curve orderings and the polygon
// ordering, plus exhaustive space-filling-curve adjacency.
void check_canon_laws() {
  Rng rng(2104);
  const ogpp::canon::Curve curves[3] = {ogpp::canon::Curve::hilbert,
                                        ogpp::canon::Curve::morton,
                                        ogpp::canon::Curve::moore};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 32;
    const Mat x = rand_mat(n, 2, rng, -1.25, 1.25);
    const bool with_attrs = trial % 4 == 0;
    Mat at;
    if (with_attrs) at = rand_mat(n, 2, rng, -1.0, 1.0);

    ogpp::canon::CanonSpec spec;
    spec.curve = curves[trial % 3];
    spec.bits = 16;
    spec.dims = 2;
    spec.pose_normalize = trial % 7 == 0 && n >= 3;

    const Mat* ap = with_attrs ? &at : nullptr;
    const auto base = ogpp::canon::canonicalize(x, ap, spec);

    // Relabeling invariance, bitwise.
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Mat xp(n, 2), atp;
    if (with_attrs) atp.resize(n, 2);
    for (int k = 0; k < n; ++k) {
      xp.row(k) = x.row(idx[k]);
      if (with_attrs) atp.row(k) = at.row(idx[k]);
    }
    const auto perm = ogpp::canon::canonicalize(xp, with_attrs ? &atp : nullptr,
                                                spec);
    require(bits_equal(base.config, perm.config),
            "canonical order changed under input relabeling (trial " +
                std::to_string(trial) + ")");
    if (with_attrs)
      require(bits_equal(base.attrs, perm.attrs),
              "attribute rows changed under input relabeling");

    // Orbit membership: output rows are exactly the input multiset.
    require(bits_equal(sorted_rows(hcat(base.config, base.attrs)),
                       sorted_rows(hcat(x, with_attrs ? at : Mat()))),
            "canonical rows are not the input row multiset");

    // Permutation bookkeeping: config.row(k) == input.row(perm.map[k]).
    require(base.perm.is_valid() && bits_equal(base.config, base.perm.apply(x)),
            "recorded permutation does not reproduce the output");

    // Idempotence, bitwise.
    const auto twice = ogpp::canon::canonicalize(
        base.config, with_attrs ? &base.attrs : nullptr, spec);
    require(bits_equal(twice.config, base.config) &&
                (!with_attrs || bits_equal(twice.attrs, base.attrs)),
            "canonical form is not a fixed point");
  }

  // Polygon ordering: invariance under dihedral relabelings of the ring.
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 12 + trial % 13;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const bool clockwise = trial % 2 == 1;
    Mat ring(n, 2);
    Mat flags = Mat::Zero(n, 1);
    for (int i = 0; i < n; ++i) {
      const double th0 = 2.0 * M_PI * i / n;
      const double th = clockwise ? -th0 : th0;
      const double r = 0.3 + 0.08 * std::sin(3.0 * th + phase);
      ring(i, 0) = 0.5 + r * std::cos(th);
      ring(i, 1) = 0.5 + r * std::sin(th);
    }
    int flagged = 0;
    while (flagged < 3) {
      const int k = static_cast<int>(rng.below(n));
      if (flags(k, 0) < 0.5) {
        flags(k, 0) = 1.0;
        ++flagged;
      }
    }
    ogpp::canon::CanonSpec spec;
    spec.curve = ogpp::canon::Curve::polygon_ccw;
    const auto base = ogpp::canon::canonicalize(ring, &flags, spec);

    const int rot = static_cast<int>(rng.below(n));
    const bool reflect = rng.uniform() < 0.5;
    Mat ring2(n, 2), flags2(n, 1);
    for (int k = 0; k < n; ++k) {
      const int src = reflect ? (rot + n - k) % n : (rot + k) % n;
      ring2.row(k) = ring.row(src);
      flags2.row(k) = flags.row(src);
    }
    const auto relab = ogpp::canon::canonicalize(ring2, &flags2, spec);
    require(bits_equal(base.config, relab.config) &&
                bits_equal(base.attrs, relab.attrs),
            "polygon canonical form changed under a dihedral relabeling "
            "(trial " +
                std::to_string(trial) + ")");
    require(bits_equal(sorted_rows(hcat(base.config, base.attrs)),
                       sorted_rows(hcat(ring, flags))),
            "polygon canonical rows are not the input row multiset");
    const auto twice =
        ogpp::canon::canonicalize(base.config, &base.attrs, spec);
    require(bits_equal(twice.config, base.config) &&
                bits_equal(twice.attrs, base.attrs),
            "polygon canonical form is not a fixed point");
    require(ogpp::canon::polygon_signed_area(base.config) > 0.0,
            "polygon canonical form is not counterclockwise");
  }

  // Exhaustive adjacency: the Hilbert tour visits every cell once and each
  // step moves to a 4-neighbor, at one-bit and four-bit resolution.
  for (const int bits : {1, 4}) {
    const std::uint64_t side = 1ull << bits, total = side * side;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> at_index(total);
    std::vector<char> seen(total, 0);
    for (std::uint32_t x = 0; x < side; ++x) {
      for (std::uint32_t y = 0; y < side; ++y) {
        const std::uint64_t idx =
            ogpp::canon::hilbert_cell_index({x, y}, bits);
        require(idx < total, "hilbert index out of range");
        require(!seen[idx], "hilbert index repeated: not a bijection");
        seen[idx] = 1;
        at_index[idx] = {x, y};
      }
    }
    for (std::uint64_t k = 0; k + 1 < total; ++k) {
      const auto [ax, ay] = at_index[k];
      const auto [bx, by] = at_index[k + 1];
      const int manhattan = std::abs(int(ax) - int(bx)) +
                            std::abs(int(ay) - int(by));
      require(manhattan == 1, "hilbert step " + std::to_string(k) +
                                  " at bits=" + std::to_string(bits) +
                                  " is not a unit move");
    }
  }

  // The closed variant additionally returns to its start.
  {
    const int bits = 4;
    const std::uint64_t side = 1ull << bits, total = side * side;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> at_index(total);
    std::vector<char> seen(total, 0);
    for (std::uint32_t x = 0; x < side; ++x) {
      for (std::uint32_t y = 0; y < side; ++y) {
        const std::uint64_t idx = ogpp::canon::moore_cell_index(x, y, bits);
        require(idx < total && !seen[idx], "moore index not a bijection");
        seen[idx] = 1;
        at_index[idx] = {x, y};
      }
    }
    for (std::uint64_t k = 0; k < total; ++k) {
      const auto [ax, ay] = at_index[k];
      const auto [bx, by] = at_index[(k + 1) % total];
      require(std::abs(int(ax) - int(bx)) + std::abs(int(ay) - int(by)) == 1,
              "moore tour is not closed with unit steps");
    }
  }
}

// ---------------------------------------------------------------- check 5
// On a dataset that is one relabeling orbit, conditioning on the interpolant
// must leave less target variance when the data side is canonicalized, at
// every time, by at least three standard errors.
void check_variance_collapse() {
  ogpp::io::ParticleSet ds;
  ds.task = ogpp::io::Task::generic;
  ds.seed = 9;
  ds.n = 16;
  ds.d = 2;
  ds.a = 0;
  ds.bounds.resize(2, 2);
  ds.bounds << -1.0, -1.0, 1.0, 1.0;
  Rng rng(2105);
  const Mat base = rand_mat(16, 2, rng, -1.0, 1.0);
  for (int s = 0; s < 256; ++s) {
    std::vector<int> idx(16);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Mat cfg(16, 2);
    for (int k = 0; k < 16; ++k) cfg.row(k) = base.row(idx[k]);
    ds.configs.push_back(cfg);
  }
  ds.validate();

  ogpp::analysis::CondCovConfig cc;
  cc.ball_radius_frac = 0.3;
  cc.canon.curve = ogpp::canon::Curve::hilbert;
  cc.canon.bits = 16;
  cc.canon.dims = 2;
  cc.seed = 42;
  const auto points = ogpp::analysis::cond_cov_study(ds, cc);
  require(points.size() == cc.t_grid.size(), "study returned wrong grid");
  for (const auto& p : points) {
    require(p.trace_canon <= p.trace_plain,
            "canonicalized trace " + fmt(p.trace_canon) + " above plain " +
                fmt(p.trace_plain) + " at t=" + fmt(p.t));
    require(p.diff >= 3.0 * p.se_diff,
            "margin below three standard errors at t=" + fmt(p.t) + " (diff " +
                fmt(p.diff) + ", se " + fmt(p.se_diff) + ")");
  }
}

// ---------------------------------------------------------------- check 6
// Mid-time geometry on blue-noise data: canonicalizing the data side gives
// the smoothest field (lowest median Lipschitz ratio, highest median
// cancellation), while canonicalizing both sides concentrates the steepest
// tail (highest per-bin P90 Lipschitz peak).
void check_midtime_regimes() {
  ogpp::energy::BlueNoiseConfig bn;
  bn.n_points = 64;
  bn.n_samples = 20000;
  bn.iters = 120;
  bn.seed = 100;
  const auto data = ogpp::energy::gen_blue_noise(bn);

  ogpp::analysis::MidtimeConfig mc;
  mc.m_pairs = 200000;
  mc.n_anchors = 4000;
  mc.k_neighbors = 32;
  mc.t = 0.5;
  mc.prior = ogpp::flow::Prior::toroidal_uniform;
  mc.canon.curve = ogpp::canon::Curve::hilbert;
  mc.canon.bits = 16;
  mc.canon.dims = 2;
  mc.seed = 5;

  const std::vector<ogpp::flow::CanonSide> regimes = {
      ogpp::flow::CanonSide::none, ogpp::flow::CanonSide::x0_only,
      ogpp::flow::CanonSide::x1_only, ogpp::flow::CanonSide::both};
  const int kX1 = 2, kBoth = 3;

  mc.n_bins = 1;  // aggregate statistics over every edge
  const auto agg = ogpp::analysis::midtime_study(data, regimes, mc);
  mc.n_bins = 10;  // distance-resolved tail
  const auto binned = ogpp::analysis::midtime_study(data, regimes, mc);
  require(agg.size() == 4 && binned.size() == 4, "study returned wrong shape");

  double med_l[4], med_c[4], p90_peak[4];
  for (int r = 0; r < 4; ++r) {
    require(agg[r].bins.size() == 1, "aggregate study not a single bin");
    med_l[r] = agg[r].bins[0].median_l;
    med_c[r] = agg[r].bins[0].median_canc;
    p90_peak[r] = 0.0;
    for (const auto& b : binned[r].bins)
      p90_peak[r] = std::max(p90_peak[r], b.p90_l);
  }
  const char* names[4] = {"none", "x0_only", "x1_only", "both"};
  for (int r = 0; r < 4; ++r) {
    if (r == kX1) continue;
    require(med_l[kX1] < med_l[r],
            std::string("median Lipschitz: x1_only ") + fmt(med_l[kX1]) +
                " not below " + names[r] + " " + fmt(med_l[r]));
    require(med_c[kX1] > med_c[r],
            std::string("median cancellation: x1_only ") + fmt(med_c[kX1]) +
                " not above " + names[r] + " " + fmt(med_c[r]));
  }
  for (int r = 0; r < 4; ++r) {
    if (r == kBoth) continue;
    require(p90_peak[kBoth] > p90_peak[r],
            std::string("P90 Lipschitz peak: both ") + fmt(p90_peak[kBoth]) +
                " not above " + names[r] + " " + fmt(p90_peak[r]));
  }
}

// ---------------------------------------------------------------- check 7
// Every scalar parameter's analytic gradient against a central finite
// difference of the loss, in the f64 parameterization.
void check_gradients() {
  ogpp::net::NetConfig cfg;
  cfg.d_in = 2;
  cfg.d_emb = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_mlp = 16;
  cfg.n_particles = 4;
  cfg.n_cond = 2;
  cfg.param_dtype = "f64";
  auto vnet = ogpp::net::make_net(cfg, 3);

  // The output head starts at zero; nudge every parameter off the origin so
  // no gradient path is trivially silent.
  Rng prng(31);
  for (const auto& name : ogpp::net::param_names(vnet)) {
    Mat p = ogpp::net::get_param(vnet, name);
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) p(i, j) += 0.05 * prng.normal();
    ogpp::net::set_param(vnet, name, p);
  }

  Rng brng(77);
  ogpp::net::Batch batch;
  batch.x = {gauss_mat(4, 2, brng), gauss_mat(4, 2, brng)};
  batch.t = {0.3, 0.7};
  batch.target = {gauss_mat(4, 2, brng), gauss_mat(4, 2, brng)};
  batch.cond = {gauss_mat(2, 2, brng), gauss_mat(1, 2, brng)};

  const auto [loss0, grads] = ogpp::net::loss_and_grads(vnet, batch);
  require(std::isfinite(loss0), "loss is not finite");

  const double h = 1e-5;
  long checked = 0;
  for (const auto& [name, g] : grads) {
    Mat p = ogpp::net::get_param(vnet, name);
    require(g.rows() == p.rows() && g.cols() == p.cols(),
            "gradient shape mismatch for " + name);
    for (int i = 0; i < p.rows(); ++i) {
      for (int j = 0; j < p.cols(); ++j) {
        const double orig = p(i, j);
        p(i, j) = orig + h;
        ogpp::net::set_param(vnet, name, p);
        const double lp = ogpp::net::loss_and_grads(vnet, batch).first;
        p(i, j) = orig - h;
        ogpp::net::set_param(vnet, name, p);
        const double lm = ogpp::net::loss_and_grads(vnet, batch).first;
        p(i, j) = orig;
        ogpp::net::set_param(vnet, name, p);
        const double fd = (lp - lm) / (2.0 * h);
        const double rel = std::abs(fd - g(i, j)) /
                           std::max({std::abs(fd), std::abs(g(i, j)), 1e-6});
        require(rel <= 1e-4, "gradient mismatch at " + name + "(" +
                                 std::to_string(i) + "," + std::to_string(j) +
                                 "): rel=" + fmt(rel));
        ++checked;
      }
    }
  }
  require(checked == ogpp::net::param_count(vnet),
          "checked " + std::to_string(checked) + " of " +
              std::to_string(ogpp::net::param_count(vnet)) + " parameters");
}

// ---------------------------------------------------------------- check 8
// The four generators reach their physical targets: a regular tetrahedron,
// branched clusters in the expected dimension band, suppressed low-frequency
// power, and a constant-pressure area-constrained curve.
void check_generators() {
  // Four charges on one shell relax to a regular tetrahedron.
  ogpp::energy::ThomsonConfig th;
  th.n_shells = 1;
  th.per_shell = 4;
  th.radii = {1.0};
  th.iters = 500000;
  th.tol = 1e-10;
  th.seed = 4;
  const auto tset = ogpp::energy::gen_thomson(th);
  const auto tm =
      ogpp::metrics::thomson_metrics(tset.configs[0], {0, 0, 0, 0}, {1.0});
  require(tm.valid, "tetrahedron has coincident particles");
  require(tm.cv_avg < 1e-5,
          "tetrahedron neighbor-distance CV " + fmt(tm.cv_avg));
  require(tm.ftan_rms < 1e-3,
          "tetrahedron tangential force RMS " + fmt(tm.ftan_rms));
  {
    const Mat& tc = tset.configs[0];
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        const double d = (tc.row(i) - tc.row(j)).norm();
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
      }
    require((dmax - dmin) / dmax < 1e-3,
            "tetrahedron edges uneven: " + fmt(dmin) + ".." + fmt(dmax));
  }

  // Aggregation clusters live in the known fractal-dimension band.
  ogpp::energy::DlaConfig dla;
  dla.n_particles = 512;
  dla.grid_size = 256;
  dla.n_samples = 50;
  dla.seed = 21;
  const auto dset = ogpp::energy::gen_dla(dla);
  int in_band = 0;
  for (int s = 0; s < dset.samples(); ++s) {
    std::vector<int> order(static_cast<std::size_t>(dset.n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return dset.attrs[s](a, 0) < dset.attrs[s](b, 0);
    });
    Mat cluster(dset.n, 2);
    for (int k = 0; k < dset.n; ++k)
      cluster.row(k) = dset.configs[s].row(order[k]);
    try {
      const auto fit = ogpp::metrics::fractal_dimension(cluster);
      if (fit.d_f >= 1.35 && fit.d_f <= 1.75) ++in_band;
    } catch (const ogpp::DomainError&) {
      // degenerate fit counts as out of band
    }
  }
  require(in_band >= 45, "only " + std::to_string(in_band) +
                             "/50 clusters inside the dimension band");

  // Blue noise suppresses low-frequency power relative to uniform points.
  ogpp::energy::BlueNoiseConfig bn;
  bn.n_points = 256;
  bn.n_samples = 12;
  bn.iters = 400;
  bn.seed = 8;
  const auto bset = ogpp::energy::gen_blue_noise(bn);
  const auto sp_blue = ogpp::metrics::radial_power_spectrum(bset.configs, 24);
  Rng prng(2108);
  std::vector<Mat> control;
  for (int s = 0; s < 12; ++s) control.push_back(rand_mat(256, 2, prng, 0.0, 1.0));
  const auto sp_unif = ogpp::metrics::radial_power_spectrum(control, 24);
  require(sp_blue.power.size() == sp_unif.power.size(),
          "spectra have mismatched binning");
  const std::size_t quarter = sp_blue.power.size() / 4;
  require(quarter >= 1, "too few spectrum bins");
  double low_blue = 0.0, low_unif = 0.0;
  for (std::size_t k = 0; k < quarter; ++k) {
    low_blue += sp_blue.power[k] / double(quarter);
    low_unif += sp_unif.power[k] / double(quarter);
  }
  require(low_blue / low_unif < 0.5,
          "low-frequency ratio " + fmt(low_blue / low_unif) + " not below 0.5");

  // Area-constrained curves: exact area, one shared span curvature.
  ogpp::energy::MinSurfaceConfig msc;
  msc.n_samples = 3;
  msc.seed = 17;
  const auto mset = ogpp::energy::gen_min_surface(msc);
  for (int s = 0; s < mset.samples(); ++s) {
    const Mat& v = mset.configs[s];
    const Mat& flags = mset.attrs[s];
    const int m = static_cast<int>(v.rows());
    const double area = ogpp::canon::polygon_signed_area(v);
    require(std::abs(area - msc.area_fraction) < 1e-3,
            "enclosed area " + fmt(area) + " misses target " +
                fmt(msc.area_fraction));

    std::vector<int> anchor_idx;
    for (int i = 0; i < m; ++i)
      if (flags(i, 0) > 0.5) anchor_idx.push_back(i);
    require(static_cast<int>(anchor_idx.size()) == msc.n_anchors,
            "anchor flags miscounted");
    std::vector<double> span_mean;
    for (std::size_t a = 0; a < anchor_idx.size(); ++a) {
      const int from = anchor_idx[a];
      const int to = anchor_idx[(a + 1) % anchor_idx.size()];
      double sum = 0.0;
      int cnt = 0;
      for (int i = (from + 1) % m; i != to; i = (i + 1) % m) {
        const int prev = (i + m - 1) % m, next = (i + 1) % m;
        const Eigen::RowVector2d e0 = v.row(i) - v.row(prev);
        const Eigen::RowVector2d e1 = v.row(next) - v.row(i);
        const double turn =
            std::atan2(e0[0] * e1[1] - e0[1] * e1[0], e0.dot(e1));
        sum += turn / (0.5 * (e0.norm() + e1.norm()));
        ++cnt;
      }
      require(cnt > 0, "empty anchor span");
      span_mean.push_back(sum / cnt);
    }
    for (std::size_t a = 1; a < span_mean.size(); ++a)
      require(std::abs(span_mean[a] - span_mean[0]) <=
                  0.05 * std::abs(span_mean[0]),
              "span curvature " + fmt(span_mean[a]) + " deviates from " +
                  fmt(span_mean[0]) + " by more than 5%");
  }
}

// ---------------------------------------------------------------- check 9
// Metrics against independent oracles: exhaustive assignments for the earth
// mover's distance and the batch coupling, the two-sample test at its null,
// fractal fits on shapes of known dimension, and a flat uniform spectrum.
void check_metric_oracles() {
  Rng rng(2109);

  // Earth mover's distance vs all 720 assignments of six points.
  for (int trial = 0; trial < 40; ++trial) {
    const Mat a = rand_mat(6, 2, rng, -1.0, 1.0);
    const Mat b = rand_mat(6, 2, rng, -1.0, 1.0);
    const double got = ogpp::metrics::emd(a, b);
    std::array<int, 6> perm = {0, 1, 2, 3, 4, 5};
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int i = 0; i < 6; ++i)
        cost += (a.row(i) - b.row(perm[i])).norm();
      best = std::min(best, cost / 6.0);
    } while (std::next_permutation(perm.begin(), perm.end()));
    require(std::abs(got - best) <= 1e-12,
            "assignment distance " + fmt(got) + " vs exhaustive " + fmt(best));
  }

  // Batch coupling vs all 120 assignments of five configurations.
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Mat> noise, data;
    for (int i = 0; i < 5; ++i) {
      noise.push_back(rand_mat(4, 2, rng, -1.0, 1.0));
      data.push_back(rand_mat(4, 2, rng, -1.0, 1.0));
    }
    ogpp::flow::CouplingSpec cspec;
    cspec.kind = ogpp::flow::Coupling::minibatch_ot;
    const auto pairing = ogpp::flow::couple(noise, data, cspec);
    require(pairing.size() == 5, "coupling returned wrong size");
    double got = 0.0;
    for (int i = 0; i < 5; ++i)
      got += (noise[i] - data[pairing[i]]).squaredNorm();
    std::array<int, 5> perm = {0, 1, 2, 3, 4};
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int i = 0; i < 5; ++i)
        cost += (noise[i] - data[perm[i]]).squaredNorm();
      best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    require(std::abs(got - best) <= 1e-9,
            "coupling cost " + fmt(got) + " vs exhaustive " + fmt(best));
  }

  // Two-sample accuracy sits at chance for identically distributed sets.
  std::vector<Mat> set_a, set_b;
  for (int s = 0; s < 100; ++s) set_a.push_back(gauss_mat(16, 2, rng));
  for (int s = 0; s < 100; ++s) set_b.push_back(gauss_mat(16, 2, rng));
  const double acc =
      ogpp::metrics::one_nna(set_a, set_b, ogpp::metrics::SetDistance::chamfer);
  require(acc >= 0.45 && acc <= 0.55,
          "null two-sample accuracy " + fmt(acc) + " outside [0.45, 0.55]");

  // Growth-ordered line and disk recover dimensions 1 and 2.
  Mat line(256, 2);
  for (int i = 0; i < 256; ++i) {
    line(i, 0) = 0.01 * i;
    line(i, 1) = 0.0;
  }
  const auto lf = ogpp::metrics::fractal_dimension(line);
  require(std::abs(lf.d_f - 1.0) <= 0.05,
          "line dimension " + fmt(lf.d_f) + " not within 0.05 of 1");
  std::vector<std::pair<double, double>> polar(4096);
  for (auto& p : polar)
    p = {std::sqrt(rng.uniform()), rng.uniform(0.0, 2.0 * M_PI)};
  std::sort(polar.begin(), polar.end());
  Mat disk(4096, 2);
  for (int i = 0; i < 4096; ++i) {
    disk(i, 0) = polar[i].first * std::cos(polar[i].second);
    disk(i, 1) = polar[i].first * std::sin(polar[i].second);
  }
  const auto df = ogpp::metrics::fractal_dimension(disk);
  require(std::abs(df.d_f - 2.0) <= 0.05,
          "disk dimension " + fmt(df.d_f) + " not within 0.05 of 2");

  // Uniform points have unit power in every radial bin.
  std::vector<Mat> uniform_sets;
  for (int s = 0; s < 200; ++s)
    uniform_sets.push_back(rand_mat(256, 2, rng, 0.0, 1.0));
  const auto sp = ogpp::metrics::radial_power_spectrum(uniform_sets, 16);
  for (std::size_t k = 0; k < sp.power.size(); ++k)
    require(sp.power[k] >= 0.95 && sp.power[k] <= 1.05,
            "uniform spectrum bin " + std::to_string(k) + " power " +
                fmt(sp.power[k]) + " outside [0.95, 1.05]");
}

// --------------------------------------------------------------- check 10
// Same data, same budget: training on canonicalized targets lets a single
// Euler step beat a ten-step sampler trained on raw targets, measured by the
// enclosed-area error of conditioned boundary curves (median over three
// training seeds).
void check_one_step() {
  ogpp::energy::MinSurfaceConfig msc;
  msc.n_anchors = 3;
  msc.boundary_points = 64;
  msc.n_samples = 256;
  msc.area_fraction = 0.5;
  msc.fixed_anchor_params = {0.5, 11.0 / 6.0, 19.0 / 6.0};
  msc.dihedral_shuffle = true;
  msc.seed = 77;
  const auto data = ogpp::energy::gen_min_surface(msc);

  const auto run_arm = [&](bool canon_data, std::uint64_t seed,
                           int k_steps) -> double {
    ogpp::flow::TrainConfig tc;
    tc.path.family = ogpp::paths::Family::linear;
    tc.canon.curve = ogpp::canon::Curve::polygon_ccw;
    tc.canon_side = canon_data ? ogpp::flow::CanonSide::x1_only
                               : ogpp::flow::CanonSide::none;
    tc.prior = ogpp::flow::Prior::uniform_box;
    tc.cond_from_anchors = true;
    tc.batch_size = 16;
    tc.steps = 2500;
    tc.seed = seed;
    tc.print_every = 0;
    ogpp::net::NetConfig nc;
    nc.d_in = 2;
    nc.n_particles = 64;
    nc.n_cond = 3;
    const auto result = ogpp::flow::train(data, nc, tc);
    require(!result.aborted, "training aborted on a non-finite loss");

    // Conditioning anchors from the first sample, matching the arm's view of
    // the data.
    Mat cfg0 = data.configs[0], at0 = data.attrs[0];
    if (canon_data) {
      const auto cr = ogpp::canon::canonicalize(cfg0, &at0, tc.canon);
      cfg0 = cr.config;
      at0 = cr.attrs;
    }
    std::vector<int> anchor_rows;
    for (int r = 0; r < cfg0.rows(); ++r)
      if (at0(r, 0) > 0.5) anchor_rows.push_back(r);
    Mat cond(static_cast<int>(anchor_rows.size()), 2);
    for (std::size_t k = 0; k < anchor_rows.size(); ++k)
      cond.row(static_cast<int>(k)) = cfg0.row(anchor_rows[k]);

    ogpp::flow::SampleConfig sc;
    sc.n_steps = k_steps;
    sc.n_samples = 16;
    sc.prior = ogpp::flow::Prior::uniform_box;
    sc.cond = cond;
    sc.seed = seed + 1000;
    const auto out = ogpp::flow::sample(result.net, sc);
    std::vector<double> errs;
    for (int s = 0; s < out.samples(); ++s)
      errs.push_back(std::abs(
          std::abs(ogpp::canon::polygon_signed_area(out.configs[s])) -
          msc.area_fraction));
    return median(errs);
  };

  std::vector<double> ours, baseline;
  for (const std::uint64_t seed : {1, 2, 3}) {
    ours.push_back(run_arm(true, seed, 1));
    baseline.push_back(run_arm(false, seed, 10));
    std::fprintf(stderr, "  [one-step] seed=%llu ours@1=%.4f baseline@10=%.4f\n",
                 static_cast<unsigned long long>(seed), ours.back(),
                 baseline.back());
  }
  const double m_ours = median(ours), m_base = median(baseline);
  require(m_ours < m_base, "one-step area error " + fmt(m_ours) +
                               " not below ten-step baseline " + fmt(m_base));
}

// --------------------------------------------------------------- check 11
// Normals as a sampling byproduct: trained on circles whose attributes are
// outward normals, the sampler's emitted normals agree with the outward
// direction at the landing positions.
void check_normal_byproduct() {
  ogpp::io::ParticleSet ds;
  ds.task = ogpp::io::Task::generic;
  ds.seed = 123;
  ds.n = 64;
  ds.d = 2;
  ds.a = 2;
  ds.bounds.resize(2, 2);
  ds.bounds << -1.0, -1.0, 1.0, 1.0;
  Rng rng(2111);
  for (int s = 0; s < 256; ++s) {
    const double off = rng.uniform(0.0, 2.0 * M_PI);
    Mat pos(64, 2), nor(64, 2);
    for (int i = 0; i < 64; ++i) {
      const double th = off + 2.0 * M_PI * i / 64.0;
      pos(i, 0) = std::cos(th);
      pos(i, 1) = std::sin(th);
      nor.row(i) = pos.row(i);  // unit circle: outward normal = position
    }
    std::vector<int> idx(64);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Mat posp(64, 2), norp(64, 2);
    for (int k = 0; k < 64; ++k) {
      posp.row(k) = pos.row(idx[k]);
      norp.row(k) = nor.row(idx[k]);
    }
    ds.configs.push_back(posp);
    ds.attrs.push_back(norp);
  }
  ds.validate();

  ogpp::flow::TrainConfig tc;
  tc.path.family = ogpp::paths::Family::hermite_quadratic;
  tc.path.terminal_mode = ogpp::paths::TerminalMode::atv;
  tc.path.lambda = 1.0;
  tc.canon.curve = ogpp::canon::Curve::hilbert;
  tc.canon.bits = 16;
  tc.canon.dims = 2;
  tc.canon_side = ogpp::flow::CanonSide::x1_only;
  tc.normal_source = ogpp::flow::NormalSource::attrs;
  tc.normal_channel = 0;
  tc.prior = ogpp::flow::Prior::uniform_box;
  tc.batch_size = 16;
  tc.steps = 2000;
  tc.seed = 11;
  tc.print_every = 0;
  ogpp::net::NetConfig nc;
  nc.d_in = 2;
  nc.n_particles = 64;
  nc.n_cond = 0;
  const auto result = ogpp::flow::train(ds, nc, tc);
  require(!result.aborted, "training aborted on a non-finite loss");

  ogpp::flow::SampleConfig sc;
  sc.n_steps = 20;
  sc.n_samples = 16;
  sc.prior = ogpp::flow::Prior::uniform_box;
  sc.seed = 111;
  const auto out = ogpp::flow::sample(result.net, sc);
  require(out.a == 2, "sampler emitted no normal channels");

  std::vector<double> cosines;
  for (int s = 0; s < out.samples(); ++s) {
    for (int i = 0; i < out.n; ++i) {
      const Vec p = out.configs[s].row(i).transpose();
      const double r = p.norm();
      if (r < 1e-9) {
        cosines.push_back(0.0);  // no outward direction at the origin
        continue;
      }
      const Vec nh = out.attrs[s].row(i).transpose();
      cosines.push_back(nh.dot(p) / r);
    }
  }
  const double med = median(cosines);
  require(med >= 0.9, "median outward cosine " + fmt(med) + " below 0.9");
}

// --------------------------------------------------------------- check 12
// Every command kind, run with --threads 1 and a fixed seed, must reproduce
// its artifacts byte-for-byte when the argv recorded in its manifest is
// replayed.
void check_cli_replay() {
  namespace fs = std::filesystem;
  const char* cli = std::getenv("OGPP_CLI_PATH");
  require(cli != nullptr && fs::exists(cli),
          "OGPP_CLI_PATH must point at the command-line binary");
  const fs::path root = fs::temp_directory_path() / "ogpp_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);

  const auto run = [&](const std::vector<std::string>& args) {
    std::string cmd(cli);
    for (const auto& a : args) cmd += " '" + a + "'";
    const fs::path so = root / "_stdout.txt", se = root / "_stderr.txt";
    cmd += " >" + so.string() + " 2>" + se.string();
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return std::make_pair(code, slurp_file(se.string()));
  };

  const std::string data = (root / "g" / "data.ogpp").string();
  const std::string model = (root / "t" / "model.ogpn").string();
  const std::string gen = (root / "s" / "gen.ogpp").string();
  const std::string report = (root / "e" / "report.json").string();
  const std::string mid = (root / "m" / "midtime.csv").string();
  const std::string cov = (root / "c" / "cov.csv").string();

  struct Step {
    std::string tag;
    fs::path dir;
    std::vector<std::string> args;
  };
  const std::vector<Step> steps = {
      {"gen",
       root / "g",
       {"--threads", "1", "gen", "bluenoise", "--n", "24", "--samples", "6",
        "--iters", "50", "--seed", "11", "--out", data}},
      {"train",
       root / "t",
       {"--threads", "1", "train", "--data", data, "--out", model, "--path",
        "linear", "--canon", "hilbert", "--canon-side", "x1_only", "--steps",
        "12", "--batch-size", "4", "--d-emb", "16", "--layers", "1", "--heads",
        "2", "--d-mlp", "32", "--seed", "7"}},
      {"sample",
       root / "s",
       {"--threads", "1", "sample", "--ckpt", model, "--out", gen, "--steps",
        "4", "--samples", "3", "--seed", "5"}},
      {"eval",
       root / "e",
       {"--threads", "1", "eval", "bluenoise", "--gen", gen, "--ref", data,
        "--freq-bins", "8", "--out", report}},
      {"analyze midtime",
       root / "m",
       {"--threads", "1", "analyze", "midtime", "--data", data, "--out", mid,
        "--pairs", "2000", "--anchors", "40", "--k", "8", "--bins", "4",
        "--seed", "3"}},
      {"analyze cov",
       root / "c",
       {"--threads", "1", "analyze", "cov", "--data", data, "--out", cov,
        "--t-grid", "0.3,0.7", "--mc", "2000", "--anchors", "20",
        "--radius-frac", "0.3", "--seed", "3"}},
  };

  for (const auto& step : steps) {
    fs::create_directories(step.dir);
    const auto [code, err] = run(step.args);
    require(code == 0, step.tag + " exited with code " + std::to_string(code) +
                           ": " + first_line(err));
    const fs::path man_path = step.dir / "manifest.json";
    require(fs::exists(man_path), step.tag + " wrote no manifest");
    const auto man = nlohmann::json::parse(slurp_file(man_path.string()));
    const auto outputs = man.at("outputs").get<std::vector<std::string>>();
    require(!outputs.empty(), step.tag + " manifest lists no outputs");
    std::vector<std::pair<std::string, std::string>> snapshot;
    for (const auto& o : outputs) snapshot.emplace_back(o, slurp_file(o));

    auto argv = man.at("argv").get<std::vector<std::string>>();
    require(argv.size() >= 2, step.tag + " manifest argv too short");
    argv.erase(argv.begin());  // drop the recorded binary path
    const auto [code2, err2] = run(argv);
    require(code2 == 0, step.tag + " replay exited with code " +
                            std::to_string(code2) + ": " + first_line(err2));
    for (const auto& [path, bytes] : snapshot)
      require(slurp_file(path) == bytes,
              step.tag + ": " + path + " changed across manifest replay");
  }
  fs::remove_all(root);
}

// ------------------------------------------------------------------- main

struct Criterion {
  int id;
  const char* desc;
  void (*fn)();
};

const Criterion kCriteria[] = {
    {1, "path endpoints, velocities, and terminal tangents are exact",
     check_paths_exact},
    {2, "closed-form arc length matches fine quadrature", check_arc_length},
    {3, "terminal-magnitude rules order speed uniformity as expected",
     check_terminal_rules},
    {4, "canonicalization laws hold and curve adjacency is exhaustive",
     check_canon_laws},
    {5, "canonicalizing the data side shrinks conditional target variance",
     check_variance_collapse},
    {6, "mid-time smoothness and cancellation single out the data-side regime",
     check_midtime_regimes},
    {7, "network gradients match central finite differences", check_gradients},
    {8, "energy generators reach their physical targets", check_generators},
    {9, "evaluation metrics match brute-force oracles", check_metric_oracles},
    {10, "canonicalized one-step sampling beats the plain ten-step baseline",
     check_one_step},
    {11, "sampled normals align with the outward direction",
     check_normal_byproduct},
    {12, "command-line runs replay bit-exactly from their manifests",
     check_cli_replay},
};

}  // namespace

int main(int argc, char** argv) {
  int want = 0;
  if (argc > 1) {
    want = std::atoi(argv[1]);
    if (want < 1 || want > 12) {
      std::fprintf(stderr, "usage: %s [1-12]\n", argv[0]);
      return 2;
    }
  }
  bool all_ok = true;
  for (const auto& crit : kCriteria) {
    if (want != 0 && crit.id != want) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string fail;
    try {
      crit.fn();
    } catch (const std::exception& e) {
      fail = e.what();
    } catch (...) {
      fail = "unknown error";
    }
    (void)ogpp::drain_warnings();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (fail.empty()) {
      std::printf("[PASS] C%d: %s (%.1fs)\n", crit.id, crit.desc, secs);
    } else {
      std::printf("[FAIL] C%d: %s — %s (%.1fs)\n", crit.id, crit.desc,
                  fail.c_str(), secs);
      all_ok = false;
    }
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
