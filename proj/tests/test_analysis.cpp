// Tests for the flow-geometry diagnostics: edge statistics against hand
// oracles, the mid-time regime study, and the conditional-covariance study.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "ogpp/analysis.hpp"
#include "ogpp/canon.hpp"
#include "ogpp/common.hpp"
#include "ogpp/flow.hpp"
#include "ogpp/io.hpp"

using namespace ogpp;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec random_vec(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

// One random base configuration; every sample is a row permutation of it, so
// all samples share one canonical form exactly.
io::ParticleSet permuted_orbit_dataset(int samples, int n, int d,
                                       std::uint64_t seed) {
  Rng rng(seed, 999);
  Mat base(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) base(r, c) = rng.uniform(-1.0, 1.0);
  io::ParticleSet set;
  set.task = io::Task::generic;
  set.seed = seed;
  set.n = n;
  set.d = d;
  set.a = 0;
  set.bounds = Mat(2, d);
  set.bounds.row(0).setConstant(-1.0);
  set.bounds.row(1).setConstant(1.0);
  for (int s = 0; s < samples; ++s) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    Mat cfg(n, d);
    for (int r = 0; r < n; ++r) cfg.row(r) = base.row(idx[static_cast<size_t>(r)]);
    set.configs.push_back(cfg);
  }
  set.validate();
  return set;
}

canon::CanonSpec hilbert_spec() {
  canon::CanonSpec spec;
  spec.curve = canon::Curve::hilbert;
  spec.bits = 16;
  spec.dims = 2;
  spec.pose_normalize = false;
  return spec;
}

}  // namespace

TEST_CASE("edge statistics match hand oracles") {
  SUBCASE("identical differences: no steepness, full reinforcement") {
    const Vec d = v2(0.3, -0.4);
    CHECK(analysis::lipschitz_ratio(d, d, 0.5) == 0.0);
    CHECK(analysis::cancellation_score(d, d, 0.5) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(analysis::cancellation_score(d, d, 0.5) <= 1.0);
  }

  SUBCASE("opposite differences cancel exactly at t = 1/2") {
    const Vec d0 = v2(1.0, 0.0);
    const Vec d1 = v2(-1.0, 0.0);
    CHECK(std::isinf(analysis::lipschitz_ratio(d0, d1, 0.5)));
    CHECK(analysis::cancellation_score(d0, d1, 0.5) == 0.0);
  }

  SUBCASE("orthogonal unit differences at t = 1/2") {
    const Vec d0 = v2(1.0, 0.0);
    const Vec d1 = v2(0.0, 1.0);
    // ||d1 - d0|| = sqrt(2), ||(d0 + d1)/2|| = sqrt(2)/2 -> ratio 2.
    CHECK(analysis::lipschitz_ratio(d0, d1, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(analysis::cancellation_score(d0, d1, 0.5) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  }

  SUBCASE("vanishing d1 gives ratio 1/(1-t)") {
    const Vec d0 = v2(0.7, -0.2);
    const Vec zero = Vec::Zero(2);
    CHECK(analysis::lipschitz_ratio(d0, zero, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(analysis::lipschitz_ratio(d0, zero, 0.75) ==
          doctest::Approx(4.0).epsilon(1e-12));
    CHECK(analysis::cancellation_score(d0, zero, 0.5) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("invariance under joint rotation and scaling") {
    Rng rng(11, 0);
    const int dim = 6;
    const Vec d0 = random_vec(dim, rng);
    const Vec d1 = random_vec(dim, rng);
    Mat g(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) g(r, c) = rng.normal();
    const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
    const double t = 0.37;
    const double base_l = analysis::lipschitz_ratio(d0, d1, t);
    const double base_c = analysis::cancellation_score(d0, d1, t);
    CHECK(analysis::lipschitz_ratio(q * d0, q * d1, t) ==
          doctest::Approx(base_l).epsilon(1e-12));
    CHECK(analysis::cancellation_score(q * d0, q * d1, t) ==
          doctest::Approx(base_c).epsilon(1e-12));
    CHECK(analysis::lipschitz_ratio(3.7 * d0, 3.7 * d1, t) ==
          doctest::Approx(base_l).epsilon(1e-12));
    CHECK(analysis::cancellation_score(3.7 * d0, 3.7 * d1, t) ==
          doctest::Approx(base_c).epsilon(1e-12));
  }

  SUBCASE("edge_stats bundles the pieces consistently") {
    const Vec d0 = v2(0.5, 0.25);
    const Vec d1 = v2(-0.125, 1.0);
    const double t = 0.3;
    const analysis::EdgeStats e = analysis::edge_stats(d0, d1, t);
    CHECK(e.t == t);
    CHECK(e.delta0 == d0);
    CHECK(e.delta1 == d1);
    CHECK(e.lipschitz == analysis::lipschitz_ratio(d0, d1, t));
    CHECK(e.cancellation == analysis::cancellation_score(d0, d1, t));
    CHECK(e.dist_t == doctest::Approx(((1 - t) * d0 + t * d1).norm()));
  }

  SUBCASE("domain and shape errors") {
    const Vec d0 = v2(1.0, 0.0);
    Vec d3(3);
    d3 << 1.0, 0.0, 0.0;
    CHECK_THROWS_AS(analysis::lipschitz_ratio(d0, d3, 0.5), ConfigError);
    CHECK_THROWS_AS(analysis::lipschitz_ratio(Vec(), Vec(), 0.5), ConfigError);
    CHECK_THROWS_AS(analysis::lipschitz_ratio(d0, d0, 0.0), DomainError);
    CHECK_THROWS_AS(analysis::lipschitz_ratio(d0, d0, 1.0), DomainError);
    CHECK_THROWS_AS(analysis::cancellation_score(d0, d0, 0.5, -1.0),
                    ConfigError);
  }
}

TEST_CASE("midtime study collapses an orbit dataset under x1 canonicalization") {
  const io::ParticleSet dataset = permuted_orbit_dataset(32, 8, 2, 7);

  analysis::MidtimeConfig cfg;
  cfg.m_pairs = 400;
  cfg.n_anchors = 20;
  cfg.k_neighbors = 10;
  cfg.n_bins = 5;
  cfg.t = 0.5;
  cfg.canon = hilbert_spec();
  cfg.seed = 3;

  const std::vector<flow::CanonSide> regimes = {flow::CanonSide::none,
                                                flow::CanonSide::x1_only};
  const auto studies = analysis::midtime_study(dataset, regimes, cfg);
  REQUIRE(studies.size() == 2);
  REQUIRE(studies[0].bins.size() == 5);
  REQUIRE(studies[1].bins.size() == 5);

  // With x1 canonicalized every data endpoint is the same matrix, so every
  // edge has d1 = 0 exactly and a Lipschitz ratio of exactly 1/(1-t) = 2.
  for (const auto& bin : studies[1].bins) {
    CHECK(bin.count == 40);
    CHECK(bin.median_l == 2.0);
    CHECK(bin.p90_l == 2.0);
    CHECK(bin.median_canc == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(bin.p90_canc <= 1.0);
    CHECK(bin.mean_dist > 0.0);
  }

  // Bins are ordered by increasing interpolant distance in both regimes.
  for (const auto& study : studies)
    for (size_t b = 1; b < study.bins.size(); ++b)
      CHECK(study.bins[b].mean_dist >= study.bins[b - 1].mean_dist);

  // Without canonicalization the permutation mismatch leaves genuinely
  // different endpoints, so the collapse signature disappears.
  bool any_off_two = false;
  for (const auto& bin : studies[0].bins)
    if (bin.median_l != 2.0) any_off_two = true;
  CHECK(any_off_two);
}

TEST_CASE("midtime study bin balance, determinism, thread invariance") {
  const io::ParticleSet dataset = permuted_orbit_dataset(16, 6, 2, 21);

  analysis::MidtimeConfig cfg;
  cfg.m_pairs = 400;
  cfg.n_anchors = 29;
  cfg.k_neighbors = 7;  // 203 edges over 10 bins: three bins of 21, seven of 20
  cfg.n_bins = 10;
  cfg.canon = hilbert_spec();
  cfg.seed = 5;

  const std::vector<flow::CanonSide> regimes = {flow::CanonSide::both};
  const auto studies = analysis::midtime_study(dataset, regimes, cfg);
  REQUIRE(studies.size() == 1);
  REQUIRE(studies[0].bins.size() == 10);
  int total = 0;
  for (size_t b = 0; b < studies[0].bins.size(); ++b) {
    CHECK(studies[0].bins[b].count == (b < 3 ? 21 : 20));
    total += studies[0].bins[b].count;
  }
  CHECK(total == 29 * 7);

  const std::string csv = analysis::regime_study_csv(studies);
  CHECK(csv == analysis::regime_study_csv(analysis::midtime_study(dataset, regimes, cfg)));

  analysis::MidtimeConfig threaded = cfg;
  threaded.threads = 3;
  CHECK(csv ==
        analysis::regime_study_csv(analysis::midtime_study(dataset, regimes, threaded)));
}

TEST_CASE("midtime study validates its inputs") {
  const io::ParticleSet dataset = permuted_orbit_dataset(4, 4, 2, 1);
  const std::vector<flow::CanonSide> regimes = {flow::CanonSide::none};
  analysis::MidtimeConfig good;
  good.m_pairs = 64;
  good.n_anchors = 4;
  good.k_neighbors = 4;
  good.n_bins = 4;
  good.canon = hilbert_spec();
  CHECK_NOTHROW(good.validate());

  analysis::MidtimeConfig bad = good;
  bad.m_pairs = 10;  // fewer pairs than the 16 requested edges
  CHECK_THROWS_AS(analysis::midtime_study(dataset, regimes, bad), ConfigError);

  bad = good;
  bad.t = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.t = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.n_bins = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.n_bins = 17;  // more bins than edges
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.k_neighbors = 64;  // k must stay below the pool size
  bad.n_anchors = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.prior_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(analysis::midtime_study(dataset, {}, good), ConfigError);

  io::ParticleSet empty = dataset;
  empty.configs.clear();
  CHECK_THROWS_AS(analysis::midtime_study(empty, regimes, good), ConfigError);
}

TEST_CASE("conditional covariance drops when the data side is canonicalized") {
  const io::ParticleSet dataset = permuted_orbit_dataset(64, 8, 2, 13);

  analysis::CondCovConfig cfg;
  cfg.t_grid = {0.25, 0.5, 0.75};
  cfg.n_mc = 1500;
  cfg.n_anchors = 40;
  cfg.ball_radius_frac = 0.4;
  cfg.canon = hilbert_spec();
  cfg.seed = 17;

  const auto points = analysis::cond_cov_study(dataset, cfg);
  drain_warnings();
  REQUIRE(points.size() == 3);
  for (const auto& p : points) {
    CHECK(p.trace_plain > p.trace_canon);
    CHECK(p.diff == doctest::Approx(p.trace_plain - p.trace_canon));
    CHECK(p.diff > 0.0);
    CHECK(p.se_diff > 0.0);
    // The orbit spread dominates: the paired difference clears three standard
    // errors at every t.
    CHECK(p.diff >= 3.0 * p.se_diff);
  }

  SUBCASE("already-canonical data leaves both arms bit-identical") {
    io::ParticleSet canonical = dataset;
    for (auto& c : canonical.configs)
      c = canon::canonicalize(c, nullptr, cfg.canon).config;
    const auto flat = analysis::cond_cov_study(canonical, cfg);
    drain_warnings();
    REQUIRE(flat.size() == 3);
    for (const auto& p : flat) {
      CHECK(p.trace_plain == p.trace_canon);
      CHECK(p.se_plain == p.se_canon);
      CHECK(p.diff == 0.0);
      CHECK(p.se_diff == 0.0);
    }
  }

  SUBCASE("tiny conditioning balls widen with a warning") {
    analysis::CondCovConfig tiny = cfg;
    tiny.t_grid = {0.5};
    tiny.n_mc = 200;
    tiny.n_anchors = 5;
    tiny.ball_radius_frac = 1e-9;
    drain_warnings();
    const auto pts = analysis::cond_cov_study(dataset, tiny);
    REQUIRE(pts.size() == 1);
    const auto warnings = drain_warnings();
    REQUIRE(!warnings.empty());
    CHECK(warnings.front().find("widened") != std::string::npos);
  }

  SUBCASE("determinism and thread invariance") {
    analysis::CondCovConfig small = cfg;
    small.t_grid = {0.5};
    small.n_mc = 300;
    small.n_anchors = 10;
    const std::string csv = analysis::cond_cov_csv(analysis::cond_cov_study(dataset, small));
    CHECK(csv == analysis::cond_cov_csv(analysis::cond_cov_study(dataset, small)));
    analysis::CondCovConfig threaded = small;
    threaded.threads = 3;
    CHECK(csv == analysis::cond_cov_csv(analysis::cond_cov_study(dataset, threaded)));
    drain_warnings();
  }
}

TEST_CASE("conditional covariance config validates") {
  analysis::CondCovConfig good;
  good.canon = hilbert_spec();
  CHECK_NOTHROW(good.validate());

  analysis::CondCovConfig bad = good;
  bad.t_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.t_grid = {0.5, 1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.n_mc = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.n_anchors = bad.n_mc + 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.ball_radius_frac = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = good;
  bad.threads = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("csv exports match golden strings") {
  SUBCASE("regime study") {
    analysis::RegimeStudy study;
    study.regime = flow::CanonSide::x1_only;
    analysis::BinRecord rec;
    rec.median_l = 2.0;
    rec.p90_l = 2.5;
    rec.median_canc = 0.75;
    rec.p90_canc = 1.0;
    rec.mean_dist = 0.125;
    rec.count = 40;
    study.bins = {rec};
    analysis::BinRecord second = rec;
    second.mean_dist = 1.0 / 3.0;
    second.count = 41;
    study.bins.push_back(second);
    const std::string expect =
        "regime,bin,median_l,p90_l,median_canc,p90_canc,mean_dist,count\n"
        "x1_only,0,2,2.5,0.75,1,0.125,40\n"
        "x1_only,1,2,2.5,0.75,1,0.333333333,41\n";
    CHECK(analysis::regime_study_csv({study}) == expect);
  }

  SUBCASE("conditional covariance") {
    analysis::CondCovPoint p;
    p.t = 0.5;
    p.trace_canon = 1.25;
    p.se_canon = 0.25;
    p.trace_plain = 37.5;
    p.se_plain = 0.5;
    p.diff = 36.25;
    p.se_diff = 0.625;
    const std::string expect =
        "t,trace_canon,se_canon,trace_plain,se_plain,diff,se_diff\n"
        "0.5,1.25,0.25,37.5,0.5,36.25,0.625\n";
    CHECK(analysis::cond_cov_csv({p}) == expect);
  }
}
