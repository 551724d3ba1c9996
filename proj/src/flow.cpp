// Flow-matching engine built on the path, canon, and net modules.

#include "ogpp/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <tuple>

#include "ogpp/energy.hpp"  // outward ring normals

namespace ogpp::flow {

namespace {

// Exact minimum-cost assignment (shortest augmenting path with potentials) on
// a square cost matrix; returns the column assigned to each row. Cubic time,
// which is why the coupling batch is capped.
std::vector<int> solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(static_cast<size_t>(n), 0);
  for (int j = 1; j <= n; ++j)
    if (match[j] != 0) out[static_cast<size_t>(match[j] - 1)] = j - 1;
  return out;
}

void wrap01_inplace(Mat& x) {
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) x(r, c) -= std::floor(x(r, c));
}

bool is_geometric(paths::Family f) {
  return f == paths::Family::hermite_quadratic ||
         f == paths::Family::hermite_cubic;
}

}  // namespace

// --- enum names --------------------------------------------------------------

const char* coupling_name(Coupling c) {
  switch (c) {
    case Coupling::independent: return "independent";
    case Coupling::minibatch_ot: return "minibatch_ot";
  }
  throw ConfigError("unknown coupling");
}

Coupling coupling_from_name(const std::string& name) {
  if (name == "independent") return Coupling::independent;
  if (name == "minibatch_ot") return Coupling::minibatch_ot;
  throw ConfigError("unknown coupling name '" + name + "'");
}

const char* canon_side_name(CanonSide s) {
  switch (s) {
    case CanonSide::none: return "none";
    case CanonSide::x0_only: return "x0_only";
    case CanonSide::x1_only: return "x1_only";
    case CanonSide::both: return "both";
  }
  throw ConfigError("unknown canon side");
}

CanonSide canon_side_from_name(const std::string& name) {
  if (name == "none") return CanonSide::none;
  if (name == "x0_only") return CanonSide::x0_only;
  if (name == "x1_only") return CanonSide::x1_only;
  if (name == "both") return CanonSide::both;
  throw ConfigError("unknown canon side name '" + name + "'");
}

const char* prior_name(Prior p) {
  switch (p) {
    case Prior::uniform_box: return "uniform_box";
    case Prior::gaussian: return "gaussian";
    case Prior::scaled_gaussian: return "scaled_gaussian";
    case Prior::sphere: return "sphere";
    case Prior::shell: return "shell";
    case Prior::toroidal_uniform: return "toroidal_uniform";
  }
  throw ConfigError("unknown prior");
}

Prior prior_from_name(const std::string& name) {
  if (name == "uniform_box") return Prior::uniform_box;
  if (name == "gaussian") return Prior::gaussian;
  if (name == "scaled_gaussian") return Prior::scaled_gaussian;
  if (name == "sphere") return Prior::sphere;
  if (name == "shell") return Prior::shell;
  if (name == "toroidal_uniform") return Prior::toroidal_uniform;
  throw ConfigError("unknown prior name '" + name + "'");
}

const char* normal_source_name(NormalSource s) {
  switch (s) {
    case NormalSource::none: return "none";
    case NormalSource::attrs: return "attrs";
    case NormalSource::ring_geometry: return "ring_geometry";
  }
  throw ConfigError("unknown normal source");
}

NormalSource normal_source_from_name(const std::string& name) {
  if (name == "none") return NormalSource::none;
  if (name == "attrs") return NormalSource::attrs;
  if (name == "ring_geometry") return NormalSource::ring_geometry;
  throw ConfigError("unknown normal source name '" + name + "'");
}

// --- coupling ----------------------------------------------------------------

std::vector<int> couple(const std::vector<Mat>& noise,
                        const std::vector<Mat>& data,
                        const CouplingSpec& spec) {
  if (noise.size() != data.size())
    throw ConfigError("couple: batch sizes differ");
  const int b = static_cast<int>(noise.size());
  std::vector<int> pairing(static_cast<size_t>(b));
  std::iota(pairing.begin(), pairing.end(), 0);
  if (spec.kind == Coupling::independent || b <= 1) return pairing;
  if (b > spec.max_batch)
    throw ConfigError("couple: minibatch_ot batch exceeds the assignment cap");
  Mat cost(b, b);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      if (noise[i].rows() != data[j].rows() ||
          noise[i].cols() != data[j].cols())
        throw ConfigError("couple: configurations must share one shape");
      cost(i, j) = (noise[static_cast<size_t>(i)] -
                    data[static_cast<size_t>(j)])
                       .squaredNorm();
    }
  }
  return solve_assignment(cost);
}

// --- priors ------------------------------------------------------------------

Mat draw_prior(Prior prior, int n, int d, double scale, Rng& rng) {
  if (n < 1 || d < 1) throw ConfigError("draw_prior: n and d must be positive");
  if (scale <= 0.0) throw ConfigError("draw_prior: scale must be positive");
  Mat x(n, d);
  switch (prior) {
    case Prior::uniform_box:
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
      break;
    case Prior::gaussian:
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = rng.normal();
      break;
    case Prior::scaled_gaussian:
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = scale * rng.normal();
      break;
    case Prior::sphere:
    case Prior::shell:
      for (int r = 0; r < n; ++r) {
        Vec dir(d);
        double norm = 0.0;
        do {
          for (int c = 0; c < d; ++c) dir(c) = rng.normal();
          norm = dir.norm();
        } while (norm < 1e-12);
        const double radius =
            prior == Prior::shell ? rng.uniform(0.8, 1.2) : 1.0;
        x.row(r) = (radius / norm) * dir.transpose();
      }
      break;
    case Prior::toroidal_uniform:
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = rng.uniform();
      break;
  }
  return x;
}

// --- configuration -----------------------------------------------------------

void TrainConfig::validate() const {
  path.validate();
  canon.validate();
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (steps < 0) throw ConfigError("train config: steps must be >= 0");
  if (print_every < 0)
    throw ConfigError("train config: print_every must be >= 0");
  if (prior_scale <= 0.0)
    throw ConfigError("train config: prior_scale must be positive");
  if (normal_channel < 0)
    throw ConfigError("train config: normal_channel must be >= 0");
  if (coupling.kind == Coupling::minibatch_ot &&
      batch_size > coupling.max_batch)
    throw ConfigError(
        "train config: minibatch_ot batch_size exceeds the assignment cap");
  const bool toroidal_path = path.family == paths::Family::toroidal_linear;
  const bool toroidal_prior = prior == Prior::toroidal_uniform;
  if (toroidal_path != toroidal_prior)
    throw ConfigError(
        "train config: toroidal path and toroidal prior go together");
  if (path.terminal_mode != paths::TerminalMode::none &&
      normal_source == NormalSource::none)
    throw ConfigError(
        "train config: a terminal-velocity mode needs a normal source");
}

void SampleConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sample config: n_steps must be >= 1");
  if (n_samples < 1)
    throw ConfigError("sample config: n_samples must be >= 1");
  if (prior_scale <= 0.0)
    throw ConfigError("sample config: prior_scale must be positive");
  if (threads < 0) throw ConfigError("sample config: threads must be >= 0");
}

// --- batch construction ------------------------------------------------------

std::vector<TrainingTarget> make_batch(const io::ParticleSet& dataset,
                                       const TrainConfig& cfg, Rng& rng,
                                       std::optional<double> force_t) {
  cfg.validate();
  dataset.validate();
  if (dataset.samples() < 1) throw ConfigError("make_batch: empty dataset");
  const int b = cfg.batch_size;
  const int n = dataset.n;
  const int d = dataset.d;
  const bool geometric = is_geometric(cfg.path.family);
  const bool needs_normals =
      cfg.path.terminal_mode != paths::TerminalMode::none;
  if (needs_normals && cfg.normal_source == NormalSource::attrs &&
      dataset.a < cfg.normal_channel + d)
    throw ConfigError(
        "make_batch: dataset lacks the attribute channels holding normals");
  if (cfg.cond_from_anchors && dataset.a < 1)
    throw ConfigError(
        "make_batch: anchor conditioning requires an attribute channel");

  // Fixed draw order: data indices, noise configurations, then times.
  std::vector<int> idx(static_cast<size_t>(b));
  for (auto& i : idx)
    i = static_cast<int>(rng.below(static_cast<uint64_t>(dataset.samples())));
  std::vector<Mat> x0(static_cast<size_t>(b));
  for (auto& m : x0) m = draw_prior(cfg.prior, n, d, cfg.prior_scale, rng);
  std::vector<double> times(static_cast<size_t>(b));
  for (auto& t : times) t = force_t ? *force_t : rng.uniform();

  std::vector<Mat> x1(static_cast<size_t>(b)), attrs(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    x1[static_cast<size_t>(i)] = dataset.configs[static_cast<size_t>(idx[i])];
    if (dataset.a > 0)
      attrs[static_cast<size_t>(i)] =
          dataset.attrs[static_cast<size_t>(idx[i])];
  }

  const bool canon_x0 =
      cfg.canon_side == CanonSide::x0_only || cfg.canon_side == CanonSide::both;
  const bool canon_x1 =
      cfg.canon_side == CanonSide::x1_only || cfg.canon_side == CanonSide::both;
  for (int i = 0; i < b; ++i) {
    auto& xi = x1[static_cast<size_t>(i)];
    auto& ai = attrs[static_cast<size_t>(i)];
    if (canon_x1) {
      auto res =
          canon::canonicalize(xi, dataset.a > 0 ? &ai : nullptr, cfg.canon);
      xi = std::move(res.config);
      if (dataset.a > 0) ai = std::move(res.attrs);
    }
    if (canon_x0)
      x0[static_cast<size_t>(i)] =
          canon::canonicalize(x0[static_cast<size_t>(i)], nullptr, cfg.canon)
              .config;
  }

  const auto pairing = couple(x0, x1, cfg.coupling);

  std::vector<TrainingTarget> out(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    const Mat& xi0 = x0[static_cast<size_t>(i)];
    const Mat& xi1 = x1[static_cast<size_t>(pairing[static_cast<size_t>(i)])];
    const Mat& ai = attrs[static_cast<size_t>(pairing[static_cast<size_t>(i)])];
    const double t = times[static_cast<size_t>(i)];

    Mat v1;
    if (geometric) {
      v1 = Mat::Zero(n, d);
      if (needs_normals) {
        Mat n_hat(n, d);
        if (cfg.normal_source == NormalSource::attrs) {
          for (int r = 0; r < n; ++r) {
            Vec raw = ai.row(r).segment(cfg.normal_channel, d).transpose();
            const double len = raw.norm();
            if (len < 1e-12)
              throw DomainError("make_batch: zero normal in attributes");
            n_hat.row(r) = (raw / len).transpose();
          }
        } else {
          n_hat = energy::polyline_outward_normals(xi1);
        }
        for (int r = 0; r < n; ++r) {
          const Vec a = xi0.row(r).transpose();
          const Vec z = xi1.row(r).transpose();
          const Vec nr = n_hat.row(r).transpose();
          Vec vr;
          switch (cfg.path.terminal_mode) {
            case paths::TerminalMode::ntv:
              vr = paths::ntv(nr);
              break;
            case paths::TerminalMode::atv:
              vr = paths::atv(a, z, nr, cfg.path.lambda);
              break;
            case paths::TerminalMode::atv_optimal:
              vr = paths::atv_optimal(a, z, nr, cfg.path.alpha_lo,
                                      cfg.path.alpha_hi);
              break;
            case paths::TerminalMode::none:
              vr = Vec::Zero(d);
              break;
          }
          v1.row(r) = vr.transpose();
        }
      }
    }

    paths::PathSample ps;
    switch (cfg.path.family) {
      case paths::Family::linear:
        ps = paths::linear_sample(xi0, xi1, t);
        break;
      case paths::Family::toroidal_linear:
        ps = paths::toroidal_sample(xi0, xi1, t);
        break;
      case paths::Family::hermite_quadratic:
        ps = paths::hermite_sample(xi0, xi1, v1, t);
        break;
      case paths::Family::hermite_cubic:
        ps = paths::cubic_hermite_sample(xi0, xi1, cfg.path.n0_mode, v1, t);
        break;
    }
    if (!ps.u_ref.allFinite() || !ps.x_t.allFinite())
      throw DomainError("make_batch: non-finite training target");

    TrainingTarget& tt = out[static_cast<size_t>(i)];
    tt.x_t = std::move(ps.x_t);
    tt.t = t;
    tt.u_ref = std::move(ps.u_ref);
    if (cfg.cond_from_anchors) {
      std::vector<int> rows;
      for (int r = 0; r < n; ++r)
        if (ai(r, 0) > 0.5) rows.push_back(r);
      tt.cond.resize(static_cast<int>(rows.size()), d);
      for (size_t k = 0; k < rows.size(); ++k)
        tt.cond.row(static_cast<int>(k)) = xi1.row(rows[k]);
    }
  }
  return out;
}

net::Batch to_net_batch(const std::vector<TrainingTarget>& targets) {
  net::Batch batch;
  bool any_cond = false;
  for (const auto& t : targets) any_cond = any_cond || t.cond.rows() > 0;
  for (const auto& t : targets) {
    batch.x.push_back(t.x_t);
    batch.t.push_back(t.t);
    batch.target.push_back(t.u_ref);
    if (any_cond) batch.cond.push_back(t.cond);
  }
  return batch;
}

// --- training loop -----------------------------------------------------------

TrainResult train(const io::ParticleSet& dataset, const net::NetConfig& net_cfg,
                  const TrainConfig& cfg) {
  cfg.validate();
  net_cfg.validate();
  dataset.validate();
  if (net_cfg.n_particles != dataset.n || net_cfg.d_in != dataset.d)
    throw ConfigError("train: network shape does not match the dataset");

  TrainResult result;
  result.net = net::make_net(net_cfg, cfg.seed);
  net::AdamState state;
  net::VelocityNet last_finite = result.net;

  for (int step = 0; step < cfg.steps; ++step) {
    // Stream 0 seeded the parameters; each step gets its own stream.
    Rng rng(cfg.seed, 1 + static_cast<uint64_t>(step));
    const net::Batch batch = to_net_batch(make_batch(dataset, cfg, rng));
    double loss = 0.0;
    net::Gradients grads;
    try {
      std::tie(loss, grads) = net::loss_and_grads(result.net, batch);
    } catch (const ConvergenceError&) {
      warn("train: non-finite loss at step " + std::to_string(step) +
           "; keeping the last finite state");
      result.net = std::move(last_finite);
      result.aborted = true;
      return result;
    }
    last_finite = result.net;
    net::adam_step(result.net, grads, state, cfg.adam);
    result.losses.push_back(loss);
    if (cfg.print_every > 0 &&
        (step % cfg.print_every == 0 || step + 1 == cfg.steps))
      std::fprintf(stderr, "step=%d loss=%g\n", step, loss);
  }
  return result;
}

// --- sampling ----------------------------------------------------------------

io::ParticleSet sample(const net::VelocityNet& net, const SampleConfig& cfg) {
  cfg.validate();
  net.cfg.validate();
  const int n = net.cfg.n_particles;
  const int d = net.cfg.d_in;
  const int k_steps = cfg.n_steps;
  const double dt = 1.0 / k_steps;
  const bool wrap = cfg.prior == Prior::toroidal_uniform;

  io::ParticleSet out;
  out.task = io::Task::generic;
  out.seed = cfg.seed;
  out.n = n;
  out.d = d;
  out.a = d;  // unit-normal components
  out.configs.resize(static_cast<size_t>(cfg.n_samples));
  out.attrs.resize(static_cast<size_t>(cfg.n_samples));

  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  parallel_for(static_cast<size_t>(cfg.n_samples), threads, [&](std::size_t s) {
    Rng rng(cfg.seed, static_cast<uint64_t>(s));
    Mat x = draw_prior(cfg.prior, n, d, cfg.prior_scale, rng);
    for (int k = 0; k < k_steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      x += dt * net::forward(net, x, t, cfg.cond);
      if (wrap) wrap01_inplace(x);
    }
    const Mat u1 = net::forward(net, x, 1.0, cfg.cond);
    Mat normals = Mat::Zero(n, d);
    for (int r = 0; r < n; ++r) {
      const double speed = u1.row(r).norm();
      if (speed < 1e-8) {
        warn("sample: terminal speed below 1e-8 (sample " + std::to_string(s) +
             ", particle " + std::to_string(r) + "); zero normal emitted");
      } else {
        normals.row(r) = u1.row(r) / speed;
      }
    }
    out.configs[s] = std::move(x);
    out.attrs[s] = std::move(normals);
  });

  Mat bounds(2, d);
  bounds.row(0) = out.configs[0].colwise().minCoeff();
  bounds.row(1) = out.configs[0].colwise().maxCoeff();
  for (const auto& c : out.configs) {
    bounds.row(0) = bounds.row(0).cwiseMin(c.colwise().minCoeff());
    bounds.row(1) = bounds.row(1).cwiseMax(c.colwise().maxCoeff());
  }
  out.bounds = bounds;
  out.validate();
  return out;
}

}  // namespace ogpp::flow
