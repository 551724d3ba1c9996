// ogpp: command-line laboratory wiring the generators, the flow-matching
// trainer, the ODE sampler, the evaluation metrics, and the geometry studies
// into reproducible runs.
//
// Every run writes its primary artifact(s) plus one manifest.json next to
// them (one run per output directory). The manifest records the exact argv
// and the fully resolved configuration; replaying the argv with --threads 1
// reproduces the artifacts bit-exactly.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
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

constexpr const char* kVersion = "1.0.0";

using nlohmann::json;
using namespace ogpp;

// ---------------------------------------------------------------- utilities

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Flushes accumulated module warnings to stderr so they are not lost.
void print_warnings() {
  for (const auto& w : drain_warnings())
    std::fprintf(stderr, "warning: %s\n", w.c_str());
}

// ------------------------------------------------------------ token parsing

// Path tokens: a family name, optionally suffixed by a terminal-velocity
// rule, e.g. "linear", "toroidal", "hermite-atv", "cubic-ntv",
// "hermite-atv-opt". Long enum names are accepted too.
void apply_path_token(const std::string& token, paths::PathSpec& spec) {
  std::string fam = token, term;
  for (const char* suffix : {"-atv-opt", "-atv_optimal", "-atv", "-ntv"}) {
    const std::string s(suffix);
    if (fam.size() > s.size() &&
        fam.compare(fam.size() - s.size(), s.size(), s) == 0) {
      term = s.substr(1);
      fam = fam.substr(0, fam.size() - s.size());
      break;
    }
  }
  if (fam == "toroidal") fam = "toroidal_linear";
  if (fam == "hermite") fam = "hermite_quadratic";
  if (fam == "cubic") fam = "hermite_cubic";
  spec.family = paths::family_from_name(fam);
  if (term == "atv-opt") term = "atv_optimal";
  spec.terminal_mode = term.empty() ? paths::TerminalMode::none
                                    : paths::terminal_mode_from_name(term);
}

// Canonicalization tokens: a curve name with an optional dimension suffix,
// e.g. "none", "hilbert", "hilbert6d", "morton3d", "polygon".
void apply_canon_token(const std::string& token, canon::CanonSpec& spec) {
  std::string curve = token;
  if (curve.size() > 2 && curve.back() == 'd' &&
      std::isdigit(static_cast<unsigned char>(curve[curve.size() - 2]))) {
    size_t pos = curve.size() - 2;
    while (pos > 0 && std::isdigit(static_cast<unsigned char>(curve[pos - 1])))
      --pos;
    spec.dims = std::stoi(curve.substr(pos, curve.size() - 1 - pos));
    curve = curve.substr(0, pos);
  }
  if (curve == "polygon") curve = "polygon_ccw";
  spec.curve = canon::curve_from_name(curve);
}

flow::CanonSide parse_canon_side(std::string token) {
  if (token == "x0") token = "x0_only";
  if (token == "x1") token = "x1_only";
  return flow::canon_side_from_name(token);
}

flow::Coupling parse_coupling(std::string token) {
  if (token == "ot") token = "minibatch_ot";
  return flow::coupling_from_name(token);
}

flow::NormalSource parse_normal_source(std::string token) {
  if (token == "ring") token = "ring_geometry";
  return flow::normal_source_from_name(token);
}

paths::N0Mode parse_n0_mode(const std::string& token) {
  if (token == "zero") return paths::N0Mode::zero;
  if (token == "chord") return paths::N0Mode::chord;
  throw ConfigError("unknown n0 mode '" + token + "' (zero|chord)");
}

// --------------------------------------------------------- config -> JSON

json canon_json(const canon::CanonSpec& s) {
  return {{"curve", canon::curve_name(s.curve)},
          {"bits", s.bits},
          {"dims", s.dims},
          {"pose_normalize", s.pose_normalize}};
}

json path_json(const paths::PathSpec& s) {
  return {{"family", paths::family_name(s.family)},
          {"terminal_mode", paths::terminal_mode_name(s.terminal_mode)},
          {"lambda", s.lambda},
          {"n0_mode", s.n0_mode == paths::N0Mode::zero ? "zero" : "chord"},
          {"alpha_lo", s.alpha_lo},
          {"alpha_hi", s.alpha_hi}};
}

json train_json(const flow::TrainConfig& c) {
  return {{"path", path_json(c.path)},
          {"canon", canon_json(c.canon)},
          {"canon_side", flow::canon_side_name(c.canon_side)},
          {"coupling", flow::coupling_name(c.coupling.kind)},
          {"coupling_max_batch", c.coupling.max_batch},
          {"prior", flow::prior_name(c.prior)},
          {"prior_scale", c.prior_scale},
          {"normal_source", flow::normal_source_name(c.normal_source)},
          {"normal_channel", c.normal_channel},
          {"cond_from_anchors", c.cond_from_anchors},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"adam",
           {{"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps}}},
          {"seed", c.seed},
          {"print_every", c.print_every}};
}

json net_json(const net::NetConfig& c) {
  return {{"d_in", c.d_in},       {"d_emb", c.d_emb},
          {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
          {"d_mlp", c.d_mlp},     {"n_particles", c.n_particles},
          {"n_cond", c.n_cond},   {"param_dtype", c.param_dtype}};
}

// ------------------------------------------------------------- manifests

struct Manifest {
  json j;
  std::chrono::steady_clock::time_point start;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    start = std::chrono::steady_clock::now();
    j["tool"] = "ogpp";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
  }

  // Writes manifest.json into the directory holding primary_out.
  void write(const std::string& primary_out) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    j["wall_clock_sec"] = wall;
    auto dir = std::filesystem::path(primary_out).parent_path();
    const auto path = (dir.empty() ? std::filesystem::path(".") : dir) /
                      "manifest.json";
    write_text(path.string(), j.dump(2) + "\n");
  }
};

// --------------------------------------------------------------- commands

struct GenOpts {
  // shared
  int samples = 1;
  std::uint64_t seed = 0;
  std::string out;
  // bluenoise
  int bn_n = 256;
  double bn_sigma_factor = 0.35;
  double bn_step = 1e-3;
  int bn_iters = 400;
  // dla
  int dla_n = 512;
  int dla_grid = 256;
  // thomson
  int th_shells = 3;
  int th_per_shell = 32;
  std::vector<double> th_radii;
  double th_spring_k = 100.0;
  double th_lr = 2e-3;
  int th_iters = 20000;
  double th_tol = 1e-4;
  // minsurf
  int ms_n = 256;
  int ms_anchors = 6;
  double ms_area_fraction = 0.7;
  int ms_iters = 4000;
  std::vector<double> ms_fixed_anchor_params;
  bool ms_dihedral_shuffle = false;
};

void run_gen(const std::string& task, const GenOpts& o, Manifest& man) {
  io::ParticleSet set;
  json cfg_json;
  if (task == "bluenoise") {
    energy::BlueNoiseConfig cfg;
    cfg.n_points = o.bn_n;
    cfg.n_samples = o.samples;
    cfg.sigma_factor = o.bn_sigma_factor;
    cfg.step = o.bn_step;
    cfg.iters = o.bn_iters;
    cfg.seed = o.seed;
    cfg_json = {{"n_points", cfg.n_points},
                {"n_samples", cfg.n_samples},
                {"sigma_factor", cfg.sigma_factor},
                {"step", cfg.step},
                {"iters", cfg.iters},
                {"seed", cfg.seed}};
    set = energy::gen_blue_noise(cfg);
  } else if (task == "dla") {
    energy::DlaConfig cfg;
    cfg.n_particles = o.dla_n;
    cfg.grid_size = o.dla_grid;
    cfg.n_samples = o.samples;
    cfg.seed = o.seed;
    cfg_json = {{"n_particles", cfg.n_particles},
                {"grid_size", cfg.grid_size},
                {"n_samples", cfg.n_samples},
                {"seed", cfg.seed}};
    set = energy::gen_dla(cfg);
  } else if (task == "thomson") {
    energy::ThomsonConfig cfg;
    cfg.n_shells = o.th_shells;
    cfg.per_shell = o.th_per_shell;
    if (o.th_radii.empty()) {
      cfg.radii.clear();
      for (int s = 0; s < cfg.n_shells; ++s) cfg.radii.push_back(1.0 + 0.5 * s);
    } else {
      cfg.radii = o.th_radii;
    }
    cfg.spring_k = o.th_spring_k;
    cfg.lr = o.th_lr;
    cfg.iters = o.th_iters;
    cfg.tol = o.th_tol;
    cfg.n_samples = o.samples;
    cfg.seed = o.seed;
    cfg_json = {{"n_shells", cfg.n_shells},   {"per_shell", cfg.per_shell},
                {"radii", cfg.radii},         {"spring_k", cfg.spring_k},
                {"lr", cfg.lr},               {"iters", cfg.iters},
                {"tol", cfg.tol},             {"n_samples", cfg.n_samples},
                {"seed", cfg.seed}};
    set = energy::gen_thomson(cfg);
  } else if (task == "minsurf") {
    energy::MinSurfaceConfig cfg;
    cfg.boundary_points = o.ms_n;
    cfg.n_anchors = o.ms_anchors;
    cfg.area_fraction = o.ms_area_fraction;
    cfg.iters = o.ms_iters;
    cfg.n_samples = o.samples;
    cfg.seed = o.seed;
    cfg.fixed_anchor_params = o.ms_fixed_anchor_params;
    cfg.dihedral_shuffle = o.ms_dihedral_shuffle;
    if (!cfg.fixed_anchor_params.empty())
      cfg.n_anchors = static_cast<int>(cfg.fixed_anchor_params.size());
    cfg_json = {{"boundary_points", cfg.boundary_points},
                {"n_anchors", cfg.n_anchors},
                {"area_fraction", cfg.area_fraction},
                {"iters", cfg.iters},
                {"n_samples", cfg.n_samples},
                {"seed", cfg.seed},
                {"fixed_anchor_params", cfg.fixed_anchor_params},
                {"dihedral_shuffle", cfg.dihedral_shuffle}};
    set = energy::gen_min_surface(cfg);
  } else {
    throw ConfigError("unknown gen task '" + task + "'");
  }

  ensure_parent_dir(o.out);
  io::write_particles(set, o.out);
  man.j["config"] = cfg_json;
  man.j["seed"] = o.seed;
  man.j["outputs"] = {o.out};
  man.write(o.out);
  std::fprintf(stderr, "wrote %s (S=%d N=%d D=%d A=%d)\n", o.out.c_str(),
               set.samples(), set.n, set.d, set.a);
}

struct TrainOpts {
  std::string data, out;
  std::string path_token = "linear";
  double lambda = 1.0;
  std::string n0_mode = "zero";
  double alpha_lo = 0.5, alpha_hi = 15.0;
  std::string canon_token = "none";
  int canon_bits = 16;
  bool canon_pose = false;
  std::string canon_side = "x1_only";
  std::string coupling = "independent";
  std::string prior = "uniform_box";
  double prior_scale = 0.5;
  std::string normal_source = "none";
  int normal_channel = 0;
  bool cond_from_anchors = false;
  int batch_size = 16;
  int steps = 1000;
  std::uint64_t seed = 0;
  int print_every = 50;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int d_emb = 128, layers = 4, heads = 4, d_mlp = 512;
  std::string dtype = "f32";
};

// Rows of the (canonicalized, when the regime touches x1) first data sample
// whose anchor flag is set; recorded in the checkpoint so sampling can feed
// the same condition tokens.
Mat anchor_cond_rows(const io::ParticleSet& data, const flow::TrainConfig& cfg) {
  Mat config = data.configs[0];
  Mat attrs = data.attrs.empty() ? Mat() : data.attrs[0];
  if (cfg.canon_side == flow::CanonSide::x1_only ||
      cfg.canon_side == flow::CanonSide::both) {
    auto res = canon::canonicalize(config, attrs.size() ? &attrs : nullptr,
                                   cfg.canon);
    config = res.config;
    attrs = res.attrs;
  }
  std::vector<int> rows;
  for (int r = 0; r < data.n; ++r)
    if (attrs(r, 0) > 0.5) rows.push_back(r);
  Mat cond(static_cast<int>(rows.size()), data.d);
  for (size_t k = 0; k < rows.size(); ++k)
    cond.row(static_cast<int>(k)) = config.row(rows[k]);
  return cond;
}

void run_train(const TrainOpts& o, Manifest& man) {
  const io::ParticleSet data = io::read_particles(o.data);

  flow::TrainConfig cfg;
  apply_path_token(o.path_token, cfg.path);
  cfg.path.lambda = o.lambda;
  cfg.path.n0_mode = parse_n0_mode(o.n0_mode);
  cfg.path.alpha_lo = o.alpha_lo;
  cfg.path.alpha_hi = o.alpha_hi;
  apply_canon_token(o.canon_token, cfg.canon);
  cfg.canon.bits = o.canon_bits;
  cfg.canon.pose_normalize = o.canon_pose;
  cfg.canon_side = parse_canon_side(o.canon_side);
  cfg.coupling.kind = parse_coupling(o.coupling);
  cfg.prior = flow::prior_from_name(o.prior);
  cfg.prior_scale = o.prior_scale;
  cfg.normal_source = parse_normal_source(o.normal_source);
  cfg.normal_channel = o.normal_channel;
  cfg.cond_from_anchors = o.cond_from_anchors;
  cfg.batch_size = o.batch_size;
  cfg.steps = o.steps;
  cfg.adam.lr = o.lr;
  cfg.adam.beta1 = o.beta1;
  cfg.adam.beta2 = o.beta2;
  cfg.adam.eps = o.eps;
  cfg.seed = o.seed;
  cfg.print_every = o.print_every;

  // Condition tokens are anchor rows; for fixed-anchor datasets every sample
  // exposes the same count, and the net reserves space for the maximum.
  int n_cond = 0;
  if (cfg.cond_from_anchors) {
    if (data.a < 1)
      throw ConfigError("train: --cond-from-anchors needs an attribute channel");
    for (const Mat& attrs : data.attrs) {
      int count = 0;
      for (int r = 0; r < data.n; ++r)
        if (attrs(r, 0) > 0.5) ++count;
      n_cond = std::max(n_cond, count);
    }
  }

  net::NetConfig ncfg;
  ncfg.d_in = data.d;
  ncfg.d_emb = o.d_emb;
  ncfg.n_layers = o.layers;
  ncfg.n_heads = o.heads;
  ncfg.d_mlp = o.d_mlp;
  ncfg.n_particles = data.n;
  ncfg.n_cond = n_cond;
  ncfg.param_dtype = o.dtype;
  ncfg.validate();
  cfg.validate();

  man.j["config"] = {{"train", train_json(cfg)}, {"net", net_json(ncfg)}};
  man.j["inputs"] = {o.data};
  man.j["seed"] = o.seed;

  flow::TrainResult result = flow::train(data, ncfg, cfg);
  man.j["param_count"] = net::param_count(result.net);
  print_warnings();
  if (result.aborted)
    std::fprintf(stderr,
                 "training aborted on a non-finite loss; keeping the last "
                 "finite state\n");

  io::Checkpoint ckpt = net::to_checkpoint(result.net);
  json cj = json::parse(ckpt.config_json);
  const bool geometric =
      cfg.path.family == paths::Family::hermite_quadratic ||
      cfg.path.family == paths::Family::hermite_cubic;
  json sampling = {{"prior", flow::prior_name(cfg.prior)},
                   {"prior_scale", cfg.prior_scale},
                   {"path", path_json(cfg.path)},
                   {"emit_normals", geometric},
                   {"cond", json::array()}};
  if (cfg.cond_from_anchors) {
    const Mat cond = anchor_cond_rows(data, cfg);
    for (int r = 0; r < cond.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < cond.cols(); ++c) row.push_back(cond(r, c));
      sampling["cond"].push_back(row);
    }
  }
  cj["sampling"] = sampling;
  ckpt.config_json = cj.dump();

  ensure_parent_dir(o.out);
  io::write_checkpoint(ckpt, o.out);

  std::string losses = "step,loss\n";
  for (size_t i = 0; i < result.losses.size(); ++i)
    losses += std::to_string(i) + "," + format_g(result.losses[i]) + "\n";
  auto dir = std::filesystem::path(o.out).parent_path();
  const auto losses_path =
      (dir.empty() ? std::filesystem::path(".") : dir) / "losses.csv";
  write_text(losses_path.string(), losses);

  man.j["outputs"] = {o.out, losses_path.string()};
  man.j["aborted"] = result.aborted;
  man.j["final_loss"] =
      result.losses.empty() ? 0.0 : result.losses.back();
  man.write(o.out);
  std::fprintf(stderr, "wrote %s (%lld parameters)\n", o.out.c_str(),
               static_cast<long long>(net::param_count(result.net)));
}

struct SampleOpts {
  std::string ckpt, out;
  int steps = 10;
  int samples = 1;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string prior;      // empty = take from checkpoint
  double prior_scale = -1.0;  // <0 = take from checkpoint
};

void run_sample(const SampleOpts& o, Manifest& man) {
  const io::Checkpoint ckpt = io::read_checkpoint(o.ckpt);
  const net::VelocityNet net = net::from_checkpoint(ckpt);

  flow::SampleConfig cfg;
  cfg.n_steps = o.steps;
  cfg.n_samples = o.samples;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  bool emit_normals = true;
  const json cj = json::parse(ckpt.config_json);
  if (cj.contains("sampling")) {
    const json& s = cj["sampling"];
    cfg.prior = flow::prior_from_name(s.at("prior").get<std::string>());
    cfg.prior_scale = s.at("prior_scale").get<double>();
    emit_normals = s.at("emit_normals").get<bool>();
    const json& cond = s.at("cond");
    if (!cond.empty()) {
      cfg.cond.resize(static_cast<int>(cond.size()),
                      static_cast<int>(cond[0].size()));
      for (int r = 0; r < cfg.cond.rows(); ++r)
        for (int c = 0; c < cfg.cond.cols(); ++c)
          cfg.cond(r, c) = cond[r][c].get<double>();
    }
  } else {
    warn("checkpoint has no sampling block; using the default prior");
  }
  if (!o.prior.empty()) cfg.prior = flow::prior_from_name(o.prior);
  if (o.prior_scale >= 0.0) cfg.prior_scale = o.prior_scale;

  man.j["config"] = {{"n_steps", cfg.n_steps},
                     {"n_samples", cfg.n_samples},
                     {"prior", flow::prior_name(cfg.prior)},
                     {"prior_scale", cfg.prior_scale},
                     {"cond_rows", cfg.cond.rows()},
                     {"emit_normals", emit_normals},
                     {"seed", cfg.seed},
                     {"threads", cfg.threads}};
  man.j["inputs"] = {o.ckpt};
  man.j["seed"] = o.seed;

  io::ParticleSet set = flow::sample(net, cfg);
  print_warnings();
  if (!emit_normals) {
    set.a = 0;
    set.attrs.clear();
  }
  ensure_parent_dir(o.out);
  io::write_particles(set, o.out);
  man.j["outputs"] = {o.out};
  man.write(o.out);
  std::fprintf(stderr, "wrote %s (S=%d N=%d D=%d A=%d)\n", o.out.c_str(),
               set.samples(), set.n, set.d, set.a);
}

struct EvalOpts {
  std::string gen, ref, out;
  int freq_bins = 24;
  int per_shell = 0;
  std::vector<double> radii;
  double area_fraction = 0.7;
  int normal_channel = 0;
};

void check_task_tag(const io::ParticleSet& s, io::Task expect,
                    const std::string& which) {
  if (s.task != io::Task::generic && s.task != expect)
    throw ConfigError(which + ": task tag '" + io::task_name(s.task) +
                      "' does not match eval task '" + io::task_name(expect) +
                      "'");
}

void run_eval(const std::string& task, const EvalOpts& o, Manifest& man) {
  // Flag combinations are usage errors; check them before touching files.
  if (task == "bluenoise" || task == "normals") {
    if (o.ref.empty())
      throw ConfigError("eval " + task + ": --ref is required");
  } else if (task == "thomson") {
    if (o.per_shell <= 0 || o.radii.empty())
      throw ConfigError("eval thomson: --per-shell and --radii are required");
  } else if (task != "dla" && task != "minsurf") {
    throw ConfigError("unknown eval task '" + task + "'");
  }

  const io::ParticleSet gen = io::read_particles(o.gen);
  metrics::MetricReport report;
  report.task = task;

  if (task == "bluenoise") {
    const io::ParticleSet ref = io::read_particles(o.ref);
    check_task_tag(gen, io::Task::bluenoise, "--gen");
    check_task_tag(ref, io::Task::bluenoise, "--ref");
    const auto pg = metrics::radial_power_spectrum(gen.configs, o.freq_bins);
    const auto pr = metrics::radial_power_spectrum(ref.configs, o.freq_bins);
    const auto cmp = metrics::spectrum_compare(pg, pr);
    report.scalars = {{"pearson", cmp.pearson}, {"rel_l2", cmp.rel_l2}};
    if (gen.samples() >= 2 && ref.samples() >= 2)
      report.scalars.push_back(
          {"one_nna_chamfer",
           metrics::one_nna(gen.configs, ref.configs,
                            metrics::SetDistance::chamfer)});
    report.profiles = {{"gen", pg}, {"ref", pr}};
  } else if (task == "dla") {
    check_task_tag(gen, io::Task::dla, "--gen");
    std::vector<double> dfs, r2s;
    int failures = 0;
    for (const Mat& cluster : gen.configs) {
      try {
        const auto fit = metrics::fractal_dimension(cluster);
        dfs.push_back(fit.d_f);
        r2s.push_back(fit.fit_r2);
      } catch (const DomainError&) {
        ++failures;
        warn("eval dla: fractal fit failed on one sample");
      }
    }
    if (dfs.empty()) throw DomainError("eval dla: every fractal fit failed");
    report.scalars = {{"d_f_median", median_of(dfs)},
                      {"fit_r2_median", median_of(r2s)},
                      {"fit_failures", static_cast<double>(failures)}};
  } else if (task == "thomson") {
    check_task_tag(gen, io::Task::thomson, "--gen");
    std::vector<int> shell_of(static_cast<size_t>(gen.n));
    for (int i = 0; i < gen.n; ++i) shell_of[static_cast<size_t>(i)] = i / o.per_shell;
    std::vector<double> cvs, ftans;
    int invalid = 0;
    for (const Mat& config : gen.configs) {
      const auto m = metrics::thomson_metrics(config, shell_of, o.radii);
      if (!m.valid) {
        ++invalid;
        continue;
      }
      cvs.push_back(m.cv_avg);
      ftans.push_back(m.ftan_rms);
    }
    if (cvs.empty()) throw DomainError("eval thomson: no valid samples");
    report.scalars = {{"cv_avg_median", median_of(cvs)},
                      {"ftan_rms_median", median_of(ftans)},
                      {"invalid_samples", static_cast<double>(invalid)}};
  } else if (task == "minsurf") {
    check_task_tag(gen, io::Task::minsurf, "--gen");
    std::vector<double> areas, angles, cvs;
    int invalid = 0;
    for (int s = 0; s < gen.samples(); ++s) {
      const Mat& boundary = gen.configs[static_cast<size_t>(s)];
      Mat anchors(0, gen.d);
      if (gen.a >= 1) {
        std::vector<int> rows;
        for (int r = 0; r < gen.n; ++r)
          if (gen.attrs[static_cast<size_t>(s)](r, 0) > 0.5) rows.push_back(r);
        anchors.resize(static_cast<int>(rows.size()), gen.d);
        for (size_t k = 0; k < rows.size(); ++k)
          anchors.row(static_cast<int>(k)) = boundary.row(rows[k]);
      }
      const auto m = metrics::min_surface_metrics(boundary, anchors,
                                                  o.area_fraction, 1.0);
      if (!m.valid) {
        ++invalid;
        continue;
      }
      areas.push_back(m.area_err);
      angles.push_back(m.angle_smoothness);
      cvs.push_back(m.uniformity_cv);
    }
    if (areas.empty()) throw DomainError("eval minsurf: no valid samples");
    report.scalars = {{"area_err", median_of(areas)},
                      {"angle_smoothness", median_of(angles)},
                      {"uniformity_cv", median_of(cvs)},
                      {"invalid_samples", static_cast<double>(invalid)}};
  } else if (task == "normals") {
    const io::ParticleSet ref = io::read_particles(o.ref);
    if (gen.a < gen.d)
      throw ConfigError("eval normals: --gen carries no normal attributes");
    if (ref.a < o.normal_channel + ref.d)
      throw ConfigError("eval normals: --ref normal channels out of range");
    const Mat gt_pos = ref.configs[0];
    const Mat gt_normals =
        ref.attrs[0].middleCols(o.normal_channel, ref.d);
    std::vector<double> cosines, medians;
    double zero_rows = 0.0, total_rows = 0.0;
    for (int s = 0; s < gen.samples(); ++s) {
      const Mat& pos = gen.configs[static_cast<size_t>(s)];
      const Mat nrm = gen.attrs[static_cast<size_t>(s)].leftCols(gen.d);
      std::vector<int> keep;
      for (int r = 0; r < gen.n; ++r) {
        total_rows += 1.0;
        if (nrm.row(r).norm() > 0.5)
          keep.push_back(r);
        else
          zero_rows += 1.0;
      }
      if (keep.empty()) continue;
      Mat kp(static_cast<int>(keep.size()), gen.d),
          kn(static_cast<int>(keep.size()), gen.d);
      for (size_t k = 0; k < keep.size(); ++k) {
        kp.row(static_cast<int>(k)) = pos.row(keep[k]);
        kn.row(static_cast<int>(k)) = nrm.row(keep[k]);
      }
      const auto st = metrics::normal_stats(kp, kn, gt_pos, gt_normals);
      cosines.push_back(st.mean_cos);
      medians.push_back(st.median_unoriented_deg);
    }
    if (cosines.empty())
      throw DomainError("eval normals: no nonzero predicted normals");
    report.scalars = {{"mean_cos_median", median_of(cosines)},
                      {"unoriented_deg_median", median_of(medians)},
                      {"zero_normal_frac",
                       total_rows > 0.0 ? zero_rows / total_rows : 0.0}};
  } else {
    throw ConfigError("unknown eval task '" + task + "'");
  }

  print_warnings();
  ensure_parent_dir(o.out);
  std::string body = report.to_json();
  if (body.empty() || body.back() != '\n') body += '\n';
  write_text(o.out, body);
  man.j["config"] = {{"task", task},
                     {"freq_bins", o.freq_bins},
                     {"per_shell", o.per_shell},
                     {"radii", o.radii},
                     {"area_fraction", o.area_fraction},
                     {"normal_channel", o.normal_channel}};
  man.j["inputs"] = o.ref.empty() ? json::array({o.gen})
                                  : json::array({o.gen, o.ref});
  man.j["outputs"] = {o.out};
  man.write(o.out);
  std::fprintf(stderr, "wrote %s\n", o.out.c_str());
}

struct AnalyzeOpts {
  std::string data, out;
  // midtime
  std::vector<std::string> regimes = {"all"};
  int pairs = 200000;
  int anchors = 2000;
  int k = 32;
  int bins = 10;
  double t = 0.5;
  // cov
  std::vector<double> t_grid;
  int mc = 20000;
  int cov_anchors = 100;
  double radius_frac = 0.05;
  // shared
  std::string prior = "uniform_box";
  double prior_scale = 0.5;
  std::string canon_token = "hilbert";
  int canon_bits = 16;
  bool canon_pose = false;
  std::uint64_t seed = 0;
  int threads = 0;
};

std::vector<flow::CanonSide> parse_regimes(const std::vector<std::string>& toks) {
  std::vector<flow::CanonSide> out;
  for (const auto& tok : toks) {
    if (tok == "all") {
      out = {flow::CanonSide::none, flow::CanonSide::x0_only,
             flow::CanonSide::x1_only, flow::CanonSide::both};
      return out;
    }
    out.push_back(parse_canon_side(tok));
  }
  return out;
}

void run_analyze_midtime(const AnalyzeOpts& o, Manifest& man) {
  const io::ParticleSet data = io::read_particles(o.data);
  analysis::MidtimeConfig cfg;
  cfg.m_pairs = o.pairs;
  cfg.n_anchors = o.anchors;
  cfg.k_neighbors = o.k;
  cfg.n_bins = o.bins;
  cfg.t = o.t;
  cfg.prior = flow::prior_from_name(o.prior);
  cfg.prior_scale = o.prior_scale;
  apply_canon_token(o.canon_token, cfg.canon);
  cfg.canon.bits = o.canon_bits;
  cfg.canon.pose_normalize = o.canon_pose;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  const auto regimes = parse_regimes(o.regimes);

  json regime_names = json::array();
  for (auto r : regimes) regime_names.push_back(flow::canon_side_name(r));
  man.j["config"] = {{"m_pairs", cfg.m_pairs},
                     {"n_anchors", cfg.n_anchors},
                     {"k_neighbors", cfg.k_neighbors},
                     {"n_bins", cfg.n_bins},
                     {"t", cfg.t},
                     {"prior", flow::prior_name(cfg.prior)},
                     {"prior_scale", cfg.prior_scale},
                     {"canon", canon_json(cfg.canon)},
                     {"regimes", regime_names},
                     {"seed", cfg.seed},
                     {"threads", cfg.threads}};
  man.j["inputs"] = {o.data};
  man.j["seed"] = o.seed;

  const auto studies = analysis::midtime_study(data, regimes, cfg);
  print_warnings();
  ensure_parent_dir(o.out);
  write_text(o.out, analysis::regime_study_csv(studies));
  // One CSV per regime alongside the combined file.
  std::vector<std::string> outputs = {o.out};
  const std::filesystem::path base(o.out);
  for (const auto& study : studies) {
    auto per = base.parent_path() /
               (base.stem().string() + "_" +
                flow::canon_side_name(study.regime) + base.extension().string());
    write_text(per.string(), analysis::regime_study_csv({study}));
    outputs.push_back(per.string());
  }
  man.j["outputs"] = outputs;
  man.write(o.out);
  std::fprintf(stderr, "wrote %s (+%zu per-regime files)\n", o.out.c_str(),
               studies.size());
}

void run_analyze_cov(const AnalyzeOpts& o, Manifest& man) {
  const io::ParticleSet data = io::read_particles(o.data);
  analysis::CondCovConfig cfg;
  if (!o.t_grid.empty()) cfg.t_grid = o.t_grid;
  cfg.n_mc = o.mc;
  cfg.n_anchors = o.cov_anchors;
  cfg.ball_radius_frac = o.radius_frac;
  cfg.prior = flow::prior_from_name(o.prior);
  cfg.prior_scale = o.prior_scale;
  apply_canon_token(o.canon_token, cfg.canon);
  cfg.canon.bits = o.canon_bits;
  cfg.canon.pose_normalize = o.canon_pose;
  cfg.seed = o.seed;
  cfg.threads = o.threads;

  man.j["config"] = {{"t_grid", cfg.t_grid},
                     {"n_mc", cfg.n_mc},
                     {"n_anchors", cfg.n_anchors},
                     {"ball_radius_frac", cfg.ball_radius_frac},
                     {"prior", flow::prior_name(cfg.prior)},
                     {"prior_scale", cfg.prior_scale},
                     {"canon", canon_json(cfg.canon)},
                     {"seed", cfg.seed},
                     {"threads", cfg.threads}};
  man.j["inputs"] = {o.data};
  man.j["seed"] = o.seed;

  const auto points = analysis::cond_cov_study(data, cfg);
  print_warnings();
  ensure_parent_dir(o.out);
  write_text(o.out, analysis::cond_cov_csv(points));
  man.j["outputs"] = {o.out};
  man.write(o.out);
  std::fprintf(stderr, "wrote %s\n", o.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> raw_argv(argv, argv + argc);

  CLI::App app{"ogpp: particle flow-matching laboratory"};
  app.set_version_flag("--version", kVersion);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = OGPP_THREADS or 1); 1 is bit-exact")
      ->capture_default_str();

  // ------------------------------------------------------------------- gen
  GenOpts g;
  auto* cmd_gen = app.add_subcommand("gen", "generate a particle dataset");
  cmd_gen->require_subcommand(1);
  std::string gen_task;
  auto add_gen_common = [&](CLI::App* sub) {
    sub->add_option("--samples", g.samples, "number of configurations")
        ->capture_default_str();
    sub->add_option("--seed", g.seed, "RNG seed")->capture_default_str();
    sub->add_option("--out", g.out, "output particle file")->required();
  };
  auto* gen_bn = cmd_gen->add_subcommand("bluenoise", "blue-noise point sets");
  gen_bn->add_option("--n", g.bn_n, "points per set")->capture_default_str();
  gen_bn->add_option("--sigma-factor", g.bn_sigma_factor, "kernel width factor")
      ->capture_default_str();
  gen_bn->add_option("--step", g.bn_step, "initial descent step")
      ->capture_default_str();
  gen_bn->add_option("--iters", g.bn_iters, "descent iterations")
      ->capture_default_str();
  add_gen_common(gen_bn);
  gen_bn->callback([&] { gen_task = "bluenoise"; });

  auto* gen_dla = cmd_gen->add_subcommand("dla", "diffusion-limited clusters");
  gen_dla->add_option("--n", g.dla_n, "particles per cluster")
      ->capture_default_str();
  gen_dla->add_option("--grid", g.dla_grid, "lattice size")
      ->capture_default_str();
  add_gen_common(gen_dla);
  gen_dla->callback([&] { gen_task = "dla"; });

  auto* gen_th = cmd_gen->add_subcommand("thomson", "Thomson shell configs");
  gen_th->add_option("--shells", g.th_shells, "number of shells")
      ->capture_default_str();
  gen_th->add_option("--per-shell", g.th_per_shell, "particles per shell")
      ->capture_default_str();
  gen_th->add_option("--radii", g.th_radii, "shell radii")->delimiter(',');
  gen_th->add_option("--spring-k", g.th_spring_k, "radial spring constant")
      ->capture_default_str();
  gen_th->add_option("--lr", g.th_lr, "initial step size")
      ->capture_default_str();
  gen_th->add_option("--iters", g.th_iters, "max iterations")
      ->capture_default_str();
  gen_th->add_option("--tol", g.th_tol, "tangential force tolerance")
      ->capture_default_str();
  add_gen_common(gen_th);
  gen_th->callback([&] { gen_task = "thomson"; });

  auto* gen_ms = cmd_gen->add_subcommand("minsurf", "minimal-surface rings");
  gen_ms->add_option("--n", g.ms_n, "boundary points")->capture_default_str();
  gen_ms->add_option("--anchors", g.ms_anchors, "number of anchors")
      ->capture_default_str();
  gen_ms->add_option("--area-fraction", g.ms_area_fraction,
                     "target enclosed area fraction")
      ->capture_default_str();
  gen_ms->add_option("--iters", g.ms_iters, "descent iterations")
      ->capture_default_str();
  gen_ms->add_option("--fixed-anchor-params", g.ms_fixed_anchor_params,
                     "boundary parameters in [0,4), one per anchor")
      ->delimiter(',');
  gen_ms->add_flag("--dihedral-shuffle", g.ms_dihedral_shuffle,
                   "emit random dihedral relabelings");
  add_gen_common(gen_ms);
  gen_ms->callback([&] { gen_task = "minsurf"; });

  // ----------------------------------------------------------------- train
  TrainOpts t;
  auto* cmd_train = app.add_subcommand("train", "train a velocity network");
  cmd_train->add_option("--data", t.data, "training particle file")->required();
  cmd_train->add_option("--out", t.out, "output checkpoint file")->required();
  cmd_train->add_option("--path", t.path_token,
                        "path spec: linear|toroidal|hermite|cubic with "
                        "optional -ntv|-atv|-atv-opt suffix")
      ->capture_default_str();
  cmd_train->add_option("--lambda", t.lambda, "ATV bend penalty")
      ->capture_default_str();
  cmd_train->add_option("--n0-mode", t.n0_mode, "cubic initial tangent (zero|chord)")
      ->capture_default_str();
  cmd_train->add_option("--alpha-lo", t.alpha_lo, "ATV-optimal search lower bound")
      ->capture_default_str();
  cmd_train->add_option("--alpha-hi", t.alpha_hi, "ATV-optimal search upper bound")
      ->capture_default_str();
  cmd_train->add_option("--canon", t.canon_token,
                        "canonicalization curve, e.g. none|hilbert|hilbert6d")
      ->capture_default_str();
  cmd_train->add_option("--canon-bits", t.canon_bits, "quantization bits")
      ->capture_default_str();
  cmd_train->add_flag("--canon-pose", t.canon_pose, "PCA pose normalization");
  cmd_train->add_option("--canon-side", t.canon_side,
                        "which endpoints to canonicalize (none|x0|x1|both)")
      ->capture_default_str();
  cmd_train->add_option("--coupling", t.coupling,
                        "noise-data coupling (independent|ot)")
      ->capture_default_str();
  cmd_train->add_option("--prior", t.prior, "noise prior")
      ->capture_default_str();
  cmd_train->add_option("--prior-scale", t.prior_scale,
                        "scaled-gaussian standard deviation")
      ->capture_default_str();
  cmd_train->add_option("--normal-source", t.normal_source,
                        "terminal normal source (none|attrs|ring)")
      ->capture_default_str();
  cmd_train->add_option("--normal-channel", t.normal_channel,
                        "first attribute column holding normals")
      ->capture_default_str();
  cmd_train->add_flag("--cond-from-anchors", t.cond_from_anchors,
                      "feed anchor rows as condition tokens");
  cmd_train->add_option("--batch-size", t.batch_size, "configurations per step")
      ->capture_default_str();
  cmd_train->add_option("--steps", t.steps, "optimization steps")
      ->capture_default_str();
  cmd_train->add_option("--seed", t.seed, "RNG seed")->capture_default_str();
  cmd_train->add_option("--print-every", t.print_every,
                        "progress period (0 = silent)")
      ->capture_default_str();
  cmd_train->add_option("--lr", t.lr, "Adam learning rate")
      ->capture_default_str();
  cmd_train->add_option("--beta1", t.beta1, "Adam beta1")->capture_default_str();
  cmd_train->add_option("--beta2", t.beta2, "Adam beta2")->capture_default_str();
  cmd_train->add_option("--eps", t.eps, "Adam epsilon")->capture_default_str();
  cmd_train->add_option("--d-emb", t.d_emb, "embedding width")
      ->capture_default_str();
  cmd_train->add_option("--layers", t.layers, "transformer blocks")
      ->capture_default_str();
  cmd_train->add_option("--heads", t.heads, "attention heads")
      ->capture_default_str();
  cmd_train->add_option("--d-mlp", t.d_mlp, "MLP hidden width")
      ->capture_default_str();
  cmd_train->add_option("--dtype", t.dtype, "parameter dtype (f32|f64)")
      ->capture_default_str();

  // ---------------------------------------------------------------- sample
  SampleOpts s;
  auto* cmd_sample = app.add_subcommand("sample", "sample from a checkpoint");
  cmd_sample->add_option("--ckpt", s.ckpt, "checkpoint file")->required();
  cmd_sample->add_option("--out", s.out, "output particle file")->required();
  cmd_sample->add_option("--steps", s.steps, "Euler steps K")
      ->capture_default_str();
  cmd_sample->add_option("--samples", s.samples, "configurations to draw")
      ->capture_default_str();
  cmd_sample->add_option("--seed", s.seed, "RNG seed")->capture_default_str();
  cmd_sample->add_option("--prior", s.prior,
                         "override the checkpoint's noise prior");
  cmd_sample->add_option("--prior-scale", s.prior_scale,
                         "override the checkpoint's prior scale");

  // ------------------------------------------------------------------ eval
  EvalOpts e;
  std::string eval_task;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate generated particles");
  cmd_eval
      ->add_option("task", eval_task,
                   "bluenoise|dla|thomson|minsurf|normals")
      ->required();
  cmd_eval->add_option("--gen", e.gen, "generated particle file")->required();
  cmd_eval->add_option("--ref", e.ref, "reference particle file");
  cmd_eval->add_option("--out", e.out, "output report JSON")->required();
  cmd_eval->add_option("--freq-bins", e.freq_bins, "spectrum radial bins")
      ->capture_default_str();
  cmd_eval->add_option("--per-shell", e.per_shell,
                       "particles per shell (thomson)");
  cmd_eval->add_option("--radii", e.radii, "shell radii (thomson)")
      ->delimiter(',');
  cmd_eval->add_option("--area-fraction", e.area_fraction,
                       "target area fraction (minsurf)")
      ->capture_default_str();
  cmd_eval->add_option("--normal-channel", e.normal_channel,
                       "reference normal channel (normals)")
      ->capture_default_str();

  // --------------------------------------------------------------- analyze
  AnalyzeOpts a;
  auto* cmd_analyze = app.add_subcommand("analyze", "flow-geometry studies");
  cmd_analyze->require_subcommand(1);
  std::string analyze_kind;
  auto add_analyze_common = [&](CLI::App* sub) {
    sub->add_option("--data", a.data, "data particle file")->required();
    sub->add_option("--out", a.out, "output CSV")->required();
    sub->add_option("--prior", a.prior, "noise prior")->capture_default_str();
    sub->add_option("--prior-scale", a.prior_scale, "prior scale")
        ->capture_default_str();
    sub->add_option("--canon", a.canon_token, "canonicalization curve")
        ->capture_default_str();
    sub->add_option("--canon-bits", a.canon_bits, "quantization bits")
        ->capture_default_str();
    sub->add_flag("--canon-pose", a.canon_pose, "PCA pose normalization");
    sub->add_option("--seed", a.seed, "RNG seed")->capture_default_str();
  };
  auto* an_mid = cmd_analyze->add_subcommand(
      "midtime", "regime study of edge statistics at one time");
  an_mid->add_option("--regimes", a.regimes,
                     "all or a list from none,x0,x1,both")
      ->delimiter(',');
  an_mid->add_option("--pairs", a.pairs, "interpolant pool size")
      ->capture_default_str();
  an_mid->add_option("--anchors", a.anchors, "k-NN anchors")
      ->capture_default_str();
  an_mid->add_option("--k", a.k, "neighbors per anchor")->capture_default_str();
  an_mid->add_option("--bins", a.bins, "distance bins")->capture_default_str();
  an_mid->add_option("--t", a.t, "interpolation time")->capture_default_str();
  add_analyze_common(an_mid);
  an_mid->callback([&] { analyze_kind = "midtime"; });

  auto* an_cov = cmd_analyze->add_subcommand(
      "cov", "conditional covariance of the regression target over t");
  an_cov->add_option("--t-grid", a.t_grid, "times to evaluate")->delimiter(',');
  an_cov->add_option("--mc", a.mc, "Monte-Carlo pool per time")
      ->capture_default_str();
  an_cov->add_option("--anchors", a.cov_anchors, "conditioning anchors")
      ->capture_default_str();
  an_cov->add_option("--radius-frac", a.radius_frac,
                     "ball radius as a bounding-box-diagonal fraction")
      ->capture_default_str();
  add_analyze_common(an_cov);
  an_cov->callback([&] { analyze_kind = "cov"; });

  app.require_subcommand(1);

  // Let global flags (--threads) appear after the subcommand tokens.
  std::function<void(CLI::App*)> enable_fallthrough = [&](CLI::App* cmd) {
    for (auto* child : cmd->get_subcommands([](CLI::App*) { return true; })) {
      child->fallthrough();
      enable_fallthrough(child);
    }
  };
  enable_fallthrough(&app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;  // help/version exit 0; parse errors are usage
  }

  try {
    // An explicit --threads propagates to every module via the environment;
    // module configs that take a thread count get it directly as well.
    if (threads > 0) {
      setenv("OGPP_THREADS", std::to_string(threads).c_str(), 1);
      s.threads = threads;
      a.threads = threads;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "gen") {
      Manifest man("gen " + gen_task, raw_argv);
      man.j["threads"] = threads > 0 ? threads : default_threads();
      run_gen(gen_task, g, man);
    } else if (sub == "train") {
      Manifest man("train", raw_argv);
      man.j["threads"] = threads > 0 ? threads : default_threads();
      run_train(t, man);
    } else if (sub == "sample") {
      Manifest man("sample", raw_argv);
      man.j["threads"] = threads > 0 ? threads : default_threads();
      run_sample(s, man);
    } else if (sub == "eval") {
      Manifest man("eval " + eval_task, raw_argv);
      man.j["threads"] = threads > 0 ? threads : default_threads();
      run_eval(eval_task, e, man);
    } else if (sub == "analyze") {
      Manifest man("analyze " + analyze_kind, raw_argv);
      man.j["threads"] = threads > 0 ? threads : default_threads();
      if (analyze_kind == "midtime")
        run_analyze_midtime(a, man);
      else
        run_analyze_cov(a, man);
    }
  } catch (const ConfigError& err) {
    print_warnings();
    std::fprintf(stderr, "config error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    print_warnings();
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 0;
}
