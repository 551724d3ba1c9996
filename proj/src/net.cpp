// Transformer velocity network with in-repo reverse-mode differentiation.

#include "ogpp/net.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

namespace ogpp::net {

void NetConfig::validate() const {
  if (d_in < 1 || d_emb < 2 || n_layers < 1 || n_heads < 1 || d_mlp < 1 ||
      n_particles < 1 || n_cond < 0)
    throw ConfigError("net config: sizes must be positive");
  if (d_emb % n_heads != 0)
    throw ConfigError("net config: d_emb must be divisible by n_heads");
  if (d_emb % 2 != 0)
    throw ConfigError("net config: d_emb must be even (sin/cos pairs)");
  if (param_dtype != "f32" && param_dtype != "f64")
    throw ConfigError("net config: param_dtype must be f32 or f64");
}

namespace detail {

template <typename S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct LayerT {
  MatS<S> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  MatS<S> ln2_g, ln2_b, w1, b1, w2, b2;
};

template <typename S>
struct ParamsT {
  MatS<S> w_in, index_table, cond_table;
  std::vector<LayerT<S>> layers;
  MatS<S> lnf_g, lnf_b, w_out, b_out;
};

}  // namespace detail

using detail::LayerT;
using detail::MatS;
using detail::ParamsT;

namespace {

constexpr double kLnEps = 1e-5;

// Fixed parameter enumeration order; gradients, Adam moments, checkpoint
// blobs, and initialization all follow it.
template <typename S, typename Fn>
void for_each_param(ParamsT<S>& p, Fn&& fn) {
  fn("w_in", p.w_in);
  fn("index_table", p.index_table);
  fn("cond_table", p.cond_table);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerT<S>& L = p.layers[l];
    fn(pre + "ln1_g", L.ln1_g);
    fn(pre + "ln1_b", L.ln1_b);
    fn(pre + "wq", L.wq);
    fn(pre + "bq", L.bq);
    fn(pre + "wk", L.wk);
    fn(pre + "bk", L.bk);
    fn(pre + "wv", L.wv);
    fn(pre + "bv", L.bv);
    fn(pre + "wo", L.wo);
    fn(pre + "bo", L.bo);
    fn(pre + "ln2_g", L.ln2_g);
    fn(pre + "ln2_b", L.ln2_b);
    fn(pre + "w1", L.w1);
    fn(pre + "b1", L.b1);
    fn(pre + "w2", L.w2);
    fn(pre + "b2", L.b2);
  }
  fn("lnf_g", p.lnf_g);
  fn("lnf_b", p.lnf_b);
  fn("w_out", p.w_out);
  fn("b_out", p.b_out);
}

template <typename S, typename Fn>
void for_each_param(const ParamsT<S>& p, Fn&& fn) {
  for_each_param(const_cast<ParamsT<S>&>(p),
                 [&](const std::string& name, MatS<S>& m) {
                   fn(name, static_cast<const MatS<S>&>(m));
                 });
}

template <typename S>
ParamsT<S> allocate_params(const NetConfig& cfg) {
  ParamsT<S> p;
  const int d = cfg.d_emb;
  p.w_in.setZero(cfg.d_in, d);
  p.index_table.setZero(cfg.n_particles, d);
  p.cond_table.setZero(cfg.n_cond, d);
  p.layers.resize(static_cast<size_t>(cfg.n_layers));
  for (auto& L : p.layers) {
    L.ln1_g.setZero(1, d);
    L.ln1_b.setZero(1, d);
    L.wq.setZero(d, d);
    L.bq.setZero(1, d);
    L.wk.setZero(d, d);
    L.bk.setZero(1, d);
    L.wv.setZero(d, d);
    L.bv.setZero(1, d);
    L.wo.setZero(d, d);
    L.bo.setZero(1, d);
    L.ln2_g.setZero(1, d);
    L.ln2_b.setZero(1, d);
    L.w1.setZero(d, cfg.d_mlp);
    L.b1.setZero(1, cfg.d_mlp);
    L.w2.setZero(cfg.d_mlp, d);
    L.b2.setZero(1, d);
  }
  p.lnf_g.setZero(1, d);
  p.lnf_b.setZero(1, d);
  p.w_out.setZero(d, cfg.d_out());
  p.b_out.setZero(1, cfg.d_out());
  return p;
}

// Initialization class of a parameter, decided from its name.
enum class InitKind { trunc_normal, zero, one };

InitKind init_kind(const std::string& name) {
  const auto leaf_pos = name.rfind('.');
  const std::string leaf =
      leaf_pos == std::string::npos ? name : name.substr(leaf_pos + 1);
  if (leaf == "w_out" || leaf == "b_out") return InitKind::zero;
  if (leaf == "ln1_g" || leaf == "ln2_g" || leaf == "lnf_g")
    return InitKind::one;
  if (leaf == "ln1_b" || leaf == "ln2_b" || leaf == "lnf_b")
    return InitKind::zero;
  if (leaf == "bq" || leaf == "bk" || leaf == "bv" || leaf == "bo" ||
      leaf == "b1" || leaf == "b2")
    return InitKind::zero;
  return InitKind::trunc_normal;  // w_in, tables, attention and MLP weights
}

// --- layer norm --------------------------------------------------------------

template <typename S>
MatS<S> ln_forward(const MatS<S>& x, const MatS<S>& g, const MatS<S>& b,
                   Eigen::Array<S, Eigen::Dynamic, 1>* invstd_out,
                   MatS<S>* xhat_out) {
  const int rows = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  MatS<S> y(rows, d);
  if (invstd_out) invstd_out->resize(rows);
  if (xhat_out) xhat_out->resize(rows, d);
  for (int i = 0; i < rows; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().sum() / S(d);
    const S inv = S(1) / std::sqrt(var + S(kLnEps));
    Eigen::Array<S, 1, Eigen::Dynamic> xhat = (x.row(i).array() - mu) * inv;
    if (invstd_out) (*invstd_out)(i) = inv;
    if (xhat_out) xhat_out->row(i) = xhat.matrix();
    y.row(i) = (xhat * g.row(0).array() + b.row(0).array()).matrix();
  }
  return y;
}

// Backward through y = xhat .* g + b given upstream dy; adds parameter
// gradients and returns the gradient with respect to the pre-norm input.
template <typename S>
MatS<S> ln_backward(const MatS<S>& dy, const MatS<S>& xhat,
                    const Eigen::Array<S, Eigen::Dynamic, 1>& invstd,
                    const MatS<S>& g, MatS<S>& dg, MatS<S>& db) {
  const int rows = static_cast<int>(dy.rows());
  const int d = static_cast<int>(dy.cols());
  dg += (dy.array() * xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  MatS<S> dx(rows, d);
  for (int i = 0; i < rows; ++i) {
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
        dy.row(i).array() * g.row(0).array();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat * xhat.row(i).array()).mean();
    dx.row(i) =
        ((dxhat - m1 - xhat.row(i).array() * m2) * invstd(i)).matrix();
  }
  return dx;
}

// --- GELU --------------------------------------------------------------------

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.39894228040143268);
  return cdf + x * pdf;
}

// --- tape and forward --------------------------------------------------------

template <typename S>
struct BlockTape {
  MatS<S> h_in;                                // block input
  Eigen::Array<S, Eigen::Dynamic, 1> inv1;     // ln1 inverse std per token
  MatS<S> xhat1;                               // ln1 normalized input
  MatS<S> q, k, v;                             // projections (all heads)
  std::vector<MatS<S>> probs;                  // attention rows per head
  MatS<S> concat;                              // head outputs, pre-W_o
  MatS<S> h_mid;                               // after attention residual
  Eigen::Array<S, Eigen::Dynamic, 1> inv2;
  MatS<S> xhat2;
  MatS<S> z1;                                  // MLP pre-activation
  MatS<S> g1;                                  // gelu(z1)
};

// Recorded operation graph: everything backward needs to produce exact
// reverse-mode gradients for every parameter.
template <typename S>
struct GradientTape {
  MatS<S> x, cond;
  std::vector<BlockTape<S>> blocks;
  MatS<S> h_final;                             // input to the final norm
  Eigen::Array<S, Eigen::Dynamic, 1> invf;
  MatS<S> xhatf;
};

Vec time_embedding_impl(int d_emb, double t) {
  const int half = d_emb / 2;
  Vec phi(d_emb);
  for (int k = 0; k < half; ++k) {
    const double lambda =
        half > 1 ? std::pow(1e-4, double(k) / double(half - 1)) : 1.0;
    phi(2 * k) = std::sin(t / lambda);
    phi(2 * k + 1) = std::cos(t / lambda);
  }
  return phi;
}

template <typename S>
MatS<S> forward_one(const NetConfig& cfg, const ParamsT<S>& p,
                    const MatS<S>& x, double t, const MatS<S>& cond,
                    GradientTape<S>* tape) {
  const int n = cfg.n_particles;
  const int m = static_cast<int>(cond.rows());
  const int big_t = n + m;
  const int d = cfg.d_emb;
  const int dh = d / cfg.n_heads;
  const S scale = S(1) / std::sqrt(S(dh));

  const Vec phi64 = time_embedding_impl(d, t);

  MatS<S> h(big_t, d);
  h.topRows(n) = x * p.w_in + p.index_table;
  if (m > 0) h.bottomRows(m) = cond * p.w_in + p.cond_table.topRows(m);
  for (int j = 0; j < d; ++j) h.col(j).array() += S(phi64(j));

  if (tape) {
    tape->x = x;
    tape->cond = cond;
    tape->blocks.resize(p.layers.size());
  }

  for (size_t l = 0; l < p.layers.size(); ++l) {
    const LayerT<S>& L = p.layers[l];
    BlockTape<S>* bt = tape ? &tape->blocks[l] : nullptr;
    if (bt) bt->h_in = h;

    Eigen::Array<S, Eigen::Dynamic, 1> inv1;
    MatS<S> xhat1;
    const MatS<S> a = ln_forward(h, L.ln1_g, L.ln1_b, &inv1, &xhat1);
    MatS<S> q = a * L.wq;
    q.rowwise() += L.bq.row(0);
    MatS<S> k = a * L.wk;
    k.rowwise() += L.bk.row(0);
    MatS<S> v = a * L.wv;
    v.rowwise() += L.bv.row(0);

    MatS<S> concat(big_t, d);
    std::vector<MatS<S>> probs(static_cast<size_t>(cfg.n_heads));
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const auto qh = q.middleCols(hd * dh, dh);
      const auto kh = k.middleCols(hd * dh, dh);
      const auto vh = v.middleCols(hd * dh, dh);
      MatS<S> scores = qh * kh.transpose() * scale;
      for (int i = 0; i < big_t; ++i) {
        const S mx = scores.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> e =
            (scores.row(i).array() - mx).exp();
        scores.row(i) = (e / e.sum()).matrix();
      }
      concat.middleCols(hd * dh, dh) = scores * vh;
      probs[static_cast<size_t>(hd)] = std::move(scores);
    }
    MatS<S> attn = concat * L.wo;
    attn.rowwise() += L.bo.row(0);
    h += attn;

    if (bt) {
      bt->inv1 = std::move(inv1);
      bt->xhat1 = std::move(xhat1);
      bt->q = std::move(q);
      bt->k = std::move(k);
      bt->v = std::move(v);
      bt->probs = std::move(probs);
      bt->concat = concat;
      bt->h_mid = h;
    }

    Eigen::Array<S, Eigen::Dynamic, 1> inv2;
    MatS<S> xhat2;
    const MatS<S> b = ln_forward(h, L.ln2_g, L.ln2_b, &inv2, &xhat2);
    MatS<S> z1 = b * L.w1;
    z1.rowwise() += L.b1.row(0);
    MatS<S> g1 = z1.unaryExpr([](S u) { return gelu(u); });
    MatS<S> mlp = g1 * L.w2;
    mlp.rowwise() += L.b2.row(0);
    h += mlp;

    if (bt) {
      bt->inv2 = std::move(inv2);
      bt->xhat2 = std::move(xhat2);
      bt->z1 = std::move(z1);
      bt->g1 = std::move(g1);
    }
  }

  Eigen::Array<S, Eigen::Dynamic, 1> invf;
  MatS<S> xhatf;
  if (tape) tape->h_final = h;
  const MatS<S> f = ln_forward(h, p.lnf_g, p.lnf_b, &invf, &xhatf);
  if (tape) {
    tape->invf = std::move(invf);
    tape->xhatf = std::move(xhatf);
  }

  MatS<S> y = f.topRows(n) * p.w_out;
  y.rowwise() += p.b_out.row(0);
  return y;
}

// Accumulates parameter gradients for one batch element; dy is the upstream
// gradient at the network output.
template <typename S>
void backward_one(const NetConfig& cfg, const ParamsT<S>& p,
                  const GradientTape<S>& tape, const MatS<S>& dy,
                  ParamsT<S>& g) {
  const int n = cfg.n_particles;
  const int big_t = static_cast<int>(tape.h_final.rows());
  const int m = big_t - n;
  const int d = cfg.d_emb;
  const int dh = d / cfg.n_heads;
  const S scale = S(1) / std::sqrt(S(dh));

  // Output head; condition tokens are excluded from it, so their final-norm
  // gradient is zero.
  MatS<S> f_top(n, d);
  for (int i = 0; i < n; ++i)
    f_top.row(i) = (tape.xhatf.row(i).array() * p.lnf_g.row(0).array() +
                    p.lnf_b.row(0).array())
                       .matrix();
  g.w_out += f_top.transpose() * dy;
  g.b_out += dy.colwise().sum();
  MatS<S> df = MatS<S>::Zero(big_t, d);
  df.topRows(n) = dy * p.w_out.transpose();

  MatS<S> dh_stream =
      ln_backward(df, tape.xhatf, tape.invf, p.lnf_g, g.lnf_g, g.lnf_b);

  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const LayerT<S>& L = p.layers[static_cast<size_t>(l)];
    LayerT<S>& gl = g.layers[static_cast<size_t>(l)];
    const BlockTape<S>& bt = tape.blocks[static_cast<size_t>(l)];

    // MLP half: h_out = h_mid + W2 gelu(W1 ln2(h_mid) + b1) + b2.
    const MatS<S>& dmlp = dh_stream;
    gl.w2 += bt.g1.transpose() * dmlp;
    gl.b2 += dmlp.colwise().sum();
    MatS<S> dg1 = dmlp * L.w2.transpose();
    MatS<S> dz1 =
        (dg1.array() *
         bt.z1.unaryExpr([](S u) { return gelu_grad(u); }).array())
            .matrix();
    MatS<S> bln(big_t, cfg.d_emb);
    for (int i = 0; i < big_t; ++i)
      bln.row(i) = (bt.xhat2.row(i).array() * L.ln2_g.row(0).array() +
                    L.ln2_b.row(0).array())
                       .matrix();
    gl.w1 += bln.transpose() * dz1;
    gl.b1 += dz1.colwise().sum();
    const MatS<S> dbln = dz1 * L.w1.transpose();
    dh_stream +=
        ln_backward(dbln, bt.xhat2, bt.inv2, L.ln2_g, gl.ln2_g, gl.ln2_b);

    // Attention half: h_mid = h_in + W_o concat(heads(ln1(h_in))) + b_o.
    const MatS<S>& dattn = dh_stream;
    gl.wo += bt.concat.transpose() * dattn;
    gl.bo += dattn.colwise().sum();
    const MatS<S> dconcat = dattn * L.wo.transpose();

    MatS<S> dq(big_t, d), dk(big_t, d), dv(big_t, d);
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const auto qh = bt.q.middleCols(hd * dh, dh);
      const auto kh = bt.k.middleCols(hd * dh, dh);
      const auto vh = bt.v.middleCols(hd * dh, dh);
      const MatS<S>& pr = bt.probs[static_cast<size_t>(hd)];
      const auto doh = dconcat.middleCols(hd * dh, dh);
      MatS<S> dp = doh * vh.transpose();
      dv.middleCols(hd * dh, dh) = pr.transpose() * doh;
      // Softmax backward, rowwise.
      MatS<S> ds(big_t, big_t);
      for (int i = 0; i < big_t; ++i) {
        const S dot = (dp.row(i).array() * pr.row(i).array()).sum();
        ds.row(i) = (pr.row(i).array() * (dp.row(i).array() - dot)).matrix();
      }
      dq.middleCols(hd * dh, dh) = ds * kh * scale;
      dk.middleCols(hd * dh, dh) = ds.transpose() * qh * scale;
    }

    MatS<S> a(big_t, d);
    for (int i = 0; i < big_t; ++i)
      a.row(i) = (bt.xhat1.row(i).array() * L.ln1_g.row(0).array() +
                  L.ln1_b.row(0).array())
                     .matrix();
    gl.wq += a.transpose() * dq;
    gl.bq += dq.colwise().sum();
    gl.wk += a.transpose() * dk;
    gl.bk += dk.colwise().sum();
    gl.wv += a.transpose() * dv;
    gl.bv += dv.colwise().sum();
    const MatS<S> da =
        dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
    dh_stream +=
        ln_backward(da, bt.xhat1, bt.inv1, L.ln1_g, gl.ln1_g, gl.ln1_b);
  }

  // Token assembly: h0 = [x; cond] W_in + [index_table; cond_table] + phi(t).
  g.w_in += tape.x.transpose() * dh_stream.topRows(n);
  g.index_table += dh_stream.topRows(n);
  if (m > 0) {
    g.w_in += tape.cond.transpose() * dh_stream.bottomRows(m);
    g.cond_table.topRows(m) += dh_stream.bottomRows(m);
  }
}

// --- scalar dispatch helpers -------------------------------------------------

template <typename S>
MatS<S> to_scalar(const Mat& m) {
  return m.cast<S>();
}

template <typename S>
Mat to_double(const MatS<S>& m) {
  return m.template cast<double>();
}

template <typename Fn>
decltype(auto) dispatch(const VelocityNet& net, Fn&& fn) {
  if (net.p32) return fn(*net.p32);
  if (net.p64) return fn(*net.p64);
  throw ConfigError("net: uninitialized network");
}

template <typename Fn>
decltype(auto) dispatch(VelocityNet& net, Fn&& fn) {
  if (net.p32) return fn(*net.p32);
  if (net.p64) return fn(*net.p64);
  throw ConfigError("net: uninitialized network");
}

void check_forward_shapes(const NetConfig& cfg, const Mat& x,
                          const Mat& cond) {
  if (x.rows() != cfg.n_particles || x.cols() != cfg.d_in)
    throw ConfigError("net forward: x must be n_particles x d_in");
  if (cond.rows() > 0) {
    if (cond.rows() > cfg.n_cond)
      throw ConfigError("net forward: more condition rows than n_cond");
    if (cond.cols() != cfg.d_in)
      throw ConfigError("net forward: condition dims must equal d_in");
  }
}

}  // namespace

// --- VelocityNet lifetime ----------------------------------------------------

VelocityNet::VelocityNet() = default;
VelocityNet::VelocityNet(VelocityNet&&) noexcept = default;
VelocityNet& VelocityNet::operator=(VelocityNet&&) noexcept = default;
VelocityNet::~VelocityNet() = default;

VelocityNet::VelocityNet(const VelocityNet& other) : cfg(other.cfg) {
  if (other.p32) p32 = std::make_unique<detail::ParamsT<float>>(*other.p32);
  if (other.p64) p64 = std::make_unique<detail::ParamsT<double>>(*other.p64);
}

VelocityNet& VelocityNet::operator=(const VelocityNet& other) {
  if (this == &other) return *this;
  cfg = other.cfg;
  p32 = other.p32 ? std::make_unique<detail::ParamsT<float>>(*other.p32)
                  : nullptr;
  p64 = other.p64 ? std::make_unique<detail::ParamsT<double>>(*other.p64)
                  : nullptr;
  return *this;
}

// --- construction ------------------------------------------------------------

VelocityNet make_net(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VelocityNet net;
  net.cfg = cfg;
  Rng rng(seed, 0);
  const auto init = [&](auto& params) {
    using S = std::decay_t<decltype(params.w_in(0, 0))>;
    params = allocate_params<S>(cfg);
    for_each_param(params, [&](const std::string& name, MatS<S>& m) {
      switch (init_kind(name)) {
        case InitKind::zero:
          m.setZero();
          break;
        case InitKind::one:
          m.setOnes();
          break;
        case InitKind::trunc_normal:
          for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) {
              double z;
              do {
                z = rng.normal();
              } while (std::abs(z) > 2.0);
              m(r, c) = S(0.02 * z);
            }
          break;
      }
    });
  };
  if (cfg.param_dtype == "f32") {
    net.p32 = std::make_unique<detail::ParamsT<float>>();
    init(*net.p32);
  } else {
    net.p64 = std::make_unique<detail::ParamsT<double>>();
    init(*net.p64);
  }
  return net;
}

std::int64_t param_count(const VelocityNet& net) {
  return dispatch(net, [](const auto& p) {
    std::int64_t count = 0;
    for_each_param(p, [&](const std::string&, const auto& m) {
      count += static_cast<std::int64_t>(m.size());
    });
    return count;
  });
}

std::vector<std::string> param_names(const VelocityNet& net) {
  return dispatch(net, [](const auto& p) {
    std::vector<std::string> names;
    for_each_param(p, [&](const std::string& name, const auto&) {
      names.push_back(name);
    });
    return names;
  });
}

Mat get_param(const VelocityNet& net, const std::string& name) {
  return dispatch(net, [&](const auto& p) {
    Mat out;
    bool found = false;
    for_each_param(p, [&](const std::string& n, const auto& m) {
      if (n == name) {
        out = to_double(m);
        found = true;
      }
    });
    if (!found) throw ConfigError("net: unknown parameter '" + name + "'");
    return out;
  });
}

void set_param(VelocityNet& net, const std::string& name, const Mat& value) {
  dispatch(net, [&](auto& p) {
    using S = std::decay_t<decltype(p.w_in(0, 0))>;
    bool found = false;
    for_each_param(p, [&](const std::string& n, MatS<S>& m) {
      if (n != name) return;
      if (m.rows() != value.rows() || m.cols() != value.cols())
        throw ConfigError("net: shape mismatch for parameter '" + name + "'");
      m = to_scalar<S>(value);
      found = true;
    });
    if (!found) throw ConfigError("net: unknown parameter '" + name + "'");
  });
}

Vec time_embedding(const NetConfig& cfg, double t) {
  cfg.validate();
  return time_embedding_impl(cfg.d_emb, t);
}

// --- forward and gradients ---------------------------------------------------

Mat forward(const VelocityNet& net, const Mat& x, double t, const Mat& cond) {
  check_forward_shapes(net.cfg, x, cond);
  return dispatch(net, [&](const auto& p) {
    using S = std::decay_t<decltype(p.w_in(0, 0))>;
    const MatS<S> y = forward_one<S>(net.cfg, p, to_scalar<S>(x), t,
                                     to_scalar<S>(cond), nullptr);
    if (!y.allFinite())
      throw ConvergenceError("net forward: non-finite activations");
    return to_double(y);
  });
}

std::pair<double, Gradients> loss_and_grads(const VelocityNet& net,
                                            const Batch& batch) {
  const size_t b = batch.x.size();
  if (b == 0 || batch.t.size() != b || batch.target.size() != b)
    throw ConfigError("net loss: batch arrays must share one nonzero size");
  if (!batch.cond.empty() && batch.cond.size() != b)
    throw ConfigError("net loss: cond, when present, must cover the batch");

  return dispatch(net, [&](const auto& p) {
    using S = std::decay_t<decltype(p.w_in(0, 0))>;
    ParamsT<S> grads = allocate_params<S>(net.cfg);
    const double denom =
        double(b) * net.cfg.n_particles * net.cfg.d_out();
    double loss = 0.0;
    for (size_t i = 0; i < b; ++i) {
      const Mat& cond_i = batch.cond.empty() ? Mat() : batch.cond[i];
      check_forward_shapes(net.cfg, batch.x[i], cond_i);
      if (batch.target[i].rows() != net.cfg.n_particles ||
          batch.target[i].cols() != net.cfg.d_out())
        throw ConfigError("net loss: target must be n_particles x d_out");
      GradientTape<S> tape;
      const MatS<S> y = forward_one<S>(net.cfg, p, to_scalar<S>(batch.x[i]),
                                       batch.t[i], to_scalar<S>(cond_i),
                                       &tape);
      const MatS<S> resid = y - to_scalar<S>(batch.target[i]);
      loss += double(resid.squaredNorm()) / denom;
      const MatS<S> dy = resid * S(2.0 / denom);
      backward_one<S>(net.cfg, p, tape, dy, grads);
    }
    if (!std::isfinite(loss))
      throw ConvergenceError("net loss: non-finite loss");

    Gradients out;
    for_each_param(grads, [&](const std::string& name, const MatS<S>& m) {
      out.emplace_back(name, to_double(m));
    });
    return std::make_pair(loss, std::move(out));
  });
}

// --- Adam --------------------------------------------------------------------

void adam_step(VelocityNet& net, const Gradients& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (state.step == 0 && state.m.empty()) {
    for (const auto& [name, g] : grads) {
      state.m.emplace_back(name, Mat::Zero(g.rows(), g.cols()));
      state.v.emplace_back(name, Mat::Zero(g.rows(), g.cols()));
    }
  }
  if (state.m.size() != grads.size())
    throw ConfigError("adam: state does not match gradient list");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, double(state.step));

  for (size_t i = 0; i < grads.size(); ++i) {
    const auto& [name, g] = grads[i];
    if (state.m[i].first != name)
      throw ConfigError("adam: state order does not match gradients");
    Mat& m = state.m[i].second;
    Mat& v = state.v[i].second;
    if (m.rows() != g.rows() || m.cols() != g.cols())
      throw ConfigError("adam: moment shape mismatch for '" + name + "'");
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    const Mat update =
        (hyper.lr * (m / bc1).array() /
         ((v / bc2).array().sqrt() + hyper.eps))
            .matrix();
    set_param(net, name, get_param(net, name) - update);
  }
}

// --- checkpoints -------------------------------------------------------------

io::Checkpoint to_checkpoint(const VelocityNet& net) {
  io::Checkpoint ckpt;
  nlohmann::json j;
  j["d_in"] = net.cfg.d_in;
  j["d_emb"] = net.cfg.d_emb;
  j["n_layers"] = net.cfg.n_layers;
  j["n_heads"] = net.cfg.n_heads;
  j["d_mlp"] = net.cfg.d_mlp;
  j["n_particles"] = net.cfg.n_particles;
  j["n_cond"] = net.cfg.n_cond;
  j["param_dtype"] = net.cfg.param_dtype;
  ckpt.config_json = j.dump();

  dispatch(net, [&](const auto& p) {
    for_each_param(p, [&](const std::string& name, const auto& m) {
      io::Blob blob;
      blob.shape = {static_cast<uint32_t>(m.rows()),
                    static_cast<uint32_t>(m.cols())};
      blob.data.reserve(static_cast<size_t>(m.size()));
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
          blob.data.push_back(static_cast<float>(m(r, c)));
      ckpt.blobs.emplace_back(name, std::move(blob));
    });
  });
  return ckpt;
}

VelocityNet from_checkpoint(const io::Checkpoint& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("net checkpoint: bad config JSON: ") + e.what());
  }
  NetConfig cfg;
  try {
    cfg.d_in = j.at("d_in").get<int>();
    cfg.d_emb = j.at("d_emb").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_mlp = j.at("d_mlp").get<int>();
    cfg.n_particles = j.at("n_particles").get<int>();
    cfg.n_cond = j.at("n_cond").get<int>();
    cfg.param_dtype = j.at("param_dtype").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("net checkpoint: missing config field: ") +
                  e.what());
  }
  cfg.validate();

  VelocityNet net;
  net.cfg = cfg;
  if (cfg.param_dtype == "f32")
    net.p32 = std::make_unique<detail::ParamsT<float>>(
        allocate_params<float>(cfg));
  else
    net.p64 = std::make_unique<detail::ParamsT<double>>(
        allocate_params<double>(cfg));

  dispatch(net, [&](auto& p) {
    using S = std::decay_t<decltype(p.w_in(0, 0))>;
    size_t idx = 0;
    for_each_param(p, [&](const std::string& name, MatS<S>& m) {
      if (idx >= ckpt.blobs.size())
        throw IoError("net checkpoint: missing blob '" + name + "'");
      const auto& [blob_name, blob] = ckpt.blobs[idx];
      if (blob_name != name)
        throw IoError("net checkpoint: expected blob '" + name + "', found '" +
                      blob_name + "'");
      if (blob.shape.size() != 2 ||
          blob.shape[0] != static_cast<uint32_t>(m.rows()) ||
          blob.shape[1] != static_cast<uint32_t>(m.cols()))
        throw IoError("net checkpoint: shape mismatch for '" + name + "'");
      size_t k = 0;
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = S(blob.data[k++]);
      ++idx;
    });
    if (idx != ckpt.blobs.size())
      throw IoError("net checkpoint: unexpected extra blobs");
  });
  return net;
}

}  // namespace ogpp::net
