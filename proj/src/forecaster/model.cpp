#include <cmath>
#include <random>

#include "eelab/forecaster.hpp"

namespace eelab::forecaster {

void WindowSpec::validate() const {
  require(tau > 0.0 && sample_dt > 0.0, "τ and sample spacing must be positive");
  require(n_lookback > 0 && n_horizon > 0 && n_label > 0, "window step counts must be positive");
}

WindowSpec WindowSpec::make(double tau, double sample_dt) {
  require(tau > 0.0 && sample_dt > 0.0, "τ and sample spacing must be positive");
  const double nt = tau / sample_dt;
  require(std::abs(nt - std::round(nt)) < 1e-6, "τ must be a multiple of the sample spacing");
  WindowSpec s;
  s.tau = tau;
  s.sample_dt = sample_dt;
  s.n_horizon = int(std::lround(nt));
  s.n_lookback = 4 * s.n_horizon;
  s.n_label = s.n_lookback / 2;
  s.validate();
  return s;
}

void ModelDims::validate() const {
  require(d > 0 && heads > 0 && d % heads == 0, "head count must divide the model width");
  require(n_enc >= 1 && n_dec >= 1, "at least one encoder and one decoder layer");
  require(d_ff > 0 && in_channels > 0, "layer sizes must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------------------
// Parameter layout

namespace {

struct Lin {
  Eigen::Index W = 0, b = 0;
  int in = 0, out = 0;
};
struct Ln {
  Eigen::Index g = 0, b = 0;
  int d = 0;
};
struct Attn {
  Lin q, k, v, o;
};
struct EncL {
  Attn attn;
  Ln ln1, ln2;
  Lin ff1, ff2;
};
struct DecL {
  Attn self, cross;
  Ln ln1, ln2, ln3;
  Lin ff1, ff2;
};

}  // namespace

struct ForecastModel::Layout {
  Lin emb_enc, emb_dec, out;
  std::vector<EncL> enc;
  std::vector<DecL> dec;
  std::vector<ParamGroup> groups;
  Eigen::Index size = 0;

  Eigen::Index add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    groups.push_back({name, size, rows, cols});
    size += rows * cols;
    return groups.back().offset;
  }
  Lin lin(const std::string& name, int in, int out) {
    Lin l;
    l.in = in;
    l.out = out;
    l.W = add(name + ".W", in, out);
    l.b = add(name + ".b", 1, out);
    return l;
  }
  Ln ln(const std::string& name, int d) {
    Ln l;
    l.d = d;
    l.g = add(name + ".gamma", 1, d);
    l.b = add(name + ".beta", 1, d);
    return l;
  }
  Attn attn(const std::string& name, int d) {
    return {lin(name + ".q", d, d), lin(name + ".k", d, d), lin(name + ".v", d, d),
            lin(name + ".o", d, d)};
  }

  explicit Layout(const ModelDims& m) {
    emb_enc = lin("embed_enc", m.in_channels, m.d);
    emb_dec = lin("embed_dec", 1, m.d);
    for (int i = 0; i < m.n_enc; ++i) {
      const std::string p = "enc" + std::to_string(i);
      enc.push_back({attn(p + ".attn", m.d), ln(p + ".ln1", m.d), ln(p + ".ln2", m.d),
                     lin(p + ".ff1", m.d, m.d_ff), lin(p + ".ff2", m.d_ff, m.d)});
    }
    for (int i = 0; i < m.n_dec; ++i) {
      const std::string p = "dec" + std::to_string(i);
      DecL l;
      l.self = attn(p + ".self", m.d);
      l.cross = attn(p + ".cross", m.d);
      l.ln1 = ln(p + ".ln1", m.d);
      l.ln2 = ln(p + ".ln2", m.d);
      l.ln3 = ln(p + ".ln3", m.d);
      l.ff1 = lin(p + ".ff1", m.d, m.d_ff);
      l.ff2 = lin(p + ".ff2", m.d_ff, m.d);
      dec.push_back(l);
    }
    out = lin("out", m.d, 1);
  }
};

namespace {

using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;
using RowMap = Eigen::Map<const Eigen::RowVectorXd>;
using MRowMap = Eigen::Map<Eigen::RowVectorXd>;

// Forward state of one pass. Gradients are accumulated into a flat buffer
// with the same layout as θ.
struct Net {
  const ModelDims& m;
  const ForecastModel::Layout& L;
  const VectorXd& th;
  VectorXd* g;  // null in inference
  bool train;
  std::mt19937_64 rng;

  CMap W(const Lin& l) const { return {th.data() + l.W, l.in, l.out}; }
  RowMap b(const Lin& l) const { return {th.data() + l.b, l.out}; }
  MMap dW(const Lin& l) const { return {g->data() + l.W, l.in, l.out}; }
  MRowMap db(const Lin& l) const { return {g->data() + l.b, l.out}; }
};

MatrixXd linear(const Net& n, const Lin& l, const MatrixXd& X) {
  return (X * n.W(l)).rowwise() + n.b(l);
}

MatrixXd linear_back(const Net& n, const Lin& l, const MatrixXd& X, const MatrixXd& dY) {
  n.dW(l).noalias() += X.transpose() * dY;
  n.db(l) += dY.colwise().sum();
  return dY * n.W(l).transpose();
}

struct LnCache {
  MatrixXd xhat;
  VectorXd inv;
};

MatrixXd layer_norm(const Net& n, const Ln& l, const MatrixXd& X, LnCache& c) {
  constexpr double eps = 1e-5;
  const Eigen::Index d = X.cols();
  c.xhat.resize(X.rows(), d);
  c.inv.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    c.inv[i] = 1.0 / std::sqrt(var + eps);
    c.xhat.row(i) = (X.row(i).array() - mu) * c.inv[i];
  }
  const RowMap gam(n.th.data() + l.g, l.d), bet(n.th.data() + l.b, l.d);
  return (c.xhat.array().rowwise() * gam.array()).rowwise() + bet.array();
}

MatrixXd layer_norm_back(const Net& n, const Ln& l, const LnCache& c, const MatrixXd& dY) {
  const RowMap gam(n.th.data() + l.g, l.d);
  MRowMap(n.g->data() + l.g, l.d) += (dY.array() * c.xhat.array()).colwise().sum().matrix();
  MRowMap(n.g->data() + l.b, l.d) += dY.colwise().sum();
  const MatrixXd dxh = dY.array().rowwise() * gam.array();
  MatrixXd dX(dY.rows(), dY.cols());
  for (Eigen::Index i = 0; i < dY.rows(); ++i) {
    const double m1 = dxh.row(i).mean();
    const double m2 = (dxh.row(i).array() * c.xhat.row(i).array()).mean();
    dX.row(i) = c.inv[i] * (dxh.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dX;
}

// tanh form of GELU; smooth, so finite-difference checks stay clean.
constexpr double kGeluC = 0.7978845608028654;  // √(2/π)

MatrixXd gelu(const MatrixXd& X) {
  return X.unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
  });
}

MatrixXd gelu_back(const MatrixXd& X, const MatrixXd& dY) {
  return dY.cwiseProduct(X.unaryExpr([](double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  }));
}

struct DropCache {
  MatrixXd mask;  // empty when inactive
};

MatrixXd dropout(Net& n, const MatrixXd& X, DropCache& c) {
  if (!n.train || n.m.dropout <= 0.0) {
    c.mask.resize(0, 0);
    return X;
  }
  std::bernoulli_distribution keep(1.0 - n.m.dropout);
  const double s = 1.0 / (1.0 - n.m.dropout);
  c.mask.resize(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.size(); ++j) c.mask.data()[j] = keep(n.rng) ? s : 0.0;
  return X.cwiseProduct(c.mask);
}

MatrixXd dropout_back(const DropCache& c, const MatrixXd& dY) {
  return c.mask.size() == 0 ? dY : MatrixXd(dY.cwiseProduct(c.mask));
}

struct AttnCache {
  MatrixXd xq, xkv, Q, K, V, C;
  std::vector<MatrixXd> P;
};

MatrixXd attention(const Net& n, const Attn& a, const MatrixXd& Xq, const MatrixXd& Xkv,
                   bool causal, AttnCache& c) {
  const int H = n.m.heads, dh = n.m.d / H;
  const double scale = 1.0 / std::sqrt(double(dh));
  c.xq = Xq;
  c.xkv = Xkv;
  c.Q = linear(n, a.q, Xq);
  c.K = linear(n, a.k, Xkv);
  c.V = linear(n, a.v, Xkv);
  c.C.resize(Xq.rows(), n.m.d);
  c.P.resize(std::size_t(H));
  for (int h = 0; h < H; ++h) {
    MatrixXd S = scale * c.Q.middleCols(h * dh, dh) * c.K.middleCols(h * dh, dh).transpose();
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      const Eigen::Index lim = causal ? std::min<Eigen::Index>(i + 1, S.cols()) : S.cols();
      const double mx = S.row(i).head(lim).maxCoeff();
      S.row(i).head(lim) = (S.row(i).head(lim).array() - mx).exp();
      S.row(i).tail(S.cols() - lim).setZero();
      S.row(i) /= S.row(i).sum();
    }
    c.C.middleCols(h * dh, dh) = S * c.V.middleCols(h * dh, dh);
    c.P[std::size_t(h)] = std::move(S);
  }
  return linear(n, a.o, c.C);
}

/// Returns (dXq, dXkv).
std::pair<MatrixXd, MatrixXd> attention_back(const Net& n, const Attn& a, const AttnCache& c,
                                             const MatrixXd& dY) {
  const int H = n.m.heads, dh = n.m.d / H;
  const double scale = 1.0 / std::sqrt(double(dh));
  const MatrixXd dC = linear_back(n, a.o, c.C, dY);
  MatrixXd dQ(c.Q.rows(), n.m.d), dK(c.K.rows(), n.m.d), dV(c.V.rows(), n.m.d);
  for (int h = 0; h < H; ++h) {
    const MatrixXd& P = c.P[std::size_t(h)];
    const auto dCh = dC.middleCols(h * dh, dh);
    dV.middleCols(h * dh, dh) = P.transpose() * dCh;
    const MatrixXd dP = dCh * c.V.middleCols(h * dh, dh).transpose();
    const VectorXd rs = (dP.array() * P.array()).rowwise().sum();
    const MatrixXd dS = P.array() * (dP.array().colwise() - rs.array());
    dQ.middleCols(h * dh, dh) = scale * dS * c.K.middleCols(h * dh, dh);
    dK.middleCols(h * dh, dh) = scale * dS.transpose() * c.Q.middleCols(h * dh, dh);
  }
  MatrixXd dXq = linear_back(n, a.q, c.xq, dQ);
  MatrixXd dXkv = linear_back(n, a.k, c.xkv, dK);
  dXkv += linear_back(n, a.v, c.xkv, dV);
  return {std::move(dXq), std::move(dXkv)};
}

struct FfCache {
  MatrixXd x, pre, act;
};

MatrixXd feed_forward(const Net& n, const Lin& l1, const Lin& l2, const MatrixXd& X, FfCache& c) {
  c.x = X;
  c.pre = linear(n, l1, X);
  c.act = gelu(c.pre);
  return linear(n, l2, c.act);
}

MatrixXd feed_forward_back(const Net& n, const Lin& l1, const Lin& l2, const FfCache& c,
                           const MatrixXd& dY) {
  const MatrixXd dact = linear_back(n, l2, c.act, dY);
  return linear_back(n, l1, c.x, gelu_back(c.pre, dact));
}

struct EncCache {
  AttnCache attn;
  DropCache d1, d2;
  LnCache ln1, ln2;
  FfCache ff;
};

MatrixXd encoder_layer(Net& n, const EncL& l, const MatrixXd& X, EncCache& c) {
  const MatrixXd A = dropout(n, attention(n, l.attn, X, X, false, c.attn), c.d1);
  const MatrixXd H = layer_norm(n, l.ln1, X + A, c.ln1);
  const MatrixXd F = dropout(n, feed_forward(n, l.ff1, l.ff2, H, c.ff), c.d2);
  return layer_norm(n, l.ln2, H + F, c.ln2);
}

MatrixXd encoder_layer_back(const Net& n, const EncL& l, const EncCache& c, const MatrixXd& dY) {
  const MatrixXd dS2 = layer_norm_back(n, l.ln2, c.ln2, dY);
  const MatrixXd dH = dS2 + feed_forward_back(n, l.ff1, l.ff2, c.ff, dropout_back(c.d2, dS2));
  const MatrixXd dS1 = layer_norm_back(n, l.ln1, c.ln1, dH);
  auto [dq, dkv] = attention_back(n, l.attn, c.attn, dropout_back(c.d1, dS1));
  return dS1 + dq + dkv;
}

struct DecCache {
  AttnCache self, cross;
  DropCache d1, d2, d3;
  LnCache ln1, ln2, ln3;
  FfCache ff;
};

MatrixXd decoder_layer(Net& n, const DecL& l, const MatrixXd& X, const MatrixXd& enc,
                       DecCache& c) {
  const MatrixXd A = dropout(n, attention(n, l.self, X, X, true, c.self), c.d1);
  const MatrixXd H1 = layer_norm(n, l.ln1, X + A, c.ln1);
  const MatrixXd B = dropout(n, attention(n, l.cross, H1, enc, false, c.cross), c.d2);
  const MatrixXd H2 = layer_norm(n, l.ln2, H1 + B, c.ln2);
  const MatrixXd F = dropout(n, feed_forward(n, l.ff1, l.ff2, H2, c.ff), c.d3);
  return layer_norm(n, l.ln3, H2 + F, c.ln3);
}

/// Returns dX and adds the encoder-output gradient to dEnc.
MatrixXd decoder_layer_back(const Net& n, const DecL& l, const DecCache& c, const MatrixXd& dY,
                            MatrixXd& dEnc) {
  const MatrixXd dS3 = layer_norm_back(n, l.ln3, c.ln3, dY);
  const MatrixXd dH2 = dS3 + feed_forward_back(n, l.ff1, l.ff2, c.ff, dropout_back(c.d3, dS3));
  const MatrixXd dS2 = layer_norm_back(n, l.ln2, c.ln2, dH2);
  auto [dq2, denc] = attention_back(n, l.cross, c.cross, dropout_back(c.d2, dS2));
  dEnc += denc;
  const MatrixXd dH1 = dS2 + dq2;
  const MatrixXd dS1 = layer_norm_back(n, l.ln1, c.ln1, dH1);
  auto [dq1, dkv1] = attention_back(n, l.self, c.self, dropout_back(c.d1, dS1));
  return dS1 + dq1 + dkv1;
}

MatrixXd positional_encoding(Eigen::Index len, int d) {
  MatrixXd P(len, d);
  for (Eigen::Index pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; ++i) {
      const double f = std::pow(10000.0, -double(2 * (i / 2)) / double(d));
      P(pos, i) = i % 2 == 0 ? std::sin(double(pos) * f) : std::cos(double(pos) * f);
    }
  return P;
}

struct Pass {
  MatrixXd enc_in, dec_in;
  std::vector<EncCache> enc;
  std::vector<DecCache> dec;
  MatrixXd enc_out, dec_out;
};

VectorXd run_forward(Net& n, const MatrixXd& input, const VectorXd& seed, Pass& p) {
  const auto& L = n.L;
  p.enc_in = input;
  MatrixXd X = linear(n, L.emb_enc, input) + positional_encoding(input.rows(), n.m.d);
  p.enc.resize(L.enc.size());
  for (std::size_t i = 0; i < L.enc.size(); ++i) X = encoder_layer(n, L.enc[i], X, p.enc[i]);
  p.enc_out = X;
  p.dec_in = seed;
  MatrixXd Y = linear(n, L.emb_dec, p.dec_in) + positional_encoding(seed.size(), n.m.d);
  p.dec.resize(L.dec.size());
  for (std::size_t i = 0; i < L.dec.size(); ++i) Y = decoder_layer(n, L.dec[i], Y, X, p.dec[i]);
  p.dec_out = Y;
  return VectorXd(linear(n, L.out, Y).col(0));
}

void run_backward(Net& n, const Pass& p, const VectorXd& dout_full) {
  const auto& L = n.L;
  MatrixXd dY = linear_back(n, L.out, p.dec_out, dout_full);
  MatrixXd dEnc = MatrixXd::Zero(p.enc_out.rows(), p.enc_out.cols());
  for (std::size_t i = L.dec.size(); i-- > 0;) dY = decoder_layer_back(n, L.dec[i], p.dec[i], dY, dEnc);
  linear_back(n, L.emb_dec, p.dec_in, dY);
  MatrixXd dX = dEnc;
  for (std::size_t i = L.enc.size(); i-- > 0;) dX = encoder_layer_back(n, L.enc[i], p.enc[i], dX);
  linear_back(n, L.emb_enc, p.enc_in, dX);
}

}  // namespace

ForecastModel::ForecastModel(const ModelDims& dims, const WindowSpec& spec, std::uint64_t seed)
    : dims_(dims), spec_(spec) {
  dims.validate();
  spec.validate();
  auto layout = std::make_shared<Layout>(dims);
  groups_ = layout->groups;
  theta_ = VectorXd::Zero(layout->size);
  std::mt19937_64 rng(seed);
  for (const auto& g : groups_) {
    const auto& n = g.name;
    if (n.size() >= 6 && n.compare(n.size() - 6, 6, ".gamma") == 0) {
      theta_.segment(g.offset, g.size()).setOnes();
    } else if (n.size() >= 2 && n.compare(n.size() - 2, 2, ".W") == 0) {
      // Glorot uniform
      const double a = std::sqrt(6.0 / double(g.rows + g.cols));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index j = 0; j < g.size(); ++j) theta_[g.offset + j] = u(rng);
    }
  }
  layout_ = std::move(layout);
}

const ParamGroup& ForecastModel::group(const std::string& name) const {
  for (const auto& g : groups_)
    if (g.name == name) return g;
  throw InvalidArgument("no parameter group named " + name);
}

namespace {

void check_shapes(const ModelDims& m, const WindowSpec& s, const MatrixXd& input,
                  const VectorXd& seed) {
  if (input.rows() != s.n_lookback || input.cols() != m.in_channels)
    throw InvalidArgument("encoder input must be " + std::to_string(s.n_lookback) + "×" +
                          std::to_string(m.in_channels) + ", got " + std::to_string(input.rows()) +
                          "×" + std::to_string(input.cols()));
  if (seed.size() != s.decoder_length())
    throw InvalidArgument("decoder seed must have " + std::to_string(s.decoder_length()) +
                          " entries, got " + std::to_string(seed.size()));
}

}  // namespace

VectorXd ForecastModel::forward(const MatrixXd& input, const VectorXd& seed) const {
  require(layout_ != nullptr, "model is not initialized");
  check_shapes(dims_, spec_, input, seed);
  Net n{dims_, *layout_, theta_, nullptr, false, std::mt19937_64(0)};
  Pass p;
  const VectorXd all = run_forward(n, input, seed, p);
  return all.tail(spec_.n_horizon);
}

double ForecastModel::loss(const Sample& s, VectorXd* grad, double scale, bool train,
                           std::uint64_t dropout_seed) const {
  require(layout_ != nullptr, "model is not initialized");
  check_shapes(dims_, spec_, s.input, s.seed);
  require(s.target.size() == spec_.n_horizon && s.weight.size() == spec_.n_horizon,
          "targets and weights must have n_τ entries");
  if (grad) require(grad->size() == theta_.size(), "gradient buffer has the wrong size");
  Net n{dims_, *layout_, theta_, grad, train, std::mt19937_64(dropout_seed)};
  Pass p;
  const VectorXd all = run_forward(n, s.input, s.seed, p);
  const Eigen::Index nt = spec_.n_horizon;
  const VectorXd e = all.tail(nt) - s.target;
  const double value = (e.array().abs() * s.weight.array()).mean();
  if (grad) {
    VectorXd dout = VectorXd::Zero(all.size());
    dout.tail(nt) = scale * (e.array().sign() * s.weight.array()).matrix() / double(nt);
    run_backward(n, p, dout);
  }
  return value;
}

}  // namespace eelab::forecaster
