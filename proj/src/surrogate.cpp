#include "eelab/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "eelab/parallel.hpp"

namespace eelab::surrogate {

namespace {
constexpr Complex kI{0.0, 1.0};
}

ModeSet::ModeSet(int kmax) : kmax_(kmax) {
  require(kmax >= 0, "kmax must be non-negative");
  const int w = 2 * kmax + 1;
  lookup_.assign(std::size_t(w) * w, -1);
  for (int kx = -kmax; kx <= kmax; ++kx)
    for (int ky = -kmax; ky <= kmax; ++ky) {
      if (kx == 0 && ky == 0) continue;
      lookup_[std::size_t(kx + kmax) * w + std::size_t(ky + kmax)] = int(modes_.size());
      modes_.emplace_back(kx, ky);
    }
  conj_.resize(modes_.size());
  for (std::size_t i = 0; i < modes_.size(); ++i)
    conj_[i] = index(-modes_[i].first, -modes_[i].second);
}

int ModeSet::index(int kx, int ky) const {
  if (std::abs(kx) > kmax_ || std::abs(ky) > kmax_) return -1;
  const int w = 2 * kmax_ + 1;
  return lookup_[std::size_t(kx + kmax_) * w + std::size_t(ky + kmax_)];
}

bool ModeSet::upper(int i) const {
  const auto [kx, ky] = modes_[std::size_t(i)];
  return ky > 0 || (ky == 0 && kx > 0);
}

VectorXc to_solenoidal(const VectorXc& coeffs, const flow::GridSpec& grid, const ModeSet& set) {
  require(coeffs.size() == grid.size(), "state size does not match grid");
  require(set.kmax() <= std::min(grid.kmax_x(), grid.kmax_y()),
          "mode set exceeds the dealiased range of the grid");
  VectorXc c(set.size());
  for (int i = 0; i < set.size(); ++i) {
    const auto [kx, ky] = set.mode(i);
    const int ix = grid.ix_of(kx), iy = grid.iy_of(ky);
    const double k = std::hypot(double(kx), double(ky));
    c[i] = kI * (double(kx) * coeffs[grid.index(ix, iy, 1)] -
                 double(ky) * coeffs[grid.index(ix, iy, 0)]) / k;
  }
  return c;
}

VectorXc from_solenoidal(const VectorXc& c, const ModeSet& set, const flow::GridSpec& grid) {
  require(c.size() == set.size(), "coordinate size does not match mode set");
  VectorXc out = VectorXc::Zero(grid.size());
  for (int i = 0; i < set.size(); ++i) {
    const auto [kx, ky] = set.mode(i);
    const int ix = grid.ix_of(kx), iy = grid.iy_of(ky);
    const double k = std::hypot(double(kx), double(ky));
    out[grid.index(ix, iy, 0)] = kI * c[i] * (double(ky) / k);
    out[grid.index(ix, iy, 1)] = -kI * c[i] * (double(kx) / k);
  }
  return out;
}

VectorXc restrict_coords(const VectorXc& c, const ModeSet& from, const ModeSet& to) {
  VectorXc out = VectorXc::Zero(to.size());
  for (int i = 0; i < to.size(); ++i) {
    const auto [kx, ky] = to.mode(i);
    const int j = from.index(kx, ky);
    if (j >= 0) out[i] = c[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

DerivativeEstimator::DerivativeEstimator(const flow::GridSpec& grid, int kmax, double dt,
                                         int stride)
    : grid_(grid),
      set_(kmax < 0 ? std::min(grid.kmax_x(), grid.kmax_y()) : kmax),
      stride_(stride) {
  require(dt > 0.0, "snapshot spacing must be positive");
  require(stride >= 1, "stride must be at least 1");
  data_.kmax = set_.kmax();
  data_.dt = dt;
}

void DerivativeEstimator::push(const flow::FlowState& s) {
  ring_.push_back(to_solenoidal(s.coeffs, grid_, set_));
  ring_t_.push_back(s.time);
  if (ring_.size() > 5) {
    ring_.erase(ring_.begin());
    ring_t_.erase(ring_t_.begin());
  }
  ++seen_;
  if (ring_.size() < 5) return;
  const long center = seen_ - 3;  // index of ring_[2] in the stream
  if ((center - 2) % stride_ != 0) return;
  data_.times.push_back(ring_t_[2]);
  data_.states.push_back(ring_[2]);
  data_.derivatives.push_back(
      fourth_order_derivative(ring_[0], ring_[1], ring_[3], ring_[4], data_.dt));
}

DerivativeDataset estimate_derivatives(const flow::Trajectory& trajectory, int kmax) {
  if (trajectory.states.size() < 5)
    throw InsufficientData("derivative estimation needs at least 5 snapshots");
  DerivativeEstimator est(trajectory.grid, kmax, trajectory.params.snapshot_dt);
  for (const auto& s : trajectory.states) est.push(s);
  return est.take();
}

namespace {
flow::FlowParams burst_params(flow::FlowParams p, double burst_dt) {
  require(burst_dt > 0.0, "probe burst spacing must be positive");
  p.snapshot_dt = burst_dt;
  p.internal_dt = std::min(p.internal_dt, burst_dt);
  const double n = burst_dt / p.internal_dt;
  if (std::abs(n - std::round(n)) > 1e-9) p.internal_dt = burst_dt / std::ceil(n);
  return p;
}
}  // namespace

ProbeSampler::ProbeSampler(const flow::GridSpec& grid, const flow::FlowParams& params, int kmax,
                           const ProbeConfig& cfg)
    : grid_(grid),
      set_(kmax),
      cfg_(cfg),
      solver_(grid, burst_params(params, cfg.burst_dt)),
      rng_(cfg.seed) {
  require(kmax >= 1, "probe truncation K must be at least 1");
  require(cfg.amplitude >= 0.0, "probe amplitude must be non-negative");
  data_.kmax = kmax;
  data_.dt = cfg.burst_dt;
}

void ProbeSampler::push(const flow::FlowState& anchor) {
  VectorXc c = to_solenoidal(anchor.coeffs, grid_, set_);
  std::normal_distribution<double> nd;
  VectorXc d(c.size());
  for (int i = 0; i < set_.size(); ++i)
    if (set_.upper(i)) d[i] = Complex(nd(rng_), nd(rng_));
  for (int i = 0; i < set_.size(); ++i)
    if (!set_.upper(i)) d[i] = std::conj(d[set_.conjugate(i)]);
  if (d.norm() > 0.0) c += (cfg_.amplitude * c.norm() / d.norm()) * d;
  flow::FlowState start{from_solenoidal(c, set_, grid_), anchor.time};
  DerivativeEstimator est(grid_, set_.kmax(), cfg_.burst_dt);
  solver_.simulate(start, 4.0 * cfg_.burst_dt, [&](const flow::FlowState& s) { est.push(s); });
  const auto& b = est.dataset();
  require(b.size() == 1, "probe burst did not produce a centre derivative");
  data_.times.push_back(anchor.time);
  data_.states.push_back(b.states[0]);
  data_.derivatives.push_back(b.derivatives[0]);
}

// ---------------------------------------------------------------------------

QuadraticSurrogate::QuadraticSurrogate(int K, double ridge, const flow::GridSpec& grid)
    : K_(K), ridge_(ridge), grid_(grid), modes_(K) {}

VectorXc QuadraticSurrogate::evaluate_coords(const VectorXc& c) const {
  VectorXc out = VectorXc::Zero(modes_.size());
  for (const auto& o : outputs_) {
    Complex s = o.constant + o.linear * c[o.mode];
    // Plain real arithmetic; std::complex products carry inf/NaN recovery
    // that dominates this loop.
    double re = 0.0, im = 0.0;
    const Eigen::Index n = o.quad.size();
    const int* p = o.p.data();
    const int* q = o.q.data();
    for (Eigen::Index j = 0; j < n; ++j) {
      const Complex a = c[p[j]], b = c[q[j]], w = o.quad[j];
      const double xr = a.real() * b.real() - a.imag() * b.imag();
      const double xi = a.real() * b.imag() + a.imag() * b.real();
      re += w.real() * xr - w.imag() * xi;
      im += w.real() * xi + w.imag() * xr;
    }
    s += Complex(re, im);
    out[o.mode] = s;
    out[modes_.conjugate(o.mode)] = std::conj(s);
  }
  return out;
}

VectorXc QuadraticSurrogate::apply(const VectorXc& coeffs) const {
  return from_solenoidal(evaluate_coords(to_solenoidal(coeffs, grid_, modes_)), modes_, grid_);
}

namespace {

// Unordered pairs {p, q} of the set with p + q = k.
void enumerate_pairs(const ModeSet& set, int kx, int ky, std::vector<int>& p,
                     std::vector<int>& q) {
  for (int i = 0; i < set.size(); ++i) {
    const auto [px, py] = set.mode(i);
    const int j = set.index(kx - px, ky - py);
    if (j < 0 || j < i) continue;
    p.push_back(i);
    q.push_back(j);
  }
}

}  // namespace

FitResult fit(const DerivativeDataset& data, int K, std::optional<double> ridge,
              const flow::GridSpec& grid) {
  require(K >= 1, "K must be at least 1");
  if (data.size() == 0) throw InsufficientData("empty derivative dataset");
  require(K <= data.kmax, "K exceeds the wavenumber range stored in the dataset");
  if (ridge) require(*ridge >= 0.0, "ridge_lambda must be non-negative");

  FitResult result;
  result.model = QuadraticSurrogate(K, ridge.value_or(-1.0), grid);
  const ModeSet& set = result.model.modes();
  const ModeSet from(data.kmax);
  const Eigen::Index N = Eigen::Index(data.size());

  MatrixXc C(N, set.size()), Cdot(N, set.size());
  for (Eigen::Index n = 0; n < N; ++n) {
    C.row(n) = restrict_coords(data.states[std::size_t(n)], from, set).transpose();
    Cdot.row(n) = restrict_coords(data.derivatives[std::size_t(n)], from, set).transpose();
  }

  std::vector<int> outs;
  for (int i = 0; i < set.size(); ++i)
    if (set.upper(i)) outs.push_back(i);
  auto& outputs = result.model.outputs();
  outputs.resize(outs.size());
  result.report.resize(outs.size());
  std::vector<std::string> failures(outs.size());

  parallel_for(int(outs.size()), [&](int oi) {
    OutputMode& o = outputs[std::size_t(oi)];
    o.mode = outs[std::size_t(oi)];
    const auto [kx, ky] = set.mode(o.mode);
    enumerate_pairs(set, kx, ky, o.p, o.q);
    const Eigen::Index F = 2 + Eigen::Index(o.p.size());
    MatrixXc X(N, F);
    X.col(0).setOnes();
    X.col(1) = C.col(o.mode);
    for (std::size_t j = 0; j < o.p.size(); ++j)
      X.col(2 + Eigen::Index(j)) = C.col(o.p[j]).cwiseProduct(C.col(o.q[j]));
    const VectorXc y = Cdot.col(o.mode);
    const double lam = ridge ? *ridge : 1e-8 * double(F);
    // The ridge acts on unit-RMS feature columns; raw triad products span
    // many decades and an absolute λ would shrink the high-k ones to zero.
    VectorXd scale(F);
    for (Eigen::Index j = 0; j < F; ++j) {
      const double rms = X.col(j).norm() / std::sqrt(double(N));
      scale[j] = rms > 0.0 ? rms : 1.0;
      X.col(j) /= scale[j];
    }
    MatrixXc G = (X.adjoint() * X) / double(N);
    G.diagonal().array() += lam;
    Eigen::LDLT<MatrixXc> ldlt(G);
    const VectorXd piv = ldlt.vectorD().cwiseAbs();
    const bool ok = ldlt.info() == Eigen::Success && piv.minCoeff() > 1e-12 * piv.maxCoeff();
    if (lam == 0.0 && !ok) {
      failures[std::size_t(oi)] = "normal equations singular for mode (" + std::to_string(kx) +
                                  "," + std::to_string(ky) + "); use ridge_lambda > 0";
      return;
    }
    VectorXc beta = ldlt.solve(X.adjoint() * y / double(N));
    const double rn = (y - X * beta).norm(), yn = y.norm();
    beta.array() /= scale.array();
    o.constant = beta[0];
    o.linear = beta[1];
    o.quad = beta.tail(F - 2);
    result.report[std::size_t(oi)] = {kx, ky, int(F), rn, yn > 0.0 ? rn / yn : rn, yn};
  });
  for (const auto& f : failures)
    if (!f.empty()) throw IllConditioned(f);

  double num = 0.0, den = 0.0;
  for (const auto& r : result.report) {
    num += r.residual_abs * r.residual_abs;
    den += r.target_norm * r.target_norm;
  }
  result.total_residual_rel = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return result;
}

// ---------------------------------------------------------------------------

MatrixXc jvp_columns(const QuadraticSurrogate& model, const VectorXc& u, const MatrixXc& V,
                     const JvpConfig& cfg) {
  const auto& set = model.modes();
  const auto& grid = model.grid();
  const VectorXc cu = to_solenoidal(u, grid, set);
  const double eps = cfg.epsilon ? *cfg.epsilon : 1e-6 * (1.0 + u.norm());
  if (!(eps > 0.0)) throw InvalidArgument("jvp epsilon must be positive");
  const VectorXc f0 =
      cfg.scheme == JvpConfig::Scheme::Forward ? model.evaluate_coords(cu) : VectorXc();
  MatrixXc out(V.rows(), V.cols());
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    const double vn = V.col(j).norm();
    if (vn == 0.0) {
      out.col(j).setZero();
      continue;
    }
    const VectorXc cv = to_solenoidal(V.col(j), grid, set) / vn;
    VectorXc d;
    if (cfg.scheme == JvpConfig::Scheme::Forward)
      d = (vn / eps) * (model.evaluate_coords(cu + eps * cv) - f0);
    else
      d = (vn / (2.0 * eps)) *
          (model.evaluate_coords(cu + eps * cv) - model.evaluate_coords(cu - eps * cv));
    out.col(j) = from_solenoidal(d, set, grid);
  }
  return out;
}

VectorXc jvp(const QuadraticSurrogate& model, const VectorXc& u, const VectorXc& v,
             const JvpConfig& cfg) {
  MatrixXc V(v.size(), 1);
  V.col(0) = v;
  return jvp_columns(model, u, V, cfg);
}

std::function<MatrixXc(const VectorXc&, const MatrixXc&)> tangent_operator(
    std::shared_ptr<const QuadraticSurrogate> model, const JvpConfig& cfg) {
  require(model != nullptr, "surrogate is missing");
  return [model, cfg](const VectorXc& u, const MatrixXc& V) { return jvp_columns(*model, u, V, cfg); };
}

std::function<MatrixXc(const VectorXc&, const MatrixXc&)> coordinate_tangent_operator(
    std::shared_ptr<const QuadraticSurrogate> model, const JvpConfig& cfg) {
  require(model != nullptr, "surrogate is missing");
  return [model, cfg](const VectorXc& c, const MatrixXc& V) {
    require(c.size() == model->modes().size() && V.rows() == c.size(),
            "coordinates do not match the surrogate's mode set");
    const auto f = [&](const VectorXc& x) { return model->evaluate_coords(x); };
    MatrixXc out(V.rows(), V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j) out.col(j) = jvp_fn(f, c, VectorXc(V.col(j)), cfg);
    return out;
  };
}

double sobolev_error(const VectorXc& predicted, const VectorXc& truth, int order,
                     const flow::GridSpec& grid) {
  require(predicted.size() == truth.size() && truth.size() == grid.size(),
          "fields must match the grid");
  require(order >= 0 && order <= 2, "Sobolev order must be 0, 1 or 2");
  double acc = 0.0;
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double k2 = double(grid.kx(ix)) * grid.kx(ix) + double(grid.ky(iy)) * grid.ky(iy);
      double w = 0.0, pw = 1.0;
      for (int j = 0; j <= order; ++j, pw *= k2) w += pw;
      for (int c = 0; c < 2; ++c)
        acc += w * std::norm(predicted[grid.index(ix, iy, c)] - truth[grid.index(ix, iy, c)]);
    }
  return std::sqrt(grid.l2_weight() * acc);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated surrogate file");
  return v;
}
void put_c(std::ostream& os, Complex z) {
  put(os, z.real());
  put(os, z.imag());
}
Complex get_c(std::istream& is) {
  const double re = get<double>(is);
  const double im = get<double>(is);
  return {re, im};
}

}  // namespace

// Layout: "QSUR" | K u32 | ridge f64 | nx u32 | ny u32 | n_out u32 |
// per output mode (ModeSet order): kx i32 | ky i32 | n_pairs u32 | constant c128 |
// linear c128 | per pair: pkx i32 | pky i32 | qkx i32 | qky i32 | coeff c128.
void save_surrogate(const std::string& path, const QuadraticSurrogate& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path);
  os.write("QSUR", 4);
  put<std::uint32_t>(os, std::uint32_t(m.K()));
  put<double>(os, m.ridge_lambda());
  put<std::uint32_t>(os, std::uint32_t(m.grid().nx));
  put<std::uint32_t>(os, std::uint32_t(m.grid().ny));
  put<std::uint32_t>(os, std::uint32_t(m.outputs().size()));
  const auto& set = m.modes();
  for (const auto& o : m.outputs()) {
    const auto [kx, ky] = set.mode(o.mode);
    put<std::int32_t>(os, kx);
    put<std::int32_t>(os, ky);
    put<std::uint32_t>(os, std::uint32_t(o.p.size()));
    put_c(os, o.constant);
    put_c(os, o.linear);
    for (std::size_t j = 0; j < o.p.size(); ++j) {
      const auto [px, py] = set.mode(o.p[j]);
      const auto [qx, qy] = set.mode(o.q[j]);
      put<std::int32_t>(os, px);
      put<std::int32_t>(os, py);
      put<std::int32_t>(os, qx);
      put<std::int32_t>(os, qy);
      put_c(os, o.quad[Eigen::Index(j)]);
    }
  }
  if (!os) throw FormatError("failed writing " + path);
}

QuadraticSurrogate load_surrogate(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "QSUR") throw FormatError(path + " is not a QSUR file");
  const int K = int(get<std::uint32_t>(is));
  const double ridge = get<double>(is);
  flow::GridSpec g;
  g.nx = int(get<std::uint32_t>(is));
  g.ny = int(get<std::uint32_t>(is));
  QuadraticSurrogate m(K, ridge, g);
  const auto n_out = get<std::uint32_t>(is);
  const auto& set = m.modes();
  auto idx = [&](int kx, int ky) {
    const int i = set.index(kx, ky);
    if (i < 0) throw FormatError("wavenumber outside the retained set");
    return i;
  };
  for (std::uint32_t i = 0; i < n_out; ++i) {
    OutputMode o;
    const int kx = get<std::int32_t>(is), ky = get<std::int32_t>(is);
    o.mode = idx(kx, ky);
    const auto np = get<std::uint32_t>(is);
    o.constant = get_c(is);
    o.linear = get_c(is);
    o.quad.resize(np);
    for (std::uint32_t j = 0; j < np; ++j) {
      const int px = get<std::int32_t>(is), py = get<std::int32_t>(is);
      const int qx = get<std::int32_t>(is), qy = get<std::int32_t>(is);
      o.p.push_back(idx(px, py));
      o.q.push_back(idx(qx, qy));
      o.quad[j] = get_c(is);
    }
    m.outputs().push_back(std::move(o));
  }
  return m;
}

void write_fit_report_csv(const std::string& path, const FitResult& r) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << "kx,ky,n_features,residual_abs,residual_rel\n" << std::setprecision(17);
  for (const auto& row : r.report)
    os << row.kx << ',' << row.ky << ',' << row.n_features << ',' << row.residual_abs << ','
       << row.residual_rel << '\n';
}

}  // namespace eelab::surrogate
