#include "eelab/flow/kolmogorov.hpp"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

namespace eelab::flow {

namespace {

constexpr Complex kI{0.0, 1.0};

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void GridSpec::validate() const {
  require(is_pow2(nx) && is_pow2(ny), "grid sizes must be powers of two");
  require(nx >= 4 && ny >= 4, "grid sizes must be at least 4");
  require(dealias_fraction > 0.0 && dealias_fraction <= 1.0,
          "dealias_fraction must lie in (0, 1]");
  require(length > 0.0, "domain length must be positive");
}

int GridSpec::kmax_x() const {
  return std::min(nx / 2 - 1, int(std::floor(dealias_fraction * nx / 2.0 + 1e-12)));
}
int GridSpec::kmax_y() const {
  return std::min(ny / 2 - 1, int(std::floor(dealias_fraction * ny / 2.0 + 1e-12)));
}
bool GridSpec::retained(int kx_, int ky_) const {
  return std::abs(kx_) <= kmax_x() && std::abs(ky_) <= kmax_y();
}

void FlowParams::validate() const {
  require(reynolds > 0.0, "reynolds must be positive");
  require(forcing_wavenumber >= 1, "forcing wavenumber must be a positive integer");
  require(internal_dt > 0.0 && snapshot_dt > 0.0, "time steps must be positive");
  steps_per_snapshot();
}

int FlowParams::steps_per_snapshot() const {
  const double ratio = snapshot_dt / internal_dt;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - double(n)) > 1e-9 * ratio)
    throw InvalidArgument("internal_dt must divide snapshot_dt exactly");
  return int(n);
}

// ---------------------------------------------------------------------------
// Half-spectrum workspace. Fields are held as nx × (ny/2+1) complex arrays
// during time stepping; FlowState keeps the full spectrum.

struct KolmogorovSolver::Impl {
  int nx, ny, nyh;
  Eigen::Index nh, np;
  double nu;
  fftw_plan c2r = nullptr, r2c = nullptr;
  fftw_complex* cbuf = nullptr;
  double* rbuf = nullptr;
  Eigen::ArrayXd kx, ky, k2, mask, weight;
  Eigen::ArrayXcd fx;  // forcing, x component (y component is zero)

  // scratch
  mutable Eigen::ArrayXd u, v, a, b, c;
  mutable Eigen::ArrayXcd f1, f2, f3;

  Impl(const GridSpec& g, const FlowParams& p) : nx(g.nx), ny(g.ny), nyh(g.ny / 2 + 1) {
    nh = Eigen::Index(nx) * nyh;
    np = Eigen::Index(nx) * ny;
    nu = p.nu();
    {
      std::lock_guard<std::mutex> lock(plan_mutex());
      cbuf = fftw_alloc_complex(nh);
      rbuf = fftw_alloc_real(np);
      c2r = fftw_plan_dft_c2r_2d(nx, ny, cbuf, rbuf, FFTW_ESTIMATE);
      r2c = fftw_plan_dft_r2c_2d(nx, ny, rbuf, cbuf, FFTW_ESTIMATE);
    }
    kx.resize(nh); ky.resize(nh); k2.resize(nh); mask.resize(nh); weight.resize(nh);
    fx = Eigen::ArrayXcd::Zero(nh);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < nyh; ++iy) {
        const Eigen::Index h = Eigen::Index(ix) * nyh + iy;
        const int kxi = g.kx(ix), kyi = iy;
        kx[h] = kxi; ky[h] = kyi;
        k2[h] = double(kxi) * kxi + double(kyi) * kyi;
        const bool nyq = (ix == nx / 2) || (iy == ny / 2);
        mask[h] = (!nyq && g.retained(kxi, kyi)) ? 1.0 : 0.0;
        weight[h] = (iy == 0 || iy == ny / 2) ? 1.0 : 2.0;
      }
    const int n = p.forcing_wavenumber;
    if (n < nyh && g.retained(0, n))
      fx[n] = p.forcing_amplitude * Complex(0.0, -0.5);  // sin(ny) = (e^{iny} − e^{−iny})/2i
    u.resize(np); v.resize(np); a.resize(np); b.resize(np); c.resize(np);
    f1.resize(nh); f2.resize(nh); f3.resize(nh);
  }

  ~Impl() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(c2r);
    fftw_destroy_plan(r2c);
    fftw_free(cbuf);
    fftw_free(rbuf);
  }

  void inverse(const Eigen::ArrayXcd& h, Eigen::ArrayXd& phys) const {
    std::copy(h.data(), h.data() + nh, reinterpret_cast<Complex*>(cbuf));
    fftw_execute(c2r);
    std::copy(rbuf, rbuf + np, phys.data());
  }

  void forward(const Eigen::ArrayXd& phys, Eigen::ArrayXcd& h) const {
    std::copy(phys.data(), phys.data() + np, rbuf);
    fftw_execute(r2c);
    const double scale = 1.0 / double(np);
    const Complex* src = reinterpret_cast<const Complex*>(cbuf);
    for (Eigen::Index i = 0; i < nh; ++i) h[i] = src[i] * (scale * mask[i]);
  }

  void project(Eigen::ArrayXcd& hx, Eigen::ArrayXcd& hy) const {
    for (Eigen::Index i = 0; i < nh; ++i) {
      if (k2[i] == 0.0) continue;
      const Complex dot = (kx[i] * hx[i] + ky[i] * hy[i]) / k2[i];
      hx[i] = (hx[i] - kx[i] * dot) * mask[i];
      hy[i] = (hy[i] - ky[i] * dot) * mask[i];
    }
  }

  // out = P[−∇·(u⊗u) + ν∇²u + f]
  void rhs(const Eigen::ArrayXcd& hx, const Eigen::ArrayXcd& hy, Eigen::ArrayXcd& ox,
           Eigen::ArrayXcd& oy) const {
    inverse(hx, u);
    inverse(hy, v);
    a = u * u;
    b = u * v;
    c = v * v;
    forward(a, f1);
    forward(b, f2);
    forward(c, f3);
    ox = -kI * (kx * f1 + ky * f2) - nu * k2 * hx + fx;
    oy = -kI * (kx * f2 + ky * f3) - nu * k2 * hy;
    project(ox, oy);
  }

  // out = P[−∇·(u⊗w + w⊗u) + ν∇²w]
  void linearized(const Eigen::ArrayXcd& bx, const Eigen::ArrayXcd& by,
                  const Eigen::ArrayXcd& wx, const Eigen::ArrayXcd& wy, Eigen::ArrayXcd& ox,
                  Eigen::ArrayXcd& oy) const {
    Eigen::ArrayXd pwx(np), pwy(np);
    inverse(bx, u);
    inverse(by, v);
    inverse(wx, pwx);
    inverse(wy, pwy);
    a = 2.0 * u * pwx;
    b = u * pwy + pwx * v;
    c = 2.0 * v * pwy;
    forward(a, f1);
    forward(b, f2);
    forward(c, f3);
    ox = -kI * (kx * f1 + ky * f2) - nu * k2 * wx;
    oy = -kI * (kx * f2 + ky * f3) - nu * k2 * wy;
    project(ox, oy);
  }

  double energy(const Eigen::ArrayXcd& hx, const Eigen::ArrayXcd& hy) const {
    return 0.5 * (weight * (hx.abs2() + hy.abs2())).sum();
  }

  void to_half(const VectorXc& full, const GridSpec& g, Eigen::ArrayXcd& hx,
               Eigen::ArrayXcd& hy) const {
    hx.resize(nh);
    hy.resize(nh);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < nyh; ++iy) {
        const Eigen::Index h = Eigen::Index(ix) * nyh + iy;
        hx[h] = full[g.index(ix, iy, 0)];
        hy[h] = full[g.index(ix, iy, 1)];
      }
  }

  VectorXc to_full(const Eigen::ArrayXcd& hx, const Eigen::ArrayXcd& hy,
                   const GridSpec& g) const {
    VectorXc full(g.size());
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) {
        if (iy < nyh) {
          const Eigen::Index h = Eigen::Index(ix) * nyh + iy;
          full[g.index(ix, iy, 0)] = hx[h];
          full[g.index(ix, iy, 1)] = hy[h];
        } else {
          const Eigen::Index h = Eigen::Index((nx - ix) % nx) * nyh + (ny - iy);
          full[g.index(ix, iy, 0)] = std::conj(hx[h]);
          full[g.index(ix, iy, 1)] = std::conj(hy[h]);
        }
      }
    return full;
  }
};

KolmogorovSolver::KolmogorovSolver(const GridSpec& grid, const FlowParams& params)
    : grid_(grid), params_(params) {
  grid_.validate();
  params_.validate();
  impl_ = std::make_unique<Impl>(grid_, params_);
}

KolmogorovSolver::~KolmogorovSolver() = default;

namespace {
void check_finite(const VectorXc& c, const char* what) {
  if (!c.allFinite()) throw InvalidArgument(std::string(what) + " contains NaN or Inf");
}
}  // namespace

VectorXc KolmogorovSolver::rhs(const VectorXc& coeffs) const {
  require(coeffs.size() == grid_.size(), "state size does not match grid");
  check_finite(coeffs, "state");
  Eigen::ArrayXcd hx, hy, ox, oy;
  impl_->to_half(coeffs, grid_, hx, hy);
  impl_->rhs(hx, hy, ox, oy);
  return impl_->to_full(ox, oy, grid_);
}

VectorXc KolmogorovSolver::linearized_apply(const VectorXc& base, const VectorXc& v) const {
  require(base.size() == grid_.size() && v.size() == grid_.size(),
          "tangent size does not match grid");
  Eigen::ArrayXcd bx, by, wx, wy, ox, oy;
  impl_->to_half(base, grid_, bx, by);
  impl_->to_half(v, grid_, wx, wy);
  impl_->linearized(bx, by, wx, wy, ox, oy);
  return impl_->to_full(ox, oy, grid_);
}

namespace {

struct Rk4Scratch {
  Eigen::ArrayXcd k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y, tx, ty;
};

void rk4_half(const KolmogorovSolver::Impl& im, double h, Eigen::ArrayXcd& x,
              Eigen::ArrayXcd& y, Rk4Scratch& s) {
  im.rhs(x, y, s.k1x, s.k1y);
  s.tx = x + 0.5 * h * s.k1x;
  s.ty = y + 0.5 * h * s.k1y;
  im.rhs(s.tx, s.ty, s.k2x, s.k2y);
  s.tx = x + 0.5 * h * s.k2x;
  s.ty = y + 0.5 * h * s.k2y;
  im.rhs(s.tx, s.ty, s.k3x, s.k3y);
  s.tx = x + h * s.k3x;
  s.ty = y + h * s.k3y;
  im.rhs(s.tx, s.ty, s.k4x, s.k4y);
  x += (h / 6.0) * (s.k1x + 2.0 * s.k2x + 2.0 * s.k3x + s.k4x);
  y += (h / 6.0) * (s.k1y + 2.0 * s.k2y + 2.0 * s.k3y + s.k4y);
}

}  // namespace

FlowState KolmogorovSolver::step(const FlowState& s) const {
  require(s.coeffs.size() == grid_.size(), "state size does not match grid");
  check_finite(s.coeffs, "state");
  Eigen::ArrayXcd x, y;
  impl_->to_half(s.coeffs, grid_, x, y);
  const double e0 = impl_->energy(x, y);
  Rk4Scratch scratch;
  rk4_half(*impl_, params_.internal_dt, x, y, scratch);
  const double e1 = impl_->energy(x, y);
  const double limit = 1e3 * std::max(e0, point_diagnostics(laminar_state(params_, grid_).coeffs,
                                                            params_, grid_).E);
  if (!std::isfinite(e1) || e1 > limit) {
    std::ostringstream os;
    os << "kinetic energy blew up at t=" << s.time + params_.internal_dt;
    throw DivergenceError(os.str());
  }
  return {impl_->to_full(x, y, grid_), s.time + params_.internal_dt};
}

void KolmogorovSolver::simulate(const FlowState& initial, double duration,
                                const std::function<void(const FlowState&)>& observer) const {
  require(initial.coeffs.size() == grid_.size(), "state size does not match grid");
  check_finite(initial.coeffs, "initial state");
  const double ratio = duration / params_.snapshot_dt;
  const long n_snap = std::lround(ratio);
  require(duration > 0.0 && n_snap >= 1 && std::abs(ratio - double(n_snap)) < 1e-9 * ratio,
          "duration must be a positive multiple of snapshot_dt");
  const int sub = params_.steps_per_snapshot();

  Eigen::ArrayXcd x, y;
  impl_->to_half(initial.coeffs, grid_, x, y);
  const double e_lam =
      point_diagnostics(laminar_state(params_, grid_).coeffs, params_, grid_).E;
  const double limit = 1e3 * std::max(impl_->energy(x, y), e_lam);
  observer(initial);
  Rk4Scratch scratch;
  for (long k = 1; k <= n_snap; ++k) {
    for (int j = 0; j < sub; ++j) {
      rk4_half(*impl_, params_.internal_dt, x, y, scratch);
      const double e = impl_->energy(x, y);
      if (!std::isfinite(e) || e > limit) {
        std::ostringstream os;
        os << std::setprecision(17) << "kinetic energy blew up at t="
           << initial.time + double(k - 1) * params_.snapshot_dt +
                  double(j + 1) * params_.internal_dt;
        throw DivergenceError(os.str());
      }
    }
    observer(FlowState{impl_->to_full(x, y, grid_),
                       initial.time + double(k) * params_.snapshot_dt});
  }
}

// ---------------------------------------------------------------------------

namespace {

// One solver per (grid, params) per thread keeps the free-function API cheap.
const KolmogorovSolver& cached_solver(const GridSpec& g, const FlowParams& p) {
  thread_local std::unique_ptr<KolmogorovSolver> cache;
  auto same = [&](const KolmogorovSolver& s) {
    const auto& a = s.grid();
    const auto& b = s.params();
    return a.nx == g.nx && a.ny == g.ny && a.length == g.length &&
           a.dealias_fraction == g.dealias_fraction && b.reynolds == p.reynolds &&
           b.forcing_wavenumber == p.forcing_wavenumber && b.internal_dt == p.internal_dt &&
           b.snapshot_dt == p.snapshot_dt && b.forcing_amplitude == p.forcing_amplitude;
  };
  if (!cache || !same(*cache)) cache = std::make_unique<KolmogorovSolver>(g, p);
  return *cache;
}

}  // namespace

VectorXc forcing_coeffs(const FlowParams& params, const GridSpec& grid) {
  VectorXc f = VectorXc::Zero(grid.size());
  const int n = params.forcing_wavenumber;
  if (grid.retained(0, n)) {
    f[grid.index(0, grid.iy_of(n), 0)] = params.forcing_amplitude * Complex(0.0, -0.5);
    f[grid.index(0, grid.iy_of(-n), 0)] = params.forcing_amplitude * Complex(0.0, 0.5);
  }
  return f;
}

FlowState laminar_state(const FlowParams& params, const GridSpec& grid) {
  params.validate();
  grid.validate();
  // ν n² A = 1 balances viscosity against sin(ny) forcing.
  const double n = params.forcing_wavenumber;
  const double amp = params.forcing_amplitude * params.reynolds / (n * n);
  FlowState s = zero_state(grid);
  if (grid.retained(0, params.forcing_wavenumber)) {
    s.coeffs[grid.index(0, grid.iy_of(params.forcing_wavenumber), 0)] = Complex(0.0, -0.5 * amp);
    s.coeffs[grid.index(0, grid.iy_of(-params.forcing_wavenumber), 0)] = Complex(0.0, 0.5 * amp);
  }
  return s;
}

FlowState zero_state(const GridSpec& grid) { return {VectorXc::Zero(grid.size()), 0.0}; }

FlowState perturbed_laminar_state(const FlowParams& params, const GridSpec& grid,
                                  double amplitude, std::uint64_t seed) {
  FlowState s = laminar_state(params, grid);
  VectorXc d = VectorXc::Zero(grid.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int kp = std::min({4, grid.kmax_x(), grid.kmax_y()});
  for (int kx = -kp; kx <= kp; ++kx)
    for (int ky = 0; ky <= kp; ++ky) {
      if (ky == 0 && kx <= 0) continue;  // upper half-plane; mirror below
      const Complex c(gauss(rng), gauss(rng));
      const double k = std::hypot(double(kx), double(ky));
      const Complex ux = kI * c * double(ky) / k, uy = -kI * c * double(kx) / k;
      d[grid.index(grid.ix_of(kx), grid.iy_of(ky), 0)] = ux;
      d[grid.index(grid.ix_of(kx), grid.iy_of(ky), 1)] = uy;
      d[grid.index(grid.ix_of(-kx), grid.iy_of(-ky), 0)] = std::conj(ux);
      d[grid.index(grid.ix_of(-kx), grid.iy_of(-ky), 1)] = std::conj(uy);
    }
  d *= amplitude / d.norm();
  s.coeffs += d;
  return s;
}

VectorXc rhs(const FlowState& state, const FlowParams& params, const GridSpec& grid) {
  return cached_solver(grid, params).rhs(state.coeffs);
}

FlowState step(const FlowState& state, const FlowParams& params, const GridSpec& grid) {
  return cached_solver(grid, params).step(state);
}

Trajectory simulate(const FlowState& initial, double duration, const FlowParams& params,
                    const GridSpec& grid) {
  Trajectory t{{}, params, grid};
  cached_solver(grid, params).simulate(initial, duration,
                                       [&](const FlowState& s) { t.states.push_back(s); });
  return t;
}

VectorXc linearized_apply(const FlowState& state, const VectorXc& v, const FlowParams& params,
                          const GridSpec& grid) {
  return cached_solver(grid, params).linearized_apply(state.coeffs, v);
}

PointDiagnostics point_diagnostics(const VectorXc& c, const FlowParams& params,
                                   const GridSpec& grid) {
  PointDiagnostics out;
  const VectorXc f = forcing_coeffs(params, grid);
  // Parseval: (1/L²)∫ a·b = Σ_k conj(â)·b̂ under our normalization.
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy) {
      const Complex ux = c[grid.index(ix, iy, 0)], uy = c[grid.index(ix, iy, 1)];
      const double kx = grid.kx(ix), ky = grid.ky(iy);
      out.E += 0.5 * (std::norm(ux) + std::norm(uy));
      out.D += std::norm(kx * uy - ky * ux);
      out.I += std::real(std::conj(ux) * f[grid.index(ix, iy, 0)] +
                         std::conj(uy) * f[grid.index(ix, iy, 1)]);
    }
  out.D *= params.nu();
  return out;
}

EnergyDiagnostics diagnostics(const Trajectory& trajectory) {
  EnergyDiagnostics d;
  for (const auto& s : trajectory.states) {
    const auto p = point_diagnostics(s.coeffs, trajectory.params, trajectory.grid);
    d.time.push_back(s.time);
    d.input_I.push_back(p.I);
    d.dissipation_D.push_back(p.D);
    d.kinetic_E.push_back(p.E);
  }
  return d;
}

void leray_project(VectorXc& c, const GridSpec& grid) {
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double kx = grid.kx(ix), ky = grid.ky(iy);
      const double k2 = kx * kx + ky * ky;
      if (k2 == 0.0) continue;
      Complex& ux = c[grid.index(ix, iy, 0)];
      Complex& uy = c[grid.index(ix, iy, 1)];
      const Complex dot = (kx * ux + ky * uy) / k2;
      ux -= kx * dot;
      uy -= ky * dot;
    }
}

void dealias(VectorXc& c, const GridSpec& grid) {
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy) {
      const bool nyq = ix == grid.nx / 2 || iy == grid.ny / 2;
      if (nyq || !grid.retained(grid.kx(ix), grid.ky(iy))) {
        c[grid.index(ix, iy, 0)] = 0.0;
        c[grid.index(ix, iy, 1)] = 0.0;
      }
    }
}

double max_divergence(const VectorXc& c, const GridSpec& grid) {
  double m = 0.0;
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy)
      m = std::max(m, std::abs(double(grid.kx(ix)) * c[grid.index(ix, iy, 0)] +
                               double(grid.ky(iy)) * c[grid.index(ix, iy, 1)]));
  return m;
}

double max_conjugate_asymmetry(const VectorXc& c, const GridSpec& grid) {
  double m = 0.0;
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int comp = 0; comp < 2; ++comp) {
        const int jx = (grid.nx - ix) % grid.nx, jy = (grid.ny - iy) % grid.ny;
        m = std::max(m, std::abs(c[grid.index(ix, iy, comp)] -
                                 std::conj(c[grid.index(jx, jy, comp)])));
      }
  return m;
}

VectorXc vorticity(const VectorXc& c, const GridSpec& grid) {
  VectorXc w(Eigen::Index(grid.nx) * grid.ny);
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy)
      w[Eigen::Index(ix) * grid.ny + iy] =
          kI * (double(grid.kx(ix)) * c[grid.index(ix, iy, 1)] -
                double(grid.ky(iy)) * c[grid.index(ix, iy, 0)]);
  return w;
}

Eigen::MatrixXcd physical_component(const VectorXc& c, const GridSpec& grid, int comp) {
  const int nx = grid.nx, ny = grid.ny;
  fftw_complex* buf;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    buf = fftw_alloc_complex(std::size_t(nx) * ny);
    plan = fftw_plan_dft_2d(nx, ny, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  Complex* z = reinterpret_cast<Complex*>(buf);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) z[std::size_t(ix) * ny + iy] = c[grid.index(ix, iy, comp)];
  fftw_execute(plan);
  Eigen::MatrixXcd out(nx, ny);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy) out(ix, iy) = z[std::size_t(ix) * ny + iy];
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
    fftw_free(buf);
  }
  return out;
}

double l2_inner(const VectorXc& a, const VectorXc& b, const GridSpec& grid) {
  return grid.l2_weight() * a.dot(b).real();
}

void write_diagnostics_csv(const std::string& path, const EnergyDiagnostics& d) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << "time,I,D,E\n" << std::setprecision(17);
  for (std::size_t i = 0; i < d.time.size(); ++i)
    os << d.time[i] << ',' << d.input_I[i] << ',' << d.dissipation_D[i] << ','
       << d.kinetic_E[i] << '\n';
}

std::string fft_library_version() { return fftw_version; }

}  // namespace eelab::flow
