#include <algorithm>
#include <cmath>

#include "eelab/forecaster.hpp"

namespace eelab::forecaster {

VectorXd derivative_channel(const VectorXd& g, double dt) {
  require(g.size() >= 3, "precursor needs at least 3 samples");
  require(dt > 0.0, "sample spacing must be positive");
  const Eigen::Index n = g.size();
  VectorXd d(n);
  d[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * dt);
  for (Eigen::Index i = 1; i + 1 < n; ++i) d[i] = (g[i + 1] - g[i - 1]) / (2.0 * dt);
  d[n - 1] = (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * dt);
  return d;
}

std::size_t train_rows(std::size_t n, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction <= 1.0, "train fraction must be in (0, 1]");
  const auto k = std::size_t(std::floor(train_fraction * double(n)));
  return std::clamp<std::size_t>(k, std::min<std::size_t>(n, 2), n);
}

Normalization fit_normalization(const MatrixXd& raw, std::size_t n_train) {
  require(raw.cols() == 2, "precursor has two channels");
  require(n_train >= 1 && n_train <= std::size_t(raw.rows()), "training split out of range");
  const auto head = raw.topRows(Eigen::Index(n_train));
  Normalization nm;
  for (int c = 0; c < 2; ++c) {
    const double m = head.col(c).mean();
    const double var = (head.col(c).array() - m).square().mean();
    nm.mean[c] = m;
    // Round-off in the mean leaves a residue for constant columns.
    const bool flat = std::sqrt(var) <= 1e-12 * std::max(1.0, head.col(c).cwiseAbs().maxCoeff());
    nm.std[c] = flat ? 1.0 : std::sqrt(var);
  }
  return nm;
}

MatrixXd standardize(const MatrixXd& raw, const Normalization& norm) {
  MatrixXd out = raw;
  for (int c = 0; c < 2; ++c) out.col(c) = (raw.col(c).array() - norm.mean[c]) / norm.std[c];
  return out;
}

namespace {

PrecursorSeries finish(std::vector<double> times, MatrixXd raw, double train_fraction) {
  PrecursorSeries s;
  s.times = std::move(times);
  s.norm = fit_normalization(raw, train_rows(std::size_t(raw.rows()), train_fraction));
  s.channels = standardize(raw, s.norm);
  s.raw = std::move(raw);
  return s;
}

}  // namespace

PrecursorSeries build_precursor(const std::vector<double>& times, const VectorXd& gamma1,
                                double train_fraction) {
  require(std::size_t(gamma1.size()) == times.size(), "times and Γ̂_1 differ in length");
  require(times.size() >= 3, "precursor needs at least 3 samples");
  MatrixXd raw(gamma1.size(), 2);
  raw.col(0) = gamma1;
  raw.col(1) = derivative_channel(gamma1, times[1] - times[0]);
  return finish(times, std::move(raw), train_fraction);
}

PrecursorSeries build_precursor(const ftle::FtleSeries& series, double train_fraction) {
  const auto lead = series.leading();
  return build_precursor(series.times, Eigen::Map<const VectorXd>(lead.data(), Eigen::Index(lead.size())),
                         train_fraction);
}

Complex fourier_alpha(const VectorXc& coeffs, const flow::GridSpec& grid) {
  require(coeffs.size() == grid.size(), "state does not match the grid");
  return coeffs[grid.index(1, 0, 1)];
}

PrecursorSeries fourier_precursor(const std::vector<double>& times,
                                  const std::vector<Complex>& alpha, double train_fraction) {
  require(!alpha.empty() && alpha.size() == times.size(), "times and α differ in length");
  MatrixXd raw(Eigen::Index(alpha.size()), 2);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    raw(Eigen::Index(i), 0) = alpha[i].real();
    raw(Eigen::Index(i), 1) = alpha[i].imag();
  }
  return finish(times, std::move(raw), train_fraction);
}

PrecursorSeries fourier_precursor(const flow::Trajectory& traj, double train_fraction) {
  require(!traj.states.empty(), "trajectory is empty");
  std::vector<double> t;
  std::vector<Complex> a;
  for (const auto& s : traj.states) {
    t.push_back(s.time);
    a.push_back(fourier_alpha(s.coeffs, traj.grid));
  }
  return fourier_precursor(t, a, train_fraction);
}

// ---------------------------------------------------------------------------

double DensityEstimate::operator()(double z) const {
  const Eigen::Index n = grid.size();
  if (n < 2 || !(z >= grid[0] && z <= grid[n - 1])) return p_min;
  const double h = (grid[n - 1] - grid[0]) / double(n - 1);
  const double x = (z - grid[0]) / h;
  const auto i = std::min<Eigen::Index>(Eigen::Index(x), n - 2);
  const double a = x - double(i);
  return std::max(p_min, (1.0 - a) * values[i] + a * values[i + 1]);
}

double DensityEstimate::integral() const {
  const Eigen::Index n = grid.size();
  if (n < 2) return 0.0;
  const double h = (grid[n - 1] - grid[0]) / double(n - 1);
  return h * (values.sum() - 0.5 * (values[0] + values[n - 1]));
}

DensityEstimate kde_density(const std::vector<double>& z, int grid_points) {
  require(z.size() >= 10, "density estimation needs at least 10 samples");
  require(grid_points >= 16, "density grid needs at least 16 points");
  const auto n = double(z.size());
  std::vector<double> s = z;
  std::sort(s.begin(), s.end());
  double mean = 0.0;
  for (double v : s) mean += v / n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean) / (n - 1.0);
  const double sigma = std::sqrt(var);
  if (!(sigma > 1e-12 * std::max(std::abs(s.front()), std::abs(s.back()))))
    throw DegenerateDistribution("targets have zero variance");
  const auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto i = std::size_t(pos);
    const double a = pos - double(i);
    return i + 1 < s.size() ? (1.0 - a) * s[i] + a * s[i + 1] : s.back();
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double spread = iqr > 0.0 ? std::min(sigma, iqr / 1.34) : sigma;
  DensityEstimate d;
  d.bandwidth = 0.9 * spread * std::pow(n, -0.2);

  const double lo = s.front() - 4.0 * d.bandwidth, hi = s.back() + 4.0 * d.bandwidth;
  d.grid = VectorXd::LinSpaced(grid_points, lo, hi);
  d.values = VectorXd::Zero(grid_points);
  const double step = (hi - lo) / double(grid_points - 1);
  const double norm = 1.0 / (n * d.bandwidth * std::sqrt(2.0 * M_PI));
  // The kernel is cut at 8 bandwidths; beyond that it is below 1e-14.
  const auto reach = Eigen::Index(std::ceil(8.0 * d.bandwidth / step));
  for (double v : s) {
    const auto c = Eigen::Index(std::lround((v - lo) / step));
    for (Eigen::Index i = std::max<Eigen::Index>(0, c - reach);
         i <= std::min<Eigen::Index>(grid_points - 1, c + reach); ++i) {
      const double u = (d.grid[i] - v) / d.bandwidth;
      d.values[i] += norm * std::exp(-0.5 * u * u);
    }
  }
  d.values /= d.integral();
  d.p_min = std::max(1e-4 * d.values.maxCoeff(), 1e-6);
  d.values = d.values.cwiseMax(d.p_min);
  const double total = d.integral();
  d.values /= total;
  d.p_min /= total;
  return d;
}

double owmae_loss(const VectorXd& pred, const VectorXd& target, const VectorXd& pz) {
  require(pred.size() == target.size() && pred.size() == pz.size(), "loss inputs differ in length");
  require(pred.size() > 0, "loss needs at least one sample");
  require((pz.array() > 0.0).all(), "density values must be positive");
  return ((pred - target).array().abs() / pz.array()).mean();
}

double owmae_loss(const VectorXd& pred, const VectorXd& target, const DensityEstimate& density) {
  VectorXd pz(target.size());
  for (Eigen::Index i = 0; i < target.size(); ++i) pz[i] = density(target[i]);
  return owmae_loss(pred, target, pz);
}

}  // namespace eelab::forecaster
