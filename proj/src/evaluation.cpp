#include "eelab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "eelab/forecaster.hpp"
#include "eelab/parallel.hpp"

namespace eelab::evaluation {

EventThreshold threshold_from_series(const VectorXd& z, double k) {
  require(z.size() > 0, "threshold needs a nonempty series");
  EventThreshold t;
  t.k = k;
  t.mean = z.mean();
  t.std = std::sqrt((z.array() - t.mean).square().mean());
  t.z_star = t.mean + k * t.std;
  return t;
}

// 2SR/(S+R) in count form, which rounds once.
double ConfusionCounts::f1() const {
  return tp > 0 ? double(2 * tp) / double(2 * tp + fp + fn) : 0.0;
}

ConfusionCounts confusion(const VectorXd& z, const VectorXd& zhat, double z_star, double zhat_star) {
  require(z.size() == zhat.size(), "truth and prediction differ in length");
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const bool obs = z[i] > z_star, pred = zhat[i] > zhat_star;
    if (obs && pred) ++c.tp;
    else if (!obs && !pred) ++c.tn;
    else if (pred) ++c.fp;
    else ++c.fn;
  }
  return c;
}

PrCurve pr_curve(const VectorXd& z, const VectorXd& zhat, double z_star) {
  require(z.size() == zhat.size(), "truth and prediction differ in length");
  require(zhat.allFinite(), "predictions must be finite");
  const Eigen::Index n = z.size();
  long pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) pos += z[i] > z_star;
  if (pos == 0) throw UndefinedMetric("recall is undefined: no true extremes above z* = " +
                                      std::to_string(z_star));
  require(pos < n, "precision-recall needs at least one non-extreme sample");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return zhat[a] > zhat[b]; });

  PrCurve c;
  const double inf = std::numeric_limits<double>::infinity();
  c.thresholds.push_back(inf);
  c.precision.push_back(0.0);
  c.recall.push_back(0.0);
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = zhat[order[i]];
    for (; i < order.size() && zhat[order[i]] == v; ++i) (z[order[i]] > z_star ? tp : fp) += 1;
    // Everything at or above v is now positive, which is ẑ > (next value).
    c.thresholds.push_back(i < order.size() ? zhat[order[i]] : -inf);
    c.precision.push_back(double(tp) / double(tp + fp));
    c.recall.push_back(double(tp) / double(pos));
  }
  c.precision[0] = c.precision[1];
  for (std::size_t i = 1; i < c.recall.size(); ++i)
    c.auc += 0.5 * (c.recall[i] - c.recall[i - 1]) * (c.precision[i] + c.precision[i - 1]);
  return c;
}

std::vector<double> default_rate_grid() {
  std::vector<double> r;
  for (int i = 1; i <= 20; ++i) r.push_back(0.01 * i);
  return r;
}

double quantile(const VectorXd& z, double q) {
  require(z.size() > 0, "quantile of an empty series");
  require(q >= 0.0 && q <= 1.0, "quantile level must be in [0, 1]");
  std::vector<double> s(z.data(), z.data() + z.size());
  std::sort(s.begin(), s.end());
  const double pos = q * double(s.size() - 1);
  const auto i = std::size_t(pos);
  if (i + 1 >= s.size()) return s.back();
  const double a = pos - double(i);
  return (1.0 - a) * s[i] + a * s[i + 1];
}

AlphaStar alpha_star(const VectorXd& z, const VectorXd& zhat, const std::vector<double>& rates) {
  require(!rates.empty(), "event-rate grid is empty");
  for (double w : rates) require(w > 0.0 && w < 1.0, "event rates must lie in (0, 1)");
  require(z.size() >= 2, "alpha* needs at least two samples");
  if (z.maxCoeff() == z.minCoeff())
    throw DegenerateDistribution("all truth values are equal; rate quantiles are degenerate");
  AlphaStar a;
  a.rates = rates;
  a.auc.assign(rates.size(), 0.0);
  parallel_for(int(rates.size()), [&](int i) {
    const double zs = quantile(z, 1.0 - rates[std::size_t(i)]);
    a.auc[std::size_t(i)] = pr_curve(z, zhat, zs).auc;
  });
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double v = a.auc[i] - rates[i];
    if (v > a.value) {
      a.value = v;
      a.best_rate = rates[i];
    }
  }
  return a;
}

namespace {

// Indices of local maxima: the central difference turns from positive to
// non-positive between i and i+1, and the larger sample is taken.
std::vector<Eigen::Index> peak_indices(const VectorXd& z) {
  std::vector<Eigen::Index> out;
  const Eigen::Index n = z.size();
  for (Eigen::Index i = 1; i + 2 < n; ++i) {
    const double d0 = z[i + 1] - z[i - 1], d1 = z[i + 2] - z[i];
    if (d0 > 0.0 && d1 <= 0.0) out.push_back(z[i + 1] > z[i] ? i + 1 : i);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::vector<double> find_events(const VectorXd& z, double dt, double z_star, double t_ee,
                                double t0) {
  require(dt > 0.0, "sample spacing must be positive");
  require(t_ee >= 0.0, "minimum separation must be non-negative");
  std::vector<Eigen::Index> cand;
  for (auto i : peak_indices(z))
    if (z[i] > z_star) cand.push_back(i);
  std::stable_sort(cand.begin(), cand.end(), [&](Eigen::Index a, Eigen::Index b) { return z[a] > z[b]; });
  std::vector<Eigen::Index> kept;
  for (auto i : cand) {
    bool clear = true;
    for (auto k : kept)
      if (double(std::abs(i - k)) * dt < t_ee) {
        clear = false;
        break;
      }
    if (clear) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<double> t;
  for (auto i : kept) t.push_back(t0 + double(i) * dt);
  return t;
}

double median_peak_interval(const VectorXd& z, double dt, double z_star) {
  require(dt > 0.0, "sample spacing must be positive");
  std::vector<double> gaps;
  Eigen::Index prev = -1;
  for (auto i : peak_indices(z)) {
    if (!(z[i] > z_star)) continue;
    if (prev >= 0) gaps.push_back(double(i - prev) * dt);
    prev = i;
  }
  if (gaps.empty()) throw InsufficientData("fewer than two peaks above z*; cannot estimate T_EE");
  VectorXd g = Eigen::Map<VectorXd>(gaps.data(), Eigen::Index(gaps.size()));
  return quantile(g, 0.5);
}

EventCountReport count_events(const VectorXd& z, const VectorXd& zhat, double dt, double z_star,
                              double t_ee) {
  EventCountReport r;
  r.n_true = long(find_events(z, dt, z_star, t_ee).size());
  r.n_pred = long(find_events(zhat, dt, z_star, t_ee).size());
  r.delta = std::abs(r.n_true - r.n_pred);
  r.min_separation = t_ee;
  return r;
}

double tail_distance(const std::vector<double>& p, const std::vector<double>& q,
                     std::string* diagnostic) {
  require(!p.empty() && !q.empty(), "tail distance needs two nonempty sample sets");
  const auto [p_lo, p_hi] = std::minmax_element(p.begin(), p.end());
  const auto [q_lo, q_hi] = std::minmax_element(q.begin(), q.end());
  const double lo = std::max(*p_lo, *q_lo), hi = std::min(*p_hi, *q_hi);
  if (!(hi > lo)) {
    if (diagnostic) {
      std::ostringstream m;
      m << "observed ranges [" << *p_lo << ", " << *p_hi << "] and [" << *q_lo << ", " << *q_hi
        << "] do not overlap";
      *diagnostic = m.str();
    }
    return std::numeric_limits<double>::infinity();
  }
  const auto dp = forecaster::kde_density(p), dq = forecaster::kde_density(q);
  constexpr int n = 512;
  const double h = (hi - lo) / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + h * i;
    const double f = std::abs(std::log(dp(x)) - std::log(dq(x)));
    acc += (i == 0 || i == n - 1) ? 0.5 * f : f;
  }
  if (diagnostic) diagnostic->clear();
  const double width = hi - lo;
  return acc * h / (width * width);
}

MetricReport evaluate(const VectorXd& z, const VectorXd& zhat, double dt, double z_star, double t_ee,
                      double tau, const std::vector<double>& rates) {
  require(z.size() == zhat.size(), "truth and prediction differ in length");
  MetricReport r;
  r.tau = tau;
  r.z_star = z_star;
  r.f1 = confusion(z, zhat, z_star, z_star).f1();
  r.auc = pr_curve(z, zhat, z_star).auc;
  r.alpha_star = alpha_star(z, zhat, rates).value;
  const auto ev = count_events(z, zhat, dt, z_star, t_ee);
  r.n_ee_true = ev.n_true;
  r.n_ee_pred = ev.n_pred;
  r.delta_n_ee = ev.delta;
  r.tail_distance_D = tail_distance(std::vector<double>(z.data(), z.data() + z.size()),
                                    std::vector<double>(zhat.data(), zhat.data() + zhat.size()));
  return r;
}

void write_metric_report(const std::string& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17);
  os << "f1 = " << r.f1 << '\n'
     << "auc = " << r.auc << '\n'
     << "alpha_star = " << r.alpha_star << '\n'
     << "n_ee_true = " << r.n_ee_true << '\n'
     << "n_ee_pred = " << r.n_ee_pred << '\n'
     << "delta_n_ee = " << r.delta_n_ee << '\n'
     << "tail_distance_D = " << r.tail_distance_D << '\n'
     << "tau = " << r.tau << '\n'
     << "z_star = " << r.z_star << '\n';
  if (!os) throw FormatError("write failed for " + path);
}

MetricReport read_metric_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (line.empty() || eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto num = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(path + ": missing key " + k);
    return std::stod(it->second);
  };
  MetricReport r;
  r.f1 = num("f1");
  r.auc = num("auc");
  r.alpha_star = num("alpha_star");
  r.n_ee_true = long(num("n_ee_true"));
  r.n_ee_pred = long(num("n_ee_pred"));
  r.delta_n_ee = long(num("delta_n_ee"));
  r.tail_distance_D = num("tail_distance_D");
  r.tau = num("tau");
  r.z_star = num("z_star");
  return r;
}

void write_pr_csv(const std::string& path, const PrCurve& c) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "threshold,precision,recall\n";
  for (std::size_t i = 0; i < c.thresholds.size(); ++i)
    os << c.thresholds[i] << ',' << c.precision[i] << ',' << c.recall[i] << '\n';
}

}  // namespace eelab::evaluation
