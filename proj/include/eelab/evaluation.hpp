#pragma once

// Extreme-event labels and skill measures for a forecast of a scalar
// observable. A sample is extreme when it strictly exceeds its threshold.

#include <limits>
#include <string>
#include <vector>

#include "eelab/common.hpp"

namespace eelab::evaluation {

struct EventThreshold {
  double z_star = 0.0;
  double k = 2.0;
  double mean = 0.0;
  double std = 0.0;  // population
};

/// z* = mean + k·std over the given (training) series.
EventThreshold threshold_from_series(const VectorXd& z, double k = 2.0);

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long total() const { return tp + tn + fp + fn; }
  /// 0 when nothing is predicted extreme.
  double precision() const { return tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0; }
  /// 0 when nothing is truly extreme.
  double recall() const { return tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0; }
  /// Harmonic mean of precision and recall, 0 when both vanish.
  double f1() const;
};

ConfusionCounts confusion(const VectorXd& z, const VectorXd& zhat, double z_star, double zhat_star);

/// Points ordered by descending threshold, so recall is non-decreasing along
/// the vectors. Entry 0 is the recall-0 anchor at threshold +∞.
struct PrCurve {
  std::vector<double> thresholds;
  std::vector<double> precision;
  std::vector<double> recall;
  double auc = 0.0;
};

/// Sweeps ẑ* over the distinct predicted values and −∞ with ẑ > ẑ* as the
/// predicted label. Throws UndefinedMetric when the truth has no extremes.
PrCurve pr_curve(const VectorXd& z, const VectorXd& zhat, double z_star);

/// 0.01, 0.02, ..., 0.20.
std::vector<double> default_rate_grid();

struct AlphaStar {
  double value = -std::numeric_limits<double>::infinity();
  double best_rate = 0.0;
  std::vector<double> rates;
  std::vector<double> auc;  // per rate
};

/// max over ω of AUC(ω) − ω with z* at the (1 − ω) quantile of z. The value
/// is not clipped: anti-predictors give α* ≤ 0.
AlphaStar alpha_star(const VectorXd& z, const VectorXd& zhat,
                     const std::vector<double>& rates = default_rate_grid());

/// Linear-interpolation quantile of the sorted values, q in [0, 1].
double quantile(const VectorXd& z, double q);

/// Peaks of z above z* on a uniform grid t_i = t0 + i·dt. Candidates are
/// sign changes of the central-difference derivative; peaks closer than
/// t_ee to a larger (or equal and earlier) kept peak are suppressed.
std::vector<double> find_events(const VectorXd& z, double dt, double z_star, double t_ee,
                                double t0 = 0.0);

/// Median spacing of consecutive over-threshold peaks before suppression.
double median_peak_interval(const VectorXd& z, double dt, double z_star);

struct EventCountReport {
  long n_true = 0;
  long n_pred = 0;
  long delta = 0;
  double min_separation = 0.0;
};

EventCountReport count_events(const VectorXd& z, const VectorXd& zhat, double dt, double z_star,
                              double t_ee);

/// (1/|Ω|²)·∫_Ω |log p − log q| over the overlap Ω of the observed ranges,
/// with both densities from kde_density and a 512-point trapezoid. Returns
/// +∞ when the ranges do not overlap and explains why in `diagnostic`.
double tail_distance(const std::vector<double>& p, const std::vector<double>& q,
                     std::string* diagnostic = nullptr);

struct MetricReport {
  double f1 = 0.0;
  double auc = 0.0;
  double alpha_star = 0.0;
  long n_ee_true = 0;
  long n_ee_pred = 0;
  long delta_n_ee = 0;
  double tail_distance_D = 0.0;
  double tau = 0.0;
  double z_star = 0.0;
};

/// All measures for a terminal-value prediction series, with ẑ* = z*.
MetricReport evaluate(const VectorXd& z, const VectorXd& zhat, double dt, double z_star, double t_ee,
                      double tau, const std::vector<double>& rates = default_rate_grid());

// `key = value` lines, full round-trip precision.
void write_metric_report(const std::string& path, const MetricReport& r);
MetricReport read_metric_report(const std::string& path);
// threshold,precision,recall
void write_pr_csv(const std::string& path, const PrCurve& c);

}  // namespace eelab::evaluation
