#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "eelab/evaluation.hpp"

using namespace eelab;
using namespace eelab::evaluation;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(Eigen::Index(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

VectorXd normal(long n, std::uint64_t seed, double mean = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(mean, 1.0);
  VectorXd x(n);
  for (long i = 0; i < n; ++i) x[i] = nd(rng);
  return x;
}

std::vector<double> as_std(const VectorXd& x) { return {x.data(), x.data() + x.size()}; }

// Brute-force PR area from confusion counts at every distinct threshold.
double brute_auc(const VectorXd& z, const VectorXd& zhat, double z_star) {
  std::vector<double> th(zhat.data(), zhat.data() + zhat.size());
  th.push_back(-INFINITY);
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (double t : th) {
    const auto c = confusion(z, zhat, z_star, t);
    if (c.tp + c.fp > 0) pts.emplace_back(c.recall(), c.precision());
  }
  double auc = pts.front().first * pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i)
    auc += 0.5 * (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second);
  return auc;
}

}  // namespace

TEST_CASE("event threshold") {
  CHECK(threshold_from_series(VectorXd::Constant(7, 1.25)).z_star == 1.25);
  const auto t = threshold_from_series(vec({0, 0, 0, 0, 10}));
  CHECK(t.mean == 2.0);
  CHECK(t.std == 4.0);
  CHECK(t.z_star == 10.0);
  CHECK(std::abs(threshold_from_series(normal(100000, 1)).z_star - 2.0) < 0.03);
  CHECK_THROWS_AS(threshold_from_series(VectorXd()), InvalidArgument);
}

TEST_CASE("confusion counts and F1") {
  const VectorXd z = normal(300, 2);
  auto c = confusion(z, z, 1.0, 1.0);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.f1() == 1.0);
  c = confusion(vec({1, 3}), vec({3, 1}), 2.0, 2.0);
  CHECK(c.tp == 0);
  CHECK(c.tn == 0);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  const long e = (z.array() > 1.0).count();
  c = confusion(z, VectorXd::Constant(300, -5.0), 1.0, 1.0);
  CHECK(c.fn == e);
  CHECK(c.fp == 0);
  // strict inequality: equality is not extreme
  c = confusion(vec({2.0}), vec({2.0}), 2.0, 2.0);
  CHECK(c.tn == 1);

  ConfusionCounts h;
  h.tp = 8;
  h.fp = 2;
  h.fn = 2;
  CHECK(h.f1() == 0.8);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    ConfusionCounts r;
    r.tp = long(rng() % 20);
    r.fp = long(rng() % 20);
    r.fn = long(rng() % 20);
    r.tn = long(rng() % 20);
    const double S = r.precision(), R = r.recall();
    const double ref = S + R > 0.0 ? 2.0 * S * R / (S + R) : 0.0;
    CHECK(std::abs(r.f1() - ref) < 1e-14);
    if (r.tp > 0) CHECK((r.f1() == 1.0) == (r.fp == 0 && r.fn == 0));
  }
}

TEST_CASE("precision-recall curve") {
  const long n = 10000;
  const VectorXd z = normal(n, 7);
  const double zs = quantile(z, 0.95);
  const double omega = double((z.array() > zs).count()) / double(n);

  SUBCASE("perfect predictor") { CHECK(pr_curve(z, z, zs).auc == doctest::Approx(1.0).epsilon(1e-14)); }
  SUBCASE("independent predictor sits at the event rate") {
    CHECK(std::abs(pr_curve(z, normal(n, 8), zs).auc - omega) < 0.05);
  }
  SUBCASE("constant predictor") {
    const auto c = pr_curve(z, VectorXd::Constant(n, 0.3), zs);
    REQUIRE(c.recall.size() == 2);
    CHECK(c.recall[1] == 1.0);
    CHECK(c.precision[1] == doctest::Approx(omega));
    CHECK(c.auc == doctest::Approx(omega));
  }
  SUBCASE("matches the brute-force sweep") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd t = normal(200, 100 + trial);
      VectorXd p = 0.5 * t + normal(200, 200 + trial);
      // coarse rounding creates ties
      if (trial % 2) p = (p.array() * 4.0).round() / 4.0;
      const double s = quantile(t, 0.9);
      CHECK(pr_curve(t, p, s).auc == doctest::Approx(brute_auc(t, p, s)).epsilon(1e-12));
    }
  }
  SUBCASE("shape and invariance") {
    const VectorXd p = 0.7 * z + normal(n, 11);
    const auto c = pr_curve(z, p, zs);
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
    for (std::size_t i = 1; i < c.recall.size(); ++i) {
      CHECK(c.recall[i] >= c.recall[i - 1]);
      CHECK(c.thresholds[i] < c.thresholds[i - 1]);
    }
    const VectorXd q = (p.array() * 0.5).exp() * 3.0 + 1.0;
    CHECK(pr_curve(z, q, zs).auc == doctest::Approx(c.auc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pr_curve(z, z, 100.0), UndefinedMetric);
}

TEST_CASE("maximum adjusted AUC") {
  const long n = 10000;
  const VectorXd z = normal(n, 21);
  CHECK(alpha_star(z, z).value == doctest::Approx(0.99));
  CHECK(alpha_star(z, z).best_rate == doctest::Approx(0.01));
  CHECK(std::abs(alpha_star(z, normal(n, 22)).value) < 0.05);
  CHECK(alpha_star(z, -z).value <= 0.0);
  const VectorXd p = z + normal(n, 23);
  const VectorXd q = p.array().cube() + 2.0;
  CHECK(alpha_star(z, q).value == doctest::Approx(alpha_star(z, p).value).epsilon(1e-12));
  CHECK_THROWS_AS(alpha_star(VectorXd::Ones(50), VectorXd::Ones(50)), DegenerateDistribution);
  CHECK_THROWS_AS(alpha_star(z, z, {0.0}), InvalidArgument);
}

TEST_CASE("event counting") {
  const double dt = 0.01;
  const long n = 10000;
  VectorXd s(n);
  for (long i = 0; i < n; ++i) s[i] = std::sin(2.0 * M_PI * i * dt / 10.0);
  const auto ev = find_events(s, dt, 0.5, 5.0);
  CHECK(ev.size() == 10);
  CHECK(ev.front() == doctest::Approx(2.5));
  CHECK(median_peak_interval(s, dt, 0.5) == doctest::Approx(10.0));
  CHECK(find_events(s, dt, 1.5, 5.0).empty());

  SUBCASE("equal peaks closer than the separation") {
    VectorXd z = VectorXd::Zero(1000);
    z[300] = 1.0;
    z[400] = 1.0;
    const auto e = find_events(z, dt, 0.5, 5.0);
    REQUIRE(e.size() == 1);
    CHECK(e[0] == doctest::Approx(3.0));
    CHECK(find_events(z, dt, 0.5, 0.5).size() == 2);
  }
  SUBCASE("time shift and quiescent padding") {
    const auto shifted = find_events(s, dt, 0.5, 5.0, 17.0);
    REQUIRE(shifted.size() == ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) CHECK(shifted[i] == doctest::Approx(ev[i] + 17.0));
    VectorXd padded(n + 500);
    padded.head(500).setConstant(-1.0);
    padded.tail(n) = s;
    CHECK(find_events(padded, dt, 0.5, 5.0).size() == 10);
    VectorXd offset = s;
    for (long i = 0; i < n; ++i)
      if (s[i] < 0.0) offset[i] -= 0.3;
    CHECK(find_events(offset, dt, 0.5, 5.0).size() == 10);
  }
  const auto r = count_events(s, VectorXd::Zero(n), dt, 0.5, 5.0);
  CHECK(r.n_true == 10);
  CHECK(r.n_pred == 0);
  CHECK(r.delta == 10);
  CHECK_THROWS_AS(median_peak_interval(VectorXd::Zero(100), dt, 0.5), InsufficientData);
}

TEST_CASE("tail distance") {
  const auto a = as_std(normal(20000, 31));
  CHECK(tail_distance(a, a) == 0.0);
  const auto b = as_std(normal(20000, 32, 0.5));
  CHECK(tail_distance(a, b) == tail_distance(b, a));
  double prev = INFINITY;
  for (double gap : {1.0, 0.5, 0.25}) {
    const double d = tail_distance(a, as_std(normal(20000, 33, gap)));
    CHECK(d > 0.0);
    CHECK(d < prev);
    prev = d;
  }
  std::vector<double> lo(50), hi(50);
  for (int i = 0; i < 50; ++i) {
    lo[std::size_t(i)] = 0.01 * i;
    hi[std::size_t(i)] = 10.0 + 0.01 * i;
  }
  std::string why;
  CHECK(std::isinf(tail_distance(lo, hi, &why)));
  CHECK(why.find("overlap") != std::string::npos);
}

TEST_CASE("report files") {
  const VectorXd z = normal(2000, 41);
  const VectorXd p = 0.8 * z + 0.6 * normal(2000, 42);
  const double zs = threshold_from_series(z).z_star;
  const auto r = evaluate(z, p, 0.1, zs, 1.0, 10.0);
  CHECK(r.auc == pr_curve(z, p, zs).auc);
  CHECK(r.delta_n_ee == std::abs(r.n_ee_true - r.n_ee_pred));
  const auto path = (std::filesystem::temp_directory_path() / "eelab_metrics.txt").string();
  write_metric_report(path, r);
  const auto back = read_metric_report(path);
  CHECK(back.auc == r.auc);
  CHECK(back.tail_distance_D == r.tail_distance_D);
  CHECK(back.n_ee_pred == r.n_ee_pred);
  CHECK(back.z_star == r.z_star);
  std::remove(path.c_str());

  const auto csv = (std::filesystem::temp_directory_path() / "eelab_pr.csv").string();
  write_pr_csv(csv, pr_curve(vec({0, 1, 2, 3}), vec({0, 1, 2, 3}), 1.5));
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "threshold,precision,recall");
  std::getline(is, line);
  CHECK(line == "inf,1,0");
  std::remove(csv.c_str());
}
