// Acceptance runner: one pass/fail line per criterion.
//
//   eelab_acceptance [--only LIST] [--expect-fail LIST] [--duration T]
//
// Exits 0 when every criterion passes or is listed in --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "checks.hpp"
#include "eelab/pipeline.hpp"

using namespace eelab;
using checks::Outcome;

namespace {

using Clock = std::chrono::steady_clock;

void progress(const std::string& msg) {
  static const auto t0 = Clock::now();
  std::cerr << "[" << std::fixed << std::setprecision(0)
            << std::chrono::duration<double>(Clock::now() - t0).count() << " s] " << msg << std::endl;
  std::cerr.unsetf(std::ios::fixed);
}

std::string fmt(std::initializer_list<std::pair<const char*, double>> kv) {
  std::ostringstream os;
  os.precision(4);
  bool first = true;
  for (const auto& [k, v] : kv) {
    os << (first ? "" : ", ") << k << " = " << v;
    first = false;
  }
  return os.str();
}

double pearson(const double* a, const double* b, long n) {
  const Eigen::Map<const VectorXd> x(a, n), y(b, n);
  const VectorXd dx = x.array() - x.mean(), dy = y.array() - y.mean();
  return dx.dot(dy) / std::sqrt(dx.squaredNorm() * dy.squaredNorm());
}

// First n snapshots of a record.
pipeline::FlowRecord head(const pipeline::FlowRecord& r, std::size_t n) {
  pipeline::FlowRecord h;
  n = std::min(n, r.size());
  const auto cut = [n](const auto& v) { return std::decay_t<decltype(v)>(v.begin(), v.begin() + long(n)); };
  h.times = cut(r.times);
  h.I = cut(r.I);
  h.D = cut(r.D);
  h.E = cut(r.E);
  h.alpha = cut(r.alpha);
  h.coords_K = r.coords_K;
  h.coords = cut(r.coords);
  return h;
}

// Everything the desk-run criteria need from one seeded run.
struct DeskRun {
  pipeline::Settings s;
  flow::FlowState start;
  pipeline::FlowRecord rec;
  std::shared_ptr<const surrogate::QuadraticSurrogate> model;
  ftle::FtleSeries ftle;  // data-driven, r = 6
};

DeskRun desk_run(pipeline::Settings s) {
  DeskRun d;
  progress("seed " + std::to_string(s.seed) + ": spin-up and " + std::to_string(int(s.duration)) + " time units");
  d.start = pipeline::spun_up_state(s);
  d.rec = pipeline::record_observables(pipeline::simulation_replay(s, d.start), s);
  progress("fitting the surrogate");
  d.model = std::make_shared<const surrogate::QuadraticSurrogate>(pipeline::fit_surrogate(d.rec, s).fit.model);
  progress("data-driven OTD");
  d.ftle = ftle::ftle_series(pipeline::run_otd(d.rec, s, d.model).stream, s.window);
  d.s = std::move(s);
  return d;
}

// Γ̂_1 and D at the FTLE window ends.
std::pair<VectorXd, VectorXd> gamma_and_d(const DeskRun& d) {
  const auto g = d.ftle.leading();
  VectorXd gv(Eigen::Index(g.size())), dv(Eigen::Index(g.size()));
  const double dt = d.rec.snapshot_dt();
  for (std::size_t i = 0; i < g.size(); ++i) {
    gv[Eigen::Index(i)] = g[i];
    dv[Eigen::Index(i)] = d.rec.D[std::size_t(std::lround((d.ftle.times[i] - d.rec.times.front()) / dt))];
  }
  return {gv, dv};
}

Outcome linearization_oracle(const DeskRun& d) {
  const auto& s = d.s;
  const surrogate::ModeSet& set = d.model->modes();
  const flow::KolmogorovSolver solver(s.grid, s.flow);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  const auto tangent = [&] {
    VectorXc c(set.size());
    for (int i = 0; i < set.size(); ++i)
      if (set.upper(i)) c[i] = Complex(nd(rng), nd(rng));
    for (int i = 0; i < set.size(); ++i)
      if (!set.upper(i)) c[i] = std::conj(c[set.conjugate(i)]);
    VectorXc v = surrogate::from_solenoidal(c, set, s.grid);
    return VectorXc(v / v.norm());
  };
  double worst = 0.0, mean = 0.0, worst_exact = 0.0;
  int n = 0;
  const auto F = [&](const VectorXc& y) { return solver.rhs(y); };
  for (std::size_t k = 0; k < 10 && 2 * k < d.rec.held.size(); ++k) {
    const VectorXc& u = d.rec.held[2 * k].coeffs;
    for (int j = 0; j < 20; ++j) {
      const VectorXc v = tangent();
      const VectorXc lv = solver.linearized_apply(u, v);
      const VectorXc ref = surrogate::to_solenoidal(lv, s.grid, set);
      const VectorXc got = surrogate::to_solenoidal(surrogate::jvp(*d.model, u, v, {}), s.grid, set);
      const double e = (got - ref).norm() / ref.norm();
      worst = std::max(worst, e);
      mean += e;
      ++n;
      const VectorXc ex = surrogate::jvp_fn(F, u, v, {1e-6, surrogate::JvpConfig::Scheme::Central});
      worst_exact = std::max(worst_exact, (ex - lv).norm() / lv.norm());
    }
  }
  return {5, "linearization-oracle", n == 200 && worst < 1e-2 && worst_exact < 1e-6,
          fmt({{"pairs", double(n)},
               {"surrogate max error", worst},
               {"surrogate mean error", mean / std::max(n, 1)},
               {"exact-rhs max error", worst_exact}})};
}

Outcome dd_vs_exact(const DeskRun& d, const ftle::FtleSeries& dd6_500) {
  pipeline::Settings s = d.s;
  // Subspace alignment over the first 7 time units, checkpoint every 0.5.
  s.checkpoint_every = 0.5;
  s.duration = 7.0;
  const auto short_rec = head(d.rec, std::size_t(std::lround(7.0 / d.rec.snapshot_dt())) + 1);
  const auto dd = pipeline::run_otd(short_rec, s, d.model);
  const auto ex = pipeline::run_otd_exact(pipeline::simulation_replay(s, d.start), s);
  double align = 0.0;
  const std::size_t nc = std::min(dd.checkpoints.size(), ex.checkpoints.size());
  for (std::size_t i = 0; i < nc; ++i)
    align = std::max(align, otd::subspace_distance(dd.checkpoints[i], ex.checkpoints[i]) / std::sqrt(2.0 * s.r));

  // Leading FTLE over 500 time units.
  progress("equation-based OTD over 500 time units");
  s.checkpoint_every = 0.0;
  s.duration = 500.0;
  const auto exact = ftle::ftle_series(pipeline::run_otd_exact(pipeline::simulation_replay(s, d.start), s).stream,
                                       s.window)
                         .leading();
  const auto ddl = dd6_500.leading();
  const long n = long(std::min(exact.size(), ddl.size()));
  const double r = pearson(ddl.data(), exact.data(), n);
  return {7, "data-driven-vs-exact-otd", nc == 14 && align < 0.1 && r > 0.9,
          fmt({{"checkpoints", double(nc)}, {"max alignment error", align}, {"FTLE Pearson r", r}})};
}

// Cross-correlation of Γ̂_1(t) with D(t + lag), lags in samples.
VectorXd cross_correlation(const VectorXd& g, const VectorXd& D, int max_lag) {
  VectorXd c(2 * max_lag + 1);
  const long n = g.size();
  for (int l = -max_lag; l <= max_lag; ++l) {
    const long a0 = std::max<long>(0, -l), a1 = std::min<long>(n, n - l);
    c[l + max_lag] = pearson(g.data() + a0, D.data() + a0 + l, a1 - a0);
  }
  return c;
}

Outcome lead_lag(const std::vector<const DeskRun*>& runs) {
  const double stride = runs.front()->ftle.stride;
  const int max_lag = int(std::lround(20.0 / stride));
  VectorXd avg = VectorXd::Zero(2 * max_lag + 1);
  std::ostringstream per_seed;
  per_seed.precision(3);
  for (const DeskRun* d : runs) {
    const auto [g, D] = gamma_and_d(*d);
    const VectorXd c = cross_correlation(g, D, max_lag);
    Eigen::Index k;
    c.maxCoeff(&k);
    per_seed << (per_seed.tellp() > 0 ? ", " : "") << (double(k) - max_lag) * stride;
    avg += c / double(runs.size());
  }
  Eigen::Index k;
  const double peak = avg.maxCoeff(&k);
  const double lead = (double(k) - max_lag) * stride;
  return {8, "precursor-lead-lag", runs.size() == 3 && lead > 0.0,
          fmt({{"lead of averaged peak", lead}, {"peak correlation", peak}}) + ", per-seed leads " +
              per_seed.str()};
}

Outcome comparative_skill(const DeskRun& d) {
  pipeline::Settings s = d.s;
  const auto f = pipeline::build_features(d.rec, d.ftle, s);
  const double tau = 10.0;
  const auto e_ftle = pipeline::make_experiment(f, pipeline::Precursor::Ftle, tau, s);
  const auto e_four = pipeline::make_experiment(f, pipeline::Precursor::Fourier, tau, s);
  int wins = 0;
  std::ostringstream aucs;
  aucs.precision(3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    s.train.seed = seed;
    double auc[2];
    int i = 0;
    for (const auto* e : {&e_ftle, &e_four}) {
      progress("training seed " + std::to_string(seed) + (i ? " Fourier" : " FTLE"));
      const auto m = forecaster::train(e->data, e->train_ends, s.dims, s.train).model;
      const auto p = pipeline::predict_terminal(m, *e, f, e->test_ends);
      auc[i++] = evaluation::pr_curve(p.truth, p.pred, e->threshold.z_star).auc;
    }
    wins += auc[0] >= auc[1];
    aucs << (seed > 1 ? "; " : "") << auc[0] << " vs " << auc[1];
  }
  return {12, "comparative-skill", wins >= 4,
          fmt({{"FTLE wins of 5", double(wins)}}) + ", PR-AUC FTLE vs Fourier " + aucs.str()};
}

Outcome r_convergence(const DeskRun& d, const ftle::FtleSeries& dd6_500) {
  pipeline::Settings s = d.s;
  const auto rec = head(d.rec, std::size_t(std::lround(500.0 / d.rec.snapshot_dt())) + 1);
  std::map<int, std::vector<double>> g;
  g[6] = dd6_500.leading();
  for (int r : {2, 8}) {
    progress("data-driven OTD with r = " + std::to_string(r));
    s.r = r;
    g[r] = ftle::ftle_series(pipeline::run_otd(rec, s, d.model).stream, s.window).leading();
  }
  const std::size_t n = std::min({g[2].size(), g[6].size(), g[8].size()});
  double dev6 = 0.0, dev2 = 0.0, mean6 = 0.0;
  const auto [lo, hi] = std::minmax_element(g[8].begin(), g[8].begin() + long(n));
  for (std::size_t i = 0; i < n; ++i) {
    dev6 = std::max(dev6, std::abs(g[6][i] - g[8][i]));
    dev2 = std::max(dev2, std::abs(g[2][i] - g[8][i]));
    mean6 += std::abs(g[6][i] - g[8][i]) / double(n);
  }
  const double range = *hi - *lo;
  return {13, "r-convergence", dev6 < 0.1 * range && dev2 > dev6,
          fmt({{"max |G6-G8| / range", dev6 / range},
               {"mean |G6-G8| / range", mean6 / range},
               {"max |G2-G8| / range", dev2 / range}})};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-13", "eelab_acceptance"};
  std::string only, expect_fail;
  double duration = 3000.0, lead_duration = 2000.0;
  app.add_option("--only", only, "comma-separated criteria to run (default: all)");
  app.add_option("--expect-fail", expect_fail, "criteria whose failure does not fail the run");
  app.add_option("--duration", duration, "desk-run length for criteria 5, 7, 12, 13 and the first lead-lag seed")
      ->capture_default_str();
  app.add_option("--lead-duration", lead_duration, "length of the two extra lead-lag runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  std::set<int> want = parse_list(only);
  if (want.empty())
    for (int i = 1; i <= 13; ++i) want.insert(i);
  const std::set<int> xfail = parse_list(expect_fail);

  std::map<int, Outcome> results;
  for (const auto& c : checks::quick_suite())
    if (want.count(c.id)) {
      progress("criterion " + std::to_string(c.id));
      results[c.id] = checks::guarded(c.id, c.name, c.run);
    }

  const std::set<int> heavy = {5, 7, 8, 12, 13};
  if (std::any_of(heavy.begin(), heavy.end(), [&](int i) { return want.count(i) > 0; })) {
    Config cfg;
    cfg.set("flow.duration", std::to_string(duration));
    cfg.set("run.seed", "1");
    cfg.set("forecaster.steps", "1000");
    cfg.set("forecaster.batch", "32");
    cfg.set("forecaster.final_lr_scale", "0.1");
    const auto base = pipeline::settings_from(cfg);
    std::optional<DeskRun> main_run;
    try {
      main_run = desk_run(base);
    } catch (const std::exception& e) {
      for (int i : heavy) results[i] = {i, "desk-run", false, std::string("error: ") + e.what()};
    }
    if (main_run) {
      const DeskRun& d = *main_run;
      ftle::FtleSeries dd6_500 = d.ftle;
      while (!dd6_500.times.empty() && dd6_500.times.back() > 500.0 + 1e-9) {
        dd6_500.times.pop_back();
        dd6_500.gammas.pop_back();
      }
      if (want.count(5)) results[5] = checks::guarded(5, "linearization-oracle", [&] { return linearization_oracle(d); });
      if (want.count(7))
        results[7] = checks::guarded(7, "data-driven-vs-exact-otd", [&] { return dd_vs_exact(d, dd6_500); });
      if (want.count(13)) results[13] = checks::guarded(13, "r-convergence", [&] { return r_convergence(d, dd6_500); });
      if (want.count(8))
        results[8] = checks::guarded(8, "precursor-lead-lag", [&] {
          std::vector<DeskRun> extra;
          for (std::uint64_t seed : {2, 3}) {
            pipeline::Settings s = base;
            s.seed = s.train.seed = seed;
            s.duration = lead_duration;
            extra.push_back(desk_run(s));
            extra.back().rec.coords.clear();
            extra.back().rec.coords.shrink_to_fit();
          }
          return lead_lag({&d, &extra[0], &extra[1]});
        });
      if (want.count(12)) results[12] = checks::guarded(12, "comparative-skill", [&] { return comparative_skill(d); });
    }
  }

  bool ok = true;
  for (const auto& [id, o] : results) {
    std::cout << checks::format(o);
    if (!o.pass && xfail.count(id)) std::cout << " [expected failure]";
    std::cout << std::endl;
    if (!o.pass && !xfail.count(id)) ok = false;
  }
  return ok ? 0 : 1;
}
