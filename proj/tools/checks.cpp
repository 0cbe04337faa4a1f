#include "checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "eelab/evaluation.hpp"
#include "eelab/flow/kolmogorov.hpp"
#include "eelab/forecaster.hpp"
#include "eelab/ftle.hpp"
#include "eelab/otd.hpp"
#include "eelab/testbeds.hpp"

namespace eelab::checks {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
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

VectorXd normal(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VectorXd x(n);
  for (long i = 0; i < n; ++i) x[i] = nd(rng);
  return x;
}

}  // namespace

Outcome energy_balance() {
  const auto t0 = Clock::now();
  flow::GridSpec g;
  flow::FlowParams p;
  const flow::KolmogorovSolver solver(g, p);
  std::vector<double> t, I, D, E;
  solver.simulate(flow::perturbed_laminar_state(p, g, 0.5, 11), 100.0, [&](const flow::FlowState& s) {
    const auto d = flow::point_diagnostics(s.coeffs, p, g);
    t.push_back(s.time);
    I.push_back(d.I);
    D.push_back(d.D);
    E.push_back(d.E);
  });
  double net = 0.0, dint = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double h = t[i] - t[i - 1];
    net += 0.5 * h * ((I[i] - D[i]) + (I[i - 1] - D[i - 1]));
    dint += 0.5 * h * (D[i] + D[i - 1]);
  }
  const double err = std::abs(E.back() - E.front() - net) / dint;
  const double secs = seconds_since(t0);
  return {1, "energy-balance", err < 1e-3 && secs < 120.0, fmt({{"relative imbalance", err}, {"seconds", secs}})};
}

Outcome laminar_oracle() {
  flow::GridSpec g;
  double worst_res = 0.0, worst_rel = 0.0;
  for (int n : {1, 4}) {
    flow::FlowParams p;
    p.forcing_wavenumber = n;
    const auto lam = flow::laminar_state(p, g);
    const double expect = p.reynolds / (2.0 * n * n);
    const auto d = flow::point_diagnostics(lam.coeffs, p, g);
    worst_rel = std::max({worst_rel, std::abs(d.D - expect) / expect, std::abs(d.I - expect) / expect});
    if (n == 1) worst_res = flow::rhs(lam, p, g).cwiseAbs().maxCoeff();
  }
  return {2, "laminar-oracle", worst_res < 1e-10 && worst_rel < 1e-8,
          fmt({{"rhs residual", worst_res}, {"D, I relative error", worst_rel}})};
}

Outcome lti_ftle() {
  MatrixXd L = MatrixXd::Zero(2, 2);
  L(0, 0) = 0.3;
  L(1, 1) = -0.1;
  double worst = 0.0;
  for (double T : {1.0, 5.0, 20.0}) {
    std::vector<otd::ReducedOperator> stream;
    for (int k = 0; k <= int(std::lround((T + 2.0) / 0.1)); ++k) stream.push_back({L, L, VectorXd(), k * 0.1});
    const auto s = ftle::ftle_series(stream, {T, 0.1, 0.01});
    if (s.size() == 0) return {3, "lti-ftle", false, "no windows"};
    for (const auto& gm : s.gammas)
      worst = std::max({worst, std::abs(gm[0] - 0.3), std::abs(gm[1] + 0.1)});
  }
  return {3, "lti-ftle", worst < 1e-6, fmt({{"max deviation", worst}})};
}

Outcome oracle_equivalence() {
  const auto sys = testbeds::lorenz_system();
  const double h = 0.001;
  VectorXd u = testbeds::integrate(sys, VectorXd::Ones(3), h, 10000).back();
  otd::OtdTracker<double> tr(otd::init_basis_generic(3, 3, 1),
                             [&](const VectorXd& x, const MatrixXd& V) -> MatrixXd {
                               MatrixXd out(3, V.cols());
                               for (Eigen::Index j = 0; j < V.cols(); ++j)
                                 out.col(j) = sys.apply_jacobian(x, V.col(j));
                               return out;
                             },
                             h);
  std::vector<VectorXd> states;
  const int n = int(std::lround(5.4 / h));
  for (int k = 0; k <= n; ++k) {
    states.push_back(u);
    tr.push(u, k * h);
    u = testbeds::rk4_step(sys, u, h);
  }
  const auto s = ftle::ftle_series(tr.stream(), {0.5, 0.1, h});
  double worst = 0.0;
  for (std::size_t w = 0; w < s.size(); ++w) {
    const auto start = std::size_t(std::lround((s.times[w] - 0.5) / h));
    const auto full = testbeds::full_ftle_oracle(sys, states[start], 0.5, h);
    worst = std::max(worst, (full.exponents - s.gammas[w]).cwiseAbs().maxCoeff());
  }
  return {4, "oracle-equivalence", s.size() == 50 && worst < 1e-4,
          fmt({{"windows", double(s.size())}, {"max deviation", worst}})};
}

Outcome otd_properties() {
  flow::GridSpec g;
  flow::FlowParams p;
  const flow::KolmogorovSolver solver(g, p);
  otd::OtdTracker<Complex> tr(otd::init_basis_kolmogorov(6, g), otd::exact_flow_operator(p, g), 0.05);
  solver.simulate(flow::perturbed_laminar_state(p, g, 0.5, 3), 100.0,
                  [&](const flow::FlowState& s) { tr.push(s.coeffs, s.time); });
  const double ortho = tr.max_orthonormality_error();

  const MatrixXd A = Eigen::Vector3d(1.0, -1.0, -2.0).asDiagonal();
  otd::OtdTracker<double> lti(otd::init_basis_generic(2, 3, 6),
                              [A](const VectorXd&, const MatrixXd& V) -> MatrixXd { return A * V; }, 0.01);
  const auto sys = testbeds::lti_system(A);
  VectorXd u = VectorXd::Ones(3);
  for (int k = 0; k <= 200; ++k) {
    lti.push(u, k * 0.1);
    for (int j = 0; j < 10; ++j) u = testbeds::rk4_step(sys, u, 0.01);
  }
  MatrixXd P = MatrixXd::Zero(3, 3);
  P(0, 0) = P(1, 1) = 1.0;
  const MatrixXd& V = lti.basis().modes;
  const double conv = (V * V.transpose() - P).norm();
  return {6, "otd-properties", ortho < 1e-8 && conv < 1e-3,
          fmt({{"max orthonormality error", ortho}, {"LTI projector error", conv}})};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto spec = forecaster::WindowSpec::make(0.4, 0.1);
  forecaster::ModelDims dims;
  dims.d = 8;
  dims.heads = 2;
  dims.n_enc = 2;
  dims.n_dec = 1;
  dims.d_ff = 16;
  dims.dropout = 0.0;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  forecaster::Sample x;
  x.input = MatrixXd(spec.n_lookback, 2).unaryExpr([&](double) { return nd(rng); });
  x.seed = VectorXd::Zero(spec.decoder_length());
  for (int i = 0; i < spec.n_label; ++i) x.seed[i] = nd(rng);
  // Targets far from the outputs keep |e| away from its kink.
  x.target = VectorXd(spec.n_horizon).unaryExpr([&](double) { return 10.0 + nd(rng); });
  x.weight = VectorXd(spec.n_horizon).unaryExpr([&](double) { return 0.5 + std::abs(nd(rng)); });
  forecaster::ForecastModel m(dims, spec, 9);
  for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] += 0.05 * nd(rng);
  VectorXd grad = VectorXd::Zero(m.params().size());
  m.loss(x, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_group;
  for (const auto& grp : m.groups()) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < grp.size(); ++j) {
      const Eigen::Index k = grp.offset + j;
      const double keep = m.params()[k];
      m.params()[k] = keep + h;
      const double up = m.loss(x);
      m.params()[k] = keep - h;
      const double dn = m.loss(x);
      m.params()[k] = keep;
      const double fd = (up - dn) / (2.0 * h);
      num += (fd - grad[k]) * (fd - grad[k]);
      den += fd * fd;
    }
    // Key-bias gradients vanish exactly; compare them on an absolute scale.
    const double err = std::sqrt(num) / std::max(std::sqrt(den), 1e-4);
    if (err > worst) {
      worst = err;
      worst_group = grp.name;
    }
  }
  const double secs = seconds_since(t0);
  return {9, "gradient-check", worst < 1e-4 && secs < 60.0,
          fmt({{"groups", double(m.groups().size())}, {"worst relative error", worst}, {"seconds", secs}}) +
              " (" + worst_group + ")"};
}

Outcome loss_properties() {
  VectorXd p(2), t(2), w(2);
  p << 1.0, -1.0;
  t << 0.0, 0.0;
  w << 0.5, 0.25;
  const double hand = forecaster::owmae_loss(p, t, w);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  int violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + int(rng() % 20);
    VectorXd a(n), b(n), pz(n);
    for (int i = 0; i < n; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      pz[i] = u(rng);
    }
    VectorXd rarer = pz;
    rarer[int(rng() % std::uint64_t(n))] *= 0.5;
    if (!(forecaster::owmae_loss(a, b, rarer) > forecaster::owmae_loss(a, b, pz))) ++violations;
  }
  return {10, "loss-properties", hand == 3.0 && violations == 0,
          fmt({{"hand example", hand}, {"monotonicity violations", double(violations)}})};
}

Outcome metric_suite() {
  namespace ev = evaluation;
  const long n = 10000;
  const VectorXd z = normal(n, 7);
  const double zs = ev::quantile(z, 0.95);
  const double omega = double((z.array() > zs).count()) / double(n);
  std::vector<double> perm(z.data(), z.data() + n);
  std::mt19937_64 rng(12);
  std::shuffle(perm.begin(), perm.end(), rng);
  const VectorXd zp = Eigen::Map<const VectorXd>(perm.data(), n);

  const double perfect = ev::pr_curve(z, z, zs).auc;
  const double permuted = ev::pr_curve(z, zp, zs).auc;
  const double alpha = ev::alpha_star(z, zp).value;
  ev::ConfusionCounts c;
  c.tp = 8;
  c.fp = 2;
  c.fn = 2;
  const double f1 = c.f1();
  const std::vector<double> sample(z.data(), z.data() + n);
  const double d_same = ev::tail_distance(sample, sample);
  VectorXd s(10000);
  for (long i = 0; i < s.size(); ++i) s[i] = std::sin(2.0 * M_PI * i * 0.01 / 10.0);
  const auto events = ev::find_events(s, 0.01, 0.5, 5.0);

  const bool ok = std::abs(perfect - 1.0) < 1e-12 && std::abs(permuted - omega) < 0.05 &&
                  std::abs(alpha) < 0.05 && f1 == 0.8 && d_same == 0.0 && events.size() == 10;
  return {11, "metric-suite", ok,
          fmt({{"perfect AUC", perfect},
               {"permuted AUC - rate", permuted - omega},
               {"permuted alpha*", alpha},
               {"F1", f1},
               {"D(identical)", d_same},
               {"sine events", double(events.size())}})};
}

const std::vector<Check>& quick_suite() {
  static const std::vector<Check> suite = {{1, "energy-balance", energy_balance},
                                           {2, "laminar-oracle", laminar_oracle},
                                           {3, "lti-ftle", lti_ftle},
                                           {4, "oracle-equivalence", oracle_equivalence},
                                           {6, "otd-properties", otd_properties},
                                           {9, "gradient-check", gradient_check},
                                           {10, "loss-properties", loss_properties},
                                           {11, "metric-suite", metric_suite}};
  return suite;
}

std::string format(const Outcome& o) {
  std::ostringstream os;
  os << (o.pass ? "[PASS] " : "[FAIL] ") << o.id << ' ' << o.name;
  if (!o.detail.empty()) os << ": " << o.detail;
  return os.str();
}

Outcome guarded(int id, const std::string& name, const std::function<Outcome()>& run) {
  try {
    return run();
  } catch (const std::exception& e) {
    return {id, name, false, std::string("error: ") + e.what()};
  }
}

}  // namespace eelab::checks
