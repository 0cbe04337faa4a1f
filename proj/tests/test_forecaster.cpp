#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "eelab/forecaster.hpp"

using namespace eelab;
using namespace eelab::forecaster;

namespace {

ModelDims tiny(double dropout = 0.0) {
  ModelDims d;
  d.d = 8;
  d.heads = 2;
  d.n_enc = 1;
  d.n_dec = 1;
  d.d_ff = 16;
  d.dropout = dropout;
  return d;
}

Sample random_sample(const WindowSpec& s, std::mt19937_64& rng, double target_offset = 0.0) {
  std::normal_distribution<double> nd;
  Sample x;
  x.input = MatrixXd(s.n_lookback, 2).unaryExpr([&](double) { return nd(rng); });
  x.seed = VectorXd::Zero(s.decoder_length());
  for (int i = 0; i < s.n_label; ++i) x.seed[i] = nd(rng);
  x.target = VectorXd(s.n_horizon).unaryExpr([&](double) { return target_offset + nd(rng); });
  x.weight = VectorXd(s.n_horizon).unaryExpr([&](double) { return 0.5 + std::abs(nd(rng)); });
  return x;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("precursor channels") {
  std::vector<double> t;
  for (int i = 0; i < 50; ++i) t.push_back(0.1 * i);
  SUBCASE("constant signal has zero derivative") {
    const auto p = build_precursor(t, VectorXd::Constant(50, 0.7));
    CHECK(p.raw.col(1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.channels.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("linear signal has unit derivative everywhere") {
    const VectorXd g = Eigen::Map<const VectorXd>(t.data(), 50);
    const auto p = build_precursor(t, g);
    CHECK((p.raw.col(1).array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("standardization on the training split") {
    VectorXd g(50);
    for (int i = 0; i < 50; ++i) g[i] = std::sin(0.37 * i) + 0.01 * i * i;
    const auto p = build_precursor(t, g, 0.7);
    const auto head = p.channels.topRows(35);
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(head.col(c).mean()) < 1e-10);
      CHECK(std::abs(std::sqrt((head.col(c).array() - head.col(c).mean()).square().mean()) - 1.0) < 1e-10);
    }
  }
  CHECK_THROWS_AS(derivative_channel(VectorXd::Zero(2), 0.1), InvalidArgument);
}

TEST_CASE("Fourier baseline coefficient") {
  flow::GridSpec g;
  g.nx = g.ny = 16;
  VectorXc u = VectorXc::Zero(g.size());
  CHECK(fourier_alpha(u, g) == Complex(0.0, 0.0));
  // u = 2 cos(x) e_y
  u[g.index(1, 0, 1)] = 1.0;
  u[g.index(g.nx - 1, 0, 1)] = 1.0;
  const Eigen::MatrixXcd uy = flow::physical_component(u, g, 1);
  CHECK(uy(0, 0).real() == doctest::Approx(2.0));
  CHECK(uy(g.nx / 2, 0).real() == doctest::Approx(-2.0));
  CHECK(flow::max_divergence(u, g) == 0.0);
  const Complex a = fourier_alpha(u, g);
  CHECK(a.real() == doctest::Approx(1.0));
  CHECK(a.imag() == 0.0);
  const auto p = fourier_precursor({0.0, 0.1}, {a, a});
  CHECK(p.raw(0, 0) == 1.0);
  CHECK(p.raw(0, 1) == 0.0);
}

TEST_CASE("kernel density estimate") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> z(10000);
  for (auto& v : z) v = nd(rng);
  const auto d = kde_density(z);
  CHECK(std::abs(d(0.0) - 1.0 / std::sqrt(2.0 * M_PI)) < 0.1 / std::sqrt(2.0 * M_PI));
  CHECK(std::abs(d.integral() - 1.0) < 1e-3);
  CHECK(d.values.minCoeff() >= d.p_min);
  CHECK(d.p_min > 0.0);
  CHECK(d(100.0) == d.p_min);

  std::vector<double> jit(2000);
  for (auto& v : jit) v = 3.0 + 1e-3 * nd(rng);
  const auto dj = kde_density(jit);
  Eigen::Index peak;
  dj.values.maxCoeff(&peak);
  CHECK(std::abs(dj.grid[peak] - 3.0) < 1e-3);
  int turns = 0;
  for (Eigen::Index i = 1; i + 1 < dj.values.size(); ++i)
    if (dj.values[i] > dj.values[i - 1] && dj.values[i] > dj.values[i + 1] &&
        dj.values[i] > 0.05 * dj.values[peak])
      ++turns;
  CHECK(turns == 1);

  CHECK_THROWS_AS(kde_density(std::vector<double>(20, 1.5)), DegenerateDistribution);
  CHECK_THROWS_AS(kde_density(std::vector<double>(5, 1.5)), InvalidArgument);
}

TEST_CASE("output-weighted MAE") {
  VectorXd p(2), t(2), w(2);
  p << 1.0, -1.0;
  t << 0.0, 0.0;
  w << 0.5, 0.25;
  CHECK(owmae_loss(p, t, w) == 3.0);
  CHECK(owmae_loss(t, t, w) == 0.0);
  const VectorXd c = VectorXd::Constant(2, 0.2);
  CHECK(owmae_loss(p, t, c) == doctest::Approx(1.0 / 0.2));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + int(rng() % 20);
    VectorXd a(n), b(n), pz(n);
    for (int i = 0; i < n; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      pz[i] = u(rng);
    }
    const double base = owmae_loss(a, b, pz);
    CHECK(base > 0.0);
    const int j = int(rng() % std::uint64_t(n));
    VectorXd rarer = pz;
    rarer[j] *= 0.5;
    CHECK(owmae_loss(a, b, rarer) > base);
  }
}

TEST_CASE("window spec") {
  const auto s = WindowSpec::make(10.0, 0.1);
  CHECK(s.n_horizon == 100);
  CHECK(s.n_lookback == 400);
  CHECK(s.n_label == 200);
  CHECK_THROWS_AS(WindowSpec::make(1.05, 0.1), InvalidArgument);
  ModelDims bad;
  bad.d = 30;
  bad.heads = 4;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  ModelDims::large().validate();
}

TEST_CASE("model forward contracts") {
  const auto spec = WindowSpec::make(0.5, 0.1);
  std::mt19937_64 rng(1);
  const auto x = random_sample(spec, rng);

  SUBCASE("constant network") {
    ForecastModel m(tiny(), spec, 2);
    m.params().setZero();
    m.params()[m.group("out.b").offset] = 0.42;
    const VectorXd y = m.forward(x.input, x.seed);
    CHECK(y.size() == spec.n_horizon);
    CHECK((y.array() - 0.42).abs().maxCoeff() == 0.0);
  }
  SUBCASE("decoder positions only see the past") {
    ForecastModel m(tiny(), spec, 3);
    const VectorXd y0 = m.forward(x.input, x.seed);
    for (int j = spec.n_label + 1; j < spec.decoder_length(); ++j) {
      VectorXd s = x.seed;
      s[j] += 5.0;
      const VectorXd y = m.forward(x.input, s);
      const int first_affected = j - spec.n_label;
      CHECK((y.head(first_affected) - y0.head(first_affected)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((y.tail(spec.n_horizon - first_affected) -
             y0.tail(spec.n_horizon - first_affected)).norm() > 0.0);
    }
  }
  SUBCASE("positional encoding is live") {
    ForecastModel m(tiny(), spec, 4);
    MatrixXd shuffled = x.input.colwise().reverse();
    CHECK((m.forward(shuffled, x.seed) - m.forward(x.input, x.seed)).norm() > 1e-6);
  }
  SUBCASE("inference is deterministic") {
    ForecastModel m(tiny(0.1), spec, 5);
    const VectorXd a = m.forward(x.input, x.seed), b = m.forward(x.input, x.seed);
    CHECK((a - b).norm() == 0.0);
    CHECK(m.loss(x) == m.loss(x));
  }
  SUBCASE("shape errors") {
    ForecastModel m(tiny(), spec, 6);
    CHECK_THROWS_AS(m.forward(x.input.topRows(3), x.seed), InvalidArgument);
    CHECK_THROWS_AS(m.forward(x.input, x.seed.head(3)), InvalidArgument);
    CHECK_THROWS_AS(predict(m, x.input.topRows(3), x.seed), InsufficientData);
    CHECK(predict(m, x.input, x.seed.head(spec.n_label)).size() == spec.n_horizon);
  }
}

TEST_CASE("analytic gradients match central differences in every group") {
  const auto spec = WindowSpec::make(0.4, 0.1);
  std::mt19937_64 rng(21);
  // Targets sit far from the outputs so |e| never crosses its kink.
  const auto x = random_sample(spec, rng, 10.0);
  ModelDims dims = tiny();
  dims.n_enc = 2;
  ForecastModel m(dims, spec, 9);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] += 0.05 * nd(rng);
  VectorXd g = VectorXd::Zero(m.params().size());
  m.loss(x, &g);
  const double h = 1e-5;
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
      num += (fd - g[k]) * (fd - g[k]);
      den += fd * fd;
    }
    INFO(grp.name);
    // Key biases shift every score in a row equally, so their exact gradient
    // is zero and the differences are pure round-off.
    CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den) + 1e-8);
    if (grp.name.find(".k.b") == std::string::npos) CHECK(std::sqrt(den) > 1e-4);
  }
}

TEST_CASE("training") {
  const auto spec = WindowSpec::make(0.5, 0.1);
  const long n = 600;
  SUBCASE("constant target") {
    MatrixXd ch = MatrixXd::Random(n, 2);
    ForecastDataset data(ch, VectorXd::Constant(n, 0.3), VectorXd::Ones(n), spec);
    TrainConfig cfg;
    cfg.steps = 400;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    cfg.final_lr_scale = 0.01;
    const auto r = train(data, data.window_ends(0, n), tiny(), cfg);
    CHECK(r.history.back().second < 0.02);
  }
  SUBCASE("realizable linear teacher") {
    MatrixXd ch(n, 2);
    for (long i = 0; i < n; ++i) {
      ch(i, 0) = std::sin(0.21 * i) + 0.5 * std::sin(0.047 * i + 1.0);
      ch(i, 1) = std::cos(0.13 * i);
    }
    // z(t) = 0.3·c₀(t − τ) + 0.1 is visible inside every lookback window.
    VectorXd z = VectorXd::Constant(n, 0.1);
    for (long i = spec.n_horizon; i < n; ++i) z[i] += 0.3 * ch(i - spec.n_horizon, 0);
    ForecastDataset data(ch, z, VectorXd::Ones(n), spec);
    TrainConfig cfg;
    cfg.steps = 1500;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    cfg.final_lr_scale = 0.01;
    ModelDims dims = tiny();
    dims.d = 16;
    dims.d_ff = 32;
    const auto r = train(data, data.window_ends(0, 450), dims, cfg);
    double mae = 0.0;
    const auto held = data.window_ends(450, n);
    for (long e : held) {
      const auto s = data.sample(e);
      mae += (r.model.forward(s.input, s.seed) - s.target).cwiseAbs().mean() / double(held.size());
    }
    CHECK(mae < 1e-2);
  }
  SUBCASE("seeded runs reproduce the loss history") {
    MatrixXd ch = MatrixXd::Random(200, 2);
    ForecastDataset data(ch, ch.col(0), VectorXd::Ones(200), spec);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch = 8;
    cfg.seed = 77;
    const auto a = train(data, data.window_ends(0, 200), tiny(0.1), cfg);
    const auto b = train(data, data.window_ends(0, 200), tiny(0.1), cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i)
      CHECK(std::abs(a.history[i].second - b.history[i].second) <= 1e-12);
  }
  SUBCASE("divergent learning rate is reported") {
    MatrixXd ch = MatrixXd::Random(200, 2);
    ForecastDataset data(ch, ch.col(0), VectorXd::Ones(200), spec);
    TrainConfig cfg;
    cfg.steps = 50;
    cfg.batch = 4;
    cfg.lr = 1e300;
    CHECK_THROWS_AS(train(data, data.window_ends(0, 200), tiny(), cfg), TrainingError);
  }
}

TEST_CASE("checkpoint and loss curve files") {
  const auto spec = WindowSpec::make(0.5, 0.1);
  ForecastModel m(tiny(), spec, 12);
  const auto path = tmp("eelab_test.fcst");
  save_model(path, m);
  const auto r = load_model(path);
  CHECK((r.params() - m.params()).norm() == 0.0);
  CHECK(r.spec().n_lookback == spec.n_lookback);
  CHECK(r.dims().d_ff == 16);
  std::remove(path.c_str());
  const auto csv = tmp("eelab_test_loss.csv");
  write_loss_csv(csv, {{1, 0.5}, {2, 0.25}});
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "step,loss");
  std::getline(is, line);
  CHECK(line == "1,0.5");
  std::remove(csv.c_str());
}
