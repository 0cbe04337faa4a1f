#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "eelab/ftle.hpp"
#include "eelab/otd.hpp"
#include "eelab/testbeds.hpp"

using namespace eelab;
using namespace eelab::ftle;
using otd::ReducedOperator;

namespace {

std::vector<ReducedOperator> constant_stream(const MatrixXd& L, double duration, double dt = 0.1) {
  std::vector<ReducedOperator> s;
  const int n = int(std::lround(duration / dt));
  for (int k = 0; k <= n; ++k) s.push_back({L, L, VectorXd(), k * dt});
  return s;
}

// A smooth, non-normal, time-varying 3×3 stream.
std::vector<ReducedOperator> varying_stream(double duration, double dt = 0.1) {
  std::vector<ReducedOperator> s;
  const int n = int(std::lround(duration / dt));
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    MatrixXd L(3, 3);
    L << 0.2 * std::sin(t), 1.0, 0.0, -0.3, -0.1, 0.5 * std::cos(0.7 * t), 0.1, 0.0, -0.4;
    s.push_back({L, L, VectorXd(), t});
  }
  return s;
}

std::vector<ReducedOperator> transform(std::vector<ReducedOperator> s,
                                       const std::function<MatrixXd(const MatrixXd&)>& f) {
  for (auto& op : s) op.L_r = f(op.L_r);
  return s;
}

}  // namespace

TEST_CASE("fundamental matrix closed forms") {
  const double T = 3.0;
  CHECK((evolve_fundamental(constant_stream(MatrixXd::Zero(2, 2), T), 0.0) -
         MatrixXd::Identity(2, 2)).norm() == 0.0);
  MatrixXd D = MatrixXd::Zero(2, 2);
  D(0, 0) = 0.4;
  D(1, 1) = -0.7;
  const MatrixXd Y = evolve_fundamental(constant_stream(D, T), 0.05);
  CHECK(Y(0, 0) == doctest::Approx(std::exp(0.4 * T)).epsilon(1e-8));
  CHECK(Y(1, 1) == doctest::Approx(std::exp(-0.7 * T)).epsilon(1e-8));
  CHECK(std::abs(Y(0, 1)) + std::abs(Y(1, 0)) == 0.0);
  MatrixXd N = MatrixXd::Zero(2, 2);
  N(0, 1) = 1.0;
  const MatrixXd Yn = evolve_fundamental(constant_stream(N, T), 0.0);
  CHECK(Yn(0, 0) == doctest::Approx(1.0));
  CHECK(Yn(0, 1) == doctest::Approx(T).epsilon(1e-12));
  CHECK(Yn(1, 0) == 0.0);
  CHECK(Yn(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("Cauchy-Green exponents") {
  CHECK(cauchy_green_gammas(MatrixXd::Identity(3, 3), 2.0).norm() == 0.0);
  MatrixXd Y = MatrixXd::Zero(2, 2);
  Y(0, 0) = std::exp(1.5);
  Y(1, 1) = std::exp(-0.5);
  const VectorXd g = cauchy_green_gammas(Y, 5.0);
  CHECK(g[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-0.1).epsilon(1e-12));
  SUBCASE("shear: compare with the eigenvalues of YᵀY in closed form") {
    const double T = 5.0;
    MatrixXd S(2, 2);
    S << 1.0, T, 0.0, 1.0;
    // YᵀY = [[1, T], [T, 1+T²]] has λ = (2 + T² ± T√(T²+4)) / 2
    const double lmax = 0.5 * (2.0 + T * T + T * std::sqrt(T * T + 4.0));
    const VectorXd gs = cauchy_green_gammas(S, T);
    CHECK(gs[0] == doctest::Approx(std::log(std::sqrt(lmax)) / T).epsilon(1e-12));
    CHECK(gs[0] + gs[1] == doctest::Approx(0.0).scale(1.0));
  }
  SUBCASE("singular Y gives the -inf sentinel") {
    MatrixXd Z = MatrixXd::Zero(2, 2);
    Z(0, 0) = 1.0;
    const VectorXd gz = cauchy_green_gammas(Z, 1.0);
    CHECK(gz[1] == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("LTI series reproduces the closed form for every window") {
  MatrixXd D = MatrixXd::Zero(2, 2);
  D(0, 0) = 0.3;
  D(1, 1) = -0.1;
  for (double stride : {0.1, 0.5}) {
    const auto s = ftle_series(constant_stream(D, 12.0), {5.0, stride, 0.01});
    REQUIRE(s.size() > 0);
    CHECK(s.times.front() == doctest::Approx(5.0));
    for (const auto& g : s.gammas) {
      CHECK(g[0] == doctest::Approx(0.3).epsilon(1e-9));
      CHECK(g[1] == doctest::Approx(-0.1).epsilon(1e-9));
    }
  }
}

TEST_CASE("orthogonal conjugation and shift laws") {
  const auto base = varying_stream(8.0);
  Eigen::HouseholderQR<MatrixXd> qr(MatrixXd::Random(3, 3));
  const MatrixXd Q = qr.householderQ();
  const auto conj = transform(base, [&](const MatrixXd& L) -> MatrixXd { return Q.transpose() * L * Q; });
  const auto shift = transform(base, [](const MatrixXd& L) -> MatrixXd {
    return L + 0.3 * MatrixXd::Identity(3, 3);
  });
  for (auto gen : {Generator::OtdFrame, Generator::Plain}) {
    WindowConfig cfg{4.0, 0.5, 0.01};
    cfg.generator = gen;
    const auto ref = ftle_series(base, cfg);
    const auto shifted = ftle_series(shift, cfg);
    for (std::size_t w = 0; w < ref.size(); ++w)
      CHECK((shifted.gammas[w] - ref.gammas[w] - VectorXd::Constant(3, 0.3)).cwiseAbs().maxCoeff() < 1e-10);
    // The OTD-frame generator is tied to the mode order, so only the plain
    // flow is invariant under a change of reduced coordinates.
    if (gen == Generator::Plain) {
      const auto rot = ftle_series(conj, cfg);
      for (std::size_t w = 0; w < ref.size(); ++w)
        CHECK((rot.gammas[w] - ref.gammas[w]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("OTD-frame generator") {
  MatrixXd L(3, 3);
  L << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  MatrixXd G(3, 3);
  G << 1, 6, 10, 0, 5, 14, 0, 0, 9;
  CHECK((otd_frame_generator(L) - G).norm() == 0.0);
  MatrixXd one(1, 1);
  one(0, 0) = -0.4;
  CHECK(otd_frame_generator(one)(0, 0) == -0.4);
}

TEST_CASE("scaling a constant operator scales the exponents") {
  MatrixXd L(2, 2);
  L << 0.1, 1.0, 0.0, -0.2;
  const WindowConfig cfg{5.0, 1.0, 0.01};
  const auto a = ftle_series(constant_stream(L, 6.0), cfg);
  const auto b = ftle_series(constant_stream(2.5 * L, 6.0 / 2.5, 0.04), {2.0, 0.4, 0.004});
  REQUIRE(a.size() == 2);
  REQUIRE(b.size() == 2);
  for (std::size_t w = 0; w < a.size(); ++w)
    CHECK((b.gammas[w] - 2.5 * a.gammas[w]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("window composition") {
  const auto s = varying_stream(6.0);
  const MatrixXd whole = evolve_fundamental(s.data(), s.data() + 61, 0.0);
  const MatrixXd first = evolve_fundamental(s.data(), s.data() + 31, 0.0);
  const MatrixXd second = evolve_fundamental(s.data() + 30, s.data() + 61, 0.0);
  CHECK((second * first - whole).norm() < 1e-8 * whole.norm());
}

TEST_CASE("errors") {
  MatrixXd big = MatrixXd::Identity(2, 2) * 200.0;
  CHECK_THROWS_AS(ftle_series(constant_stream(big, 5.0), {4.0, 0.1, 0.0}), OverflowError);
  CHECK_THROWS_AS(ftle_series(constant_stream(big, 1.0), {4.0, 0.1, 0.0}), InsufficientData);
  CHECK_THROWS_AS(ftle_series(constant_stream(big, 5.0), {0.25, 0.1, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(cauchy_green_gammas(MatrixXd::Identity(2, 2), 0.0), InvalidArgument);
}

TEST_CASE("series file round trip") {
  const auto s = ftle_series(varying_stream(6.0), {2.0, 0.2, 0.0});
  const auto path = (std::filesystem::temp_directory_path() / "eelab_test_ftle.csv").string();
  write_ftle_csv(path, s);
  const auto r = read_ftle_csv(path);
  CHECK(r.r == 3);
  CHECK(r.horizon_T == 2.0);
  CHECK(r.stride == doctest::Approx(0.2));
  REQUIRE(r.size() == s.size());
  for (std::size_t w = 0; w < s.size(); ++w) CHECK((r.gammas[w] - s.gammas[w]).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("full-rank reduced FTLE matches the fundamental-matrix oracle") {
  const auto sys = testbeds::lorenz_system();
  const double h = 0.001;
  VectorXd u = testbeds::integrate(sys, VectorXd::Ones(3), 0.001, 10000).back();
  otd::OtdTracker<double> tr(otd::init_basis_generic(3, 3, 1),
                             [&](const VectorXd& x, const MatrixXd& V) -> MatrixXd {
                               MatrixXd out(3, V.cols());
                               for (Eigen::Index j = 0; j < V.cols(); ++j)
                                 out.col(j) = sys.apply_jacobian(x, V.col(j));
                               return out;
                             },
                             0.001);
  std::vector<VectorXd> states;
  const int n = int(std::lround(5.4 / h));
  for (int k = 0; k <= n; ++k) {
    states.push_back(u);
    tr.push(u, k * h);
    u = testbeds::rk4_step(sys, u, h);
  }
  // The oracle works from the eigenvalues of ΨᵀΨ; with T = 0.5 the Lorenz
  // contraction keeps λ_3/λ_1 well above round-off.
  const auto s = ftle_series(tr.stream(), {0.5, 0.1, 0.001});
  REQUIRE(s.size() == 50);
  double worst = 0.0;
  for (std::size_t w = 0; w < s.size(); ++w) {
    const auto start = std::size_t(std::lround((s.times[w] - 0.5) / h));
    const auto full = testbeds::full_ftle_oracle(sys, states[start], 0.5, 0.001);
    worst = std::max(worst, (full.exponents - s.gammas[w]).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-4);
}
