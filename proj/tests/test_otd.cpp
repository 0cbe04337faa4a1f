#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "eelab/otd.hpp"
#include "eelab/testbeds.hpp"

using namespace eelab;
using namespace eelab::otd;

namespace {

MatrixXd diag(std::initializer_list<double> d) {
  VectorXd v(Eigen::Index(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v[i++] = x;
  return v.asDiagonal();
}

// Runs the tracker along an LTI trajectory sampled every `sample_dt`.
OtdTracker<double> run_lti(const MatrixXd& A, OtdBasis<double> v0, double duration,
                           double sample_dt = 0.1, double dt = 0.01) {
  const auto sys = testbeds::lti_system(A);
  OtdTracker<double> tr(std::move(v0),
                        [A](const VectorXd&, const MatrixXd& V) -> MatrixXd { return A * V; }, dt);
  VectorXd u = VectorXd::Ones(A.rows());
  const int n = int(std::lround(duration / sample_dt));
  for (int k = 0; k <= n; ++k) {
    tr.push(u, k * sample_dt);
    for (int j = 0; j < 10; ++j) u = testbeds::rk4_step(sys, u, sample_dt / 10);
  }
  return tr;
}

MatrixXd projector(const OtdBasis<double>& b) { return b.modes * b.modes.transpose(); }

}  // namespace

TEST_CASE("Kolmogorov initial basis") {
  flow::GridSpec g;
  for (int r : {1, 2, 6}) {
    const auto b = init_basis_kolmogorov(r, g);
    CHECK(b.r() == r);
    CHECK(orthonormality_error(b) < 1e-12);
    for (int i = 0; i < r; ++i) {
      CHECK(flow::max_divergence(b.modes.col(i), g) == 0.0);
      CHECK(flow::l2_inner(b.modes.col(i), b.modes.col(i), g) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(init_basis_kolmogorov(0, g), InvalidArgument);
  CHECK_THROWS_AS(init_basis_kolmogorov(64, g), InvalidArgument);
}

TEST_CASE("generic initial basis") {
  const auto sq = init_basis_generic(4, 4, 9);
  CHECK(std::abs(std::abs(sq.modes.determinant()) - 1.0) < 1e-12);
  const auto a = init_basis_generic(2, 5, 3), b = init_basis_generic(2, 5, 3);
  CHECK((a.modes - b.modes).norm() == 0.0);
  const auto one = init_basis_generic(1, 3, 1);
  CHECK(one.modes.col(0).norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(init_basis_generic(4, 3, 1), InvalidArgument);
}

TEST_CASE("evolution with a vanishing operator leaves the basis unchanged") {
  const auto b0 = init_basis_generic(2, 4, 5);
  TangentOperator<double> zero = [](double, const MatrixXd& V) -> MatrixXd {
    return MatrixXd::Zero(V.rows(), V.cols());
  };
  const auto b1 = evolve_basis<double>(b0, zero, 0.1);
  CHECK((b1.modes - b0.modes).norm() == 0.0);
  CHECK(b1.time == doctest::Approx(0.1));
  const auto op = reduced_operator(b1, MatrixXd::Zero(4, 2).eval());
  CHECK(op.L_r.norm() == 0.0);
  CHECK(op.sigma.norm() == 0.0);
}

TEST_CASE("single mode aligns with the least stable direction") {
  const auto tr = run_lti(diag({1.0, -1.0, -2.0}), init_basis_generic(1, 3, 2), 10.0);
  CHECK(std::abs(tr.basis().modes(0, 0)) > 0.999);
}

TEST_CASE("skew operator rotates the mode at unit rate") {
  MatrixXd A(2, 2);
  A << 0.0, -1.0, 1.0, 0.0;
  OtdBasis<double> b;
  b.modes = MatrixXd::Zero(2, 1);
  b.modes(0, 0) = 1.0;
  const auto tr = run_lti(A, b, 1.0);
  for (const auto& op : tr.stream()) CHECK(std::abs(op.L_r(0, 0)) < 1e-14);
  CHECK(tr.basis().modes(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-9));
  CHECK(tr.basis().modes(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-9));
}

TEST_CASE("reduced operator") {
  SUBCASE("identity basis recovers A") {
    OtdBasis<double> b;
    b.modes = MatrixXd::Identity(2, 2);
    const MatrixXd A = diag({0.3, -0.1});
    const auto op = reduced_operator(b, MatrixXd(A * b.modes));
    CHECK((op.L_r - A).norm() < 1e-15);
    CHECK(op.sigma[0] == doctest::Approx(0.3));
    CHECK(op.sigma[1] == doctest::Approx(-0.1));
  }
  SUBCASE("full-rank basis reproduces the symmetric-part spectrum") {
    MatrixXd A(3, 3);
    A << 0.2, 1.0, -0.4, 0.0, -0.5, 2.0, 0.3, 0.1, 0.1;
    const auto b = init_basis_generic(3, 3, 4);
    const auto op = reduced_operator(b, MatrixXd(A * b.modes));
    const VectorXd ref = sorted_symmetric_eigenvalues(0.5 * (A + A.transpose()));
    CHECK((op.sigma - ref).norm() < 1e-12);
    CHECK((op.S_r - 0.5 * (op.L_r + op.L_r.transpose())).norm() == 0.0);
    CHECK(op.sigma[0] >= op.sigma[1]);
    CHECK(op.sigma[1] >= op.sigma[2]);
  }
}

TEST_CASE("orthonormality is maintained and drifts little per interval") {
  MatrixXd A(4, 4);
  A << 0.1, 2.0, 0.0, 0.3, -1.0, -0.2, 0.5, 0.0, 0.0, 0.4, -0.5, 1.0, 0.2, 0.0, -1.0, -0.1;
  const auto tr = run_lti(A, init_basis_generic(3, 4, 8), 20.0, 0.1, 0.005);
  CHECK(tr.max_orthonormality_error() < 1e-8);
  CHECK(tr.max_drift() < 1e-10);
}

TEST_CASE("subspace converges to the least-stable eigenvectors") {
  const auto tr = run_lti(diag({1.0, -1.0, -2.0}), init_basis_generic(2, 3, 6), 20.0);
  MatrixXd P = MatrixXd::Zero(3, 3);
  P(0, 0) = P(1, 1) = 1.0;
  CHECK((projector(tr.basis()) - P).norm() < 1e-3);
}

TEST_CASE("shift equivariance") {
  MatrixXd A(3, 3);
  A << 0.2, 1.0, 0.0, -0.3, -0.4, 0.6, 0.1, 0.0, -0.9;
  const double c = 0.7;
  const auto v0 = init_basis_generic(2, 3, 12);
  const auto a = run_lti(A, v0, 5.0);
  const auto b = run_lti(A + c * MatrixXd::Identity(3, 3), v0, 5.0);
  CHECK((projector(a.basis()) - projector(b.basis())).norm() < 1e-8);
  for (std::size_t k = 0; k < a.stream().size(); ++k)
    CHECK((b.stream()[k].sigma - a.stream()[k].sigma - VectorXd::Constant(2, c)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("leading modes do not depend on the trailing ones") {
  MatrixXd A(4, 4);
  A << 0.1, 2.0, 0.0, 0.3, -1.0, -0.2, 0.5, 0.0, 0.0, 0.4, -0.5, 1.0, 0.2, 0.0, -1.0, -0.1;
  const auto v3 = init_basis_generic(3, 4, 13);
  OtdBasis<double> v2 = v3;
  v2.modes = v3.modes.leftCols(2);
  const auto a = run_lti(A, v3, 5.0), b = run_lti(A, v2, 5.0);
  CHECK((a.basis().modes.leftCols(2) - b.basis().modes).norm() < 1e-12);
}

TEST_CASE("degenerate basis is rejected") {
  OtdBasis<double> b;
  b.modes = MatrixXd::Zero(3, 2);
  b.modes(0, 0) = b.modes(0, 1) = 1.0;
  CHECK_THROWS_AS(orthonormalize(b), BasisDegeneracy);
}

TEST_CASE("Kolmogorov tracker keeps the basis orthonormal") {
  flow::GridSpec g;
  g.nx = g.ny = 32;
  flow::FlowParams p;
  const auto traj = flow::simulate(flow::perturbed_laminar_state(p, g, 0.5, 3), 2.0, p, g);
  OtdTracker<Complex> tr(init_basis_kolmogorov(3, g), exact_flow_operator(p, g), 0.05);
  for (const auto& s : traj.states) tr.push(s.coeffs, s.time);
  CHECK(tr.stream().size() == traj.states.size());
  CHECK(tr.max_orthonormality_error() < 1e-8);
  for (int i = 0; i < 3; ++i) CHECK(flow::max_divergence(tr.basis().modes.col(i), g) < 1e-10);
}

TEST_CASE("checkpoint and L_r stream files") {
  flow::GridSpec g;
  g.nx = g.ny = 16;
  auto b = init_basis_kolmogorov(2, g);
  b.time = 4.5;
  const auto path = (std::filesystem::temp_directory_path() / "eelab_test.otdb").string();
  save_basis(path, b);
  const auto r = load_basis(path);
  CHECK(r.time == 4.5);
  CHECK(r.weight == b.weight);
  CHECK((r.modes - b.modes).norm() == 0.0);
  std::remove(path.c_str());

  const auto tr = run_lti(diag({0.3, -0.1, -0.5}), init_basis_generic(2, 3, 1), 1.0);
  const auto csv = (std::filesystem::temp_directory_path() / "eelab_test_lr.csv").string();
  write_reduced_stream_csv(csv, tr.stream());
  const auto back = read_reduced_stream_csv(csv);
  REQUIRE(back.size() == tr.stream().size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].time == tr.stream()[k].time);
    CHECK((back[k].L_r - tr.stream()[k].L_r).norm() == 0.0);
  }
  std::remove(csv.c_str());
}
