#include <cmath>

#include "doctest.h"
#include "eelab/testbeds.hpp"

using namespace eelab;
using namespace eelab::testbeds;

TEST_CASE("LTI system definition") {
  MatrixXd A(2, 2);
  A << 0.3, 0.0, 0.0, -0.1;
  const auto s = lti_system(A);
  const VectorXd f = s.rhs(VectorXd::Ones(2));
  CHECK(f[0] == doctest::Approx(0.3));
  CHECK(f[1] == doctest::Approx(-0.1));
  CHECK(lti_system(MatrixXd::Zero(3, 3)).rhs(VectorXd::Ones(3)).norm() == 0.0);
}

TEST_CASE("skew LTI trajectories keep their norm") {
  MatrixXd A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  VectorXd u0(2);
  u0 << 1.0, 0.5;
  const auto traj = integrate(lti_system(A), u0, 0.01, 1000);
  for (const auto& u : traj) CHECK(u.norm() == doctest::Approx(u0.norm()).epsilon(1e-9));
}

TEST_CASE("finite-difference Jacobian fallback") {
  auto lor = lorenz_system();
  GenericSystem fd = lor;
  fd.jacobian_apply = nullptr;
  VectorXd u(3), v(3);
  u << 1.0, -2.0, 20.0;
  v << 0.3, 0.1, -0.7;
  CHECK((fd.apply_jacobian(u, v) - lor.apply_jacobian(u, v)).norm() < 1e-6);
}

TEST_CASE("full FTLE oracle closed forms") {
  MatrixXd A = VectorXd((VectorXd(2) << 0.3, -0.1).finished()).asDiagonal();
  for (double T : {1.0, 5.0, 20.0}) {
    const auto r = full_ftle_oracle(lti_system(A), VectorXd::Ones(2), T, 0.01);
    CHECK(r.exponents[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(r.exponents[1] == doctest::Approx(-0.1).epsilon(1e-9));
  }
  const auto z = full_ftle_oracle(lti_system(MatrixXd::Zero(2, 2)), VectorXd::Ones(2), 3.0, 0.1);
  CHECK(std::abs(z.exponents[0]) < 1e-14);
  CHECK(std::abs(z.exponents[1]) < 1e-14);
  MatrixXd B = VectorXd((VectorXd(3) << 0.1, -0.4, 0.5).finished()).asDiagonal();
  const auto r3 = full_ftle_oracle(lti_system(B), VectorXd::Ones(3), 5.0, 0.01, 2.0);
  CHECK(r3.exponents[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r3.exponents[1] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(r3.exponents[2] == doctest::Approx(-0.4).epsilon(1e-9));
  CHECK(r3.window_start == 2.0);
  CHECK(r3.window_end == 7.0);
}

TEST_CASE("normal matrices: exponents are eigenvalue real parts for any T") {
  // symmetric, so normal
  MatrixXd A(3, 3);
  A << 0.2, 0.1, 0.0, 0.1, -0.3, 0.05, 0.0, 0.05, 0.1;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);
  for (double T : {0.5, 4.0}) {
    const auto r = full_ftle_oracle(lti_system(A), VectorXd::Ones(3), T, 0.005);
    for (int i = 0; i < 3; ++i) CHECK(r.exponents[i] == doctest::Approx(es.eigenvalues()[2 - i]).epsilon(1e-8));
  }
}

TEST_CASE("oracle output is descending and fundamental matrices compose") {
  auto lor = lorenz_system();
  VectorXd u0(3);
  u0 << 1.0, 1.0, 20.0;
  const auto r = full_ftle_oracle(lor, u0, 1.0, 0.001);
  CHECK(r.exponents[0] >= r.exponents[1]);
  CHECK(r.exponents[1] >= r.exponents[2]);

  MatrixXd A(2, 2);
  A << 0.1, 2.0, -0.3, 0.2;
  const auto sys = lti_system(A);
  const auto whole = fundamental_matrix(sys, VectorXd::Ones(2), 4.0, 0.01);
  const auto first = fundamental_matrix(sys, VectorXd::Ones(2), 2.0, 0.01);
  const auto second = fundamental_matrix(sys, first.final_state, 2.0, 0.01);
  CHECK((second.psi * first.psi - whole.psi).norm() < 1e-8 * whole.psi.norm());
}

TEST_CASE("oracle guards") {
  CHECK_THROWS_AS(full_ftle_oracle(lti_system(MatrixXd::Zero(17, 17)), VectorXd::Zero(17), 1.0, 0.1),
                  InvalidArgument);
  MatrixXd A = MatrixXd::Identity(2, 2) * 400.0;
  CHECK_THROWS_AS(full_ftle_oracle(lti_system(A), VectorXd::Ones(2), 10.0, 0.01), OverflowError);
}
