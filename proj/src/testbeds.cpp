#include "eelab/testbeds.hpp"

#include <cmath>
#include <limits>

namespace eelab::testbeds {

VectorXd GenericSystem::apply_jacobian(const VectorXd& u, const VectorXd& v) const {
  if (jacobian_apply) return jacobian_apply(u, v);
  const double vn = v.norm();
  if (vn == 0.0) return VectorXd::Zero(u.size());
  const double eps =
      std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + u.norm()) / vn;
  return (rhs(u + eps * v) - rhs(u - eps * v)) / (2.0 * eps);
}

GenericSystem lti_system(const MatrixXd& A) {
  require(A.rows() == A.cols(), "LTI matrix must be square");
  require(A.allFinite(), "LTI matrix must be finite");
  GenericSystem s;
  s.dim = int(A.rows());
  s.rhs = [A](const VectorXd& u) -> VectorXd { return A * u; };
  s.jacobian_apply = [A](const VectorXd&, const VectorXd& v) -> VectorXd { return A * v; };
  return s;
}

GenericSystem lorenz_system(double sigma, double rho, double beta) {
  GenericSystem s;
  s.dim = 3;
  s.rhs = [=](const VectorXd& u) -> VectorXd {
    VectorXd f(3);
    f << sigma * (u[1] - u[0]), u[0] * (rho - u[2]) - u[1], u[0] * u[1] - beta * u[2];
    return f;
  };
  s.jacobian_apply = [=](const VectorXd& u, const VectorXd& v) -> VectorXd {
    VectorXd f(3);
    f << sigma * (v[1] - v[0]), (rho - u[2]) * v[0] - v[1] - u[0] * v[2],
        u[1] * v[0] + u[0] * v[1] - beta * v[2];
    return f;
  };
  return s;
}

VectorXd rk4_step(const GenericSystem& sys, const VectorXd& u, double dt) {
  const VectorXd k1 = sys.rhs(u);
  const VectorXd k2 = sys.rhs(u + 0.5 * dt * k1);
  const VectorXd k3 = sys.rhs(u + 0.5 * dt * k2);
  const VectorXd k4 = sys.rhs(u + dt * k3);
  return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<VectorXd> integrate(const GenericSystem& sys, const VectorXd& u0, double dt,
                                int n_steps) {
  std::vector<VectorXd> out;
  out.reserve(std::size_t(n_steps) + 1);
  out.push_back(u0);
  for (int i = 0; i < n_steps; ++i) out.push_back(rk4_step(sys, out.back(), dt));
  return out;
}

namespace {

MatrixXd apply_columns(const GenericSystem& sys, const VectorXd& u, const MatrixXd& M) {
  MatrixXd out(M.rows(), M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j) out.col(j) = sys.apply_jacobian(u, M.col(j));
  return out;
}

}  // namespace

FundamentalSolution fundamental_matrix(const GenericSystem& sys, const VectorXd& u0, double T,
                                       double dt) {
  require(T > 0.0 && dt > 0.0, "T and dt must be positive");
  require(u0.size() == sys.dim, "initial state has wrong dimension");
  const int n = std::max(1, int(std::lround(T / dt)));
  const double h = T / n;
  VectorXd u = u0;
  MatrixXd psi = MatrixXd::Identity(sys.dim, sys.dim);
  for (int i = 0; i < n; ++i) {
    const VectorXd k1 = sys.rhs(u);
    const MatrixXd p1 = apply_columns(sys, u, psi);
    const VectorXd u2 = u + 0.5 * h * k1;
    const MatrixXd s2 = psi + 0.5 * h * p1;
    const VectorXd k2 = sys.rhs(u2);
    const MatrixXd p2 = apply_columns(sys, u2, s2);
    const VectorXd u3 = u + 0.5 * h * k2;
    const MatrixXd s3 = psi + 0.5 * h * p2;
    const VectorXd k3 = sys.rhs(u3);
    const MatrixXd p3 = apply_columns(sys, u3, s3);
    const VectorXd u4 = u + h * k3;
    const MatrixXd s4 = psi + h * p3;
    const VectorXd k4 = sys.rhs(u4);
    const MatrixXd p4 = apply_columns(sys, u4, s4);
    u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    psi += (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
    if (!psi.allFinite())
      throw OverflowError("fundamental matrix overflowed; use a smaller T");
  }
  return {psi, u};
}

FullFtleResult full_ftle_oracle(const GenericSystem& sys, const VectorXd& u_start, double T,
                                double dt, double t_start) {
  require(sys.dim <= 16, "oracle is limited to dim <= 16");
  const auto sol = fundamental_matrix(sys, u_start, T, dt);
  const MatrixXd C = sol.psi.transpose() * sol.psi;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
  const VectorXd lam = es.eigenvalues();  // ascending
  FullFtleResult r;
  r.exponents.resize(sys.dim);
  for (int i = 0; i < sys.dim; ++i) {
    const double l = lam[sys.dim - 1 - i];
    r.exponents[i] = l > 0.0 ? std::log(std::sqrt(l)) / T
                             : -std::numeric_limits<double>::infinity();
  }
  r.window_start = t_start;
  r.window_end = t_start + T;
  return r;
}

}  // namespace eelab::testbeds
