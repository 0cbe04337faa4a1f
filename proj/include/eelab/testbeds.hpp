#pragma once

// Low-dimensional systems with verifiable tangent dynamics. They serve as
// oracles for the OTD and reduced FTLE code paths.

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "eelab/common.hpp"

namespace eelab::testbeds {

struct GenericSystem {
  using Rhs = std::function<VectorXd(const VectorXd&)>;
  using JacobianApply = std::function<VectorXd(const VectorXd&, const VectorXd&)>;

  int dim = 0;
  Rhs rhs;
  /// Optional; central differences are used when absent.
  JacobianApply jacobian_apply;

  VectorXd apply_jacobian(const VectorXd& u, const VectorXd& v) const;
};

GenericSystem lti_system(const MatrixXd& A);
/// Lorenz-63 with analytic Jacobian.
GenericSystem lorenz_system(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);

VectorXd rk4_step(const GenericSystem& sys, const VectorXd& u, double dt);
/// States at t0, t0+dt, …, t0+n·dt.
std::vector<VectorXd> integrate(const GenericSystem& sys, const VectorXd& u0, double dt,
                                int n_steps);

struct FundamentalSolution {
  MatrixXd psi;          // Ψ over the interval
  VectorXd final_state;  // u at the end of the interval
};

/// Integrates u̇ = F(u) and Ψ̇ = L(u)Ψ from Ψ = I with the same RK4 stages.
FundamentalSolution fundamental_matrix(const GenericSystem& sys, const VectorXd& u0, double T,
                                       double dt);

struct FullFtleResult {
  VectorXd exponents;  // Λ_1 ≥ … ≥ Λ_dim
  double window_start = 0.0;
  double window_end = 0.0;
};

/// Full-space FTLEs Λ_i = (1/T) log √λ_i(ΨᵀΨ) by explicit eigendecomposition
/// of the Cauchy–Green tensor.
FullFtleResult full_ftle_oracle(const GenericSystem& sys, const VectorXd& u_start, double T,
                                double dt, double t_start = 0.0);

}  // namespace eelab::testbeds
