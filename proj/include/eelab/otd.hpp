#pragma once

// Optimally time-dependent (OTD) modes: an orthonormal r-dimensional basis
// evolved with the tangent dynamics, and the reduced operator L_r it induces.
//
// Tangent fields are stored column-wise. Scalar is double for the finite
// dimensional testbeds and Complex for Fourier coefficients of the flow; in
// both cases the inner product is weight·Re(aᴴb).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "eelab/common.hpp"
#include "eelab/flow/kolmogorov.hpp"

namespace eelab::otd {

template <typename Scalar>
struct OtdBasis {
  Matrix<Scalar> modes;  // one column per mode
  double time = 0.0;
  double weight = 1.0;   // inner-product weight

  int r() const { return int(modes.cols()); }
  Eigen::Index dim() const { return modes.rows(); }
};

struct ReducedOperator {
  MatrixXd L_r;
  MatrixXd S_r;
  VectorXd sigma;  // eigenvalues of S_r, descending
  double time = 0.0;
};

/// Gram matrix G_ij = weight·Re(a_iᴴ b_j).
template <typename Scalar>
MatrixXd inner_products(const Matrix<Scalar>& A, const Matrix<Scalar>& B, double weight) {
  return weight * (A.adjoint() * B).real();
}

/// max |⟨v_i, v_j⟩ − δ_ij|.
template <typename Scalar>
double orthonormality_error(const OtdBasis<Scalar>& b) {
  const MatrixXd G = inner_products(b.modes, b.modes, b.weight);
  return (G - MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

/// Modified Gram–Schmidt in mode order. A mode whose norm drops below 1e−8
/// before normalization is a degeneracy, not something to repair.
template <typename Scalar>
void orthonormalize(OtdBasis<Scalar>& b) {
  const double sw = std::sqrt(b.weight);
  for (int i = 0; i < b.r(); ++i) {
    auto vi = b.modes.col(i);
    for (int k = 0; k < i; ++k) {
      const double c = b.weight * std::real((b.modes.col(k).adjoint() * vi).value());
      vi -= c * b.modes.col(k);
    }
    const double n = sw * vi.norm();
    if (!(n >= 1e-8))
      throw BasisDegeneracy("OTD mode " + std::to_string(i + 1) + " collapsed (norm " +
                            std::to_string(n) + ") at t = " + std::to_string(b.time));
    vi /= n;
  }
}

/// v̇_i = Lv_i − ⟨Lv_i, v_i⟩v_i − Σ_{k<i}(⟨Lv_i, v_k⟩ + ⟨Lv_k, v_i⟩)v_k, written
/// as V̇ = LV − V·G with G upper triangular.
template <typename Scalar>
Matrix<Scalar> otd_rhs(const Matrix<Scalar>& V, const Matrix<Scalar>& LV, double weight) {
  const MatrixXd M = inner_products(V, LV, weight);  // M_ki = ⟨v_k, Lv_i⟩
  const int r = int(V.cols());
  MatrixXd G = MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    G(i, i) = M(i, i);
    for (int k = 0; k < i; ++k) G(k, i) = M(k, i) + M(i, k);
  }
  return LV - V * G.template cast<Scalar>();
}

/// Action of the tangent operator at time t on every column of V.
template <typename Scalar>
using TangentOperator = std::function<Matrix<Scalar>(double t, const Matrix<Scalar>& V)>;

/// One RK4 step of the OTD equation. `LV0`, if given, is L(t)·V already
/// evaluated and saves one operator application.
template <typename Scalar>
OtdBasis<Scalar> evolve_basis(const OtdBasis<Scalar>& b, const TangentOperator<Scalar>& L,
                              double dt, const Matrix<Scalar>* LV0 = nullptr) {
  require(dt > 0.0, "OTD time step must be positive");
  const double t = b.time, w = b.weight;
  const Matrix<Scalar>& V = b.modes;
  const Matrix<Scalar> k1 = otd_rhs<Scalar>(V, LV0 ? *LV0 : L(t, V), w);
  Matrix<Scalar> s = V + (0.5 * dt) * k1;
  const Matrix<Scalar> k2 = otd_rhs<Scalar>(s, L(t + 0.5 * dt, s), w);
  s = V + (0.5 * dt) * k2;
  const Matrix<Scalar> k3 = otd_rhs<Scalar>(s, L(t + 0.5 * dt, s), w);
  s = V + dt * k3;
  const Matrix<Scalar> k4 = otd_rhs<Scalar>(s, L(t + dt, s), w);
  OtdBasis<Scalar> out{V + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt, w};
  if (!out.modes.allFinite())
    throw BasisDegeneracy("OTD basis became non-finite at t = " + std::to_string(out.time));
  return out;
}

/// Descending eigenvalues of a symmetric matrix; values closer than 1e−12
/// keep the solver's original order.
VectorXd sorted_symmetric_eigenvalues(const MatrixXd& S);

/// (L_r)_ij = ⟨v_i, L v_j⟩ with LV the operator applied to the basis.
template <typename Scalar>
ReducedOperator reduced_operator(const OtdBasis<Scalar>& b, const Matrix<Scalar>& LV) {
  require(LV.rows() == b.modes.rows() && LV.cols() == b.modes.cols(),
          "operator image does not match the basis shape");
  ReducedOperator op;
  op.L_r = inner_products(b.modes, LV, b.weight);
  op.S_r = 0.5 * (op.L_r + op.L_r.transpose());
  op.sigma = sorted_symmetric_eigenvalues(op.S_r);
  op.time = b.time;
  return op;
}

/// ‖P_a − P_b‖_F for the orthogonal projectors onto both spans.
template <typename Scalar>
double subspace_distance(const OtdBasis<Scalar>& a, const OtdBasis<Scalar>& b) {
  const MatrixXd C = inner_products(a.modes, b.modes, a.weight);
  return std::sqrt(std::max(0.0, double(a.r() + b.r()) - 2.0 * C.squaredNorm()));
}

/// v_i = (1/(π√2)) sin(i y) e₁, i = 1…r, orthonormal in L² on the torus.
OtdBasis<Complex> init_basis_kolmogorov(int r, const flow::GridSpec& grid);

/// Seeded Gaussian columns, orthonormalized (Euclidean inner product).
OtdBasis<double> init_basis_generic(int r, int dim, std::uint64_t seed);

/// Streaming OTD evolution along a sampled trajectory. Each pushed state
/// advances the basis from the previous sample, with the state linearly
/// interpolated between samples at every RK4 stage, then re-orthonormalizes
/// and emits L_r at the sample time.
template <typename Scalar>
class OtdTracker {
 public:
  /// `apply(u, V)` returns L(u)·V column-wise.
  using StateOperator =
      std::function<Matrix<Scalar>(const Vector<Scalar>& u, const Matrix<Scalar>& V)>;

  OtdTracker(OtdBasis<Scalar> initial, StateOperator apply, double max_dt)
      : basis_(std::move(initial)), apply_(std::move(apply)), max_dt_(max_dt) {
    require(max_dt > 0.0, "OTD time step must be positive");
  }

  const OtdBasis<Scalar>& basis() const { return basis_; }
  const std::vector<ReducedOperator>& stream() const { return stream_; }
  std::vector<ReducedOperator> take_stream() { return std::move(stream_); }
  /// Largest orthonormality error seen right after each correction.
  double max_orthonormality_error() const { return max_ortho_; }
  /// Largest drift accumulated over one interval before correction.
  double max_drift() const { return max_drift_; }
  long samples() const { return n_; }

  /// Optional per-sample hook, called after L_r is emitted.
  std::function<void(const OtdBasis<Scalar>&, const ReducedOperator&)> on_sample;

  void push(const Vector<Scalar>& u, double t) {
    if (n_ == 0) {
      basis_.time = t;
    } else {
      const double t0 = prev_t_, span = t - t0;
      require(span > 0.0, "OTD samples must be strictly increasing in time");
      const int nsub = std::max(1, int(std::ceil(span / max_dt_ - 1e-9)));
      const double h = span / nsub;
      const Vector<Scalar> du = u - prev_u_;
      TangentOperator<Scalar> L = [&](double s, const Matrix<Scalar>& V) {
        const double a = std::clamp((s - t0) / span, 0.0, 1.0);
        return apply_(Vector<Scalar>(prev_u_ + a * du), V);
      };
      basis_.time = t0;
      for (int j = 0; j < nsub; ++j) {
        basis_ = evolve_basis<Scalar>(basis_, L, h, j == 0 ? &LV_ : nullptr);
      }
      basis_.time = t;
      max_drift_ = std::max(max_drift_, orthonormality_error(basis_));
      orthonormalize(basis_);
      const double err = orthonormality_error(basis_);
      if (err > 1e-3)
        throw BasisDegeneracy("OTD orthonormality deviation " + std::to_string(err) +
                              " after correction at t = " + std::to_string(t));
      max_ortho_ = std::max(max_ortho_, err);
    }
    LV_ = apply_(u, basis_.modes);
    stream_.push_back(reduced_operator(basis_, LV_));
    if (on_sample) on_sample(basis_, stream_.back());
    prev_u_ = u;
    prev_t_ = t;
    ++n_;
  }

 private:
  OtdBasis<Scalar> basis_;
  StateOperator apply_;
  double max_dt_;
  long n_ = 0;
  Vector<Scalar> prev_u_;
  double prev_t_ = 0.0;
  Matrix<Scalar> LV_;
  std::vector<ReducedOperator> stream_;
  double max_ortho_ = 0.0;
  double max_drift_ = 0.0;
};

/// L(u)·V for the flow via the exact linearization.
OtdTracker<Complex>::StateOperator exact_flow_operator(const flow::FlowParams& params,
                                                       const flow::GridSpec& grid);

// Basis checkpoint: "OTDB" | version u32 | r u32 | time f64 | weight f64 |
// dim u64 | scalar kind u32 (1 real, 2 complex) | modes column-major.
void save_basis(const std::string& path, const OtdBasis<Complex>& b);
OtdBasis<Complex> load_basis(const std::string& path);

/// L_r stream as text: `time,sigma_1..sigma_r,L_11,L_12,...` (row-major).
void write_reduced_stream_csv(const std::string& path, const std::vector<ReducedOperator>& s);
std::vector<ReducedOperator> read_reduced_stream_csv(const std::string& path);

}  // namespace eelab::otd
