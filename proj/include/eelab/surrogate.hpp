#pragma once

// Data-driven right-hand side F̂ learned from snapshots: a convolution-structured
// quadratic regression on truncated spectral coordinates, plus matrix-free
// Jacobian–vector products by finite differences.
//
// F̂ deliberately has no time-stepping entry point; it only probes the local
// tangent dynamics.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eelab/common.hpp"
#include "eelab/flow/kolmogorov.hpp"

namespace eelab::surrogate {

/// Wavenumbers 0 < max(|kx|,|ky|) ≤ kmax, enumerated kx-major then ky.
class ModeSet {
 public:
  explicit ModeSet(int kmax = 0);
  int kmax() const { return kmax_; }
  int size() const { return int(modes_.size()); }
  int index(int kx, int ky) const;  // −1 when not in the set
  std::pair<int, int> mode(int i) const { return modes_[std::size_t(i)]; }
  /// Upper half-plane: ky > 0, or ky = 0 and kx > 0.
  bool upper(int i) const;
  int conjugate(int i) const { return conj_[std::size_t(i)]; }

 private:
  int kmax_;
  std::vector<std::pair<int, int>> modes_;
  std::vector<int> lookup_;
  std::vector<int> conj_;
};

/// Solenoidal coordinates c(k) = i(kx ûy − ky ûx)/|k| = ω̂(k)/|k|. They satisfy
/// c(−k) = conj(c(k)) for real fields and determine û(k) for divergence-free
/// fields: û(k) = i c(k) (ky, −kx)/|k|.
VectorXc to_solenoidal(const VectorXc& coeffs, const flow::GridSpec& grid, const ModeSet& set);
VectorXc from_solenoidal(const VectorXc& c, const ModeSet& set, const flow::GridSpec& grid);
/// Re-expresses coordinates on `from` over the (smaller or larger) set `to`.
VectorXc restrict_coords(const VectorXc& c, const ModeSet& from, const ModeSet& to);

/// (−u_{k+2} + 8u_{k+1} − 8u_{k−1} + u_{k−2}) / (12 dt); exact through degree 4.
template <typename T>
T fourth_order_derivative(const T& um2, const T& um1, const T& up1, const T& up2, double dt) {
  return (-up2 + 8.0 * up1 - 8.0 * um1 + um2) / (12.0 * dt);
}

struct DerivativeDataset {
  int kmax = 0;  // coordinates live on ModeSet(kmax)
  double dt = 0.0;
  std::vector<double> times;
  std::vector<VectorXc> states;
  std::vector<VectorXc> derivatives;
  std::size_t size() const { return states.size(); }
};

/// Streaming derivative estimation: keeps the last five snapshots and emits a
/// pair for every `stride`-th interior index.
class DerivativeEstimator {
 public:
  DerivativeEstimator(const flow::GridSpec& grid, int kmax, double dt, int stride = 1);
  void push(const flow::FlowState& s);
  const DerivativeDataset& dataset() const { return data_; }
  DerivativeDataset take() { return std::move(data_); }

 private:
  flow::GridSpec grid_;
  ModeSet set_;
  int stride_;
  long seen_ = 0;
  std::vector<VectorXc> ring_;
  std::vector<double> ring_t_;
  DerivativeDataset data_;
};

/// Derivatives at interior indices 2 … N−3; kmax < 0 keeps every dealiased mode.
DerivativeDataset estimate_derivatives(const flow::Trajectory& trajectory, int kmax = -1);

/// Short bursts launched off the attractor. Each anchor is truncated to the
/// retained box, perturbed by a seeded white field of relative size
/// `amplitude`, and advanced over four steps of `burst_dt`; the centre
/// derivative is recorded. Unretained modes start at zero, so the estimate
/// sees only retained interactions to O(burst_dt) and the fit approaches the
/// Galerkin truncation in every direction, not just along the attractor.
struct ProbeConfig {
  double amplitude = 0.1;
  double burst_dt = 0.001;
  std::uint64_t seed = 0;
};

class ProbeSampler {
 public:
  ProbeSampler(const flow::GridSpec& grid, const flow::FlowParams& params, int kmax,
               const ProbeConfig& cfg = {});
  void push(const flow::FlowState& anchor);
  const DerivativeDataset& dataset() const { return data_; }
  DerivativeDataset take() { return std::move(data_); }

 private:
  flow::GridSpec grid_;
  ModeSet set_;
  ProbeConfig cfg_;
  flow::KolmogorovSolver solver_;
  std::mt19937_64 rng_;
  DerivativeDataset data_;
};

struct OutputMode {
  int mode = 0;  // index into the surrogate's ModeSet (upper half-plane)
  Complex constant{0.0, 0.0};
  Complex linear{0.0, 0.0};
  std::vector<int> p, q;  // unordered pairs with p + q = k
  VectorXc quad;
};

class QuadraticSurrogate {
 public:
  QuadraticSurrogate() = default;
  QuadraticSurrogate(int K, double ridge, const flow::GridSpec& grid);

  int K() const { return K_; }
  double ridge_lambda() const { return ridge_; }
  const flow::GridSpec& grid() const { return grid_; }
  const ModeSet& modes() const { return modes_; }
  std::vector<OutputMode>& outputs() { return outputs_; }
  const std::vector<OutputMode>& outputs() const { return outputs_; }

  /// F̂ in solenoidal coordinates (full ModeSet, conjugate-symmetric).
  VectorXc evaluate_coords(const VectorXc& c) const;
  /// F̂(u) in the velocity coefficient layout; unretained modes are zero.
  VectorXc apply(const VectorXc& coeffs) const;
  VectorXc apply(const flow::FlowState& s) const { return apply(s.coeffs); }

 private:
  int K_ = 0;
  double ridge_ = 0.0;
  flow::GridSpec grid_;
  ModeSet modes_;
  std::vector<OutputMode> outputs_;
};

struct FitReportRow {
  int kx = 0, ky = 0;
  int n_features = 0;
  double residual_abs = 0.0;
  double residual_rel = 0.0;
  double target_norm = 0.0;
};

struct FitResult {
  QuadraticSurrogate model;
  std::vector<FitReportRow> report;
  double total_residual_rel = 0.0;
};

/// Per-output-mode ridge least squares. ridge = nullopt uses 1e−8·(feature
/// count) for each mode.
FitResult fit(const DerivativeDataset& data, int K, std::optional<double> ridge,
              const flow::GridSpec& grid);

struct JvpConfig {
  enum class Scheme { Forward, Central };
  /// nullopt: 1e−6·(1 + ‖u‖).
  std::optional<double> epsilon;
  Scheme scheme = Scheme::Central;
};

/// Finite-difference directional derivative of `f` at `u` along `v`. The
/// step is taken along v/‖v‖ and the result rescaled, so it approximates L·v.
template <typename F, typename Vec>
Vec jvp_fn(F&& f, const Vec& u, const Vec& v, const JvpConfig& cfg) {
  const double eps = cfg.epsilon ? *cfg.epsilon : 1e-6 * (1.0 + u.norm());
  if (!(eps > 0.0)) throw InvalidArgument("jvp epsilon must be positive");
  const double vn = v.norm();
  if (vn == 0.0) return Vec::Zero(u.size());
  const Vec w = v / vn;
  if (cfg.scheme == JvpConfig::Scheme::Forward)
    return (vn / eps) * (f(Vec(u + eps * w)) - f(u));
  return (vn / (2.0 * eps)) * (f(Vec(u + eps * w)) - f(Vec(u - eps * w)));
}

/// Surrogate JVP evaluated directly in solenoidal coordinates.
VectorXc jvp(const QuadraticSurrogate& model, const VectorXc& u, const VectorXc& v,
             const JvpConfig& cfg);
/// Batched form: one column per direction, `u_coords` precomputed.
MatrixXc jvp_columns(const QuadraticSurrogate& model, const VectorXc& u, const MatrixXc& V,
                     const JvpConfig& cfg);

/// L̂(u)·V by batched JVPs, shaped for an OTD tracker on the full velocity
/// layout. Columns outside the retained box map to zero.
std::function<MatrixXc(const VectorXc&, const MatrixXc&)> tangent_operator(
    std::shared_ptr<const QuadraticSurrogate> model, const JvpConfig& cfg = {});
/// Same operator acting directly on solenoidal coordinates of the retained
/// box. The velocity inner product is the plain L²-weighted one there too.
std::function<MatrixXc(const VectorXc&, const MatrixXc&)> coordinate_tangent_operator(
    std::shared_ptr<const QuadraticSurrogate> model, const JvpConfig& cfg = {});

/// ‖predicted − truth‖_{H^order} with weight Σ_{j≤order} |k|^{2j}, using the
/// unnormalized integral over the torus.
double sobolev_error(const VectorXc& predicted, const VectorXc& truth, int order,
                     const flow::GridSpec& grid);

void save_surrogate(const std::string& path, const QuadraticSurrogate& model);
QuadraticSurrogate load_surrogate(const std::string& path);
void write_fit_report_csv(const std::string& path, const FitResult& result);

}  // namespace eelab::surrogate
