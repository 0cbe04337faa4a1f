#pragma once

// Pseudospectral solver for two-dimensional Kolmogorov flow on the torus
// [0, 2π]², written in velocity Fourier coefficients with an explicit Leray
// projection and 2/3-rule dealiasing.
//
// Coefficient convention: û(k) = (1/(nx·ny)) Σ_x u(x) e^{-i k·x}, so that
// u(x) = Σ_k û(k) e^{i k·x} and (1/L²)∫|u|² = Σ_k |û(k)|².

#include <functional>
#include <memory>
#include <vector>

#include "eelab/common.hpp"

namespace eelab::flow {

struct GridSpec {
  int nx = 64;
  int ny = 64;
  double length = 2.0 * 3.14159265358979323846;
  double dealias_fraction = 2.0 / 3.0;

  void validate() const;
  /// Complex coefficients per state (nx·ny·2).
  Eigen::Index size() const { return Eigen::Index(nx) * ny * 2; }
  Eigen::Index index(int ix, int iy, int comp) const {
    return (Eigen::Index(ix) * ny + iy) * 2 + comp;
  }
  int kx(int ix) const { return ix <= nx / 2 ? ix : ix - nx; }
  int ky(int iy) const { return iy <= ny / 2 ? iy : iy - ny; }
  int ix_of(int k) const { return k >= 0 ? k : k + nx; }
  int iy_of(int k) const { return k >= 0 ? k : k + ny; }
  /// Largest |k| per direction that survives dealiasing.
  int kmax_x() const;
  int kmax_y() const;
  bool retained(int kx, int ky) const;
  /// Weight turning Σ Re(conj(a)·b) over coefficients into ∫ a·b dx.
  double l2_weight() const { return length * length; }
};

struct FlowParams {
  double reynolds = 40.0;
  int forcing_wavenumber = 4;
  double internal_dt = 0.005;
  double snapshot_dt = 0.1;
  /// Multiplies f = sin(n y) e₁; 0 switches the forcing off.
  double forcing_amplitude = 1.0;

  double nu() const { return 1.0 / reynolds; }
  void validate() const;
  int steps_per_snapshot() const;
};

struct FlowState {
  VectorXc coeffs;  // (kx, ky, component) row-major, see GridSpec::index
  double time = 0.0;
};

struct Trajectory {
  std::vector<FlowState> states;
  FlowParams params;
  GridSpec grid;
};

struct EnergyDiagnostics {
  std::vector<double> time;
  std::vector<double> input_I;
  std::vector<double> dissipation_D;
  std::vector<double> kinetic_E;
};

struct PointDiagnostics {
  double I = 0.0, D = 0.0, E = 0.0;
};

/// Owns the FFT plans and scratch buffers for one grid. Not thread-safe;
/// create one per thread (the free functions below keep a thread-local cache).
class KolmogorovSolver {
 public:
  KolmogorovSolver(const GridSpec& grid, const FlowParams& params);
  ~KolmogorovSolver();
  KolmogorovSolver(const KolmogorovSolver&) = delete;
  KolmogorovSolver& operator=(const KolmogorovSolver&) = delete;

  const GridSpec& grid() const { return grid_; }
  const FlowParams& params() const { return params_; }

  VectorXc rhs(const VectorXc& coeffs) const;
  VectorXc linearized_apply(const VectorXc& base, const VectorXc& v) const;
  /// One RK4 step of size internal_dt.
  FlowState step(const FlowState& s) const;
  /// Advances to `duration` after `initial`, calling `observer` on every
  /// snapshot (including the initial state). Throws DivergenceError on
  /// blow-up with the failing time.
  void simulate(const FlowState& initial, double duration,
                const std::function<void(const FlowState&)>& observer) const;

  struct Impl;

 private:
  GridSpec grid_;
  FlowParams params_;
  std::unique_ptr<Impl> impl_;
};

VectorXc forcing_coeffs(const FlowParams& params, const GridSpec& grid);
FlowState laminar_state(const FlowParams& params, const GridSpec& grid);
FlowState zero_state(const GridSpec& grid);
/// Laminar state plus a seeded divergence-free perturbation on the modes
/// 1 ≤ max(|kx|,|ky|) ≤ 4 with L²-mean amplitude `amplitude`.
FlowState perturbed_laminar_state(const FlowParams& params, const GridSpec& grid,
                                  double amplitude, std::uint64_t seed);

VectorXc rhs(const FlowState& state, const FlowParams& params, const GridSpec& grid);
FlowState step(const FlowState& state, const FlowParams& params, const GridSpec& grid);
Trajectory simulate(const FlowState& initial, double duration, const FlowParams& params,
                    const GridSpec& grid);
VectorXc linearized_apply(const FlowState& state, const VectorXc& v,
                          const FlowParams& params, const GridSpec& grid);

PointDiagnostics point_diagnostics(const VectorXc& coeffs, const FlowParams& params,
                                   const GridSpec& grid);
EnergyDiagnostics diagnostics(const Trajectory& trajectory);

/// Leray projection P(k) = I − kkᵀ/|k|² applied in place; k = 0 is untouched.
void leray_project(VectorXc& coeffs, const GridSpec& grid);
/// Zeroes every mode removed by the dealiasing rule.
void dealias(VectorXc& coeffs, const GridSpec& grid);
/// max_k |k·û(k)|.
double max_divergence(const VectorXc& coeffs, const GridSpec& grid);
/// max_k |û(k) − conj(û(−k))|; zero for a real physical field.
double max_conjugate_asymmetry(const VectorXc& coeffs, const GridSpec& grid);
/// Scalar vorticity coefficients ω̂(k) = i(kx ûy − ky ûx), layout (kx, ky).
VectorXc vorticity(const VectorXc& coeffs, const GridSpec& grid);
/// Physical-space velocity component via a complex inverse transform; the
/// imaginary part is returned too so callers can check reality.
Eigen::MatrixXcd physical_component(const VectorXc& coeffs, const GridSpec& grid, int comp);
/// ∫ a·b dx over the torus.
double l2_inner(const VectorXc& a, const VectorXc& b, const GridSpec& grid);

void write_diagnostics_csv(const std::string& path, const EnergyDiagnostics& d);

/// Version string of the FFT backend.
std::string fft_library_version();

}  // namespace eelab::flow
