#pragma once

// Reduced-order finite-time Lyapunov exponents over sliding windows of an
// L_r stream produced by a continuously evolved OTD basis.

#include <string>
#include <vector>

#include "eelab/common.hpp"
#include "eelab/otd.hpp"

namespace eelab::ftle {

/// Generator of the reduced fundamental matrix.
///
/// The lower-triangular OTD equation rotates the basis with a skew rate built
/// from L_r, so VᵀΨV₀ obeys Ẏ = G Y with G the upper-triangular matrix
/// G_ii = (L_r)_ii, G_ki = (L_r)_ki + (L_r)_ik for k < i. OtdFrame integrates
/// that and reproduces the restricted Cauchy–Green spectrum; Plain integrates
/// Ẏ = L_r Y literally, which agrees only when the basis is not rotating.
enum class Generator { OtdFrame, Plain };

MatrixXd otd_frame_generator(const MatrixXd& L_r);

struct WindowConfig {
  double horizon_T = 5.0;
  double stride = 0.1;
  /// Step for the RK4 integration; ≤ 0 uses the stream's sample spacing.
  double dt = 0.0;
  Generator generator = Generator::OtdFrame;

  void validate(double sample_dt) const;
};

struct FtleSeries {
  std::vector<double> times;  // window end times
  std::vector<VectorXd> gammas;
  int r = 0;
  double horizon_T = 0.0;
  double stride = 0.0;

  std::size_t size() const { return times.size(); }
  /// Γ_1 of every window.
  std::vector<double> leading() const;
};

/// Y(t1; t0) from Y(t0) = I, integrated by RK4 with L_r linearly interpolated
/// between samples. The samples span [front().time, back().time].
MatrixXd evolve_fundamental(const std::vector<otd::ReducedOperator>& window, double dt,
                            Generator gen = Generator::OtdFrame);
/// Pointer-range form used by the sliding windows.
MatrixXd evolve_fundamental(const otd::ReducedOperator* first, const otd::ReducedOperator* last,
                            double dt, Generator gen = Generator::OtdFrame);

/// Γ_i = (1/T) log σ_i(Y), descending; σ_i = 0 gives −∞.
VectorXd cauchy_green_gammas(const MatrixXd& Y, double T);

/// One window per end time t on the stride grid with t − T at or after the
/// first sample; windows are independent and run in parallel.
FtleSeries ftle_series(const std::vector<otd::ReducedOperator>& stream, const WindowConfig& cfg);

void write_ftle_csv(const std::string& path, const FtleSeries& s);
FtleSeries read_ftle_csv(const std::string& path);

}  // namespace eelab::ftle
