#pragma once

// Precursor construction, output-weighted loss and a small full-attention
// encoder–decoder that maps a precursor history to the future observable.
//
// The model is written for double precision and carries its own reverse-mode
// gradient. All parameters live in one flat vector; named groups index into
// it so the optimizer, checkpoints and gradient checks see a single layout.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eelab/common.hpp"
#include "eelab/flow/kolmogorov.hpp"
#include "eelab/ftle.hpp"

namespace eelab::forecaster {

// ---------------------------------------------------------------------------
// Precursors

struct Normalization {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d std = Eigen::Vector2d::Ones();
};

struct PrecursorSeries {
  std::vector<double> times;
  MatrixXd raw;       // n × 2, before standardization
  MatrixXd channels;  // n × 2, standardized
  Normalization norm;

  std::size_t size() const { return times.size(); }
};

/// Second-order central differences, one-sided second-order at both ends.
VectorXd derivative_channel(const VectorXd& g, double dt);

/// Mean and standard deviation of each column over the first `n_train` rows.
/// A constant column keeps std = 1 so it standardizes to zero.
Normalization fit_normalization(const MatrixXd& raw, std::size_t n_train);
MatrixXd standardize(const MatrixXd& raw, const Normalization& norm);

/// Leading training rows for a time-ordered split.
std::size_t train_rows(std::size_t n, double train_fraction);

/// Channels (Γ̂_1, Γ̂'_1) from uniformly spaced samples of Γ̂_1.
PrecursorSeries build_precursor(const std::vector<double>& times, const VectorXd& gamma1,
                                double train_fraction = 0.7);
PrecursorSeries build_precursor(const ftle::FtleSeries& series, double train_fraction = 0.7);

/// Transverse velocity coefficient û_y at (kx, ky) = (1, 0). The streamwise
/// coefficient at that wavenumber vanishes for divergence-free fields.
Complex fourier_alpha(const VectorXc& coeffs, const flow::GridSpec& grid);
/// Channels (Re α, Im α), standardized on the training split.
PrecursorSeries fourier_precursor(const std::vector<double>& times,
                                  const std::vector<Complex>& alpha, double train_fraction = 0.7);
PrecursorSeries fourier_precursor(const flow::Trajectory& traj, double train_fraction = 0.7);

// ---------------------------------------------------------------------------
// Density and loss

struct DensityEstimate {
  VectorXd grid;    // uniform
  VectorXd values;  // ≥ p_min
  double bandwidth = 0.0;
  double p_min = 0.0;

  /// Linear interpolation on the grid, p_min outside it.
  double operator()(double z) const;
  /// Trapezoidal integral over the grid.
  double integral() const;
};

/// Gaussian KDE with Silverman's bandwidth, floored and renormalized.
DensityEstimate kde_density(const std::vector<double>& z, int grid_points = 512);

/// (1/N) Σ |ẑ_j − z_j| / p_j.
double owmae_loss(const VectorXd& pred, const VectorXd& target, const VectorXd& pz);
double owmae_loss(const VectorXd& pred, const VectorXd& target, const DensityEstimate& density);

// ---------------------------------------------------------------------------
// Model

struct WindowSpec {
  double tau = 10.0;
  double sample_dt = 0.1;
  int n_lookback = 0;  // n_Δ
  int n_horizon = 0;   // n_τ
  int n_label = 0;     // n_ℓ

  /// Lookback 4τ and label length n_Δ/2 at spacing sample_dt.
  static WindowSpec make(double tau, double sample_dt);
  int decoder_length() const { return n_label + n_horizon; }
  void validate() const;
};

struct ModelDims {
  int d = 32;
  int heads = 2;
  int n_enc = 1;
  int n_dec = 1;
  int d_ff = 64;
  double dropout = 0.1;
  int in_channels = 2;

  static ModelDims desk() { return {}; }
  /// The tuned full-size configuration; far beyond desk-scale training.
  static ModelDims large() { return {256, 8, 3, 3, 1024, 0.1, 2}; }
  void validate() const;
};

struct ParamGroup {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

/// One training or inference window: encoder input n_Δ × C, decoder seed of
/// n_ℓ observed targets followed by n_τ zeros, targets and their weights.
struct Sample {
  MatrixXd input;
  VectorXd seed;
  VectorXd target;
  VectorXd weight;
};

class ForecastModel {
 public:
  ForecastModel() = default;
  ForecastModel(const ModelDims& dims, const WindowSpec& spec, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  const WindowSpec& spec() const { return spec_; }
  VectorXd& params() { return theta_; }
  const VectorXd& params() const { return theta_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(const std::string& name) const;

  /// Inference pass, dropout off: n_τ predictions.
  VectorXd forward(const MatrixXd& input, const VectorXd& seed) const;

  /// OW-MAE of one sample. With `grad`, adds d(loss)/dθ · scale to it.
  /// `train` enables dropout drawn from `dropout_seed`.
  double loss(const Sample& s, VectorXd* grad = nullptr, double scale = 1.0, bool train = false,
              std::uint64_t dropout_seed = 0) const;

  struct Layout;

 private:
  ModelDims dims_;
  WindowSpec spec_;
  VectorXd theta_;
  std::vector<ParamGroup> groups_;
  std::shared_ptr<const Layout> layout_;
};

// ---------------------------------------------------------------------------
// Data and training

/// Sliding windows over aligned series: precursor channels, observable z and
/// per-sample weights 1/p_z(z). Window i ends at row ends[i].
class ForecastDataset {
 public:
  ForecastDataset(MatrixXd channels, VectorXd z, VectorXd weights, const WindowSpec& spec);
  /// Every admissible window end in [first, last).
  std::vector<long> window_ends(long first, long last) const;
  Sample sample(long end) const;
  long rows() const { return long(z_.size()); }
  const WindowSpec& spec() const { return spec_; }
  const VectorXd& z() const { return z_; }

 private:
  MatrixXd channels_;
  VectorXd z_;
  VectorXd w_;
  WindowSpec spec_;
};

struct TrainConfig {
  long steps = 2000;
  int batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Learning rate decays linearly to lr·final_lr_scale over the run.
  double final_lr_scale = 1.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ForecastModel model;
  std::vector<std::pair<long, double>> history;  // (step, batch loss)
};

/// Mini-batch Adam on OW-MAE over the given window ends.
TrainResult train(const ForecastDataset& data, const std::vector<long>& ends,
                  const ModelDims& dims, const TrainConfig& cfg);

/// ẑ over (t, t+τ] from the last n_Δ precursor rows and n_ℓ observed values.
VectorXd predict(const ForecastModel& model, const MatrixXd& history, const VectorXd& observed);

// Checkpoint: "FCST" | version u32 | dims | spec | parameter count u64 | θ.
void save_model(const std::string& path, const ForecastModel& m);
ForecastModel load_model(const std::string& path);

void write_loss_csv(const std::string& path, const std::vector<std::pair<long, double>>& history);

}  // namespace eelab::forecaster
