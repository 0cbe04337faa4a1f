#pragma once

// End-to-end desk pipeline: flow run, surrogate, OTD, FTLE, precursor
// features, forecasters and their evaluation. Stages pass plain in-memory
// results; the CLI persists each one.
//
// Full states are never held in memory for a whole run. Stages that need
// them take a Replay, which feeds the recorded snapshots to an observer in
// order, either from a trajectory file or by re-running the solver.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eelab/config.hpp"
#include "eelab/evaluation.hpp"
#include "eelab/flow/kolmogorov.hpp"
#include "eelab/forecaster.hpp"
#include "eelab/ftle.hpp"
#include "eelab/otd.hpp"
#include "eelab/surrogate.hpp"

namespace eelab::pipeline {

struct Settings {
  flow::GridSpec grid;
  flow::FlowParams flow;
  double spinup = 200.0;
  double duration = 3000.0;
  double perturbation = 1e-3;

  int K = 12;
  std::optional<double> ridge;
  std::string surrogate_data = "probe";  // probe | trajectory
  int probes = 800;
  surrogate::ProbeConfig probe;
  int trajectory_stride = 1;

  int r = 6;
  double otd_dt = 0.05;
  std::string otd_operator = "surrogate";  // surrogate | exact
  double checkpoint_every = 0.0;           // 0: final basis only

  ftle::WindowConfig window;

  double sample_dt = 0.5;
  double warmup = 20.0;
  double train_fraction = 0.7;

  std::vector<double> taus{10.0};
  forecaster::ModelDims dims;
  forecaster::TrainConfig train;

  double k_sigma = 2.0;
  double t_ee = 0.0;  // ≤ 0: median over-threshold peak spacing of the training split
  std::vector<double> rates = evaluation::default_rate_grid();

  std::uint64_t seed = 0;
};

const std::set<std::string>& known_keys();
/// Validates every key and value; errors name the offending key.
Settings settings_from(const Config& c);

using Observer = std::function<void(const flow::FlowState&)>;
using Replay = std::function<void(const Observer&)>;

/// Perturbed laminar state advanced through the spin-up; time reset to 0.
flow::FlowState spun_up_state(const Settings& s);
/// Re-simulates `duration` from `start`, including the start snapshot.
Replay simulation_replay(const Settings& s, const flow::FlowState& start);
Replay file_replay(const std::string& path);

/// Per-snapshot scalars, plus what later stages need from the states:
/// solenoidal coordinates on the surrogate box and a few full held-out
/// states from the test split.
struct FlowRecord {
  std::vector<double> times, I, D, E;
  std::vector<Complex> alpha;
  int coords_K = 0;
  std::vector<VectorXc> coords;
  std::vector<flow::FlowState> held;

  std::size_t size() const { return times.size(); }
  double snapshot_dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  /// Time before which snapshots belong to the training split.
  double train_end(double fraction) const;
};

/// One pass over the replay. `keep_states` stores coordinates and held-out
/// states for the surrogate and data-driven OTD stages.
FlowRecord record_observables(const Replay& replay, const Settings& s, bool keep_states = true);
void write_observables_csv(const std::string& path, const FlowRecord& r);
FlowRecord read_observables_csv(const std::string& path);

struct SobolevRow {
  double time = 0.0;
  double h0 = 0.0, h1 = 0.0, h2 = 0.0;  // relative to the truncated exact rhs
};

struct SurrogateFit {
  surrogate::FitResult fit;
  std::vector<SobolevRow> sobolev;  // held-out snapshots from the test split
};

/// Fits on anchors from the training split only.
SurrogateFit fit_surrogate(const FlowRecord& rec, const Settings& s);
void write_sobolev_csv(const std::string& path, const std::vector<SobolevRow>& rows);

struct OtdRun {
  std::vector<otd::ReducedOperator> stream;
  otd::OtdBasis<Complex> final_basis;  // velocity layout
  std::vector<otd::OtdBasis<Complex>> checkpoints;
  double max_orthonormality_error = 0.0;
};

/// Data-driven OTD: r modes tracked in box coordinates with the surrogate's
/// tangent operator along the recorded coordinates.
OtdRun run_otd(const FlowRecord& rec, const Settings& s,
               std::shared_ptr<const surrogate::QuadraticSurrogate> model);
/// Equation-based OTD with the exact linearization along the replay.
OtdRun run_otd_exact(const Replay& replay, const Settings& s);

/// Aligned rows on the sample_dt grid after the warm-up.
struct FeatureTable {
  std::vector<double> times;
  VectorXd gamma1, dgamma1, alpha_re, alpha_im, z;
  double sample_dt = 0.0;
  long n_train = 0;

  long rows() const { return long(times.size()); }
};

FeatureTable build_features(const FlowRecord& rec, const ftle::FtleSeries& series, const Settings& s);
void write_features_csv(const std::string& path, const FeatureTable& f);
FeatureTable read_features_csv(const std::string& path);

enum class Precursor { Ftle, Fourier };
std::string to_string(Precursor p);

/// Dataset, splits and event statistics for one precursor and lead time.
struct Experiment {
  forecaster::ForecastDataset data;
  std::vector<long> train_ends, test_ends;
  forecaster::DensityEstimate density;
  evaluation::EventThreshold threshold;
  double t_ee = 0.0;
  double tau = 0.0;
};

Experiment make_experiment(const FeatureTable& f, Precursor p, double tau, const Settings& s);

/// Terminal value ẑ(t+τ) for each window end.
struct PredictionSeries {
  std::vector<double> times;  // t + τ
  VectorXd truth, pred;
};

PredictionSeries predict_terminal(const forecaster::ForecastModel& m, const Experiment& e,
                                  const FeatureTable& f, const std::vector<long>& ends);
void write_predictions_csv(const std::string& path, const PredictionSeries& p);
PredictionSeries read_predictions_csv(const std::string& path);

evaluation::MetricReport evaluate_predictions(const PredictionSeries& p, const Experiment& e,
                                              double sample_dt, const Settings& s);

/// PDFs of truth and prediction on a shared grid: `z,p_true,p_pred`.
void write_pdf_csv(const std::string& path, const PredictionSeries& p);

}  // namespace eelab::pipeline
