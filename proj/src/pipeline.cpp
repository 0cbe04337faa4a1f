#include "eelab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "eelab/flow/snapshot_io.hpp"
#include "eelab/parallel.hpp"

namespace eelab::pipeline {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "flow.grid",          "flow.length",           "flow.reynolds",
      "flow.forcing_wavenumber", "flow.forcing_amplitude", "flow.internal_dt",
      "flow.snapshot_dt",   "flow.spinup",           "flow.duration",
      "flow.perturbation",  "surrogate.K",           "surrogate.ridge",
      "surrogate.data",     "surrogate.probes",      "surrogate.probe_amplitude",
      "surrogate.burst_dt", "surrogate.stride",      "otd.r",
      "otd.dt",             "otd.operator",          "otd.checkpoint_every",
      "ftle.T",             "ftle.stride",           "ftle.dt",
      "ftle.generator",     "features.sample_dt",    "features.warmup",
      "split.train_fraction", "forecaster.taus",     "forecaster.preset",
      "forecaster.d",       "forecaster.heads",      "forecaster.n_enc",
      "forecaster.n_dec",   "forecaster.d_ff",       "forecaster.dropout",
      "forecaster.steps",   "forecaster.batch",      "forecaster.lr",
      "forecaster.final_lr_scale", "evaluation.k",   "evaluation.t_ee",
      "evaluation.rates",   "run.seed"};
  return keys;
}

namespace {

template <typename T>
T checked(const std::string& key, T value, bool ok, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
  return value;
}

}  // namespace

Settings settings_from(const Config& c) {
  c.check_known(known_keys());
  Settings s;
  const long n = c.integer("flow.grid", 64);
  s.grid.nx = s.grid.ny = int(checked("flow.grid", n, n >= 8 && n % 2 == 0, "must be an even integer >= 8"));
  const double length = c.real("flow.length", s.grid.length);
  s.grid.length = checked("flow.length", length, length > 0.0, "must be positive");
  s.flow.reynolds = c.real("flow.reynolds", s.flow.reynolds);
  s.flow.forcing_wavenumber = int(c.integer("flow.forcing_wavenumber", s.flow.forcing_wavenumber));
  s.flow.forcing_amplitude = c.real("flow.forcing_amplitude", s.flow.forcing_amplitude);
  s.flow.internal_dt = c.real("flow.internal_dt", s.flow.internal_dt);
  s.flow.snapshot_dt = c.real("flow.snapshot_dt", s.flow.snapshot_dt);
  try {
    s.flow.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("flow", e.what());
  }
  s.spinup = c.real("flow.spinup", s.spinup);
  checked("flow.spinup", 0, s.spinup >= 0.0, "must be non-negative");
  s.duration = c.real("flow.duration", s.duration);
  checked("flow.duration", 0, s.duration > 0.0, "must be positive");
  s.perturbation = c.real("flow.perturbation", s.perturbation);

  s.K = int(c.integer("surrogate.K", s.K));
  checked("surrogate.K", 0, s.K >= 1 && s.K <= std::min(s.grid.kmax_x(), s.grid.kmax_y()),
          "must be between 1 and the dealiased grid cutoff");
  if (c.has("surrogate.ridge")) {
    s.ridge = c.real("surrogate.ridge", 0.0);
    checked("surrogate.ridge", 0, *s.ridge >= 0.0, "must be non-negative");
  }
  s.surrogate_data = c.str("surrogate.data", s.surrogate_data);
  checked("surrogate.data", 0, s.surrogate_data == "probe" || s.surrogate_data == "trajectory",
          "must be probe or trajectory");
  s.probes = int(c.integer("surrogate.probes", s.probes));
  checked("surrogate.probes", 0, s.probes >= 10, "must be at least 10");
  s.probe.amplitude = c.real("surrogate.probe_amplitude", s.probe.amplitude);
  s.probe.burst_dt = c.real("surrogate.burst_dt", s.probe.burst_dt);
  checked("surrogate.burst_dt", 0, s.probe.burst_dt > 0.0, "must be positive");
  s.trajectory_stride = int(c.integer("surrogate.stride", s.trajectory_stride));
  checked("surrogate.stride", 0, s.trajectory_stride >= 1, "must be at least 1");

  s.r = int(c.integer("otd.r", s.r));
  checked("otd.r", 0, s.r >= 1, "must be positive");
  s.otd_dt = c.real("otd.dt", s.otd_dt);
  checked("otd.dt", 0, s.otd_dt > 0.0, "must be positive");
  s.otd_operator = c.str("otd.operator", s.otd_operator);
  checked("otd.operator", 0, s.otd_operator == "surrogate" || s.otd_operator == "exact",
          "must be surrogate or exact");
  s.checkpoint_every = c.real("otd.checkpoint_every", s.checkpoint_every);

  s.window.horizon_T = c.real("ftle.T", s.window.horizon_T);
  s.window.stride = c.real("ftle.stride", s.flow.snapshot_dt);
  s.window.dt = c.real("ftle.dt", s.window.dt);
  const std::string gen = c.str("ftle.generator", "otd_frame");
  checked("ftle.generator", 0, gen == "otd_frame" || gen == "plain", "must be otd_frame or plain");
  s.window.generator = gen == "plain" ? ftle::Generator::Plain : ftle::Generator::OtdFrame;
  try {
    s.window.validate(s.flow.snapshot_dt);
  } catch (const InvalidArgument& e) {
    throw ConfigError("ftle", e.what());
  }

  s.sample_dt = c.real("features.sample_dt", s.sample_dt);
  const double ratio = s.sample_dt / s.window.stride;
  checked("features.sample_dt", 0, std::abs(ratio - std::round(ratio)) < 1e-9 && ratio >= 0.999,
          "must be a whole multiple of ftle.stride");
  s.warmup = c.real("features.warmup", s.warmup);
  s.train_fraction = c.real("split.train_fraction", s.train_fraction);
  checked("split.train_fraction", 0, s.train_fraction > 0.0 && s.train_fraction < 1.0,
          "must lie in (0, 1)");

  s.taus = c.reals("forecaster.taus", s.taus);
  for (double tau : s.taus) {
    try {
      forecaster::WindowSpec::make(tau, s.sample_dt);
    } catch (const InvalidArgument& e) {
      throw ConfigError("forecaster.taus", e.what());
    }
  }
  const std::string preset = c.str("forecaster.preset", "desk");
  checked("forecaster.preset", 0, preset == "desk" || preset == "large", "must be desk or large");
  s.dims = preset == "large" ? forecaster::ModelDims::large() : forecaster::ModelDims::desk();
  s.dims.d = int(c.integer("forecaster.d", s.dims.d));
  s.dims.heads = int(c.integer("forecaster.heads", s.dims.heads));
  s.dims.n_enc = int(c.integer("forecaster.n_enc", s.dims.n_enc));
  s.dims.n_dec = int(c.integer("forecaster.n_dec", s.dims.n_dec));
  s.dims.d_ff = int(c.integer("forecaster.d_ff", s.dims.d_ff));
  s.dims.dropout = c.real("forecaster.dropout", s.dims.dropout);
  try {
    s.dims.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("forecaster", e.what());
  }
  s.train.steps = c.integer("forecaster.steps", s.train.steps);
  checked("forecaster.steps", 0, s.train.steps >= 1, "must be positive");
  s.train.batch = int(c.integer("forecaster.batch", s.train.batch));
  checked("forecaster.batch", 0, s.train.batch >= 1, "must be positive");
  s.train.lr = c.real("forecaster.lr", s.train.lr);
  checked("forecaster.lr", 0, s.train.lr > 0.0, "must be positive");
  s.train.final_lr_scale = c.real("forecaster.final_lr_scale", s.train.final_lr_scale);
  checked("forecaster.final_lr_scale", 0, s.train.final_lr_scale > 0.0 && s.train.final_lr_scale <= 1.0,
          "must lie in (0, 1]");

  s.k_sigma = c.real("evaluation.k", s.k_sigma);
  s.t_ee = c.real("evaluation.t_ee", s.t_ee);
  s.rates = c.reals("evaluation.rates", s.rates);
  for (double w : s.rates) checked("evaluation.rates", 0, w > 0.0 && w < 1.0, "rates must lie in (0, 1)");

  const long seed = c.integer("run.seed", 0);
  s.seed = std::uint64_t(checked("run.seed", seed, seed >= 0, "must be non-negative"));
  s.train.seed = s.seed;
  return s;
}

// ---------------------------------------------------------------------------

flow::FlowState spun_up_state(const Settings& s) {
  const flow::KolmogorovSolver solver(s.grid, s.flow);
  flow::FlowState cur = flow::perturbed_laminar_state(s.flow, s.grid, s.perturbation, s.seed);
  if (s.spinup > 0.0) solver.simulate(cur, s.spinup, [&](const flow::FlowState& x) { cur = x; });
  cur.time = 0.0;
  return cur;
}

Replay simulation_replay(const Settings& s, const flow::FlowState& start) {
  return [s, start](const Observer& obs) {
    const flow::KolmogorovSolver solver(s.grid, s.flow);
    solver.simulate(start, s.duration, obs);
  };
}

Replay file_replay(const std::string& path) {
  return [path](const Observer& obs) {
    flow::TrajectoryReader reader(path);
    while (auto st = reader.next()) obs(*st);
  };
}

double FlowRecord::train_end(double fraction) const {
  require(!times.empty(), "empty flow record");
  return times.front() + fraction * (times.back() - times.front());
}

FlowRecord record_observables(const Replay& replay, const Settings& s, bool keep_states) {
  FlowRecord r;
  const surrogate::ModeSet set(s.K);
  if (keep_states) r.coords_K = s.K;
  const double dt = s.flow.snapshot_dt;
  const long n_total = long(std::floor(s.duration / dt + 1e-9)) + 1;
  const long n_train = long(std::floor(s.train_fraction * s.duration / dt + 1e-9)) + 1;
  const long hold_every = std::max(1L, (n_total - n_train) / 20);
  long idx = 0;
  replay([&](const flow::FlowState& x) {
    const auto d = flow::point_diagnostics(x.coeffs, s.flow, s.grid);
    r.times.push_back(x.time);
    r.I.push_back(d.I);
    r.D.push_back(d.D);
    r.E.push_back(d.E);
    r.alpha.push_back(forecaster::fourier_alpha(x.coeffs, s.grid));
    if (keep_states) {
      r.coords.push_back(surrogate::to_solenoidal(x.coeffs, s.grid, set));
      if (idx >= n_train && (idx - n_train) % hold_every == hold_every / 2 && r.held.size() < 20)
        r.held.push_back(x);
    }
    ++idx;
  });
  return r;
}

void write_observables_csv(const std::string& path, const FlowRecord& r) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "time,I,D,E,alpha_re,alpha_im\n";
  for (std::size_t i = 0; i < r.size(); ++i)
    os << r.times[i] << ',' << r.I[i] << ',' << r.D[i] << ',' << r.E[i] << ',' << r.alpha[i].real()
       << ',' << r.alpha[i].imag() << '\n';
}

namespace {

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::size_t columns,
                                                  std::string* header = nullptr) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (first) {
      first = false;
      if (header) *header = line;
      continue;
    }
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != columns) throw FormatError(path + ": expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

FlowRecord read_observables_csv(const std::string& path) {
  FlowRecord r;
  for (const auto& row : read_numeric_csv(path, 6)) {
    r.times.push_back(row[0]);
    r.I.push_back(row[1]);
    r.D.push_back(row[2]);
    r.E.push_back(row[3]);
    r.alpha.emplace_back(row[4], row[5]);
  }
  return r;
}

// ---------------------------------------------------------------------------

SurrogateFit fit_surrogate(const FlowRecord& rec, const Settings& s) {
  require(rec.coords_K == s.K && rec.coords.size() == rec.size(),
          "flow record has no coordinates on the surrogate box");
  const surrogate::ModeSet set(s.K);
  const double t_end = rec.train_end(s.train_fraction);
  long n_train = 0;
  while (n_train < long(rec.size()) && rec.times[std::size_t(n_train)] <= t_end + 1e-9) ++n_train;
  require(n_train >= 5, "training split is too short for the surrogate");

  surrogate::DerivativeDataset data;
  const auto state = [&](long i) {
    return flow::FlowState{surrogate::from_solenoidal(rec.coords[std::size_t(i)], set, s.grid),
                           rec.times[std::size_t(i)]};
  };
  if (s.surrogate_data == "probe") {
    surrogate::ProbeConfig pc = s.probe;
    pc.seed = s.seed;
    surrogate::ProbeSampler sampler(s.grid, s.flow, s.K, pc);
    const long every = std::max(1L, n_train / s.probes);
    for (long i = 0; i < n_train && long(sampler.dataset().size()) < s.probes; i += every)
      sampler.push(state(i));
    data = sampler.take();
  } else {
    surrogate::DerivativeEstimator est(s.grid, s.K, rec.snapshot_dt(), s.trajectory_stride);
    for (long i = 0; i < n_train; ++i) est.push(state(i));
    data = est.take();
  }
  SurrogateFit out;
  out.fit = surrogate::fit(data, s.K, s.ridge, s.grid);

  const flow::KolmogorovSolver solver(s.grid, s.flow);
  for (const auto& h : rec.held) {
    const VectorXc truth =
        surrogate::from_solenoidal(surrogate::to_solenoidal(solver.rhs(h.coeffs), s.grid, set), set, s.grid);
    const VectorXc pred = out.fit.model.apply(h.coeffs);
    const VectorXc zero = VectorXc::Zero(truth.size());
    SobolevRow row;
    row.time = h.time;
    row.h0 = surrogate::sobolev_error(pred, truth, 0, s.grid) / surrogate::sobolev_error(zero, truth, 0, s.grid);
    row.h1 = surrogate::sobolev_error(pred, truth, 1, s.grid) / surrogate::sobolev_error(zero, truth, 1, s.grid);
    row.h2 = surrogate::sobolev_error(pred, truth, 2, s.grid) / surrogate::sobolev_error(zero, truth, 2, s.grid);
    out.sobolev.push_back(row);
  }
  return out;
}

void write_sobolev_csv(const std::string& path, const std::vector<SobolevRow>& rows) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "time,h0_rel,h1_rel,h2_rel\n";
  for (const auto& r : rows) os << r.time << ',' << r.h0 << ',' << r.h1 << ',' << r.h2 << '\n';
}

// ---------------------------------------------------------------------------

namespace {

template <typename Feed>
OtdRun track(otd::OtdBasis<Complex> init, otd::OtdTracker<Complex>::StateOperator op, const Settings& s,
             const std::function<otd::OtdBasis<Complex>(const otd::OtdBasis<Complex>&)>& to_velocity,
             Feed&& feed) {
  otd::OtdTracker<Complex> tracker(std::move(init), std::move(op), s.otd_dt);
  OtdRun out;
  double next_ckpt = s.checkpoint_every;
  feed([&](const VectorXc& u, double t) {
    tracker.push(u, t);
    if (s.checkpoint_every > 0.0 && t >= next_ckpt - 1e-9) {
      out.checkpoints.push_back(to_velocity(tracker.basis()));
      next_ckpt += s.checkpoint_every;
    }
  });
  out.final_basis = to_velocity(tracker.basis());
  out.max_orthonormality_error = tracker.max_orthonormality_error();
  out.stream = tracker.take_stream();
  return out;
}

}  // namespace

OtdRun run_otd(const FlowRecord& rec, const Settings& s,
               std::shared_ptr<const surrogate::QuadraticSurrogate> model) {
  require(model != nullptr, "surrogate is missing");
  require(rec.coords_K == model->K() && rec.coords.size() == rec.size(),
          "flow record has no coordinates on the surrogate box");
  const surrogate::ModeSet& set = model->modes();
  const auto vel = otd::init_basis_kolmogorov(s.r, s.grid);
  otd::OtdBasis<Complex> init = vel;
  init.modes.resize(set.size(), s.r);
  for (int j = 0; j < s.r; ++j) init.modes.col(j) = surrogate::to_solenoidal(vel.modes.col(j), s.grid, set);
  otd::orthonormalize(init);
  const auto to_velocity = [&](const otd::OtdBasis<Complex>& b) {
    otd::OtdBasis<Complex> v = b;
    v.modes.resize(s.grid.size(), b.r());
    for (int j = 0; j < b.r(); ++j) v.modes.col(j) = surrogate::from_solenoidal(b.modes.col(j), set, s.grid);
    return v;
  };
  return track(std::move(init), surrogate::coordinate_tangent_operator(model), s, to_velocity,
               [&](const auto& push) {
                 for (std::size_t i = 0; i < rec.size(); ++i) push(rec.coords[i], rec.times[i]);
               });
}

OtdRun run_otd_exact(const Replay& replay, const Settings& s) {
  return track(otd::init_basis_kolmogorov(s.r, s.grid), otd::exact_flow_operator(s.flow, s.grid), s,
               [](const otd::OtdBasis<Complex>& b) { return b; },
               [&](const auto& push) { replay([&](const flow::FlowState& x) { push(x.coeffs, x.time); }); });
}

// ---------------------------------------------------------------------------

FeatureTable build_features(const FlowRecord& rec, const ftle::FtleSeries& series, const Settings& s) {
  require(series.size() >= 3, "FTLE series is too short");
  const double snap = rec.snapshot_dt();
  require(snap > 0.0, "flow record needs at least two snapshots");
  const auto lead = series.leading();
  const VectorXd g = Eigen::Map<const VectorXd>(lead.data(), Eigen::Index(lead.size()));
  const VectorXd dg = forecaster::derivative_channel(g, series.stride);
  const long every = std::lround(s.sample_dt / series.stride);

  FeatureTable f;
  f.sample_dt = s.sample_dt;
  std::vector<double> g1, dg1, are, aim, z;
  for (std::size_t w = 0; w < series.size(); w += std::size_t(every)) {
    const double t = series.times[w];
    if (t < rec.times.front() + s.warmup - 1e-9) continue;
    const long i = std::lround((t - rec.times.front()) / snap);
    require(i >= 0 && i < long(rec.size()) && std::abs(rec.times[std::size_t(i)] - t) < 1e-6 * snap,
            "FTLE window times do not match the flow record");
    f.times.push_back(t);
    g1.push_back(g[Eigen::Index(w)]);
    dg1.push_back(dg[Eigen::Index(w)]);
    are.push_back(rec.alpha[std::size_t(i)].real());
    aim.push_back(rec.alpha[std::size_t(i)].imag());
    z.push_back(rec.D[std::size_t(i)]);
  }
  auto vec = [](const std::vector<double>& v) {
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), Eigen::Index(v.size())));
  };
  f.gamma1 = vec(g1);
  f.dgamma1 = vec(dg1);
  f.alpha_re = vec(are);
  f.alpha_im = vec(aim);
  f.z = vec(z);
  f.n_train = long(forecaster::train_rows(f.times.size(), s.train_fraction));
  return f;
}

void write_features_csv(const std::string& path, const FeatureTable& f) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "# sample_dt=" << f.sample_dt << " n_train=" << f.n_train << '\n'
     << "time,gamma1,dgamma1,alpha_re,alpha_im,D\n";
  for (long i = 0; i < f.rows(); ++i)
    os << f.times[std::size_t(i)] << ',' << f.gamma1[i] << ',' << f.dgamma1[i] << ',' << f.alpha_re[i]
       << ',' << f.alpha_im[i] << ',' << f.z[i] << '\n';
}

FeatureTable read_features_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::string meta;
  std::getline(is, meta);
  FeatureTable f;
  if (std::sscanf(meta.c_str(), "# sample_dt=%lf n_train=%ld", &f.sample_dt, &f.n_train) != 2)
    throw FormatError(path + ": missing feature metadata line");
  const auto rows = read_numeric_csv(path, 6);
  const auto n = Eigen::Index(rows.size());
  f.gamma1.resize(n);
  f.dgamma1.resize(n);
  f.alpha_re.resize(n);
  f.alpha_im.resize(n);
  f.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[std::size_t(i)];
    f.times.push_back(r[0]);
    f.gamma1[i] = r[1];
    f.dgamma1[i] = r[2];
    f.alpha_re[i] = r[3];
    f.alpha_im[i] = r[4];
    f.z[i] = r[5];
  }
  return f;
}

// ---------------------------------------------------------------------------

std::string to_string(Precursor p) { return p == Precursor::Ftle ? "ftle" : "fourier"; }

Experiment make_experiment(const FeatureTable& f, Precursor p, double tau, const Settings& s) {
  const auto spec = forecaster::WindowSpec::make(tau, f.sample_dt);
  MatrixXd raw(f.rows(), 2);
  if (p == Precursor::Ftle) {
    raw.col(0) = f.gamma1;
    raw.col(1) = f.dgamma1;
  } else {
    raw.col(0) = f.alpha_re;
    raw.col(1) = f.alpha_im;
  }
  const auto norm = forecaster::fit_normalization(raw, std::size_t(f.n_train));
  const VectorXd z_train = f.z.head(f.n_train);
  auto density = forecaster::kde_density(std::vector<double>(z_train.data(), z_train.data() + z_train.size()));
  VectorXd w(f.rows());
  for (long i = 0; i < f.rows(); ++i) w[i] = 1.0 / density(f.z[i]);

  Experiment e{forecaster::ForecastDataset(forecaster::standardize(raw, norm), f.z, w, spec),
               {}, {}, std::move(density), evaluation::threshold_from_series(z_train, s.k_sigma), 0.0, tau};
  e.train_ends = e.data.window_ends(0, f.n_train);
  e.test_ends = e.data.window_ends(f.n_train, f.rows());
  if (e.train_ends.empty() || e.test_ends.empty())
    throw InsufficientData("run is too short for tau = " + std::to_string(tau) +
                           ": no complete windows on one side of the split");
  e.t_ee = s.t_ee > 0.0 ? s.t_ee : evaluation::median_peak_interval(z_train, f.sample_dt, e.threshold.z_star);
  return e;
}

PredictionSeries predict_terminal(const forecaster::ForecastModel& m, const Experiment& e,
                                  const FeatureTable& f, const std::vector<long>& ends) {
  PredictionSeries p;
  p.truth.resize(Eigen::Index(ends.size()));
  p.pred.resize(Eigen::Index(ends.size()));
  p.times.resize(ends.size());
  const int nt = e.data.spec().n_horizon;
  parallel_for(int(ends.size()), [&](int i) {
    const auto smp = e.data.sample(ends[std::size_t(i)]);
    p.pred[i] = m.forward(smp.input, smp.seed)[nt - 1];
    p.truth[i] = smp.target[nt - 1];
    p.times[std::size_t(i)] = f.times[std::size_t(ends[std::size_t(i)] + nt)];
  });
  return p;
}

void write_predictions_csv(const std::string& path, const PredictionSeries& p) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "time,z_true,z_pred\n";
  for (std::size_t i = 0; i < p.times.size(); ++i)
    os << p.times[i] << ',' << p.truth[Eigen::Index(i)] << ',' << p.pred[Eigen::Index(i)] << '\n';
}

PredictionSeries read_predictions_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 3);
  PredictionSeries p;
  p.truth.resize(Eigen::Index(rows.size()));
  p.pred.resize(Eigen::Index(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p.times.push_back(rows[i][0]);
    p.truth[Eigen::Index(i)] = rows[i][1];
    p.pred[Eigen::Index(i)] = rows[i][2];
  }
  return p;
}

evaluation::MetricReport evaluate_predictions(const PredictionSeries& p, const Experiment& e,
                                              double sample_dt, const Settings& s) {
  return evaluation::evaluate(p.truth, p.pred, sample_dt, e.threshold.z_star, e.t_ee, e.tau, s.rates);
}

void write_pdf_csv(const std::string& path, const PredictionSeries& p) {
  const auto as_std = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  const auto dt = forecaster::kde_density(as_std(p.truth));
  std::vector<double> pred = as_std(p.pred);
  std::optional<forecaster::DensityEstimate> dp;
  try {
    dp = forecaster::kde_density(pred);
  } catch (const DegenerateDistribution&) {
    // a constant predictor has no density; its column is left empty
  }
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  const double lo = std::min(p.truth.minCoeff(), p.pred.minCoeff());
  const double hi = std::max(p.truth.maxCoeff(), p.pred.maxCoeff());
  os << std::setprecision(17) << "z,p_true,p_pred\n";
  for (int i = 0; i < 256; ++i) {
    const double z = lo + (hi - lo) * i / 255.0;
    os << z << ',' << dt(z) << ',';
    if (dp) os << (*dp)(z);
    os << '\n';
  }
}

}  // namespace eelab::pipeline
